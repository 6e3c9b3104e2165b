//! Error metrics per region, component and frame set; method comparison tables;
//! plane flow curves.

use std::io::Write;
use std::path::Path;

use ndarray::{Array3, Array5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::VelocityField4D;
use crate::phantom::Axis;
use crate::regions::RegionLabels;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalRegion {
    Fluid,
    Boundary,
    Nonfluid,
}

impl EvalRegion {
    pub const ALL: [EvalRegion; 3] = [
        EvalRegion::Fluid,
        EvalRegion::Boundary,
        EvalRegion::Nonfluid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalRegion::Fluid => "fluid",
            EvalRegion::Boundary => "boundary",
            EvalRegion::Nonfluid => "nonfluid",
        }
    }

    pub fn mask(self, labels: &RegionLabels) -> Array3<bool> {
        match self {
            EvalRegion::Fluid => labels.fluid(),
            EvalRegion::Boundary => labels.boundary(),
            EvalRegion::Nonfluid => labels.nonfluid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSet {
    /// every HR frame
    All,
    /// frames with no acquired counterpart (odd indices at factor 2)
    Synthesized,
    /// the synthesized frame of highest mean fluid speed in the truth
    Peak,
    /// frames that coincide with acquired LR frames
    Acquired,
}

impl FrameSet {
    pub fn name(self) -> &'static str {
        match self {
            FrameSet::All => "all",
            FrameSet::Synthesized => "synthesized",
            FrameSet::Peak => "peak",
            FrameSet::Acquired => "acquired",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinReg {
    pub k: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x` with intercept. Identical inputs give
/// exactly `(1, 0, 1)` even when `x` is constant.
pub fn linreg(x: &[f64], y: &[f64]) -> Result<LinReg> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} abscissae vs {} ordinates",
            x.len(),
            y.len()
        )));
    }
    if x == y && !x.is_empty() {
        return Ok(LinReg {
            k: 1.0,
            intercept: 0.0,
            r2: 1.0,
        });
    }
    if x.len() < 2 {
        return Err(Error::Degenerate(
            "regression needs at least two points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate(
            "zero variance in the reference values".into(),
        ));
    }
    let k = sxy / sxx;
    let r2 = if syy == 0.0 {
        0.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinReg {
        k,
        intercept: my - k * mx,
        r2,
    })
}

fn vec3(v: &Array5<f32>, t: usize, idx: (usize, usize, usize)) -> [f64; 3] {
    [0, 1, 2].map(|c| v[[c, t, idx.0, idx.1, idx.2]] as f64)
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// `tanh(‖v − v̂‖/‖v‖)`; at `‖v‖ = 0` this is 1 unless `v̂ = v`.
pub fn tanh_relative_error(v: [f64; 3], vh: [f64; 3]) -> f64 {
    let d = norm([vh[0] - v[0], vh[1] - v[1], vh[2] - v[2]]);
    let n = norm(v);
    if n == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        (d / n).tanh()
    }
}

/// Cosine of the angle between `v` and `v̂`; two zero vectors count as 1, one zero vector as 0.
pub fn cosine(v: [f64; 3], vh: [f64; 3]) -> f64 {
    let (a, b) = (norm(v), norm(vh));
    match (a == 0.0, b == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => ((v[0] * vh[0] + v[1] * vh[1] + v[2] * vh[2]) / (a * b)).clamp(-1.0, 1.0),
    }
}

/// Pairs of (truth frame, estimate frame) evaluated over `mask`.
pub struct Selection<'a> {
    pub truth: &'a Array5<f32>,
    pub estimate: &'a Array5<f32>,
    pub frames: &'a [(usize, usize)],
    pub mask: &'a Array3<bool>,
}

impl Selection<'_> {
    fn check(&self) -> Result<Vec<(usize, usize, usize)>> {
        let (_, nt_a, nx, ny, nz) = self.truth.dim();
        let (_, nt_b, mx, my, mz) = self.estimate.dim();
        if (nx, ny, nz) != (mx, my, mz) || self.mask.dim() != (nx, ny, nz) {
            return Err(Error::ShapeMismatch(
                "truth, estimate and mask differ spatially".into(),
            ));
        }
        if self.frames.iter().any(|&(a, b)| a >= nt_a || b >= nt_b) {
            return Err(Error::ShapeMismatch("frame index out of range".into()));
        }
        let voxels: Vec<_> = self
            .mask
            .indexed_iter()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect();
        if voxels.is_empty() || self.frames.is_empty() {
            return Err(Error::EmptyRegion("no voxel-frames selected".into()));
        }
        Ok(voxels)
    }

    fn fold<F: FnMut([f64; 3], [f64; 3])>(&self, mut f: F) -> Result<usize> {
        let voxels = self.check()?;
        for &(ta, tb) in self.frames {
            for &idx in &voxels {
                f(vec3(self.truth, ta, idx), vec3(self.estimate, tb, idx));
            }
        }
        Ok(voxels.len() * self.frames.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentErrors {
    pub rmse: f64,
    pub mae: f64,
}

/// RMSE and MAE per component over all selected voxel-frames.
pub fn basic_errors(sel: &Selection) -> Result<[ComponentErrors; 3]> {
    let mut sq = [0.0; 3];
    let mut ab = [0.0; 3];
    let n = sel.fold(|v, vh| {
        for c in 0..3 {
            let d = vh[c] - v[c];
            sq[c] += d * d;
            ab[c] += d.abs();
        }
    })? as f64;
    Ok([0, 1, 2].map(|c| ComponentErrors {
        rmse: (sq[c] / n).sqrt(),
        mae: ab[c] / n,
    }))
}

/// Mean tanh relative error, a fraction in [0, 1].
pub fn relative_error_tanh(sel: &Selection) -> Result<f64> {
    let mut s = 0.0;
    let n = sel.fold(|v, vh| s += tanh_relative_error(v, vh))? as f64;
    Ok(s / n)
}

pub fn cosine_similarity(sel: &Selection) -> Result<f64> {
    let mut s = 0.0;
    let n = sel.fold(|v, vh| s += cosine(v, vh))? as f64;
    Ok(s / n)
}

/// Per-frame regression of each estimate component on the truth over the mask;
/// `None` where the truth component has zero variance.
pub fn regression_series(sel: &Selection) -> Result<Vec<[Option<LinReg>; 3]>> {
    let voxels = sel.check()?;
    Ok(sel
        .frames
        .iter()
        .map(|&(ta, tb)| {
            [0, 1, 2].map(|c| {
                let x: Vec<f64> = voxels
                    .iter()
                    .map(|&(i, j, k)| sel.truth[[c, ta, i, j, k]] as f64)
                    .collect();
                let y: Vec<f64> = voxels
                    .iter()
                    .map(|&(i, j, k)| sel.estimate[[c, tb, i, j, k]] as f64)
                    .collect();
                linreg(&x, &y).ok()
            })
        })
        .collect())
}

/// Frame of maximum mean fluid speed, among frames `t` with `t % factor != 0`
/// when `synthesized_only`.
pub fn peak_frame(truth: &VelocityField4D, factor: usize, synthesized_only: bool) -> Result<usize> {
    let n_fluid = truth.fluid_count();
    if n_fluid == 0 {
        return Err(Error::EmptyRegion("truth has no fluid voxels".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for t in 0..truth.grid.nt {
        if synthesized_only && t % factor == 0 {
            continue;
        }
        let speed = truth.speed(t);
        let mean = speed
            .iter()
            .zip(truth.fluid_mask.iter())
            .filter(|(_, &m)| m)
            .map(|(&s, _)| s as f64)
            .sum::<f64>()
            / n_fluid as f64;
        if best.map_or(true, |(_, b)| mean > b) {
            best = Some((t, mean));
        }
    }
    best.map(|(t, _)| t)
        .ok_or_else(|| Error::EmptyRegion("no eligible frames".into()))
}

pub fn frame_indices(set: FrameSet, truth: &VelocityField4D, factor: usize) -> Result<Vec<usize>> {
    let nt = truth.grid.nt;
    Ok(match set {
        FrameSet::All => (0..nt).collect(),
        FrameSet::Synthesized => (0..nt).filter(|t| t % factor != 0).collect(),
        FrameSet::Acquired => (0..nt).filter(|t| t % factor == 0).collect(),
        FrameSet::Peak => vec![peak_frame(truth, factor, true)?],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub frames: FrameSet,
    pub region: EvalRegion,
    pub method: String,
    pub component: usize,
    pub rmse: f64,
    pub mae: f64,
    /// percent
    pub mre: f64,
    pub k: f64,
    pub one_minus_k: f64,
    pub r2: f64,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub method: String,
    pub frame: usize,
    pub component: usize,
    pub k: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
    /// fluid-region regression per HR frame
    pub series: Vec<SeriesRow>,
}

impl MetricsReport {
    pub fn find(
        &self,
        frames: FrameSet,
        region: EvalRegion,
        method: &str,
        component: usize,
    ) -> Option<&MetricRow> {
        self.rows.iter().find(|r| {
            r.frames == frames
                && r.region == region
                && r.method == method
                && r.component == component
        })
    }

    /// Component mean of a per-component metric.
    pub fn mean_over_components(
        &self,
        frames: FrameSet,
        region: EvalRegion,
        method: &str,
        f: fn(&MetricRow) -> f64,
    ) -> Option<f64> {
        let rows: Vec<_> = (0..3)
            .map(|c| self.find(frames, region, method, c))
            .collect::<Option<_>>()?;
        Some(rows.iter().map(|r| f(r)).sum::<f64>() / 3.0)
    }
}

fn mean_defined(vals: impl Iterator<Item = Option<f64>>) -> f64 {
    let v: Vec<f64> = vals.flatten().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn rows_for(
    sel: &Selection,
    frames: FrameSet,
    region: EvalRegion,
    method: &str,
) -> Result<Vec<MetricRow>> {
    let errs = basic_errors(sel)?;
    let mre = 100.0 * relative_error_tanh(sel)?;
    let cos = cosine_similarity(sel)?;
    let series = regression_series(sel)?;
    Ok((0..3)
        .map(|c| {
            let k = mean_defined(series.iter().map(|s| s[c].map(|r| r.k)));
            let r2 = mean_defined(series.iter().map(|s| s[c].map(|r| r.r2)));
            MetricRow {
                frames,
                region,
                method: method.to_string(),
                component: c,
                rmse: errs[c].rmse,
                mae: errs[c].mae,
                mre,
                k,
                one_minus_k: (1.0 - k).abs(),
                r2,
                cosine: cos,
            }
        })
        .collect())
}

/// Acquired LR data for the denoising comparison: the LR input and the truth at
/// the same frames.
pub struct InputPair<'a> {
    pub input: &'a VelocityField4D,
    pub truth: &'a VelocityField4D,
}

/// Compare HR estimates against `truth` for every frame set and region. With
/// `lr`, also reports method `lr_input` on the acquired frames.
pub fn compare_methods(
    truth: &VelocityField4D,
    methods: &[(&str, &VelocityField4D)],
    factor: usize,
    lr: Option<InputPair>,
) -> Result<MetricsReport> {
    let labels = crate::regions::classify_regions(&truth.fluid_mask);
    for (name, f) in methods {
        if f.grid.spatial_dims() != truth.grid.spatial_dims() || f.grid.nt != truth.grid.nt {
            return Err(Error::ShapeMismatch(format!(
                "method `{name}` is not on the truth grid"
            )));
        }
    }
    let mut report = MetricsReport::default();
    for set in [
        FrameSet::All,
        FrameSet::Synthesized,
        FrameSet::Peak,
        FrameSet::Acquired,
    ] {
        let frames: Vec<(usize, usize)> = frame_indices(set, truth, factor)?
            .into_iter()
            .map(|t| (t, t))
            .collect();
        for region in EvalRegion::ALL {
            let mask = region.mask(&labels);
            if !mask.iter().any(|&m| m) {
                log::warn!("region {} is empty; skipped", region.name());
                continue;
            }
            for (name, f) in methods {
                let sel = Selection {
                    truth: &truth.v,
                    estimate: &f.v,
                    frames: &frames,
                    mask: &mask,
                };
                report.rows.extend(rows_for(&sel, set, region, name)?);
            }
            if let (FrameSet::Acquired, Some(pair)) = (set, lr.as_ref()) {
                if pair.input.grid.nt != pair.truth.grid.nt
                    || pair.input.grid.spatial_dims() != truth.grid.spatial_dims()
                {
                    return Err(Error::ShapeMismatch(
                        "LR input and LR truth grids differ".into(),
                    ));
                }
                let lf: Vec<(usize, usize)> = (0..pair.truth.grid.nt).map(|t| (t, t)).collect();
                let sel = Selection {
                    truth: &pair.truth.v,
                    estimate: &pair.input.v,
                    frames: &lf,
                    mask: &mask,
                };
                report.rows.extend(rows_for(&sel, set, region, "lr_input")?);
            }
        }
    }
    let fluid = labels.fluid();
    let all: Vec<(usize, usize)> = (0..truth.grid.nt).map(|t| (t, t)).collect();
    for (name, f) in methods {
        let sel = Selection {
            truth: &truth.v,
            estimate: &f.v,
            frames: &all,
            mask: &fluid,
        };
        for (t, regs) in regression_series(&sel)?.into_iter().enumerate() {
            for (c, r) in regs.iter().enumerate() {
                report.series.push(SeriesRow {
                    method: name.to_string(),
                    frame: t,
                    component: c,
                    k: r.map_or(f64::NAN, |r| r.k),
                    r2: r.map_or(f64::NAN, |r| r.r2),
                });
            }
        }
    }
    Ok(report)
}

/// Six significant digits.
pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.5e}")
    }
}

const COMPONENTS: [&str; 3] = ["x", "y", "z"];

/// `table2.csv`: frames, region, method, component and the metric columns.
pub fn write_table(path: impl AsRef<Path>, report: &MetricsReport) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "frames,region,method,component,rmse_m_s,mae_m_s,mre_pct,one_minus_k,k,r2,cosine"
    )?;
    for r in &report.rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.frames.name(),
            r.region.name(),
            r.method,
            COMPONENTS[r.component],
            fmt6(r.rmse),
            fmt6(r.mae),
            fmt6(r.mre),
            fmt6(r.one_minus_k),
            fmt6(r.k),
            fmt6(r.r2),
            fmt6(r.cosine)
        )?;
    }
    f.flush()?;
    Ok(())
}

/// `kr2_series.csv`: method, frame, component, k, R².
pub fn write_series(path: impl AsRef<Path>, report: &MetricsReport) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "method,frame,component,k,r2")?;
    for r in &report.series {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.method,
            r.frame,
            COMPONENTS[r.component],
            fmt6(r.k),
            fmt6(r.r2)
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Slab of `thickness` voxels starting at `index` along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub axis: Axis,
    pub index: usize,
    pub thickness: usize,
}

/// Mean velocity component normal to the plane over masked voxels in the slab, per frame.
pub fn plane_flow_curve(
    field: &VelocityField4D,
    mask: &Array3<bool>,
    plane: &PlaneSpec,
) -> Result<Vec<f64>> {
    let ax = plane.axis.index();
    let dims = field.grid.spatial_dims();
    if mask.dim() != (dims[0], dims[1], dims[2]) {
        return Err(Error::ShapeMismatch(
            "plane mask differs from the field grid".into(),
        ));
    }
    let hi = (plane.index + plane.thickness.max(1)).min(dims[ax]);
    let voxels: Vec<_> = mask
        .indexed_iter()
        .filter(|&((i, j, k), &m)| {
            let p = [i, j, k][ax];
            m && p >= plane.index && p < hi
        })
        .map(|(i, _)| i)
        .collect();
    if voxels.is_empty() {
        return Err(Error::EmptyRegion(format!(
            "no fluid voxels in plane {plane:?}"
        )));
    }
    Ok((0..field.grid.nt)
        .map(|t| {
            voxels
                .iter()
                .map(|&(i, j, k)| field.v[[ax, t, i, j, k]] as f64)
                .sum::<f64>()
                / voxels.len() as f64
        })
        .collect())
}

/// `plane_flow.csv`: frame, then one column per curve.
pub fn write_plane_flow(path: impl AsRef<Path>, curves: &[(&str, Vec<f64>)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<&str> = std::iter::once("frame")
        .chain(curves.iter().map(|(n, _)| *n))
        .collect();
    writeln!(f, "{}", header.join(","))?;
    let n = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for t in 0..n {
        let cells: Vec<String> = curves
            .iter()
            .map(|(_, c)| c.get(t).map_or("nan".into(), |&v| fmt6(v)))
            .collect();
        writeln!(f, "{t},{}", cells.join(","))?;
    }
    f.flush()?;
    Ok(())
}
