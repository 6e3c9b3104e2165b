//! Training patch pairs: random 2D+t windows with the fluid-content rule.

use ndarray::{Array2, Array3, Array4, Array5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::channels::{build_channels, N_INPUT_CHANNELS};
use super::geometry::{Orientation, PatchGeometry, PatchOrigin};
use crate::error::{Error, Result};
use crate::grid::VelocityField4D;

/// LR input `[6][S][S][F]`, HR target `[3][S][S][2F]` and the in-plane fluid mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub lr: Array4<f32>,
    pub hr: Array4<f32>,
    pub mask: Array2<bool>,
    pub origin: PatchOrigin,
    pub fluid_fraction: f64,
    /// sampling iteration that produced the patch
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub n_patches: usize,
    pub min_fluid_fraction: f64,
    /// fluid-rich patches drawn per iteration after its single low-fluid patch
    pub high_per_iteration: usize,
    /// candidate draws allowed for the low-fluid patch and again for the fluid-rich ones
    pub max_attempts: usize,
    /// defaults to `n_patches`
    pub max_iterations: Option<usize>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            n_patches: 256,
            min_fluid_fraction: 0.2,
            high_per_iteration: 7,
            max_attempts: 10_000,
            max_iterations: None,
        }
    }
}

/// Fraction of mask voxels in the patch's spatial window.
pub fn fluid_fraction(mask: &Array3<bool>, origin: &PatchOrigin, size: usize) -> f64 {
    let mut n = 0usize;
    for r in 0..size {
        for c in 0..size {
            if mask[origin.voxel(r, c)] {
                n += 1;
            }
        }
    }
    n as f64 / (size * size) as f64
}

pub fn crop_mask(mask: &Array3<bool>, origin: &PatchOrigin, size: usize) -> Array2<bool> {
    Array2::from_shape_fn((size, size), |(r, c)| mask[origin.voxel(r, c)])
}

/// Crop `[C][t][x][y][z]` to `[C][S][S][frames]` starting at frame `t0`; the first
/// three channels are velocity components and are permuted into patch-local order.
pub fn crop_channels(
    data: &Array5<f32>,
    origin: &PatchOrigin,
    size: usize,
    t0: usize,
    frames: usize,
) -> Array4<f32> {
    let n_ch = data.shape()[0];
    let axes = origin.orientation.axes();
    Array4::from_shape_fn((n_ch, size, size, frames), |(ch, r, c, t)| {
        let src = if ch < 3 { axes[ch] } else { ch };
        let [x, y, z] = origin.voxel(r, c);
        data[[src, t0 + t, x, y, z]]
    })
}

fn check_pair_fields(
    lr: &VelocityField4D,
    hr: &VelocityField4D,
    geom: &PatchGeometry,
) -> Result<()> {
    geom.validate()?;
    if !lr.grid.same_spatial(&hr.grid) {
        return Err(Error::ShapeMismatch(
            "LR and HR fields have different spatial grids".into(),
        ));
    }
    if hr.grid.nt != 2 * lr.grid.nt {
        return Err(Error::ShapeMismatch(format!(
            "HR frames {} are not twice LR frames {}",
            hr.grid.nt, lr.grid.nt
        )));
    }
    let g = lr.grid;
    if g.nx.min(g.ny).min(g.nz) < geom.size {
        return Err(Error::Patch(format!(
            "domain {}x{}x{} smaller than patch size {}",
            g.nx, g.ny, g.nz, geom.size
        )));
    }
    if g.nt < geom.frames {
        return Err(Error::Patch(format!(
            "{} LR frames, patch needs {}",
            g.nt, geom.frames
        )));
    }
    Ok(())
}

fn random_origin(
    rng: &mut ChaCha8Rng,
    dims: [usize; 3],
    nt: usize,
    geom: &PatchGeometry,
) -> PatchOrigin {
    let orientation = Orientation::ALL[rng.gen_range(0..3)];
    let axes = orientation.axes();
    PatchOrigin {
        orientation,
        row: rng.gen_range(0..=dims[axes[0]] - geom.size),
        col: rng.gen_range(0..=dims[axes[1]] - geom.size),
        slice: rng.gen_range(0..dims[axes[2]]),
        t: rng.gen_range(0..=nt - geom.frames),
    }
}

/// Draw patch pairs in sampling iterations. Each iteration first places one patch
/// below `min_fluid_fraction` (when one can be found) and then up to
/// `high_per_iteration` patches at or above it.
///
/// `lr` supplies the input channels, `hr` the targets; the mask is `hr`'s.
pub fn extract_patch_pairs(
    lr: &VelocityField4D,
    hr: &VelocityField4D,
    geom: &PatchGeometry,
    cfg: &ExtractionConfig,
    seed: u64,
) -> Result<Vec<PatchPair>> {
    check_pair_fields(lr, hr, geom)?;
    if !(0.0..=1.0).contains(&cfg.min_fluid_fraction) {
        return Err(Error::InvalidConfig(
            "min_fluid_fraction must lie in [0, 1]".into(),
        ));
    }
    let channels = build_channels(lr);
    let mask = &hr.fluid_mask;
    let dims = lr.grid.spatial_dims();
    let max_iterations = cfg.max_iterations.unwrap_or(cfg.n_patches);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let make = |origin: PatchOrigin, fluid_fraction: f64, iteration: usize| PatchPair {
        lr: crop_channels(&channels, &origin, geom.size, origin.t, geom.frames),
        hr: crop_channels(&hr.v, &origin, geom.size, 2 * origin.t, geom.hr_frames()),
        mask: crop_mask(mask, &origin, geom.size),
        origin,
        fluid_fraction,
        iteration,
    };

    let mut out: Vec<PatchPair> = Vec::with_capacity(cfg.n_patches);
    let mut iteration = 0;
    while out.len() < cfg.n_patches {
        if iteration >= max_iterations {
            return Err(Error::Patch(format!(
                "collected {} of {} patches in {max_iterations} sampling iterations",
                out.len(),
                cfg.n_patches
            )));
        }
        let mut attempts = 0;
        while attempts < cfg.max_attempts {
            attempts += 1;
            let o = random_origin(&mut rng, dims, lr.grid.nt, geom);
            let f = fluid_fraction(mask, &o, geom.size);
            if f < cfg.min_fluid_fraction {
                out.push(make(o, f, iteration));
                break;
            }
        }
        let mut high = 0;
        attempts = 0;
        while high < cfg.high_per_iteration
            && out.len() < cfg.n_patches
            && attempts < cfg.max_attempts
        {
            attempts += 1;
            let o = random_origin(&mut rng, dims, lr.grid.nt, geom);
            let f = fluid_fraction(mask, &o, geom.size);
            if f >= cfg.min_fluid_fraction {
                out.push(make(o, f, iteration));
                high += 1;
            }
        }
        iteration += 1;
    }
    Ok(out)
}

/// Stack pairs as `lr [N][6][S][S][F]`, `hr [N][3][S][S][2F]`, `mask [N][S][S]`.
pub fn stack_pairs(pairs: &[PatchPair]) -> Result<(Array5<f32>, Array5<f32>, Array3<bool>)> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::Patch("no patches to stack".into()))?;
    let (_, s, _, f) = first.lr.dim();
    let hf = first.hr.dim().3;
    let n = pairs.len();
    let mut lr = Array5::zeros((n, N_INPUT_CHANNELS, s, s, f));
    let mut hr = Array5::zeros((n, 3, s, s, hf));
    let mut mask = Array3::from_elem((n, s, s), false);
    for (i, p) in pairs.iter().enumerate() {
        if p.lr.dim() != (N_INPUT_CHANNELS, s, s, f) || p.hr.dim() != (3, s, s, hf) {
            return Err(Error::ShapeMismatch(format!(
                "patch {i} has a different shape"
            )));
        }
        lr.index_axis_mut(ndarray::Axis(0), i).assign(&p.lr);
        hr.index_axis_mut(ndarray::Axis(0), i).assign(&p.hr);
        mask.index_axis_mut(ndarray::Axis(0), i).assign(&p.mask);
    }
    Ok((lr, hr, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid4D;
    use ndarray::s;

    fn fields(fill: impl Fn(usize, usize, usize) -> bool) -> (VelocityField4D, VelocityField4D) {
        let g = Grid4D::new(20, 18, 16, 32, 2.0, 20.0).unwrap();
        let mut hr = VelocityField4D::zeros(g);
        for ((c, t, x, y, z), v) in hr.v.indexed_iter_mut() {
            *v = (c * 1000 + t * 100 + x * 7 + y * 3 + z) as f32;
        }
        hr.magnitude.fill(1.0);
        hr.fluid_mask = Array3::from_shape_fn((20, 18, 16), |(x, y, z)| fill(x, y, z));
        let even: Vec<usize> = (0..32).step_by(2).collect();
        let lr = hr.select_frames(&even, 40.0);
        (lr, hr)
    }

    fn cfg(n: usize) -> ExtractionConfig {
        ExtractionConfig {
            n_patches: n,
            max_attempts: 500,
            ..Default::default()
        }
    }

    #[test]
    fn all_fluid_mask_gives_full_fraction() {
        let (lr, hr) = fields(|_, _, _| true);
        let p = extract_patch_pairs(&lr, &hr, &PatchGeometry::default(), &cfg(20), 1).unwrap();
        assert_eq!(p.len(), 20);
        assert!(p.iter().all(|q| q.fluid_fraction == 1.0));
    }

    #[test]
    fn empty_mask_allows_one_patch_per_iteration() {
        let (lr, hr) = fields(|_, _, _| false);
        let c = ExtractionConfig {
            max_iterations: Some(5),
            ..cfg(5)
        };
        let p = extract_patch_pairs(&lr, &hr, &PatchGeometry::default(), &c, 2).unwrap();
        assert_eq!(
            p.iter().map(|q| q.iteration).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
        let c = ExtractionConfig {
            max_iterations: Some(5),
            ..cfg(6)
        };
        assert!(extract_patch_pairs(&lr, &hr, &PatchGeometry::default(), &c, 2).is_err());
    }

    #[test]
    fn half_covered_window_counts_half() {
        let mask = Array3::from_shape_fn((16, 16, 4), |(_, y, _)| y < 8);
        let o = PatchOrigin {
            orientation: Orientation::Xy,
            row: 0,
            col: 0,
            slice: 1,
            t: 0,
        };
        assert_eq!(fluid_fraction(&mask, &o, 16), 0.5);
    }

    #[test]
    fn one_low_fluid_patch_leads_each_iteration() {
        let (lr, hr) = fields(|x, y, _| (x as i32 - 10).pow(2) + (y as i32 - 9).pow(2) < 30);
        let p = extract_patch_pairs(&lr, &hr, &PatchGeometry::default(), &cfg(40), 3).unwrap();
        let iters = p.last().unwrap().iteration + 1;
        for i in 0..iters {
            let group: Vec<_> = p.iter().filter(|q| q.iteration == i).collect();
            let low = group.iter().filter(|q| q.fluid_fraction < 0.2).count();
            assert_eq!(low, 1);
            assert!(group[0].fluid_fraction < 0.2);
        }
    }

    #[test]
    fn crops_follow_frame_alignment_and_component_order() {
        let (lr, hr) = fields(|_, _, _| true);
        let p = extract_patch_pairs(&lr, &hr, &PatchGeometry::default(), &cfg(12), 4).unwrap();
        for q in &p {
            let axes = q.origin.orientation.axes();
            for i in 0..16 {
                let [x, y, z] = q.origin.voxel(2, 5);
                for j in 0..3 {
                    assert_eq!(q.lr[[j, 2, 5, i]], lr.v[[axes[j], q.origin.t + i, x, y, z]]);
                    assert_eq!(q.hr[[j, 2, 5, 2 * i]], q.lr[[j, 2, 5, i]]);
                }
            }
        }
        let (a, b, m) = stack_pairs(&p).unwrap();
        assert_eq!(a.shape(), &[12, 6, 16, 16, 16]);
        assert_eq!(b.shape(), &[12, 3, 16, 16, 32]);
        assert_eq!(m.slice(s![3, .., ..]), p[3].mask);
    }

    #[test]
    fn rejects_small_domain_and_bad_ratio() {
        let g = Grid4D::new(12, 18, 16, 32, 2.0, 20.0).unwrap();
        let hr = VelocityField4D::zeros(g);
        let lr = hr.select_frames(&(0..16).map(|i| 2 * i).collect::<Vec<_>>(), 40.0);
        assert!(extract_patch_pairs(&lr, &hr, &PatchGeometry::default(), &cfg(1), 0).is_err());
        let g = Grid4D::new(16, 16, 16, 32, 2.0, 20.0).unwrap();
        let hr = VelocityField4D::zeros(g);
        assert!(extract_patch_pairs(&hr, &hr, &PatchGeometry::default(), &cfg(1), 0).is_err());
    }
}
