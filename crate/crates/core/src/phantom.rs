//! Analytic ground-truth flow phantoms, evaluable at any frame spacing.

use std::f64::consts::PI;

use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid4D, VelocityField4D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two remaining axes in increasing order.
    pub fn transverse(self) -> [usize; 2] {
        match self {
            Axis::X => [1, 2],
            Axis::Y => [0, 2],
            Axis::Z => [0, 1],
        }
    }
}

/// Two periodic Gaussian bumps (systolic and diastolic) plus a constant offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformSpec {
    pub t_s: f64,
    pub sigma_s: f64,
    pub a_s: f64,
    pub t_d: f64,
    pub sigma_d: f64,
    pub a_d: f64,
    /// Cycle length in ms.
    pub period: f64,
    #[serde(default)]
    pub offset: f64,
}

impl WaveformSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.period > 0.0
            && 0.0 <= self.t_s
            && self.t_s < self.t_d
            && self.t_d < self.period
            && self.a_s >= 0.0
            && self.a_d >= 0.0
            && self.sigma_s > 0.0
            && self.sigma_d > 0.0
            && self.offset.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid waveform {self:?}")))
        }
    }

    /// w(t), periodic with the cycle length.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.rem_euclid(self.period);
        self.offset
            + self.a_s * periodic_bump(t, self.t_s, self.sigma_s, self.period)
            + self.a_d * periodic_bump(t, self.t_d, self.sigma_d, self.period)
    }
}

/// Wrapped Gaussian with unit peak at `center`.
fn periodic_bump(t: f64, center: f64, sigma: f64, period: f64) -> f64 {
    let wrapped = |x: f64| -> f64 {
        (-3i32..=3)
            .map(|k| {
                let d = x + k as f64 * period;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .sum()
    };
    wrapped(t - center) / wrapped(0.0)
}

/// Straight rigid tube with a Poiseuille profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubePhantomSpec {
    pub grid: Grid4D,
    pub tube_axis: Axis,
    /// mm
    pub tube_radius: f64,
    /// mm, along the two transverse axes in increasing axis order
    pub center: [f64; 2],
    pub waveform: WaveformSpec,
    /// m/s
    pub peak_velocity: f64,
    /// (fluid level, tissue level)
    pub magnitude_contrast: (f64, f64),
}

/// Solid-body vortex `u = ω(t) × r` inside a sphere; exercises all three components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VortexPhantomSpec {
    pub grid: Grid4D,
    /// mm
    pub center: [f64; 3],
    /// mm
    pub radius: f64,
    /// rotation axis, normalized on use
    pub axis: [f64; 3],
    pub waveform: WaveformSpec,
    /// speed at the sphere's equator at w = 1, m/s
    pub peak_velocity: f64,
    pub magnitude_contrast: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PhantomSpec {
    Tube(TubePhantomSpec),
    Vortex(VortexPhantomSpec),
}

fn voxel_center(i: usize, dx: f64) -> f64 {
    (i as f64 + 0.5) * dx
}

fn check_contrast(c: (f64, f64)) -> Result<()> {
    if c.0 > 0.0 && c.1 > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "magnitude levels must be positive, got {c:?}"
        )))
    }
}

fn check_sampling(wave: &WaveformSpec, nt: usize, dt: f64) -> Result<()> {
    if !(dt > 0.0) || nt == 0 {
        return Err(Error::InvalidConfig(format!(
            "bad frame sampling nt={nt} dt={dt}"
        )));
    }
    let span = nt as f64 * dt;
    if ((span - wave.period) / wave.period).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "nt*dt = {span} ms must equal the cycle length {} ms",
            wave.period
        )));
    }
    Ok(())
}

impl TubePhantomSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.waveform.validate()?;
        check_contrast(self.magnitude_contrast)?;
        if !(self.tube_radius > 0.0) {
            return Err(Error::InvalidConfig("tube radius must be positive".into()));
        }
        let dims = self.grid.spatial_dims();
        for (k, &ax) in self.tube_axis.transverse().iter().enumerate() {
            let extent = dims[ax] as f64 * self.grid.dx;
            let c = self.center[k];
            if c - self.tube_radius < 0.0 || c + self.tube_radius > extent {
                return Err(Error::PhantomOutOfBounds(format!(
                    "tube of radius {} mm at {c} mm exceeds axis {ax} extent {extent} mm",
                    self.tube_radius
                )));
            }
        }
        Ok(())
    }

    /// Axial velocity at transverse radius `r` (mm) and time `t` (ms).
    pub fn axial_velocity(&self, r: f64, t: f64) -> f64 {
        if r >= self.tube_radius {
            return 0.0;
        }
        let q = r / self.tube_radius;
        self.peak_velocity * self.waveform.eval(t) * (1.0 - q * q)
    }

    /// Closed-form volumetric flow rate in m/s·mm².
    pub fn flow_rate(&self, t: f64) -> f64 {
        PI * self.tube_radius * self.tube_radius / 2.0 * self.peak_velocity * self.waveform.eval(t)
    }
}

impl VortexPhantomSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.waveform.validate()?;
        check_contrast(self.magnitude_contrast)?;
        let n = self.axis.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(self.radius > 0.0) || !(n > 0.0) {
            return Err(Error::InvalidConfig(
                "vortex radius and axis must be nonzero".into(),
            ));
        }
        for (ax, &n) in self.grid.spatial_dims().iter().enumerate() {
            let extent = n as f64 * self.grid.dx;
            let c = self.center[ax];
            if c - self.radius < 0.0 || c + self.radius > extent {
                return Err(Error::PhantomOutOfBounds(format!(
                    "sphere of radius {} mm at {c} mm exceeds axis {ax} extent {extent} mm",
                    self.radius
                )));
            }
        }
        Ok(())
    }
}

impl PhantomSpec {
    pub fn grid(&self) -> &Grid4D {
        match self {
            PhantomSpec::Tube(s) => &s.grid,
            PhantomSpec::Vortex(s) => &s.grid,
        }
    }

    pub fn waveform(&self) -> &WaveformSpec {
        match self {
            PhantomSpec::Tube(s) => &s.waveform,
            PhantomSpec::Vortex(s) => &s.waveform,
        }
    }

    pub fn peak_velocity(&self) -> f64 {
        match self {
            PhantomSpec::Tube(s) => s.peak_velocity,
            PhantomSpec::Vortex(s) => s.peak_velocity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PhantomSpec::Tube(s) => s.validate(),
            PhantomSpec::Vortex(s) => s.validate(),
        }
    }
}

/// Ranges for randomly drawn phantoms. Lengths are fractions of the smallest
/// relevant grid extent, times are fractions of the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSampler {
    /// ms
    pub period: f64,
    /// probability of a tube rather than a vortex
    pub tube_probability: f64,
    pub peak_velocity: (f64, f64),
    pub tube_radius: (f64, f64),
    pub vortex_radius: (f64, f64),
    pub systole_time: (f64, f64),
    pub systole_width: (f64, f64),
    pub diastole_time: (f64, f64),
    pub diastole_width: (f64, f64),
    pub diastole_amplitude: (f64, f64),
    pub offset: (f64, f64),
    pub tissue_level: (f64, f64),
}

impl Default for PhantomSampler {
    fn default() -> Self {
        PhantomSampler {
            period: 640.0,
            tube_probability: 0.6,
            peak_velocity: (0.6, 1.2),
            tube_radius: (0.2, 0.35),
            vortex_radius: (0.3, 0.45),
            systole_time: (0.1, 0.25),
            systole_width: (0.04, 0.07),
            diastole_time: (0.5, 0.7),
            diastole_width: (0.05, 0.09),
            diastole_amplitude: (0.3, 0.7),
            offset: (0.0, 0.1),
            tissue_level: (0.2, 0.4),
        }
    }
}

fn uniform<R: rand::Rng>(rng: &mut R, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.gen_range(r.0..r.1)
    } else {
        r.0
    }
}

/// Position in `[lo, ext − lo]`.
fn place<R: rand::Rng>(rng: &mut R, lo: f64, ext: f64) -> f64 {
    lo + uniform(rng, (0.0, 1.0)) * (ext - 2.0 * lo)
}

impl PhantomSampler {
    /// Draw a phantom that fits `grid`; the same seed gives the same phantom.
    pub fn sample(&self, grid: &Grid4D, seed: u64) -> Result<PhantomSpec> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = self.period;
        let waveform = WaveformSpec {
            t_s: uniform(&mut rng, self.systole_time) * p,
            sigma_s: uniform(&mut rng, self.systole_width) * p,
            a_s: 1.0,
            t_d: uniform(&mut rng, self.diastole_time) * p,
            sigma_d: uniform(&mut rng, self.diastole_width) * p,
            a_d: uniform(&mut rng, self.diastole_amplitude),
            period: p,
            offset: uniform(&mut rng, self.offset),
        };
        let peak_velocity = uniform(&mut rng, self.peak_velocity);
        let magnitude_contrast = (1.0, uniform(&mut rng, self.tissue_level));
        let extents = grid.spatial_dims().map(|n| n as f64 * grid.dx);
        let is_tube = rng.gen_bool(self.tube_probability.clamp(0.0, 1.0));
        let spec = if is_tube {
            let tube_axis = [Axis::X, Axis::Y, Axis::Z][rng.gen_range(0..3)];
            let [a, b] = tube_axis.transverse();
            let min_ext = extents[a].min(extents[b]);
            let tube_radius = rng.gen_range(self.tube_radius.0..=self.tube_radius.1) * min_ext;
            let margin = tube_radius + grid.dx;
            PhantomSpec::Tube(TubePhantomSpec {
                grid: *grid,
                tube_axis,
                tube_radius,
                center: [
                    place(&mut rng, margin, extents[a]),
                    place(&mut rng, margin, extents[b]),
                ],
                waveform,
                peak_velocity,
                magnitude_contrast,
            })
        } else {
            let min_ext = extents.iter().cloned().fold(f64::INFINITY, f64::min);
            let radius = rng.gen_range(self.vortex_radius.0..=self.vortex_radius.1) * min_ext;
            let margin = radius + 0.5 * grid.dx;
            let center =
                [0, 1, 2].map(|k| place(&mut rng, margin.min(extents[k] / 2.0), extents[k]));
            let axis = loop {
                let a: [f64; 3] = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
                if n > 0.1 && n <= 1.0 {
                    break a.map(|x| x / n);
                }
            };
            PhantomSpec::Vortex(VortexPhantomSpec {
                grid: *grid,
                center,
                radius,
                axis,
                waveform,
                peak_velocity,
                magnitude_contrast,
            })
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Sample a tube phantom at `nt` frames spaced `dt` ms, covering one cycle.
pub fn evaluate_phantom(spec: &TubePhantomSpec, nt: usize, dt: f64) -> Result<VelocityField4D> {
    evaluate(&PhantomSpec::Tube(*spec), nt, dt)
}

pub fn evaluate(spec: &PhantomSpec, nt: usize, dt: f64) -> Result<VelocityField4D> {
    spec.validate()?;
    check_sampling(spec.waveform(), nt, dt)?;
    let grid = spec.grid().with_time(nt, dt);
    let mut field = VelocityField4D::zeros(grid);
    let dx = grid.dx;
    let w: Vec<f64> = (0..nt)
        .map(|k| spec.waveform().eval(k as f64 * dt))
        .collect();
    let (fluid, tissue) = match spec {
        PhantomSpec::Tube(s) => s.magnitude_contrast,
        PhantomSpec::Vortex(s) => s.magnitude_contrast,
    };

    match spec {
        PhantomSpec::Tube(s) => {
            let axial = s.tube_axis.index();
            let [a, b] = s.tube_axis.transverse();
            for ((x, y, z), m) in field.fluid_mask.indexed_iter_mut() {
                let p = [x, y, z];
                let da = voxel_center(p[a], dx) - s.center[0];
                let db = voxel_center(p[b], dx) - s.center[1];
                let r = (da * da + db * db).sqrt();
                *m = r < s.tube_radius;
                if !*m {
                    continue;
                }
                let q = r / s.tube_radius;
                let profile = s.peak_velocity * (1.0 - q * q);
                for (t, &wt) in w.iter().enumerate() {
                    field.v[[axial, t, x, y, z]] = (profile * wt) as f32;
                }
            }
        }
        PhantomSpec::Vortex(s) => {
            let n = s.axis.iter().map(|a| a * a).sum::<f64>().sqrt();
            let axis = s.axis.map(|a| a / n);
            let omega = s.peak_velocity / s.radius;
            for ((x, y, z), m) in field.fluid_mask.indexed_iter_mut() {
                let r = [
                    voxel_center(x, dx) - s.center[0],
                    voxel_center(y, dx) - s.center[1],
                    voxel_center(z, dx) - s.center[2],
                ];
                *m = r.iter().map(|c| c * c).sum::<f64>().sqrt() < s.radius;
                if !*m {
                    continue;
                }
                let cross = [
                    axis[1] * r[2] - axis[2] * r[1],
                    axis[2] * r[0] - axis[0] * r[2],
                    axis[0] * r[1] - axis[1] * r[0],
                ];
                for (t, &wt) in w.iter().enumerate() {
                    for c in 0..3 {
                        field.v[[c, t, x, y, z]] = (omega * wt * cross[c]) as f32;
                    }
                }
            }
        }
    }

    let mask = field.fluid_mask.clone();
    for t in 0..nt {
        let mut frame = field.magnitude.slice_mut(s![t, .., .., ..]);
        frame.zip_mut_with(&mask, |m, &f| {
            *m = if f { fluid as f32 } else { tissue as f32 }
        });
    }
    Ok(field)
}

/// High-rate truth and its frame-halved counterpart: `lr[i] == hr[2i]`.
pub fn evaluate_phantom_pair(
    spec: &PhantomSpec,
    nt_hr: usize,
    dt_hr: f64,
) -> Result<(VelocityField4D, VelocityField4D)> {
    if nt_hr % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "nt_hr must be even, got {nt_hr}"
        )));
    }
    let hr = evaluate(spec, nt_hr, dt_hr)?;
    let even: Vec<usize> = (0..nt_hr).step_by(2).collect();
    let lr = hr.select_frames(&even, 2.0 * dt_hr);
    Ok((hr, lr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn waveform() -> WaveformSpec {
        WaveformSpec {
            t_s: 120.0,
            sigma_s: 40.0,
            a_s: 1.0,
            t_d: 420.0,
            sigma_d: 50.0,
            a_d: 0.6,
            period: 640.0,
            offset: 0.0,
        }
    }

    fn tube(grid: Grid4D, radius: f64) -> TubePhantomSpec {
        let ext = grid.ny as f64 * grid.dx;
        TubePhantomSpec {
            grid,
            tube_axis: Axis::X,
            tube_radius: radius,
            center: [ext / 2.0, grid.nz as f64 * grid.dx / 2.0],
            waveform: waveform(),
            peak_velocity: 1.2,
            magnitude_contrast: (1.0, 0.3),
        }
    }

    #[test]
    fn centerline_peak_and_wall() {
        let g = Grid4D::new(8, 32, 32, 32, 1.0, 20.0).unwrap();
        let mut s = tube(g, 10.0);
        s.waveform.a_d = 0.0;
        assert!((s.axial_velocity(0.0, s.waveform.t_s) - s.peak_velocity).abs() < 1e-12);
        for k in 0..32 {
            assert_eq!(s.axial_velocity(10.0, k as f64 * 20.0), 0.0);
        }
    }

    #[test]
    fn voxel_flow_rate_matches_closed_form() {
        // R = 10 voxels
        let g = Grid4D::new(4, 32, 32, 32, 2.0, 20.0).unwrap();
        let s = tube(g, 20.0);
        let f = evaluate_phantom(&s, 32, 20.0).unwrap();
        for t in [0usize, 6, 21] {
            let q_vox: f64 =
                f.v.slice(s![0, t, 1, .., ..])
                    .iter()
                    .map(|&u| u as f64 * g.dx * g.dx)
                    .sum();
            let q = s.flow_rate(t as f64 * 20.0);
            assert!(((q_vox - q) / q).abs() < 0.02, "t={t}: {q_vox} vs {q}");
        }
    }

    #[test]
    fn tube_outside_grid_is_rejected() {
        let g = Grid4D::new(4, 16, 16, 32, 1.0, 20.0).unwrap();
        let mut s = tube(g, 4.0);
        s.center = [2.0, 8.0];
        assert!(matches!(
            evaluate_phantom(&s, 32, 20.0),
            Err(Error::PhantomOutOfBounds(_))
        ));
    }

    #[test]
    fn sampling_must_cover_one_cycle() {
        let g = Grid4D::new(4, 16, 16, 32, 1.0, 20.0).unwrap();
        let s = tube(g, 4.0);
        assert!(evaluate_phantom(&s, 30, 20.0).is_err());
    }

    #[test]
    fn pair_alignment_and_rates() {
        let g = Grid4D::new(4, 16, 16, 32, 2.0, 20.0).unwrap();
        let s = PhantomSpec::Tube(tube(g, 8.0));
        let (hr, lr) = evaluate_phantom_pair(&s, 32, 20.0).unwrap();
        assert_eq!((hr.grid.nt, hr.grid.dt), (32, 20.0));
        assert_eq!((lr.grid.nt, lr.grid.dt), (16, 40.0));
        for i in 0..16 {
            let a = lr.v.slice(s![.., i, .., .., ..]);
            let b = hr.v.slice(s![.., 2 * i, .., .., ..]);
            assert!(a
                .iter()
                .zip(b.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert!(evaluate_phantom_pair(&s, 31, 20.0).is_err());
    }

    #[test]
    fn constant_waveform_gives_static_frames() {
        let g = Grid4D::new(4, 16, 16, 8, 2.0, 80.0).unwrap();
        let mut t = tube(g, 8.0);
        t.waveform.a_s = 0.0;
        t.waveform.a_d = 0.0;
        t.waveform.offset = 0.5;
        let (hr, lr) = evaluate_phantom_pair(&PhantomSpec::Tube(t), 8, 80.0).unwrap();
        for f in [&hr, &lr] {
            let first = f.v.slice(s![.., 0, .., .., ..]).to_owned();
            for k in 1..f.grid.nt {
                assert_eq!(f.v.slice(s![.., k, .., .., ..]), first);
            }
        }
    }

    #[test]
    fn waveform_is_periodic() {
        let w = waveform();
        for k in 0..32 {
            let t = k as f64 * 20.0;
            assert_eq!(w.eval(t), w.eval(t + w.period));
        }
    }

    fn central_divergence(f: &VelocityField4D, t: usize, x: usize, y: usize, z: usize) -> f64 {
        let dx = f.grid.dx;
        let d = |c: usize, p: [usize; 3], q: [usize; 3]| {
            (f.v[[c, t, p[0], p[1], p[2]]] as f64 - f.v[[c, t, q[0], q[1], q[2]]] as f64)
                / (2.0 * dx)
        };
        d(0, [x + 1, y, z], [x - 1, y, z])
            + d(1, [x, y + 1, z], [x, y - 1, z])
            + d(2, [x, y, z + 1], [x, y, z - 1])
    }

    #[test]
    fn tube_flow_is_divergence_free() {
        let g = Grid4D::new(8, 16, 16, 32, 2.0, 20.0).unwrap();
        let f = evaluate_phantom(&tube(g, 10.0), 32, 20.0).unwrap();
        for x in 1..7 {
            for y in 1..15 {
                for z in 1..15 {
                    assert_eq!(central_divergence(&f, 5, x, y, z), 0.0);
                }
            }
        }
    }

    #[test]
    fn vortex_interior_is_divergence_free_and_uses_all_components() {
        let g = Grid4D::new(16, 16, 16, 32, 2.0, 20.0).unwrap();
        let s = PhantomSpec::Vortex(VortexPhantomSpec {
            grid: g,
            center: [16.0, 16.0, 16.0],
            radius: 14.0,
            axis: [1.0, 1.0, 1.0],
            waveform: waveform(),
            peak_velocity: 1.0,
            magnitude_contrast: (1.0, 0.2),
        });
        let f = evaluate(&s, 32, 20.0).unwrap();
        for c in 0..3 {
            assert!(f
                .v
                .slice(s![c, 6, .., .., ..])
                .iter()
                .any(|&u| u.abs() > 0.1));
        }
        // well inside the sphere, away from the wall
        for x in 5..11 {
            for y in 5..11 {
                for z in 5..11 {
                    assert!(central_divergence(&f, 6, x, y, z).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn sampled_phantoms_are_valid_and_seeded() {
        let g = Grid4D::new(32, 24, 16, 32, 1.5, 20.0).unwrap();
        let sampler = PhantomSampler::default();
        let mut kinds = [0; 2];
        for seed in 0..40 {
            let spec = sampler.sample(&g, seed).unwrap();
            assert_eq!(spec, sampler.sample(&g, seed).unwrap());
            kinds[matches!(spec, PhantomSpec::Vortex(_)) as usize] += 1;
            let f = evaluate(&spec, 32, 20.0).unwrap();
            assert!(f.fluid_count() > 0);
        }
        assert!(kinds[0] > 0 && kinds[1] > 0);
        assert_ne!(
            sampler.sample(&g, 1).unwrap(),
            sampler.sample(&g, 2).unwrap()
        );
    }
}
