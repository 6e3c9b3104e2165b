//! Phase encoding, coil weighting, unitary FFT, SNR-targeted noise and sampling.

use std::f64::consts::PI;

use ndarray::{s, Array3, Array6, ArrayD, ArrayView3, Axis, IxDyn};
use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coils::CoilArray;
use super::sampling::{generate_phyllotaxis_pattern, SamplingPattern};
use crate::container::{ArrayData, Container};
use crate::error::{Error, Result};
use crate::fft::{Direction, Fft3Plan};
use crate::grid::{ComplexVolume, VelocityField4D};
use crate::seed::mix;

/// Number of encodings: a flow-compensated reference plus x, y and z flow encodings.
pub const N_ENCODINGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoilModel {
    #[default]
    BiotSavart,
    /// a single coil with unit sensitivity everywhere
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    /// m/s
    pub venc: f64,
    /// target SNR range in dB; `None` disables noise
    pub snr_db_range: Option<(f64, f64)>,
    pub n_coils_total: usize,
    pub n_coils_active: usize,
    pub acceleration: f64,
    pub seed: u64,
    /// consecutive frames that share one phyllotaxis budget
    pub interleaves: usize,
    pub coil_model: CoilModel,
    /// sample every phase-encode cell in every frame, ignoring `acceleration`
    pub full_sampling: bool,
}

fn default_interleaves() -> usize {
    2
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            venc: 1.5,
            snr_db_range: Some((14.0, 17.0)),
            n_coils_total: 64,
            n_coils_active: 8,
            acceleration: 7.7,
            seed: 0,
            interleaves: default_interleaves(),
            coil_model: CoilModel::BiotSavart,
            full_sampling: false,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.venc > 0.0) {
            return bad(format!("venc must be positive, got {}", self.venc));
        }
        if let Some((lo, hi)) = self.snr_db_range {
            if !(lo <= hi) {
                return bad(format!("snr range low {lo} > high {hi}"));
            }
        }
        if self.n_coils_active == 0 || self.n_coils_active > self.n_coils_total {
            return bad(format!(
                "need 1 <= n_coils_active ({}) <= n_coils_total ({})",
                self.n_coils_active, self.n_coils_total
            ));
        }
        if !(self.acceleration >= 1.0) {
            return bad(format!(
                "acceleration must be >= 1, got {}",
                self.acceleration
            ));
        }
        if self.interleaves == 0 {
            return bad("interleaves must be >= 1".into());
        }
        Ok(())
    }
}

/// Complex images for the reference and three flow encodings at one frame.
///
/// Phase `v/venc·π`; the reference encoding carries no velocity phase.
pub fn velocity_to_complex(
    v: [ArrayView3<'_, f32>; 3],
    m: ArrayView3<'_, f32>,
    venc: f64,
) -> Result<[ComplexVolume; N_ENCODINGS]> {
    if !(venc > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "venc must be positive, got {venc}"
        )));
    }
    for c in &v {
        if c.dim() != m.dim() {
            return Err(Error::ShapeMismatch(
                "velocity and magnitude volumes differ".into(),
            ));
        }
    }
    let reference = m.mapv(|m| Complex64::new(m as f64, 0.0));
    let enc = |c: usize| -> ComplexVolume {
        let mut out = Array3::zeros(m.dim());
        ndarray::Zip::from(&mut out)
            .and(&v[c])
            .and(&m)
            .for_each(|o, &vel, &mag| {
                *o = Complex64::from_polar(mag as f64, vel as f64 / venc * PI);
            });
        out
    };
    Ok([reference, enc(0), enc(1), enc(2)])
}

/// Multi-coil k-space `[encoding][t][coil][x][ky][kz]` with the pattern that sampled it.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiCoilKSpace {
    pub data: Array6<Complex32>,
    pub pattern: SamplingPattern,
    pub config: AcquisitionConfig,
    /// mean noise-free fluid magnitude of the coil images, averaged over coils
    pub signal_level: f64,
}

impl MultiCoilKSpace {
    pub fn n_frames(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn n_coils(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn volume_dims(&self) -> [usize; 3] {
        let d = self.data.shape();
        [d[3], d[4], d[5]]
    }

    /// One coil's k-space volume promoted to double precision.
    pub fn volume(&self, enc: usize, t: usize, coil: usize) -> ComplexVolume {
        self.data
            .slice(s![enc, t, coil, .., .., ..])
            .mapv(|c| Complex64::new(c.re as f64, c.im as f64))
    }
}

/// Fully sampled, noise-free k-space: `fft3(coil ⊙ image)` per encoding, frame and coil.
pub fn encode_to_kspace(
    field: &VelocityField4D,
    coils: &CoilArray,
    config: &AcquisitionConfig,
) -> Result<MultiCoilKSpace> {
    config.validate()?;
    coils.check_grid(&field.grid)?;
    let g = field.grid;
    let nc = coils.n_coils();
    let plan = Fft3Plan::new([g.nx, g.ny, g.nz]);

    let jobs: Vec<(usize, usize)> = (0..g.nt)
        .flat_map(|t| (0..N_ENCODINGS).map(move |e| (e, t)))
        .collect();
    let encoded: Vec<Vec<Array3<Complex32>>> = jobs
        .par_iter()
        .map(|&(e, t)| -> Result<_> {
            let v = [0, 1, 2].map(|c| field.v.slice(s![c, t, .., .., ..]));
            let images =
                velocity_to_complex(v, field.magnitude.slice(s![t, .., .., ..]), config.venc)?;
            let img = &images[e];
            Ok((0..nc)
                .map(|c| {
                    let mut x = img * &coils.maps.slice(s![c, .., .., ..]);
                    plan.process(&mut x, Direction::Forward);
                    x.mapv(|z| Complex32::new(z.re as f32, z.im as f32))
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut data = Array6::zeros((N_ENCODINGS, g.nt, nc, g.nx, g.ny, g.nz));
    for (&(e, t), coils_k) in jobs.iter().zip(encoded) {
        for (c, k) in coils_k.into_iter().enumerate() {
            data.slice_mut(s![e, t, c, .., .., ..]).assign(&k);
        }
    }

    Ok(MultiCoilKSpace {
        data,
        pattern: SamplingPattern::full(g.nt, g.ny, g.nz),
        config: config.clone(),
        signal_level: signal_level(field, coils),
    })
}

/// Mean of `|coil|·m` over fluid voxels and frames, averaged over coils.
/// Falls back to all voxels when the mask is empty.
pub fn signal_level(field: &VelocityField4D, coils: &CoilArray) -> f64 {
    let use_all = field.fluid_count() == 0;
    let g = field.grid;
    let mut total = 0.0;
    let mut count = 0usize;
    for map in coils.maps.outer_iter() {
        for t in 0..g.nt {
            let m = field.magnitude.slice(s![t, .., .., ..]);
            ndarray::Zip::from(&map)
                .and(&m)
                .and(&field.fluid_mask)
                .for_each(|c, &mag, &f| {
                    if use_all || f {
                        total += c.norm() * mag as f64;
                        count += 1;
                    }
                });
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Per-component noise standard deviation for a target SNR in dB.
pub fn noise_sigma(signal: f64, snr_db: f64) -> f64 {
    signal / 10f64.powf(snr_db / 20.0)
}

/// Uniform draw from the configured SNR range; `+inf` when noise is disabled.
pub fn draw_snr_db(range: Option<(f64, f64)>, seed: u64) -> f64 {
    match range {
        None => f64::INFINITY,
        Some((lo, hi)) if lo == hi => lo,
        Some((lo, hi)) => ChaCha8Rng::seed_from_u64(mix(seed, &[0x5a12])).gen_range(lo..hi),
    }
}

/// Add i.i.d. complex Gaussian noise to every sampled entry. `+inf` is a no-op.
pub fn add_noise(mut kspace: MultiCoilKSpace, target_snr_db: f64, seed: u64) -> MultiCoilKSpace {
    if target_snr_db == f64::INFINITY {
        return kspace;
    }
    let sigma = noise_sigma(kspace.signal_level, target_snr_db);
    let masks = &kspace.pattern.masks;
    let nc = kspace.n_coils();
    kspace
        .data
        .outer_iter_mut()
        .enumerate()
        .for_each(|(e, mut per_enc)| {
            per_enc
                .outer_iter_mut()
                .into_par_iter()
                .enumerate()
                .for_each(|(t, mut per_frame)| {
                    let mask = masks.slice(s![t, .., ..]);
                    for c in 0..nc {
                        let mut rng =
                            ChaCha8Rng::seed_from_u64(mix(seed, &[e as u64, t as u64, c as u64]));
                        let mut vol = per_frame.slice_mut(s![c, .., .., ..]);
                        for mut plane in vol.outer_iter_mut() {
                            ndarray::Zip::from(&mut plane).and(&mask).for_each(|z, &m| {
                                if m {
                                    let nr: f64 = rng.sample(StandardNormal);
                                    let ni: f64 = rng.sample(StandardNormal);
                                    *z = Complex32::new(
                                        (z.re as f64 + sigma * nr) as f32,
                                        (z.im as f64 + sigma * ni) as f32,
                                    );
                                }
                            });
                        }
                    }
                });
        });
    kspace
}

/// Zero every entry the pattern does not sample. The stored pattern becomes the
/// intersection of the old and new patterns, so repeated sampling is idempotent.
pub fn sample_kspace(
    mut kspace: MultiCoilKSpace,
    pattern: &SamplingPattern,
) -> Result<MultiCoilKSpace> {
    let [_, ny, nz] = kspace.volume_dims();
    if pattern.n_frames() != kspace.n_frames() || pattern.plane() != (ny, nz) {
        return Err(Error::ShapeMismatch(format!(
            "pattern {:?} vs k-space frames {} plane {ny}x{nz}",
            pattern.masks.dim(),
            kspace.n_frames()
        )));
    }
    let zero = Complex32::new(0.0, 0.0);
    for mut per_enc in kspace.data.outer_iter_mut() {
        for (t, mut per_frame) in per_enc.outer_iter_mut().enumerate() {
            let mask = pattern.masks.slice(s![t, .., ..]);
            for mut vol in per_frame.outer_iter_mut() {
                for mut plane in vol.outer_iter_mut() {
                    ndarray::Zip::from(&mut plane).and(&mask).for_each(|z, &m| {
                        if !m {
                            *z = zero;
                        }
                    });
                }
            }
        }
    }
    let mut merged = kspace.pattern.masks.clone();
    merged.zip_mut_with(&pattern.masks, |a, &b| *a &= b);
    kspace.pattern = SamplingPattern {
        masks: merged,
        points: pattern.points.clone(),
    };
    Ok(kspace)
}

/// Combine `factor` consecutive frames: masks are unioned and cells sampled in
/// several frames take the mean of those samples.
pub fn accumulate_frames(kspace: &MultiCoilKSpace, factor: usize) -> Result<MultiCoilKSpace> {
    let pattern = kspace.pattern.accumulate(factor)?;
    if factor == 1 {
        return Ok(kspace.clone());
    }
    let (ne, nt, nc, nx, ny, nz) = kspace.data.dim();
    let nt_lr = nt / factor;
    let mut data = Array6::zeros((ne, nt_lr, nc, nx, ny, nz));
    let hr_masks = &kspace.pattern.masks;
    for e in 0..ne {
        for j in 0..nt_lr {
            for a in 0..ny {
                for b in 0..nz {
                    let frames: Vec<usize> = (factor * j..factor * (j + 1))
                        .filter(|&t| hr_masks[[t, a, b]])
                        .collect();
                    if frames.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / frames.len() as f64;
                    for c in 0..nc {
                        for x in 0..nx {
                            let mut re = 0.0f64;
                            let mut im = 0.0f64;
                            for &t in &frames {
                                let z = kspace.data[[e, t, c, x, a, b]];
                                re += z.re as f64;
                                im += z.im as f64;
                            }
                            data[[e, j, c, x, a, b]] =
                                Complex32::new((re * inv) as f32, (im * inv) as f32);
                        }
                    }
                }
            }
        }
    }
    Ok(MultiCoilKSpace {
        data,
        pattern,
        config: kspace.config.clone(),
        signal_level: kspace.signal_level,
    })
}

/// Acquisition pattern for `nt` frames: one phyllotaxis budget shared by
/// `interleaves` consecutive frames, repeated over the cycle.
pub fn acquisition_pattern(
    config: &AcquisitionConfig,
    nt: usize,
    ny: usize,
    nz: usize,
) -> Result<SamplingPattern> {
    if config.full_sampling {
        return Ok(SamplingPattern::full(nt, ny, nz));
    }
    let base = generate_phyllotaxis_pattern(ny, nz, config.interleaves, config.acceleration)?;
    Ok(base.tile(nt))
}

/// Encode, add noise at `snr_db` and sample with the configured pattern.
pub fn simulate_acquisition(
    field: &VelocityField4D,
    coils: &CoilArray,
    config: &AcquisitionConfig,
    snr_db: f64,
) -> Result<MultiCoilKSpace> {
    let g = field.grid;
    let pattern = acquisition_pattern(config, g.nt, g.ny, g.nz)?;
    let k = encode_to_kspace(field, coils, config)?;
    let k = add_noise(k, snr_db, mix(config.seed, &[0x0015e]));
    sample_kspace(k, &pattern)
}

/// `|mean(signal region)| / std(noise region)` in dB, the noise std pooled over
/// real and imaginary parts. Assumes a coherent phase inside the signal region.
pub fn measure_snr_db(image: &ComplexVolume, signal: &Array3<bool>, noise: &Array3<bool>) -> f64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut n_sig = 0usize;
    let mut samples = Vec::new();
    for ((z, &s), &n) in image.iter().zip(signal.iter()).zip(noise.iter()) {
        if s {
            sum += z;
            n_sig += 1;
        }
        if n {
            samples.push(z.re);
            samples.push(z.im);
        }
    }
    let mean_sig = (sum / n_sig as f64).norm();
    let mu = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (samples.len() - 1) as f64;
    20.0 * (mean_sig / var.sqrt()).log10()
}

/// Pack only the sampled entries into a container: a flat `samples` array in
/// `[e][t][c][x][ky][kz]` order, the `masks` and the dealt `points`.
pub fn kspace_to_container(kspace: &MultiCoilKSpace) -> Result<Container> {
    let (ne, nt, nc, nx, ny, nz) = kspace.data.dim();
    let masks = &kspace.pattern.masks;
    let mut samples = Vec::new();
    for e in 0..ne {
        for t in 0..nt {
            for c in 0..nc {
                for x in 0..nx {
                    for a in 0..ny {
                        for b in 0..nz {
                            if masks[[t, a, b]] {
                                samples.push(kspace.data[[e, t, c, x, a, b]]);
                            }
                        }
                    }
                }
            }
        }
    }
    let points: Vec<f64> = kspace
        .pattern
        .points
        .iter()
        .flat_map(|&(t, a, b)| [t as f64, a as f64, b as f64])
        .collect();
    let n_points = kspace.pattern.points.len();
    let mut out = Container::new();
    let n_samples = samples.len();
    let shape_err = |e: ndarray::ShapeError| Error::ShapeMismatch(e.to_string());
    out.push(
        "samples",
        ArrayData::C64(ArrayD::from_shape_vec(IxDyn(&[n_samples]), samples).map_err(shape_err)?),
    )
    .push("masks", ArrayData::U8(kspace.pattern.to_u8()))
    .push(
        "points",
        ArrayData::F64(ArrayD::from_shape_vec(IxDyn(&[n_points, 3]), points).map_err(shape_err)?),
    );
    out.set_meta("kspace_shape", [ne, nt, nc, nx, ny, nz])?;
    out.set_meta("acquisition", &kspace.config)?;
    out.set_meta("signal_level", kspace.signal_level)?;
    Ok(out)
}

pub fn kspace_from_container(c: &Container) -> Result<MultiCoilKSpace> {
    let [ne, nt, nc, nx, ny, nz]: [usize; 6] = c.meta("kspace_shape")?;
    let masks: Array3<bool> = c
        .u8("masks")?
        .mapv(|b| b != 0)
        .into_dimensionality()
        .map_err(|e| Error::ShapeMismatch(format!("masks: {e}")))?;
    if masks.dim() != (nt, ny, nz) {
        return Err(Error::ShapeMismatch(format!(
            "masks {:?} vs k-space {nt}x{ny}x{nz}",
            masks.dim()
        )));
    }
    let samples = c.c64("samples")?;
    let per_frame: Vec<usize> = masks
        .outer_iter()
        .map(|m| m.iter().filter(|&&b| b).count())
        .collect();
    let expected = ne * nc * nx * per_frame.iter().sum::<usize>();
    if samples.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{} samples, masks imply {expected}",
            samples.len()
        )));
    }
    let mut data = Array6::zeros((ne, nt, nc, nx, ny, nz));
    let mut it = samples.iter();
    for e in 0..ne {
        for t in 0..nt {
            for ch in 0..nc {
                for x in 0..nx {
                    for a in 0..ny {
                        for b in 0..nz {
                            if masks[[t, a, b]] {
                                data[[e, t, ch, x, a, b]] = *it.next().unwrap();
                            }
                        }
                    }
                }
            }
        }
    }
    let points = c
        .f64("points")?
        .rows()
        .into_iter()
        .map(|r| (r[0] as usize, r[1] as usize, r[2] as usize))
        .collect();
    Ok(MultiCoilKSpace {
        data,
        pattern: SamplingPattern { masks, points },
        config: c.meta("acquisition")?,
        signal_level: c.meta("signal_level")?,
    })
}
