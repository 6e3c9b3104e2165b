//! Golden-angle phyllotaxis sampling of the Cartesian phase-encode plane.
//!
//! Masks are stored in FFT order: cell `[0][0]` is the k-space centre.

use std::collections::HashSet;

use ndarray::{s, Array3};

use crate::error::{Error, Result};

pub const GOLDEN_ANGLE_DEG: f64 = 137.507_764_050_037_85;
pub const DEFAULT_DENSITY_EXPONENT: f64 = 0.7;

/// Per-frame masks `[t][ky][kz]` plus the ordered list of dealt points `(frame, ky, kz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPattern {
    pub masks: Array3<bool>,
    pub points: Vec<(usize, usize, usize)>,
}

impl SamplingPattern {
    pub fn full(nt: usize, ny: usize, nz: usize) -> Self {
        SamplingPattern {
            masks: Array3::from_elem((nt, ny, nz), true),
            points: Vec::new(),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.masks.dim().0
    }

    pub fn plane(&self) -> (usize, usize) {
        let (_, ny, nz) = self.masks.dim();
        (ny, nz)
    }

    pub fn frame_count(&self, t: usize) -> usize {
        self.masks
            .slice(s![t, .., ..])
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Cells sampled in at least one frame.
    pub fn union(&self) -> ndarray::Array2<bool> {
        let (_, ny, nz) = self.masks.dim();
        let mut u = ndarray::Array2::from_elem((ny, nz), false);
        for frame in self.masks.outer_iter() {
            u.zip_mut_with(&frame, |a, &b| *a |= b);
        }
        u
    }

    pub fn union_fraction(&self) -> f64 {
        let u = self.union();
        u.iter().filter(|&&b| b).count() as f64 / u.len() as f64
    }

    /// Repeat the pattern cyclically to `nt` frames.
    pub fn tile(&self, nt: usize) -> SamplingPattern {
        let n = self.n_frames();
        let (ny, nz) = self.plane();
        let mut masks = Array3::from_elem((nt, ny, nz), false);
        for t in 0..nt {
            masks
                .slice_mut(s![t, .., ..])
                .assign(&self.masks.slice(s![t % n, .., ..]));
        }
        let points = (0..nt)
            .flat_map(|t| {
                self.points
                    .iter()
                    .filter(move |p| p.0 == t % n)
                    .map(move |&(_, a, b)| (t, a, b))
            })
            .collect();
        SamplingPattern { masks, points }
    }

    /// Merge `factor` consecutive frames: mask `j` is the union of frames `factor*j ..`.
    pub fn accumulate(&self, factor: usize) -> Result<SamplingPattern> {
        let nt = self.n_frames();
        if factor == 0 || nt % factor != 0 {
            return Err(Error::Sampling(format!(
                "{nt} frames not divisible by accumulation factor {factor}"
            )));
        }
        let (ny, nz) = self.plane();
        let mut masks = Array3::from_elem((nt / factor, ny, nz), false);
        for t in 0..nt {
            let mut dst = masks.slice_mut(s![t / factor, .., ..]);
            dst.zip_mut_with(&self.masks.slice(s![t, .., ..]), |a, &b| *a |= b);
        }
        let points = self
            .points
            .iter()
            .map(|&(t, a, b)| (t / factor, a, b))
            .collect();
        Ok(SamplingPattern { masks, points })
    }

    pub fn to_u8(&self) -> ndarray::ArrayD<u8> {
        self.masks.mapv(u8::from).into_dyn()
    }
}

/// Centred integer coordinate range `[-(n/2), n - n/2 - 1]` mapped to FFT index.
fn to_fft_index(k: i64, n: usize) -> Option<usize> {
    let lo = -((n / 2) as i64);
    let hi = (n - n / 2) as i64 - 1;
    (lo..=hi)
        .contains(&k)
        .then(|| k.rem_euclid(n as i64) as usize)
}

/// Distinct cells visited, in order of first visit, by an `n_points` spiral.
fn spiral_cells(ny: usize, nz: usize, n_points: usize, exponent: f64) -> Vec<(usize, usize)> {
    let golden = GOLDEN_ANGLE_DEG.to_radians();
    // reach slightly past the plane corners so edge cells can be hit
    let r_max = std::f64::consts::SQRT_2 * (1.0 + 1.0 / ny.min(nz) as f64);
    let mut seen = HashSet::with_capacity(n_points);
    let mut out = Vec::new();
    for n in 0..n_points {
        let r = r_max * (n as f64 / n_points as f64).powf(exponent);
        let (s, c) = (n as f64 * golden).sin_cos();
        let ky = (r * c * ny as f64 / 2.0).round() as i64;
        let kz = (r * s * nz as f64 / 2.0).round() as i64;
        if let (Some(a), Some(b)) = (to_fft_index(ky, ny), to_fft_index(kz, nz)) {
            if seen.insert((a, b)) {
                out.push((a, b));
            }
        }
    }
    out
}

/// Variable-density golden-angle pattern over `n_frames` frames at acceleration `r`.
///
/// The per-frame budget is `ceil(ny*nz / (r*n_frames))` distinct cells; cells are dealt
/// to frames round-robin in spiral order and the centre cell is added to every frame.
pub fn generate_phyllotaxis_pattern(
    ny: usize,
    nz: usize,
    n_frames: usize,
    r: f64,
) -> Result<SamplingPattern> {
    generate_phyllotaxis_pattern_with(ny, nz, n_frames, r, DEFAULT_DENSITY_EXPONENT)
}

pub fn generate_phyllotaxis_pattern_with(
    ny: usize,
    nz: usize,
    n_frames: usize,
    r: f64,
    exponent: f64,
) -> Result<SamplingPattern> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::Sampling(format!(
            "acceleration must be >= 1, got {r}"
        )));
    }
    if ny == 0 || nz == 0 || n_frames == 0 {
        return Err(Error::Sampling("empty plane or zero frames".into()));
    }
    if !(exponent > 0.5) {
        return Err(Error::Sampling(format!(
            "density exponent must exceed 0.5, got {exponent}"
        )));
    }
    let cells = ny * nz;
    let exact = cells as f64 / (r * n_frames as f64);
    if exact < 1.0 {
        return Err(Error::Sampling(format!(
            "acceleration {r} leaves frames with no samples ({exact:.3} per frame)"
        )));
    }
    let budget = exact.ceil() as usize;
    let target = (budget * n_frames).min(cells);

    // grow the point count until the spiral reaches `target` distinct cells
    let enough = |n: usize| spiral_cells(ny, nz, n, exponent).len() >= target;
    let cap = cells * 1024;
    let mut hi = target.max(1);
    while !enough(hi) {
        hi *= 2;
        if hi > cap {
            return Err(Error::Sampling(format!(
                "spiral cannot reach {target} distinct cells"
            )));
        }
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if enough(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut cells_in_order = spiral_cells(ny, nz, hi, exponent);
    cells_in_order.truncate(target);

    let mut masks = Array3::from_elem((n_frames, ny, nz), false);
    let mut points = Vec::with_capacity(target + n_frames);
    for (i, &(a, b)) in cells_in_order.iter().enumerate() {
        let t = i % n_frames;
        masks[[t, a, b]] = true;
        points.push((t, a, b));
    }
    for t in 0..n_frames {
        if !masks[[t, 0, 0]] {
            masks[[t, 0, 0]] = true;
            points.push((t, 0, 0));
        }
    }
    Ok(SamplingPattern { masks, points })
}

/// Normalized elliptical radius of an FFT-ordered cell (0 at the centre, ~1 at the edges).
pub fn cell_radius(a: usize, b: usize, ny: usize, nz: usize) -> f64 {
    let centred = |k: usize, n: usize| -> f64 {
        let k = k as i64;
        let k = if k >= (n - n / 2) as i64 {
            k - n as i64
        } else {
            k
        };
        k as f64 / (n as f64 / 2.0)
    };
    let (y, z) = (centred(a, ny), centred(b, nz));
    (y * y + z * z).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_acceleration_samples_everything() {
        let p = generate_phyllotaxis_pattern(12, 10, 1, 1.0).unwrap();
        assert!(p.masks.iter().all(|&b| b));
    }

    #[test]
    fn union_density_tracks_acceleration() {
        for (ny, nz, frames) in [(48, 24, 2), (48, 24, 32), (32, 16, 2), (64, 64, 8)] {
            let p = generate_phyllotaxis_pattern(ny, nz, frames, 7.7).unwrap();
            let frac = p.union_fraction();
            assert!(
                (frac * 7.7 - 1.0).abs() < 0.10,
                "{ny}x{nz}/{frames}: fraction {frac}"
            );
        }
    }

    #[test]
    fn every_frame_has_the_centre_and_its_budget() {
        let p = generate_phyllotaxis_pattern(40, 20, 4, 4.0).unwrap();
        for t in 0..4 {
            assert!(p.masks[[t, 0, 0]]);
            assert!(p.frame_count(t) >= 50);
        }
    }

    #[test]
    fn too_much_acceleration_is_an_error() {
        assert!(generate_phyllotaxis_pattern(8, 8, 4, 20.0).is_err());
        assert!(generate_phyllotaxis_pattern(8, 8, 1, 0.5).is_err());
    }

    #[test]
    fn density_is_centre_weighted() {
        // sampled fraction per equal-area ring decreases outward, so the cumulative
        // sample count is increasing and concave in enclosed area
        let (ny, nz) = (64, 64);
        let p = generate_phyllotaxis_pattern(ny, nz, 1, 4.0).unwrap();
        let bins = 8;
        let mut sampled = vec![0usize; bins];
        let mut total = vec![0usize; bins];
        for ((_, a, b), &m) in p.masks.indexed_iter() {
            let r = cell_radius(a, b, ny, nz);
            if r >= 1.0 {
                continue;
            }
            let k = (r * r * bins as f64) as usize;
            total[k] += 1;
            sampled[k] += usize::from(m);
        }
        let frac: Vec<f64> = sampled
            .iter()
            .zip(&total)
            .map(|(&s, &t)| s as f64 / t as f64)
            .collect();
        for w in frac.windows(2) {
            assert!(w[1] <= w[0] + 0.02, "fractions {frac:?}");
        }
        assert!(frac[0] > 2.0 * frac[bins - 1], "fractions {frac:?}");
    }

    #[test]
    fn accumulate_merges_consecutive_frames() {
        let p = generate_phyllotaxis_pattern(20, 20, 4, 2.0).unwrap();
        let lr = p.accumulate(2).unwrap();
        assert_eq!(lr.n_frames(), 2);
        for j in 0..2 {
            for a in 0..20 {
                for b in 0..20 {
                    assert_eq!(
                        lr.masks[[j, a, b]],
                        p.masks[[2 * j, a, b]] || p.masks[[2 * j + 1, a, b]]
                    );
                }
            }
        }
        assert_eq!(lr.union(), p.union());
        assert_eq!(p.accumulate(1).unwrap(), p);
        assert!(p.accumulate(3).is_err());
    }

    #[test]
    fn tiling_repeats_frames() {
        let p = generate_phyllotaxis_pattern(16, 16, 2, 2.0).unwrap();
        let t = p.tile(6);
        for k in 0..6 {
            assert_eq!(
                t.masks.slice(s![k, .., ..]),
                p.masks.slice(s![k % 2, .., ..])
            );
        }
    }
}
