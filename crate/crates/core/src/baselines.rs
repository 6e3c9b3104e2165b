//! Deterministic periodic temporal upsamplers: linear and band-limited (DFT) interpolation.

use ndarray::{Array4, Array5, ArrayView1, ArrayViewMut1, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::VelocityField4D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Linear,
    Sinc,
}

impl Interpolation {
    pub fn name(self) -> &'static str {
        match self {
            Interpolation::Linear => "linear",
            Interpolation::Sinc => "sinc",
        }
    }
}

fn check(field: &VelocityField4D, factor: usize) -> Result<()> {
    if field.grid.nt < 2 {
        return Err(Error::InvalidConfig(format!(
            "temporal interpolation needs nt >= 2, got {}",
            field.grid.nt
        )));
    }
    if factor == 0 {
        return Err(Error::InvalidConfig(
            "upsampling factor must be >= 1".into(),
        ));
    }
    Ok(())
}

/// Apply a per-series map along the time axis of velocity and magnitude.
fn map_time<F>(field: &VelocityField4D, factor: usize, f: F) -> Result<VelocityField4D>
where
    F: Fn(ArrayView1<f32>, ArrayViewMut1<f32>) + Sync,
{
    check(field, factor)?;
    let g = field.grid;
    let nt = g.nt * factor;
    let mut v = Array5::<f32>::zeros((3, nt, g.nx, g.ny, g.nz));
    for c in 0..3 {
        let src = field.v.index_axis(Axis(0), c);
        let mut dst = v.index_axis_mut(Axis(0), c);
        ndarray::Zip::from(src.lanes(Axis(0)))
            .and(dst.lanes_mut(Axis(0)))
            .par_for_each(|a, b| f(a, b));
    }
    let mut magnitude = Array4::<f32>::zeros((nt, g.nx, g.ny, g.nz));
    ndarray::Zip::from(field.magnitude.lanes(Axis(0)))
        .and(magnitude.lanes_mut(Axis(0)))
        .par_for_each(|a, b| f(a, b));
    // band-limited ringing can undershoot zero
    magnitude.mapv_inplace(|m| m.max(0.0));
    VelocityField4D::new(
        g.with_time(nt, g.dt / factor as f64),
        v,
        magnitude,
        field.fluid_mask.clone(),
    )
}

/// Output frame `f·t + j` is `(1 − j/f)·x[t] + (j/f)·x[t+1]`, with `x[nt] = x[0]`.
pub fn linear_interp_time(field: &VelocityField4D, factor: usize) -> Result<VelocityField4D> {
    map_time(field, factor, |x, mut y| {
        let n = x.len();
        for t in 0..n {
            let (a, b) = (x[t] as f64, x[(t + 1) % n] as f64);
            for j in 0..factor {
                let w = j as f64 / factor as f64;
                y[t * factor + j] = ((1.0 - w) * a + w * b) as f32;
            }
        }
    })
}

/// Periodic band-limited interpolation of one series by spectral zero-padding.
/// For even `n` the Nyquist bin is split evenly between ±n/2.
pub fn sinc_upsample_series(x: &[f64], factor: usize) -> Vec<f64> {
    let n = x.len();
    let m = n * factor;
    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut padded = vec![Complex64::new(0.0, 0.0); m];
    let half = n / 2;
    for (k, &c) in spec.iter().enumerate() {
        if n % 2 == 0 && k == half && factor > 1 {
            padded[half] += c * 0.5;
            padded[m - half] += c * 0.5;
        } else if k <= half {
            padded[k] = c;
        } else {
            padded[m - (n - k)] = c;
        }
    }
    planner.plan_fft_inverse(m).process(&mut padded);
    padded.iter().map(|c| c.re / n as f64).collect()
}

pub fn sinc_interp_time(field: &VelocityField4D, factor: usize) -> Result<VelocityField4D> {
    map_time(field, factor, |x, mut y| {
        let series: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        for (d, s) in y.iter_mut().zip(sinc_upsample_series(&series, factor)) {
            *d = s as f32;
        }
    })
}

pub fn interpolate(
    field: &VelocityField4D,
    method: Interpolation,
    factor: usize,
) -> Result<VelocityField4D> {
    match method {
        Interpolation::Linear => linear_interp_time(field, factor),
        Interpolation::Sinc => sinc_interp_time(field, factor),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid4D;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn series_field(series: &[f32]) -> VelocityField4D {
        let g = Grid4D::new(2, 1, 1, series.len(), 1.0, 40.0).unwrap();
        let mut f = VelocityField4D::zeros(g);
        for (t, &s) in series.iter().enumerate() {
            for c in 0..3 {
                f.v[[c, t, 0, 0, 0]] = s * (c as f32 + 1.0);
                f.v[[c, t, 1, 0, 0]] = -s;
            }
            f.magnitude[[t, 0, 0, 0]] = s.abs();
        }
        f
    }

    #[test]
    fn linear_two_frames_wraps() {
        let f = series_field(&[1.0, 3.0]);
        let out = linear_interp_time(&f, 2).unwrap();
        let got: Vec<f32> = (0..4).map(|t| out.v[[0, t, 0, 0, 0]]).collect();
        assert_eq!(got, vec![1.0, 2.0, 3.0, 2.0]);
        assert_eq!(out.grid.nt, 4);
        assert_eq!(out.grid.dt, 20.0);
    }

    #[test]
    fn linear_midpoints_of_a_ramp_are_exact() {
        let f = series_field(&[0.0, 0.5, 1.0, 1.5, 2.0]);
        let out = linear_interp_time(&f, 2).unwrap();
        for t in 0..8 {
            assert_eq!(out.v[[0, t, 0, 0, 0]], 0.25 * t as f32);
        }
    }

    #[test]
    fn sinc_reproduces_a_sinusoid() {
        let n = 8;
        let period = 4.0;
        let phase = 0.3;
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * PI * t as f64 / period + phase).sin())
            .collect();
        let y = sinc_upsample_series(&x, 2);
        for (s, v) in y.iter().enumerate() {
            let want = (2.0 * PI * (s as f64 / 2.0) / period + phase).sin();
            assert!((v - want).abs() < 1e-9, "{s}: {v} vs {want}");
        }
    }

    #[test]
    fn sinc_keeps_input_frames_and_constants() {
        let x = [0.3, -1.2, 2.5, 0.7, 0.1];
        let y = sinc_upsample_series(&x, 2);
        for t in 0..5 {
            assert!((y[2 * t] - x[t]).abs() < 1e-9);
        }
        let f = series_field(&[2.0; 6]);
        let out = sinc_interp_time(&f, 2).unwrap();
        for t in 0..12 {
            assert!((out.v[[0, t, 0, 0, 0]] - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_frames() {
        let f = series_field(&[1.0]);
        assert!(linear_interp_time(&f, 2).is_err());
        assert!(sinc_interp_time(&f, 2).is_err());
    }

    proptest! {
        #[test]
        fn both_preserve_the_mean_and_are_linear(
            x in prop::collection::vec(-3.0f64..3.0, 2..12),
            y in prop::collection::vec(-3.0f64..3.0, 12),
            a in -2.0f64..2.0,
        ) {
            let n = x.len();
            let y = &y[..n];
            let mean = x.iter().sum::<f64>() / n as f64;
            let s = sinc_upsample_series(&x, 2);
            prop_assert!((s.iter().sum::<f64>() / (2 * n) as f64 - mean).abs() < 1e-9);
            for t in 0..n {
                prop_assert!((s[2 * t] - x[t]).abs() < 1e-9);
            }
            let combo: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + q).collect();
            let sc = sinc_upsample_series(&combo, 2);
            let sy = sinc_upsample_series(y, 2);
            for k in 0..2 * n {
                prop_assert!((sc[k] - (a * s[k] + sy[k])).abs() < 1e-9);
            }
            let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
            let lin = linear_interp_time(&series_field(&xf), 2).unwrap();
            let lm: f64 = (0..2 * n).map(|t| lin.v[[0, t, 0, 0, 0]] as f64).sum::<f64>() / (2 * n) as f64;
            let xm: f64 = xf.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            prop_assert!((lm - xm).abs() < 1e-5);
        }
    }
}
