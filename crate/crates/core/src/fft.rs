//! Unitary 3D FFT over complex volumes.

use std::sync::Arc;

use ndarray::Array3;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Planned 3D transform for one volume shape; reusable across calls and threads.
#[derive(Clone)]
pub struct Fft3Plan {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
    scale: f64,
}

impl std::fmt::Debug for Fft3Plan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3Plan")
            .field("dims", &self.dims)
            .finish()
    }
}

impl Fft3Plan {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        let n: usize = dims.iter().product();
        Fft3Plan {
            dims,
            forward,
            inverse,
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// In-place transform with `1/sqrt(N)` normalization in both directions.
    pub fn process(&self, x: &mut Array3<Complex64>, dir: Direction) {
        assert_eq!(x.shape(), &self.dims[..], "volume does not match plan");
        let plans = match dir {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        };
        let owned;
        let data: &mut [Complex64] = match x.as_slice_mut() {
            Some(d) => d,
            None => {
                owned = x.as_standard_layout().to_owned();
                *x = owned;
                x.as_slice_mut().expect("standard layout")
            }
        };
        let zero = Complex64::new(0.0, 0.0);
        let mut scratch = vec![
            zero;
            plans
                .iter()
                .map(|p| p.get_inplace_scratch_len())
                .max()
                .unwrap_or(0)
        ];
        let [n0, n1, n2] = self.dims;
        if n2 > 1 {
            plans[2].process_with_scratch(data, &mut scratch);
        }
        // the other two axes: gather each (outer, axis, inner) block so the axis is contiguous
        let mut buf = Vec::new();
        for (axis, outer, n, inner) in [(1, n0, n1, n2), (0, 1, n0, n1 * n2)] {
            if n == 1 {
                continue;
            }
            buf.resize(n * inner, zero);
            for o in 0..outer {
                let block = &mut data[o * n * inner..(o + 1) * n * inner];
                for k in 0..n {
                    for i in 0..inner {
                        buf[i * n + k] = block[k * inner + i];
                    }
                }
                plans[axis].process_with_scratch(&mut buf, &mut scratch);
                for k in 0..n {
                    for i in 0..inner {
                        block[k * inner + i] = buf[i * n + k];
                    }
                }
            }
        }
        let s = self.scale;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Unitary 3D FFT of `x`.
pub fn fft3_unitary(x: &Array3<Complex64>, dir: Direction) -> Array3<Complex64> {
    let (a, b, c) = x.dim();
    let plan = Fft3Plan::new([a, b, c]);
    let mut out = x.to_owned();
    plan.process(&mut out, dir);
    out
}

#[cfg(test)]
fn inner(a: &Array3<Complex64>, b: &Array3<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
fn energy(a: &Array3<Complex64>) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}
