//! Orthonormal separable 3D Haar wavelet transform (Mallat layout).

use ndarray::{s, Array3, ArrayViewMut1, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ComplexVolume;

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaarTransform3D {
    levels: usize,
    dims: [usize; 3],
}

impl HaarTransform3D {
    /// Every axis longer than one voxel must be divisible by `2^levels`;
    /// singleton axes are left untransformed.
    pub fn new(dims: [usize; 3], levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidConfig(
                "Haar transform needs at least one level".into(),
            ));
        }
        let block = 1usize << levels;
        for &n in &dims {
            if n > 1 && n % block != 0 {
                return Err(Error::InvalidConfig(format!(
                    "volume {dims:?} not divisible by 2^{levels} for the Haar transform"
                )));
            }
        }
        Ok(HaarTransform3D { levels, dims })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    fn extent(&self, level: usize) -> [usize; 3] {
        self.dims.map(|n| if n > 1 { n >> level } else { 1 })
    }

    pub fn forward(&self, x: &ComplexVolume) -> ComplexVolume {
        let mut c = x.clone();
        self.forward_inplace(&mut c);
        c
    }

    pub fn inverse(&self, c: &ComplexVolume) -> ComplexVolume {
        let mut x = c.clone();
        self.inverse_inplace(&mut x);
        x
    }

    pub fn forward_inplace(&self, x: &mut ComplexVolume) {
        assert_eq!(x.shape(), &self.dims[..]);
        let mut buf = vec![Complex64::new(0.0, 0.0); *self.dims.iter().max().unwrap()];
        for level in 0..self.levels {
            let e = self.extent(level);
            let mut sub = x.slice_mut(s![..e[0], ..e[1], ..e[2]]);
            for axis in 0..3 {
                if e[axis] > 1 {
                    for lane in sub.lanes_mut(Axis(axis)) {
                        analyze(lane, &mut buf);
                    }
                }
            }
        }
    }

    pub fn inverse_inplace(&self, x: &mut ComplexVolume) {
        assert_eq!(x.shape(), &self.dims[..]);
        let mut buf = vec![Complex64::new(0.0, 0.0); *self.dims.iter().max().unwrap()];
        for level in (0..self.levels).rev() {
            let e = self.extent(level);
            let mut sub = x.slice_mut(s![..e[0], ..e[1], ..e[2]]);
            for axis in (0..3).rev() {
                if e[axis] > 1 {
                    for lane in sub.lanes_mut(Axis(axis)) {
                        synthesize(lane, &mut buf);
                    }
                }
            }
        }
    }
}

/// `[a0, a1, ...] -> [(a0+a1)/√2, ... | (a0−a1)/√2, ...]`
fn analyze(mut lane: ArrayViewMut1<'_, Complex64>, buf: &mut [Complex64]) {
    let n = lane.len();
    let h = n / 2;
    for i in 0..h {
        let (a, b) = (lane[2 * i], lane[2 * i + 1]);
        buf[i] = (a + b) * SQRT_HALF;
        buf[h + i] = (a - b) * SQRT_HALF;
    }
    for (v, b) in lane.iter_mut().zip(&buf[..n]) {
        *v = *b;
    }
}

fn synthesize(mut lane: ArrayViewMut1<'_, Complex64>, buf: &mut [Complex64]) {
    let n = lane.len();
    let h = n / 2;
    for i in 0..h {
        let (s, d) = (lane[i], lane[h + i]);
        buf[2 * i] = (s + d) * SQRT_HALF;
        buf[2 * i + 1] = (s - d) * SQRT_HALF;
    }
    for (v, b) in lane.iter_mut().zip(&buf[..n]) {
        *v = *b;
    }
}

pub fn haar_forward(x: &ComplexVolume, levels: usize) -> Result<ComplexVolume> {
    let (a, b, c) = x.dim();
    Ok(HaarTransform3D::new([a, b, c], levels)?.forward(x))
}

pub fn haar_inverse(c: &ComplexVolume, levels: usize) -> Result<ComplexVolume> {
    let (a, b, d) = c.dim();
    Ok(HaarTransform3D::new([a, b, d], levels)?.inverse(c))
}

/// Mask of the coarsest approximation band.
pub fn approximation_band(dims: [usize; 3], levels: usize) -> Array3<bool> {
    let mut m = Array3::from_elem((dims[0], dims[1], dims[2]), false);
    let e = dims.map(|n| if n > 1 { n >> levels } else { 1 });
    m.slice_mut(s![..e[0], ..e[1], ..e[2]]).fill(true);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(dims: [usize; 3], seed: u64) -> ComplexVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((dims[0], dims[1], dims[2]), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn one_level_pair_butterfly() {
        let x = Array3::from_shape_vec(
            (2, 1, 1),
            vec![Complex64::new(3.0, 0.0), Complex64::new(1.0, 0.0)],
        )
        .unwrap();
        let c = haar_forward(&x, 1).unwrap();
        let r2 = 2f64.sqrt();
        assert!((c[[0, 0, 0]].re - 4.0 / r2).abs() < 1e-15);
        assert!((c[[1, 0, 0]].re - 2.0 / r2).abs() < 1e-15);
    }

    #[test]
    fn constant_volume_has_no_detail() {
        let x = Array3::from_elem((4, 4, 4), Complex64::new(2.5, -1.0));
        let c = haar_forward(&x, 1).unwrap();
        let approx = approximation_band([4, 4, 4], 1);
        for (v, &a) in c.iter().zip(approx.iter()) {
            if !a {
                assert_eq!(*v, Complex64::new(0.0, 0.0));
            } else {
                assert!(v.norm() > 0.0);
            }
        }
    }

    #[test]
    fn rejects_indivisible_dims() {
        assert!(HaarTransform3D::new([6, 8, 8], 2).is_err());
        assert!(HaarTransform3D::new([8, 8, 1], 2).is_ok());
        assert!(HaarTransform3D::new([8, 8, 8], 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn perfect_reconstruction_and_parseval(seed in any::<u64>(), l in 1usize..=2, shape in 0usize..3) {
            let dims = [[8, 8, 4], [4, 12, 8], [16, 4, 1]][shape];
            let x = random_volume(dims, seed);
            let h = HaarTransform3D::new(dims, l).unwrap();
            let c = h.forward(&x);
            let y = h.inverse(&c);
            let ex: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let ec: f64 = c.iter().map(|v| v.norm_sqr()).sum();
            prop_assert!(((ex - ec) / ex).abs() < 1e-12);
            for (a, b) in x.iter().zip(y.iter()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
