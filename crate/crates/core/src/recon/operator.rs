//! Encoding operator `E = mask ∘ FFT ∘ coil` for one frame, and its adjoint.

use ndarray::{s, Array2, Array3, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{Direction, Fft3Plan};
use crate::grid::ComplexVolume;
use crate::mrsim::CoilArray;

/// Linear map between an image volume and a list of data volumes.
pub trait LinearOperator: Sync {
    fn image_dims(&self) -> [usize; 3];
    fn n_outputs(&self) -> usize;
    fn apply(&self, x: &ComplexVolume) -> Vec<ComplexVolume>;
    fn adjoint(&self, y: &[ComplexVolume]) -> ComplexVolume;
}

/// Per-frame encoding operator. Coil maps are shared with the simulator.
#[derive(Debug, Clone)]
pub struct EncodingOperator<'a> {
    coils: &'a CoilArray,
    mask: Array2<bool>,
    plan: Fft3Plan,
}

impl<'a> EncodingOperator<'a> {
    pub fn new(coils: &'a CoilArray, mask: Array2<bool>) -> Result<Self> {
        let (_, nx, ny, nz) = coils.maps.dim();
        if mask.dim() != (ny, nz) {
            return Err(Error::ShapeMismatch(format!(
                "mask {:?} vs phase-encode plane {ny}x{nz}",
                mask.dim()
            )));
        }
        Ok(EncodingOperator {
            coils,
            mask,
            plan: Fft3Plan::new([nx, ny, nz]),
        })
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    fn apply_mask(&self, k: &mut ComplexVolume) {
        let zero = Complex64::new(0.0, 0.0);
        for mut plane in k.outer_iter_mut() {
            Zip::from(&mut plane).and(&self.mask).for_each(|z, &m| {
                if !m {
                    *z = zero;
                }
            });
        }
    }
}

impl LinearOperator for EncodingOperator<'_> {
    fn image_dims(&self) -> [usize; 3] {
        self.plan.dims()
    }

    fn n_outputs(&self) -> usize {
        self.coils.n_coils()
    }

    fn apply(&self, x: &ComplexVolume) -> Vec<ComplexVolume> {
        self.coils
            .maps
            .outer_iter()
            .map(|map| {
                let mut k = &map * x;
                self.plan.process(&mut k, Direction::Forward);
                self.apply_mask(&mut k);
                k
            })
            .collect()
    }

    fn adjoint(&self, y: &[ComplexVolume]) -> ComplexVolume {
        let d = self.plan.dims();
        let mut out = Array3::zeros((d[0], d[1], d[2]));
        for (c, yc) in y.iter().enumerate() {
            let mut img = yc.clone();
            self.apply_mask(&mut img);
            self.plan.process(&mut img, Direction::Inverse);
            Zip::from(&mut out)
                .and(&img)
                .and(&self.coils.maps.slice(s![c, .., .., ..]))
                .for_each(|o, &v, &m| *o += m.conj() * v);
        }
        out
    }
}

/// `E = I`, a single output equal to the input.
#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator {
    pub dims: [usize; 3],
}

impl LinearOperator for IdentityOperator {
    fn image_dims(&self) -> [usize; 3] {
        self.dims
    }

    fn n_outputs(&self) -> usize {
        1
    }

    fn apply(&self, x: &ComplexVolume) -> Vec<ComplexVolume> {
        vec![x.clone()]
    }

    fn adjoint(&self, y: &[ComplexVolume]) -> ComplexVolume {
        y[0].clone()
    }
}

/// `Σ_c ⟨a_c, b_c⟩` over lists of volumes.
pub fn inner_product(a: &[ComplexVolume], b: &[ComplexVolume]) -> Complex64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.iter()
                .zip(y.iter())
                .map(|(p, q)| p.conj() * q)
                .sum::<Complex64>()
        })
        .sum()
}
