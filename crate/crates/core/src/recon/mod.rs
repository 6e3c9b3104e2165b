//! Compressed-sensing reconstruction and velocity/magnitude extraction.

pub mod fista;
pub mod haar;
pub mod operator;

use std::f64::consts::PI;

use ndarray::{s, Array3, Zip};
use rayon::prelude::*;

pub use fista::{fista_reconstruct, soft_threshold, FistaConfig, FistaResult, ObjectiveRecord};
pub use haar::{haar_forward, haar_inverse, HaarTransform3D};
pub use operator::{EncodingOperator, IdentityOperator, LinearOperator};

use crate::error::{Error, Result};
use crate::grid::{ComplexVolume, Grid4D, VelocityField4D};
use crate::mrsim::{CoilArray, MultiCoilKSpace, N_ENCODINGS};

/// `v_c = arg(x_c·conj(x_ref))·venc/π`, `m = |x_ref|`.
pub fn extract_velocity_magnitude(
    images: &[ComplexVolume; N_ENCODINGS],
    venc: f64,
) -> ([Array3<f32>; 3], Array3<f32>) {
    let reference = &images[0];
    let comp = |c: usize| {
        let mut v = Array3::zeros(reference.raw_dim());
        Zip::from(&mut v)
            .and(&images[c + 1])
            .and(reference)
            .for_each(|o, x, r| *o = ((x * r.conj()).arg() * venc / PI) as f32);
        v
    };
    (
        [comp(0), comp(1), comp(2)],
        reference.mapv(|r| r.norm() as f32),
    )
}

/// Objective history of one (frame, encoding) reconstruction.
#[derive(Debug, Clone)]
pub struct ReconTrace {
    pub frame: usize,
    pub encoding: usize,
    pub lambda: f64,
    pub history: Vec<ObjectiveRecord>,
}

#[derive(Debug, Clone)]
pub struct ReconOutput {
    /// `[t][encoding]`
    pub images: Vec<[ComplexVolume; N_ENCODINGS]>,
    pub traces: Vec<ReconTrace>,
}

/// Reconstruct every frame and encoding independently.
pub fn reconstruct_kspace(
    k: &MultiCoilKSpace,
    coils: &CoilArray,
    cfg: &FistaConfig,
) -> Result<ReconOutput> {
    cfg.validate()?;
    if coils.n_coils() != k.n_coils() {
        return Err(Error::ShapeMismatch(format!(
            "{} coil maps for {} k-space coils",
            coils.n_coils(),
            k.n_coils()
        )));
    }
    let (_, nxm, nym, nzm) = coils.maps.dim();
    if [nxm, nym, nzm] != k.volume_dims() {
        return Err(Error::ShapeMismatch(
            "coil maps do not match k-space volume".into(),
        ));
    }
    let nt = k.n_frames();
    let jobs: Vec<(usize, usize)> = (0..nt)
        .flat_map(|t| (0..N_ENCODINGS).map(move |e| (t, e)))
        .collect();
    let results: Vec<FistaResult> = jobs
        .par_iter()
        .map(|&(t, e)| {
            let op = EncodingOperator::new(coils, k.pattern.masks.slice(s![t, .., ..]).to_owned())?;
            let y: Vec<ComplexVolume> = (0..k.n_coils()).map(|c| k.volume(e, t, c)).collect();
            fista_reconstruct(&y, &op, cfg)
        })
        .collect::<Result<_>>()?;

    let mut images = Vec::with_capacity(nt);
    let mut traces = Vec::with_capacity(jobs.len());
    let mut it = jobs.iter().zip(results);
    for _ in 0..nt {
        let mut frame: Vec<ComplexVolume> = Vec::with_capacity(N_ENCODINGS);
        for _ in 0..N_ENCODINGS {
            let (&(t, e), r) = it.next().expect("one result per job");
            traces.push(ReconTrace {
                frame: t,
                encoding: e,
                lambda: r.lambda,
                history: r.history,
            });
            frame.push(r.x);
        }
        images.push(frame.try_into().expect("four encodings"));
    }
    Ok(ReconOutput { images, traces })
}

/// Assemble a velocity field from reconstructed images on `grid`, with the given mask.
pub fn images_to_field(
    images: &[[ComplexVolume; N_ENCODINGS]],
    venc: f64,
    grid: Grid4D,
    fluid_mask: Array3<bool>,
) -> Result<VelocityField4D> {
    if images.len() != grid.nt {
        return Err(Error::ShapeMismatch(format!(
            "{} frames for grid nt {}",
            images.len(),
            grid.nt
        )));
    }
    let mut field = VelocityField4D::zeros(grid);
    for (t, frame) in images.iter().enumerate() {
        let (v, m) = extract_velocity_magnitude(frame, venc);
        for c in 0..3 {
            field.v.slice_mut(s![c, t, .., .., ..]).assign(&v[c]);
        }
        field.magnitude.slice_mut(s![t, .., .., ..]).assign(&m);
    }
    field.fluid_mask = fluid_mask;
    field.validate()?;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn zero_flow_and_venc_phase() {
        let r = Array3::from_elem((2, 2, 2), Complex64::from_polar(1.3, 0.4));
        let flipped = r.mapv(|z| z * Complex64::from_polar(1.0, PI));
        let (v, m) =
            extract_velocity_magnitude(&[r.clone(), r.clone(), flipped.clone(), r.clone()], 1.5);
        assert!(v[0].iter().all(|&x| x == 0.0));
        assert!(v[1].iter().all(|&x| (x.abs() - 1.5).abs() < 1e-6));
        assert!(m.iter().all(|&x| (x - 1.3).abs() < 1e-6));
    }
}
