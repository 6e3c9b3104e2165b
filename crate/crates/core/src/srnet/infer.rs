//! Whole-field inference by overlapping patch tiling in all three orientations.

use ndarray::Array4;
use rayon::prelude::*;

use super::network::NetworkParams;
use crate::error::{Error, Result};
use crate::grid::VelocityField4D;
use crate::patch::{build_channels, crop_channels, plan_inference_tiling, stitch, PatchGeometry};

/// Double the frame rate of `lr`. Output frame `2i` is aligned with input frame `i`;
/// magnitude is interpolated linearly in time (periodically), the fluid mask is copied.
pub fn infer_field(
    params: &NetworkParams<f32>,
    lr: &VelocityField4D,
    geom: &PatchGeometry,
) -> Result<VelocityField4D> {
    lr.validate()?;
    geom.validate()?;
    let g = lr.grid;
    if g.nx.min(g.ny).min(g.nz) < geom.size || g.nt < geom.frames {
        return Err(Error::Patch(format!(
            "field {}x{}x{}x{} too small for {}x{}x{} patches",
            g.nx, g.ny, g.nz, g.nt, geom.size, geom.size, geom.frames
        )));
    }
    let channels = build_channels(lr);
    let plan = plan_inference_tiling(g.spatial_dims(), g.nt, geom)?;
    let preds: Vec<_> = plan
        .par_iter()
        .map(|o| {
            let x = crop_channels(&channels, o, geom.size, o.t, geom.frames);
            params.forward(&x).map(|y| (*o, y))
        })
        .collect::<Result<_>>()?;
    let hr_grid = g.with_time(2 * g.nt, g.dt / 2.0);
    let mut out = stitch(&preds, hr_grid)?;
    out.magnitude = upsample_magnitude(&lr.magnitude);
    out.fluid_mask = lr.fluid_mask.clone();
    out.validate()?;
    Ok(out)
}

fn upsample_magnitude(m: &Array4<f32>) -> Array4<f32> {
    let (nt, nx, ny, nz) = m.dim();
    Array4::from_shape_fn((2 * nt, nx, ny, nz), |(t, x, y, z)| {
        let i = t / 2;
        if t % 2 == 0 {
            m[[i, x, y, z]]
        } else {
            0.5 * (m[[i, x, y, z]] + m[[(i + 1) % nt, x, y, z]])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid4D;
    use crate::srnet::{ConvLayer, NetworkConfig};

    fn field(nt: usize) -> VelocityField4D {
        let g = Grid4D::new(16, 16, 16, nt, 1e-3, 0.04).unwrap();
        let mut f = VelocityField4D::zeros(g);
        f.magnitude
            .iter_mut()
            .enumerate()
            .for_each(|(i, m)| *m = (i % 7) as f32);
        f.fluid_mask[[3, 4, 5]] = true;
        f
    }

    #[test]
    fn zero_tail_gives_zero_field_on_doubled_grid() {
        let cfg = NetworkConfig {
            filters: 2,
            n_res_lr: 1,
            n_res_hr: 1,
            ..Default::default()
        };
        let mut p = NetworkParams::<f32>::init(cfg, 1).unwrap();
        *p.tail_mut() = ConvLayer::zeros(3, 2, 1);
        let lr = field(16);
        let out = infer_field(&p, &lr, &PatchGeometry::default()).unwrap();
        assert_eq!(out.grid.nt, 32);
        assert!((out.grid.dt - 0.02).abs() < 1e-15);
        assert!(out.v.iter().all(|&v| v == 0.0));
        assert_eq!(out.fluid_mask, lr.fluid_mask);
        for t in 0..16 {
            assert_eq!(
                out.magnitude.index_axis(ndarray::Axis(0), 2 * t),
                lr.magnitude.index_axis(ndarray::Axis(0), t)
            );
        }
    }

    #[test]
    fn too_small_field_is_rejected() {
        let p = NetworkParams::<f32>::init(
            NetworkConfig {
                filters: 2,
                n_res_lr: 1,
                n_res_hr: 1,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert!(matches!(
            infer_field(&p, &field(8), &PatchGeometry::default()),
            Err(Error::Patch(_))
        ));
    }
}
