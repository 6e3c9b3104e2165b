//! Inference tiling and overlap-averaged reassembly of HR patch predictions.

use ndarray::{Array4, Array5};

use super::geometry::{tile_origins, Orientation, PatchGeometry, PatchOrigin};
use crate::error::{Error, Result};
use crate::grid::{Grid4D, VelocityField4D};

/// Every slice of every orientation, tiled in-plane with stride `size − overlap`
/// and in time with stride `frames − overlap`; edge tiles are clamped.
pub fn plan_inference_tiling(
    dims: [usize; 3],
    nt_lr: usize,
    geom: &PatchGeometry,
) -> Result<Vec<PatchOrigin>> {
    geom.validate()?;
    let times = tile_origins(nt_lr, geom.frames, geom.frame_stride())?;
    let mut plan = Vec::new();
    for orientation in Orientation::ALL {
        let [ra, ca, na] = orientation.axes();
        let rows = tile_origins(dims[ra], geom.size, geom.stride())?;
        let cols = tile_origins(dims[ca], geom.size, geom.stride())?;
        for slice in 0..dims[na] {
            for &t in &times {
                for &row in &rows {
                    for &col in &cols {
                        plan.push(PatchOrigin {
                            orientation,
                            row,
                            col,
                            slice,
                            t,
                        });
                    }
                }
            }
        }
    }
    Ok(plan)
}

/// Mean of all predictions covering each HR voxel-frame. Predictions are
/// `[3][S][S][2F]` in patch-local component order and are accumulated in the
/// given order. Returns a field on `grid` with zero magnitude and an empty mask.
pub fn stitch(predictions: &[(PatchOrigin, Array4<f32>)], grid: Grid4D) -> Result<VelocityField4D> {
    let (nx, ny, nz, nt) = (grid.nx, grid.ny, grid.nz, grid.nt);
    let mut sum = Array5::<f64>::zeros((3, nt, nx, ny, nz));
    let mut count = Array4::<u32>::zeros((nt, nx, ny, nz));
    for (origin, pred) in predictions {
        let (nc, s, s2, hf) = pred.dim();
        if nc != 3 || s != s2 {
            return Err(Error::ShapeMismatch(format!(
                "prediction shape {:?}",
                pred.shape()
            )));
        }
        let t0 = 2 * origin.t;
        let axes = origin.orientation.axes();
        let [ra, ca, _] = axes;
        if t0 + hf > nt
            || origin.row + s > grid_dim(&grid, ra)
            || origin.col + s > grid_dim(&grid, ca)
        {
            return Err(Error::Patch(format!("patch {origin:?} exceeds the grid")));
        }
        for r in 0..s {
            for c in 0..s {
                let [x, y, z] = origin.voxel(r, c);
                for t in 0..hf {
                    for j in 0..3 {
                        sum[[axes[j], t0 + t, x, y, z]] += pred[[j, r, c, t]] as f64;
                    }
                    count[[t0 + t, x, y, z]] += 1;
                }
            }
        }
    }
    if let Some((idx, _)) = count.indexed_iter().find(|(_, &n)| n == 0) {
        return Err(Error::Patch(format!(
            "voxel-frame {idx:?} not covered by any patch"
        )));
    }
    let mut field = VelocityField4D::zeros(grid);
    for ((c, t, x, y, z), v) in field.v.indexed_iter_mut() {
        *v = (sum[[c, t, x, y, z]] / count[[t, x, y, z]] as f64) as f32;
    }
    Ok(field)
}

fn grid_dim(g: &Grid4D, axis: usize) -> usize {
    g.spatial_dims()[axis]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::extract::crop_channels;

    fn geom() -> PatchGeometry {
        PatchGeometry::default()
    }

    #[test]
    fn cube_of_sixteen_has_one_patch_per_slice_and_orientation() {
        let plan = plan_inference_tiling([16, 16, 16], 16, &geom()).unwrap();
        assert_eq!(plan.len(), 3 * 16);
        assert!(plan.iter().all(|o| o.row == 0 && o.col == 0 && o.t == 0));
    }

    #[test]
    fn every_voxel_covered_in_every_orientation() {
        let dims = [28, 17, 16];
        let plan = plan_inference_tiling(dims, 20, &geom()).unwrap();
        for o in Orientation::ALL {
            let mut cover = ndarray::Array4::<u32>::zeros((20, 28, 17, 16));
            for p in plan.iter().filter(|p| p.orientation == o) {
                for r in 0..16 {
                    for c in 0..16 {
                        let v = p.voxel(r, c);
                        for t in 0..16 {
                            cover[[p.t + t, v[0], v[1], v[2]]] += 1;
                        }
                    }
                }
            }
            assert!(cover.iter().all(|&n| n >= 1));
        }
        assert!(plan_inference_tiling([15, 16, 16], 16, &geom()).is_err());
        assert!(plan_inference_tiling([16, 16, 16], 12, &geom()).is_err());
    }

    #[test]
    fn constant_predictions_stitch_to_constant() {
        let g = Grid4D::new(20, 16, 16, 32, 2.0, 20.0).unwrap();
        let plan = plan_inference_tiling([20, 16, 16], 16, &geom()).unwrap();
        let preds: Vec<_> = plan
            .iter()
            .map(|&o| (o, Array4::from_elem((3, 16, 16, 32), 0.25f32)))
            .collect();
        let f = stitch(&preds, g).unwrap();
        assert!(f.v.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn ground_truth_crops_reassemble_exactly() {
        let g = Grid4D::new(20, 16, 18, 40, 2.0, 20.0).unwrap();
        let mut truth = VelocityField4D::zeros(g);
        for ((c, t, x, y, z), v) in truth.v.indexed_iter_mut() {
            *v = ((c + 1) as f32) * (0.1 * t as f32).sin() + 0.01 * (x * y + z) as f32;
        }
        let plan = plan_inference_tiling([20, 16, 18], 20, &geom()).unwrap();
        let preds: Vec<_> = plan
            .iter()
            .map(|&o| (o, crop_channels(&truth.v, &o, 16, 2 * o.t, 32)))
            .collect();
        let f = stitch(&preds, g).unwrap();
        for (a, b) in f.v.iter().zip(truth.v.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn seam_is_the_mean_of_both_sides() {
        let g = Grid4D::new(28, 16, 1, 32, 2.0, 20.0).unwrap();
        let o = |row| PatchOrigin {
            orientation: Orientation::Xy,
            row,
            col: 0,
            slice: 0,
            t: 0,
        };
        let preds = vec![
            (o(0), Array4::from_elem((3, 16, 16, 32), 1.0f32)),
            (o(12), Array4::from_elem((3, 16, 16, 32), 3.0f32)),
        ];
        let f = stitch(&preds, g).unwrap();
        assert_eq!(f.v[[0, 0, 11, 0, 0]], 1.0);
        assert_eq!(f.v[[0, 0, 12, 0, 0]], 2.0);
        assert_eq!(f.v[[2, 5, 15, 3, 0]], 2.0);
        assert_eq!(f.v[[1, 0, 16, 0, 0]], 3.0);
        assert!(stitch(&preds[..1], g).is_err());
    }
}
