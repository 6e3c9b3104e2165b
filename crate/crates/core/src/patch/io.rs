//! Patch sets on disk: stacked `lr`, `hr`, `mask` plus a per-patch `records` table.

use ndarray::{Array2, ArrayD, Axis, Ix3, Ix5};

use super::extract::{stack_pairs, PatchPair};
use super::geometry::PatchOrigin;
use crate::container::{mask_to_u8, ArrayData, Container};
use crate::error::{Error, Result};

/// Columns of the `records` array.
pub const RECORD_COLUMNS: [&str; 7] = [
    "orientation",
    "row",
    "col",
    "slice",
    "t",
    "fluid_fraction",
    "iteration",
];

pub fn patches_to_container(pairs: &[PatchPair]) -> Result<Container> {
    let (lr, hr, mask) = stack_pairs(pairs)?;
    let mut records = Array2::<f64>::zeros((pairs.len(), RECORD_COLUMNS.len()));
    for (mut row, p) in records.outer_iter_mut().zip(pairs) {
        for (k, v) in p.origin.to_row().into_iter().enumerate() {
            row[k] = v;
        }
        row[5] = p.fluid_fraction;
        row[6] = p.iteration as f64;
    }
    let mut c = Container::new();
    c.push("lr", ArrayData::F32(lr.into_dyn()))
        .push("hr", ArrayData::F32(hr.into_dyn()))
        .push("mask", ArrayData::U8(mask_to_u8(&mask)))
        .push("records", ArrayData::F64(records.into_dyn()));
    c.set_meta("record_columns", RECORD_COLUMNS)?;
    Ok(c)
}

pub fn patches_from_container(c: &Container) -> Result<Vec<PatchPair>> {
    fn dims<D: ndarray::Dimension, T: Clone>(
        a: &ArrayD<T>,
        name: &str,
    ) -> Result<ndarray::Array<T, D>> {
        a.clone()
            .into_dimensionality::<D>()
            .map_err(|e| Error::ShapeMismatch(format!("{name}: {e}")))
    }
    let lr = dims::<Ix5, _>(c.f32("lr")?, "lr")?;
    let hr = dims::<Ix5, _>(c.f32("hr")?, "hr")?;
    let mask = dims::<Ix3, _>(&c.u8("mask")?.mapv(|b| b != 0), "mask")?;
    let records = c.f64("records")?;
    let n = lr.len_of(Axis(0));
    if hr.len_of(Axis(0)) != n
        || mask.len_of(Axis(0)) != n
        || records.shape() != [n, RECORD_COLUMNS.len()]
    {
        return Err(Error::ShapeMismatch(format!(
            "patch arrays disagree on count {n}"
        )));
    }
    (0..n)
        .map(|i| {
            let rec = records.index_axis(Axis(0), i);
            let rec: Vec<f64> = rec.iter().copied().collect();
            Ok(PatchPair {
                lr: lr.index_axis(Axis(0), i).to_owned(),
                hr: hr.index_axis(Axis(0), i).to_owned(),
                mask: mask.index_axis(Axis(0), i).to_owned(),
                origin: PatchOrigin::from_row(&rec[..5])?,
                fluid_fraction: rec[5],
                iteration: rec[6] as usize,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid4D, VelocityField4D};
    use crate::patch::{extract_patch_pairs, ExtractionConfig, PatchGeometry};

    #[test]
    fn patch_set_round_trip() {
        let g = Grid4D::new(18, 18, 18, 32, 2.0, 20.0).unwrap();
        let mut hr = VelocityField4D::zeros(g);
        for ((c, t, x, y, z), v) in hr.v.indexed_iter_mut() {
            *v = ((c + 2 * t + x + 3 * y + 5 * z) as f32 * 0.01).sin();
        }
        hr.magnitude.fill(1.0);
        hr.fluid_mask = ndarray::Array3::from_shape_fn((18, 18, 18), |(x, _, _)| x < 9);
        let even: Vec<usize> = (0..32).step_by(2).collect();
        let lr = hr.select_frames(&even, 40.0);
        let cfg = ExtractionConfig {
            n_patches: 9,
            ..Default::default()
        };
        let pairs = extract_patch_pairs(&lr, &hr, &PatchGeometry::default(), &cfg, 3).unwrap();
        let c = patches_to_container(&pairs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        crate::container::save_container(dir.path().join("p"), &c).unwrap();
        let back = patches_from_container(
            &crate::container::load_container(dir.path().join("p")).unwrap(),
        )
        .unwrap();
        assert_eq!(back, pairs);
        assert!(patches_to_container(&[]).is_err());
    }
}
