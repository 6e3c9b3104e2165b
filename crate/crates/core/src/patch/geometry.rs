//! Patch orientation, origin and window arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Xy,
    Xz,
    Yz,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [Orientation::Xy, Orientation::Xz, Orientation::Yz];

    /// Global axes for (row, col, normal). Velocity components are stored in the same order.
    pub fn axes(self) -> [usize; 3] {
        match self {
            Orientation::Xy => [0, 1, 2],
            Orientation::Xz => [0, 2, 1],
            Orientation::Yz => [1, 2, 0],
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Orientation> {
        Orientation::ALL.get(i).copied()
    }
}

/// Spatial window size, LR frame count and overlap shared by extraction and tiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchGeometry {
    pub size: usize,
    pub frames: usize,
    pub overlap: usize,
}

impl Default for PatchGeometry {
    fn default() -> Self {
        PatchGeometry {
            size: 16,
            frames: 16,
            overlap: 4,
        }
    }
}

impl PatchGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.frames < 2 || self.overlap >= self.size.min(self.frames) {
            return Err(Error::InvalidConfig(format!(
                "invalid patch geometry {self:?}"
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.size - self.overlap
    }

    pub fn frame_stride(&self) -> usize {
        self.frames - self.overlap
    }

    pub fn hr_frames(&self) -> usize {
        2 * self.frames
    }
}

/// Where a patch sits: plane orientation, in-plane corner, slice along the normal
/// and first LR frame (the HR window starts at twice that).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchOrigin {
    pub orientation: Orientation,
    pub row: usize,
    pub col: usize,
    pub slice: usize,
    pub t: usize,
}

impl PatchOrigin {
    /// Global voxel of patch-local (r, c).
    pub fn voxel(&self, r: usize, c: usize) -> [usize; 3] {
        let axes = self.orientation.axes();
        let mut p = [0; 3];
        p[axes[0]] = self.row + r;
        p[axes[1]] = self.col + c;
        p[axes[2]] = self.slice;
        p
    }

    pub fn to_row(&self) -> [f64; 5] {
        [
            self.orientation.index() as f64,
            self.row as f64,
            self.col as f64,
            self.slice as f64,
            self.t as f64,
        ]
    }

    pub fn from_row(row: &[f64]) -> Result<PatchOrigin> {
        let bad = || Error::Patch(format!("invalid origin record {row:?}"));
        if row.len() < 5 || row.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return Err(bad());
        }
        Ok(PatchOrigin {
            orientation: Orientation::from_index(row[0] as usize).ok_or_else(bad)?,
            row: row[1] as usize,
            col: row[2] as usize,
            slice: row[3] as usize,
            t: row[4] as usize,
        })
    }
}

/// Window starts `0, stride, 2·stride, …` with the last one clamped to `n − size`.
pub fn tile_origins(n: usize, size: usize, stride: usize) -> Result<Vec<usize>> {
    if n < size {
        return Err(Error::Patch(format!(
            "axis of {n} shorter than window {size}"
        )));
    }
    if stride == 0 {
        return Err(Error::Patch("zero stride".into()));
    }
    let mut out = Vec::new();
    let mut p = 0;
    loop {
        if p + size >= n {
            out.push(n - size);
            break;
        }
        out.push(p);
        p += stride;
    }
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamped_tiling() {
        assert_eq!(tile_origins(16, 16, 12).unwrap(), vec![0]);
        assert_eq!(tile_origins(28, 16, 12).unwrap(), vec![0, 12]);
        assert_eq!(tile_origins(30, 16, 12).unwrap(), vec![0, 12, 14]);
        assert_eq!(tile_origins(48, 16, 12).unwrap(), vec![0, 12, 24, 32]);
        assert!(tile_origins(15, 16, 12).is_err());
    }

    #[test]
    fn origin_row_round_trip() {
        let o = PatchOrigin {
            orientation: Orientation::Yz,
            row: 3,
            col: 9,
            slice: 20,
            t: 4,
        };
        assert_eq!(PatchOrigin::from_row(&o.to_row()).unwrap(), o);
        assert!(PatchOrigin::from_row(&[3.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert_eq!(o.voxel(1, 2), [20, 4, 11]);
    }
}
