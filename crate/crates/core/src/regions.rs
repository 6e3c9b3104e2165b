//! Fluid-core / fluid-boundary / nonfluid labelling of a static mask.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    FluidCore,
    FluidBoundary,
    NonFluid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionLabels {
    pub labels: Array3<Region>,
}

impl RegionLabels {
    pub fn count(&self, region: Region) -> usize {
        self.labels.iter().filter(|&&r| r == region).count()
    }

    /// All fluid voxels (core and boundary).
    pub fn fluid(&self) -> Array3<bool> {
        self.labels.mapv(|r| r != Region::NonFluid)
    }

    pub fn boundary(&self) -> Array3<bool> {
        self.labels.mapv(|r| r == Region::FluidBoundary)
    }

    pub fn nonfluid(&self) -> Array3<bool> {
        self.labels.mapv(|r| r == Region::NonFluid)
    }
}

/// Label every voxel. A fluid voxel is boundary when any of its six face
/// neighbours is nonfluid; positions outside the array count as nonfluid.
pub fn classify_regions(mask: &Array3<bool>) -> RegionLabels {
    let (nx, ny, nz) = mask.dim();
    let is_fluid = |x: isize, y: isize, z: isize| -> bool {
        if x < 0 || y < 0 || z < 0 {
            return false;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        x < nx && y < ny && z < nz && mask[[x, y, z]]
    };
    let labels = Array3::from_shape_fn((nx, ny, nz), |(x, y, z)| {
        if !mask[[x, y, z]] {
            return Region::NonFluid;
        }
        let (x, y, z) = (x as isize, y as isize, z as isize);
        let neighbours = [
            (x - 1, y, z),
            (x + 1, y, z),
            (x, y - 1, z),
            (x, y + 1, z),
            (x, y, z - 1),
            (x, y, z + 1),
        ];
        if neighbours.iter().all(|&(a, b, c)| is_fluid(a, b, c)) {
            Region::FluidCore
        } else {
            Region::FluidBoundary
        }
    });
    RegionLabels { labels }
}
