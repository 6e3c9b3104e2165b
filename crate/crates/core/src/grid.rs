//! Regular voxel grids and the time-resolved velocity fields that live on them.

use ndarray::{s, Array3, Array4, Array5, ArrayView3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial and temporal sampling of a 4D dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid4D {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub nt: usize,
    /// Voxel edge length in mm.
    pub dx: f64,
    /// Frame spacing in ms.
    pub dt: f64,
}

impl Grid4D {
    pub fn new(nx: usize, ny: usize, nz: usize, nt: usize, dx: f64, dt: f64) -> Result<Self> {
        let g = Grid4D {
            nx,
            ny,
            nz,
            nt,
            dx,
            dt,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 || self.nt == 0 {
            return Err(Error::InvalidGrid(format!(
                "all counts must be >= 1, got {}x{}x{}x{}",
                self.nx, self.ny, self.nz, self.nt
            )));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) || !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "dx and dt must be positive, got dx={} dt={}",
                self.dx, self.dt
            )));
        }
        Ok(())
    }

    pub fn spatial_dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn n_voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Same spatial sampling with a different frame count and spacing.
    pub fn with_time(&self, nt: usize, dt: f64) -> Grid4D {
        Grid4D { nt, dt, ..*self }
    }

    pub fn same_spatial(&self, other: &Grid4D) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.nz == other.nz && self.dx == other.dx
    }
}

/// Three-component velocity (m/s), magnitude and a static fluid mask on a [`Grid4D`].
///
/// `v` is indexed `[component][t][x][y][z]`, `magnitude` `[t][x][y][z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField4D {
    pub grid: Grid4D,
    pub v: Array5<f32>,
    pub magnitude: Array4<f32>,
    pub fluid_mask: Array3<bool>,
}

impl VelocityField4D {
    pub fn zeros(grid: Grid4D) -> Self {
        let (nx, ny, nz, nt) = (grid.nx, grid.ny, grid.nz, grid.nt);
        VelocityField4D {
            grid,
            v: Array5::zeros((3, nt, nx, ny, nz)),
            magnitude: Array4::zeros((nt, nx, ny, nz)),
            fluid_mask: Array3::from_elem((nx, ny, nz), false),
        }
    }

    pub fn new(
        grid: Grid4D,
        v: Array5<f32>,
        magnitude: Array4<f32>,
        fluid_mask: Array3<bool>,
    ) -> Result<Self> {
        let f = VelocityField4D {
            grid,
            v,
            magnitude,
            fluid_mask,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let g = &self.grid;
        if self.v.dim() != (3, g.nt, g.nx, g.ny, g.nz) {
            return Err(Error::ShapeMismatch(format!(
                "velocity shape {:?} does not match grid {}x{}x{}x{}",
                self.v.shape(),
                g.nt,
                g.nx,
                g.ny,
                g.nz
            )));
        }
        if self.magnitude.dim() != (g.nt, g.nx, g.ny, g.nz) {
            return Err(Error::ShapeMismatch(format!(
                "magnitude shape {:?} does not match grid",
                self.magnitude.shape()
            )));
        }
        if self.fluid_mask.dim() != (g.nx, g.ny, g.nz) {
            return Err(Error::ShapeMismatch(format!(
                "mask shape {:?} does not match grid",
                self.fluid_mask.shape()
            )));
        }
        if self.magnitude.iter().any(|&m| m < 0.0) {
            return Err(Error::InvalidGrid("magnitude must be non-negative".into()));
        }
        Ok(())
    }

    /// Copy of frames `t` for every `t` in `frames`, in that order.
    pub fn select_frames(&self, frames: &[usize], dt: f64) -> VelocityField4D {
        let g = self.grid.with_time(frames.len(), dt);
        let mut out = VelocityField4D::zeros(g);
        out.fluid_mask.assign(&self.fluid_mask);
        for (dst, &src) in frames.iter().enumerate() {
            out.v
                .slice_mut(s![.., dst, .., .., ..])
                .assign(&self.v.slice(s![.., src, .., .., ..]));
            out.magnitude
                .slice_mut(s![dst, .., .., ..])
                .assign(&self.magnitude.slice(s![src, .., .., ..]));
        }
        out
    }

    pub fn fluid_count(&self) -> usize {
        self.fluid_mask.iter().filter(|&&b| b).count()
    }

    /// Speed `‖v‖` at one frame.
    pub fn speed(&self, t: usize) -> Array3<f32> {
        let g = &self.grid;
        let mut out = Array3::zeros((g.nx, g.ny, g.nz));
        for c in 0..3 {
            let comp = self.v.slice(s![c, t, .., .., ..]);
            out.zip_mut_with(&comp, |o, &x| *o += x * x);
        }
        out.mapv_inplace(f32::sqrt);
        out
    }
}

/// A single complex image volume, `[x][y][z]`.
pub type ComplexVolume = Array3<Complex64>;

pub fn check_volume_dims(vol: ArrayView3<'_, Complex64>, grid: &Grid4D) -> Result<()> {
    if vol.dim() != (grid.nx, grid.ny, grid.nz) {
        return Err(Error::ShapeMismatch(format!(
            "volume {:?} vs grid {}x{}x{}",
            vol.shape(),
            grid.nx,
            grid.ny,
            grid.nz
        )));
    }
    Ok(())
}
