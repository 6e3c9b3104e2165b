//! Temporal super-resolution of phase-contrast MR flow data: analytic phantoms,
//! k-space acquisition simulation, compressed-sensing reconstruction, a residual
//! network for frame doubling, deterministic baselines and evaluation metrics.

pub mod baselines;
pub mod container;
pub mod error;
pub mod evaluate;
pub mod fft;
pub mod grid;
pub mod mrsim;
pub mod patch;
pub mod phantom;
pub mod recon;
pub mod regions;
pub mod seed;
pub mod srnet;

pub use container::{
    load_container, load_field, save_container, save_field, ArrayData, Container, DType,
};
pub use error::{Error, Result};
pub use fft::{fft3_unitary, Direction};
pub use grid::{ComplexVolume, Grid4D, VelocityField4D};
pub use regions::{classify_regions, Region, RegionLabels};
