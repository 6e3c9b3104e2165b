//! 2D+t patch extraction, augmentation and overlap stitching.

pub mod augment;
pub mod channels;
pub mod extract;
pub mod geometry;
pub mod io;
pub mod stitch;

pub use augment::{augment, augment_inverse, AugmentSpec};
pub use channels::{build_channels, N_INPUT_CHANNELS};
pub use extract::{
    crop_channels, crop_mask, extract_patch_pairs, fluid_fraction, stack_pairs, ExtractionConfig,
    PatchPair,
};
pub use geometry::{tile_origins, Orientation, PatchGeometry, PatchOrigin};
pub use io::{patches_from_container, patches_to_container, RECORD_COLUMNS};
pub use stitch::{plan_inference_tiling, stitch};
