//! MR acquisition simulator: phase encoding, coil sensitivities, k-space, noise and sampling.

pub mod coils;
pub mod kspace;
pub mod sampling;

pub use coils::{select_active_coils, simulate_coil_maps, CoilArray, CoilLoop};
pub use kspace::{
    accumulate_frames, acquisition_pattern, add_noise, draw_snr_db, encode_to_kspace,
    kspace_from_container, kspace_to_container, noise_sigma, sample_kspace, simulate_acquisition,
    velocity_to_complex, AcquisitionConfig, CoilModel, MultiCoilKSpace, N_ENCODINGS,
};
pub use sampling::{generate_phyllotaxis_pattern, SamplingPattern};
