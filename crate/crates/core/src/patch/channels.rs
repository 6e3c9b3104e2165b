//! Network input channels built from a (reconstructed) low-rate field.

use ndarray::{s, Array3, Array5};

use crate::grid::VelocityField4D;

/// vx, vy, vz, magnitude, speed, PC-MRA
pub const N_INPUT_CHANNELS: usize = 6;
pub const CH_MAGNITUDE: usize = 3;
pub const CH_SPEED: usize = 4;
pub const CH_PCMRA: usize = 5;

/// Channel stack `[6][t][x][y][z]` in global axis order.
///
/// Magnitude is divided by its volume maximum; PC-MRA is the time mean of
/// `magnitude·speed`, divided by its maximum. Either is left at zero when its
/// maximum is zero.
pub fn build_channels(field: &VelocityField4D) -> Array5<f32> {
    let g = field.grid;
    let mut out = Array5::zeros((N_INPUT_CHANNELS, g.nt, g.nx, g.ny, g.nz));
    out.slice_mut(s![0..3, .., .., .., ..]).assign(&field.v);

    let mag_max = field.magnitude.iter().cloned().fold(0.0f32, f32::max);
    let inv = if mag_max > 0.0 { 1.0 / mag_max } else { 0.0 };
    out.slice_mut(s![CH_MAGNITUDE, .., .., .., ..])
        .assign(&field.magnitude.mapv(|m| m * inv));

    let mut pcmra = Array3::<f32>::zeros((g.nx, g.ny, g.nz));
    for t in 0..g.nt {
        let speed = field.speed(t);
        out.slice_mut(s![CH_SPEED, t, .., .., ..]).assign(&speed);
        ndarray::Zip::from(&mut pcmra)
            .and(&speed)
            .and(&field.magnitude.slice(s![t, .., .., ..]))
            .for_each(|p, &sp, &m| *p += sp * m);
    }
    let peak = pcmra.iter().cloned().fold(0.0f32, f32::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    pcmra.mapv_inplace(|p| p * scale);
    for t in 0..g.nt {
        out.slice_mut(s![CH_PCMRA, t, .., .., ..]).assign(&pcmra);
    }
    out
}
