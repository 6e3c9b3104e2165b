//! Receive-coil sensitivities from a Biot-Savart segment sum over circular loops.

use std::f64::consts::PI;

use ndarray::{s, Array4, Axis};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid4D;

pub const LOOP_SEGMENTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilLoop {
    /// mm
    pub center: [f64; 3],
    /// unit normal
    pub normal: [f64; 3],
    /// mm
    pub radius: f64,
}

/// Complex sensitivity maps `[coil][x][y][z]` and the loops that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilArray {
    pub maps: Array4<Complex64>,
    pub loops: Vec<CoilLoop>,
}

impl CoilArray {
    pub fn n_coils(&self) -> usize {
        self.maps.len_of(Axis(0))
    }

    /// One coil whose map is identically 1.
    pub fn uniform(grid: &Grid4D) -> CoilArray {
        CoilArray {
            maps: Array4::from_elem((1, grid.nx, grid.ny, grid.nz), Complex64::new(1.0, 0.0)),
            loops: Vec::new(),
        }
    }

    /// Per-voxel `Σ_c |c|²`.
    pub fn sum_of_squares(&self) -> ndarray::Array3<f64> {
        let (_, nx, ny, nz) = self.maps.dim();
        let mut acc = ndarray::Array3::<f64>::zeros((nx, ny, nz));
        for map in self.maps.outer_iter() {
            acc.zip_mut_with(&map, |a, c| *a += c.norm_sqr());
        }
        acc
    }

    /// Largest per-voxel sum of squared sensitivities; bounds the operator norm of EᴴE.
    pub fn max_sum_of_squares(&self) -> f64 {
        self.sum_of_squares().iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_sum_of_squares(&self) -> f64 {
        self.sum_of_squares()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Divide every voxel by its root-sum-of-squares over coils, so that
    /// `Σ_c |c|² = 1` wherever any coil sees the voxel.
    fn normalize_rss(&mut self) {
        let inv = self
            .sum_of_squares()
            .mapv(|s| if s > 0.0 { 1.0 / s.sqrt() } else { 0.0 });
        for mut map in self.maps.outer_iter_mut() {
            map.zip_mut_with(&inv, |c, &w| *c *= w);
        }
    }

    pub fn check_grid(&self, grid: &Grid4D) -> Result<()> {
        let (_, nx, ny, nz) = self.maps.dim();
        if (nx, ny, nz) != (grid.nx, grid.ny, grid.nz) {
            return Err(Error::ShapeMismatch(format!(
                "coil maps {nx}x{ny}x{nz} vs grid {}x{}x{}",
                grid.nx, grid.ny, grid.nz
            )));
        }
        Ok(())
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Two unit vectors spanning the loop plane.
fn loop_basis(normal: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let n = normalize(normal);
    let helper = if n[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let u = normalize(cross(n, helper));
    let w = cross(n, u);
    (u, w)
}

/// Polygonal segment vertices of a loop.
pub fn loop_vertices(l: &CoilLoop, n_segments: usize) -> Vec<[f64; 3]> {
    let (u, w) = loop_basis(l.normal);
    (0..n_segments)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / n_segments as f64;
            let (s, c) = phi.sin_cos();
            std::array::from_fn(|i| l.center[i] + l.radius * (c * u[i] + s * w[i]))
        })
        .collect()
}

/// `Σ dl × (p − s) / |p − s|³` over straight segments; the μ₀I/4π factor is dropped.
pub fn loop_field(vertices: &[[f64; 3]], p: [f64; 3]) -> [f64; 3] {
    let n = vertices.len();
    let mut b = [0.0; 3];
    for k in 0..n {
        let a = vertices[k];
        let e = vertices[(k + 1) % n];
        let dl = [e[0] - a[0], e[1] - a[1], e[2] - a[2]];
        let mid = [
            0.5 * (a[0] + e[0]),
            0.5 * (a[1] + e[1]),
            0.5 * (a[2] + e[2]),
        ];
        let r = [p[0] - mid[0], p[1] - mid[1], p[2] - mid[2]];
        let d2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        let inv3 = 1.0 / (d2 * d2.sqrt());
        let c = cross(dl, r);
        b[0] += c[0] * inv3;
        b[1] += c[1] * inv3;
        b[2] += c[2] * inv3;
    }
    b
}

/// Loops on a cylinder (axis along z through the grid centre) enclosing the grid:
/// rings along z, equal angular spacing within each ring, normals pointing at the axis.
pub fn coil_layout(grid: &Grid4D, n_coils: usize) -> Result<Vec<CoilLoop>> {
    coil_layout_with(grid, n_coils, DEFAULT_STANDOFF)
}

/// Cylinder radius as a multiple of the grid's half-diagonal in the xy-plane.
pub const DEFAULT_STANDOFF: f64 = 1.5;

pub fn coil_layout_with(grid: &Grid4D, n_coils: usize, standoff: f64) -> Result<Vec<CoilLoop>> {
    if n_coils == 0 {
        return Err(Error::InvalidConfig("n_coils_total must be >= 1".into()));
    }
    if !(standoff > 1.0) {
        return Err(Error::InvalidConfig(format!(
            "coil standoff must exceed 1, got {standoff}"
        )));
    }
    let ext = [
        grid.nx as f64 * grid.dx,
        grid.ny as f64 * grid.dx,
        grid.nz as f64 * grid.dx,
    ];
    let center = [ext[0] / 2.0, ext[1] / 2.0, ext[2] / 2.0];
    let cyl_r = standoff * 0.5 * (ext[0] * ext[0] + ext[1] * ext[1]).sqrt();
    // rings span the cylinder height 2·cyl_r centred on the grid, spaced like the arcs
    let height = 2.0 * cyl_r;
    let n_rings = ((n_coils as f64 * height / (2.0 * PI * cyl_r))
        .sqrt()
        .round() as usize)
        .clamp(1, n_coils);
    let per_ring = n_coils.div_ceil(n_rings);

    let mut loops = Vec::with_capacity(n_coils);
    for ring in 0..n_rings {
        let count = per_ring.min(n_coils - loops.len());
        if count == 0 {
            break;
        }
        let z = center[2] + ((ring as f64 + 0.5) / n_rings as f64 - 0.5) * height;
        let radius = 0.5 * (2.0 * PI * cyl_r / count as f64).min(height / n_rings as f64);
        if !(radius > 0.0) {
            return Err(Error::InvalidConfig(
                "degenerate coil loop (radius 0)".into(),
            ));
        }
        let stagger = if ring % 2 == 1 {
            PI / count as f64
        } else {
            0.0
        };
        for j in 0..count {
            let phi = 2.0 * PI * j as f64 / count as f64 + stagger;
            let (s, c) = phi.sin_cos();
            loops.push(CoilLoop {
                center: [center[0] + cyl_r * c, center[1] + cyl_r * s, z],
                normal: [-c, -s, 0.0],
                radius,
            });
        }
    }
    Ok(loops)
}

/// Sensitivity map of one loop: transverse field `Bx − i·By` at every voxel centre.
pub fn loop_sensitivity(
    grid: &Grid4D,
    l: &CoilLoop,
    n_segments: usize,
) -> Result<ndarray::Array3<Complex64>> {
    if !(l.radius > 0.0) {
        return Err(Error::InvalidConfig(
            "degenerate coil loop (radius 0)".into(),
        ));
    }
    let verts = loop_vertices(l, n_segments);
    let dx = grid.dx;
    Ok(ndarray::Array3::from_shape_fn(
        (grid.nx, grid.ny, grid.nz),
        |(x, y, z)| {
            let p = [
                (x as f64 + 0.5) * dx,
                (y as f64 + 0.5) * dx,
                (z as f64 + 0.5) * dx,
            ];
            let b = loop_field(&verts, p);
            Complex64::new(b[0], -b[1])
        },
    ))
}

/// All `n_coils_total` maps, normalized to unit root-sum-of-squares at every voxel.
pub fn simulate_coil_maps(grid: &Grid4D, n_coils_total: usize) -> Result<CoilArray> {
    simulate_coil_maps_with(grid, n_coils_total, DEFAULT_STANDOFF)
}

pub fn simulate_coil_maps_with(
    grid: &Grid4D,
    n_coils_total: usize,
    standoff: f64,
) -> Result<CoilArray> {
    let loops = coil_layout_with(grid, n_coils_total, standoff)?;
    let maps: Vec<_> = loops
        .par_iter()
        .map(|l| loop_sensitivity(grid, l, LOOP_SEGMENTS))
        .collect::<Result<_>>()?;
    let mut out = Array4::zeros((loops.len(), grid.nx, grid.ny, grid.nz));
    for (i, m) in maps.into_iter().enumerate() {
        out.slice_mut(s![i, .., .., ..]).assign(&m);
    }
    let mut arr = CoilArray { maps: out, loops };
    arr.normalize_rss();
    Ok(arr)
}

/// Seeded subset of `k` coils (sorted indices), renormalized over the subset.
pub fn select_active_coils(coils: &CoilArray, k: usize, seed: u64) -> Result<CoilArray> {
    let n = coils.n_coils();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!(
            "cannot select {k} active coils from {n}"
        )));
    }
    if k == n {
        return Ok(coils.clone());
    }
    let idx = active_indices(n, k, seed);
    let (_, nx, ny, nz) = coils.maps.dim();
    let mut maps = Array4::zeros((k, nx, ny, nz));
    for (dst, &src) in idx.iter().enumerate() {
        maps.slice_mut(s![dst, .., .., ..])
            .assign(&coils.maps.slice(s![src, .., .., ..]));
    }
    let loops = if coils.loops.len() == n {
        idx.iter().map(|&i| coils.loops[i]).collect()
    } else {
        Vec::new()
    };
    let mut out = CoilArray { maps, loops };
    out.normalize_rss();
    Ok(out)
}

pub fn active_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(b: [f64; 3]) -> f64 {
        (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()
    }

    #[test]
    fn center_of_loop_matches_closed_form() {
        let l = CoilLoop {
            center: [1.0, -2.0, 3.0],
            normal: [0.3, 0.4, 0.5],
            radius: 7.0,
        };
        let b = loop_field(&loop_vertices(&l, 256), l.center);
        // mu0 I / (2a) with mu0 I / 4pi dropped
        let analytic = 2.0 * PI / l.radius;
        assert!((norm(b) - analytic).abs() / analytic < 1e-3);
        // field is along the normal
        let n = normalize(l.normal);
        let along = (b[0] * n[0] + b[1] * n[1] + b[2] * n[2]).abs();
        assert!((along - norm(b)).abs() < 1e-9 * norm(b));
    }

    #[test]
    fn far_field_follows_dipole_law() {
        let l = CoilLoop {
            center: [0.0; 3],
            normal: [0.0, 0.0, 1.0],
            radius: 1.0,
        };
        let verts = loop_vertices(&l, 128);
        for dir in [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.6, 0.0, 0.8]] {
            let near = norm(loop_field(&verts, dir.map(|c| c * 10.0)));
            let far = norm(loop_field(&verts, dir.map(|c| c * 20.0)));
            assert!(
                (near / far / 8.0 - 1.0).abs() < 0.05,
                "ratio {}",
                near / far
            );
        }
    }

    #[test]
    fn antipodal_loops_are_point_symmetric() {
        let g = Grid4D::new(10, 12, 6, 1, 2.0, 1.0).unwrap();
        let c = simulate_coil_maps(&g, 2).unwrap();
        for x in 0..10 {
            for y in 0..12 {
                for z in 0..6 {
                    let a = c.maps[[0, x, y, z]];
                    let b = c.maps[[1, 9 - x, 11 - y, z]];
                    assert!((a + b).norm() < 1e-9 * a.norm().max(1e-30), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn maps_are_nonzero_smooth_and_normalized() {
        let g = Grid4D::new(12, 12, 8, 1, 2.0, 1.0).unwrap();
        let c = simulate_coil_maps(&g, 16).unwrap();
        assert_eq!(c.n_coils(), 16);
        assert!((c.max_sum_of_squares() - 1.0).abs() < 1e-12);
        assert!((c.min_sum_of_squares() - 1.0).abs() < 1e-12);
        for map in c.maps.outer_iter() {
            let peak = map.iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(peak > 0.0);
            // neighbouring voxels differ by a bounded fraction of the map's peak
            for x in 0..11 {
                for y in 0..12 {
                    for z in 0..8 {
                        let a = map[[x, y, z]].norm();
                        let b = map[[x + 1, y, z]].norm();
                        assert!((a - b).abs() <= 0.2 * peak, "{a} {b} {peak}");
                    }
                }
            }
        }
    }

    #[test]
    fn active_selection_is_deterministic_and_distinct() {
        let idx = active_indices(64, 8, 42);
        assert_eq!(idx, active_indices(64, 8, 42));
        let mut d = idx.clone();
        d.dedup();
        assert_eq!(d.len(), 8);
        assert!(idx.iter().all(|&i| i < 64));

        let g = Grid4D::new(4, 4, 4, 1, 2.0, 1.0).unwrap();
        let c = simulate_coil_maps(&g, 6).unwrap();
        assert_eq!(select_active_coils(&c, 6, 1).unwrap(), c);
        let a = select_active_coils(&c, 3, 9).unwrap();
        assert_eq!(a, select_active_coils(&c, 3, 9).unwrap());
        assert_eq!(a.n_coils(), 3);
        assert!((a.max_sum_of_squares() - 1.0).abs() < 1e-12);
        assert!((a.min_sum_of_squares() - 1.0).abs() < 1e-12);
        assert!(select_active_coils(&c, 7, 1).is_err());
    }

    #[test]
    fn zero_coils_rejected() {
        let g = Grid4D::new(4, 4, 4, 1, 2.0, 1.0).unwrap();
        assert!(simulate_coil_maps(&g, 0).is_err());
    }
}
