use ndarray::s;
use serde_json::Map;

use tempoflow_core::baselines::linear_interp_time;
use tempoflow_core::mrsim::{
    kspace_from_container, kspace_to_container, select_active_coils, simulate_acquisition,
    simulate_coil_maps, AcquisitionConfig, CoilArray, CoilModel,
};
use tempoflow_core::patch::{
    extract_patch_pairs, patches_from_container, patches_to_container, ExtractionConfig,
    PatchGeometry,
};
use tempoflow_core::phantom::{evaluate_phantom_pair, PhantomSampler};
use tempoflow_core::recon::{images_to_field, reconstruct_kspace, FistaConfig};
use tempoflow_core::{load_container, load_field, save_container, save_field, Grid4D};

fn grid() -> Grid4D {
    Grid4D::new(16, 16, 16, 8, 2.0, 80.0).unwrap()
}

fn sampler() -> PhantomSampler {
    PhantomSampler {
        period: 640.0,
        ..Default::default()
    }
}

#[test]
fn noise_free_round_trip_recovers_velocities() {
    let g = grid();
    let spec = sampler().sample(&g, 5).unwrap();
    let (hr, _) = evaluate_phantom_pair(&spec, g.nt, g.dt).unwrap();
    let cfg = AcquisitionConfig {
        n_coils_total: 1,
        n_coils_active: 1,
        coil_model: CoilModel::Uniform,
        full_sampling: true,
        ..Default::default()
    };
    let coils = CoilArray::uniform(&g);
    let k = simulate_acquisition(&hr, &coils, &cfg, f64::INFINITY).unwrap();
    let fista = FistaConfig {
        lambda_cs: Some(0.0),
        ..Default::default()
    };
    let out = reconstruct_kspace(&k, &coils, &fista).unwrap();
    let rec = images_to_field(&out.images, cfg.venc, g, hr.fluid_mask.clone()).unwrap();
    let worst = rec
        .v
        .iter()
        .zip(hr.v.iter())
        .map(|(a, b)| (a - b).abs() as f64)
        .fold(0.0, f64::max);
    assert!(worst < 1e-3 * cfg.venc, "max error {worst}");
}

#[test]
fn kspace_survives_disk() {
    let g = grid();
    let spec = sampler().sample(&g, 9).unwrap();
    let (hr, _) = evaluate_phantom_pair(&spec, g.nt, g.dt).unwrap();
    let cfg = AcquisitionConfig {
        n_coils_total: 8,
        n_coils_active: 2,
        seed: 4,
        ..Default::default()
    };
    let all = simulate_coil_maps(&g, 8).unwrap();
    let coils = select_active_coils(&all, 2, 4).unwrap();
    let k = simulate_acquisition(&hr, &coils, &cfg, 20.0).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.f4d");
    save_container(&path, &kspace_to_container(&k).unwrap()).unwrap();
    let back = kspace_from_container(&load_container(&path).unwrap()).unwrap();
    assert_eq!(back, k);
}

#[test]
fn field_and_patches_survive_disk() {
    let g = grid();
    let spec = sampler().sample(&g, 2).unwrap();
    let (hr, lr) = evaluate_phantom_pair(&spec, g.nt, g.dt).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let path = dir.path().join("hr.f4d");
    save_field(&path, &hr, &Map::new()).unwrap();
    let back = load_field(&path).unwrap();
    assert_eq!(back.grid, hr.grid);
    assert_eq!(back.v, hr.v);
    assert_eq!(back.fluid_mask, hr.fluid_mask);

    let geom = PatchGeometry {
        size: 8,
        frames: 4,
        overlap: 2,
    };
    let extraction = ExtractionConfig {
        n_patches: 12,
        ..Default::default()
    };
    let pairs = extract_patch_pairs(&lr, &hr, &geom, &extraction, 3).unwrap();
    assert_eq!(pairs.len(), 12);
    let path = dir.path().join("patches.f4d");
    save_container(&path, &patches_to_container(&pairs).unwrap()).unwrap();
    let back = patches_from_container(&load_container(&path).unwrap()).unwrap();
    assert_eq!(back.len(), pairs.len());
    for (a, b) in back.iter().zip(&pairs) {
        assert_eq!(a.lr, b.lr);
        assert_eq!(a.hr, b.hr);
    }
}

#[test]
fn linear_baseline_keeps_acquired_frames() {
    let g = grid();
    let spec = sampler().sample(&g, 6).unwrap();
    let (hr, lr) = evaluate_phantom_pair(&spec, g.nt, g.dt).unwrap();
    let up = linear_interp_time(&lr, 2).unwrap();
    assert_eq!(up.grid.nt, hr.grid.nt);
    for i in 0..lr.grid.nt {
        assert_eq!(
            up.v.slice(s![.., 2 * i, .., .., ..]),
            hr.v.slice(s![.., 2 * i, .., .., ..])
        );
    }
}
