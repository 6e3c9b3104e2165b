use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ndarray::s;

use tempoflow_bench::{random_patch, random_volume};
use tempoflow_core::fft::Fft3Plan;
use tempoflow_core::mrsim::{generate_phyllotaxis_pattern, select_active_coils, simulate_coil_maps};
use tempoflow_core::recon::{fista_reconstruct, EncodingOperator, FistaConfig, LinearOperator};
use tempoflow_core::srnet::{NetworkConfig, NetworkParams};
use tempoflow_core::{Direction, Grid4D};

fn fft(c: &mut Criterion) {
    let plan = Fft3Plan::new([48, 48, 24]);
    let x = random_volume([48, 48, 24], 1);
    c.bench_function("fft3 48x48x24", |b| {
        b.iter(|| {
            let mut y = x.clone();
            plan.process(&mut y, Direction::Forward);
            black_box(y)
        })
    });
}

fn fista(c: &mut Criterion) {
    let g = Grid4D::new(32, 32, 16, 1, 1.5, 20.0).unwrap();
    let coils = select_active_coils(&simulate_coil_maps(&g, 64).unwrap(), 8, 1).unwrap();
    let mask = generate_phyllotaxis_pattern(32, 16, 2, 7.7).unwrap().masks.slice(s![0, .., ..]).to_owned();
    let op = EncodingOperator::new(&coils, mask).unwrap();
    let y = op.apply(&random_volume([32, 32, 16], 2));
    let cfg = FistaConfig { n_iter: 1, ..Default::default() };
    c.bench_function("fista iteration 32x32x16, 8 coils", |b| {
        b.iter(|| black_box(fista_reconstruct(&y, &op, &cfg).unwrap()))
    });
}

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("network forward 16x16x16");
    group.sample_size(10);
    for filters in [8, 32] {
        let cfg = NetworkConfig { filters, ..Default::default() };
        let params = NetworkParams::<f32>::init(cfg, 3).unwrap();
        let x = random_patch(6, 16, 16, 4);
        group.bench_function(format!("F={filters}"), |b| b.iter(|| black_box(params.forward(&x).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, fft, fista, network);
criterion_main!(benches);
