use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sidelink_core::{run_simulation, run_simulation_multi, ReceiverMode, SimConfig};

fn short(density: f64) -> SimConfig {
    SimConfig {
        density_veh_per_km: density,
        n_retx: 2,
        sim_duration_s: 1.0,
        warmup_s: 0.5,
        ..SimConfig::default()
    }
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_1.5s");
    group.sample_size(10);
    for density in [12.5, 50.0] {
        group.bench_function(format!("legacy_{density}"), |b| {
            b.iter(|| black_box(run_simulation(&short(density)).unwrap().stats))
        });
        group.bench_function(format!("all_receivers_{density}"), |b| {
            b.iter(|| black_box(run_simulation_multi(&short(density), &ReceiverMode::ALL).unwrap().len()))
        });
    }
    group.finish();
}

criterion_group!(benches, simulation);
criterion_main!(benches);
