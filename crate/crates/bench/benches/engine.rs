use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use qengine::correlators::{integrate_correlation, stroke_series};
use qengine::statistics::{report_for, sweep_with, Execution, Spacing, SweepAxis, SweepParam};
use qengine::trajectories::{default_dt, engine_process, ensemble_counts};
use qengine::{C64, EngineModel, EngineParams, OperatorSet, StrokePanel, TauGrid};

fn steady_state(c: &mut Criterion) {
    let p = EngineParams::baseline();
    c.bench_function("steady_state_solve", |b| {
        b.iter_batched(
            || EngineModel::new(p).unwrap(),
            |m| black_box(m.steady_state().unwrap().dim()),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("engine_report", |b| {
        b.iter_batched(
            || EngineModel::new(p).unwrap(),
            |m| black_box(report_for(&m).unwrap().power),
            BatchSize::SmallInput,
        )
    });
}

fn sweep(c: &mut Criterion) {
    let p = EngineParams::baseline();
    let axes = [
        SweepAxis {
            param: SweepParam::Kappa,
            min: 0.05 * p.e_j,
            max: 3.0 * p.e_j,
            count: 16,
            spacing: Spacing::Log,
        },
        SweepAxis {
            param: SweepParam::Lambda,
            min: std::f64::consts::PI / 80.0,
            max: std::f64::consts::PI / 2.0,
            count: 8,
            spacing: Spacing::Linear,
        },
    ];
    let mut group = c.benchmark_group("sweep_16x8");
    group.sample_size(20);
    group.bench_function("serial", |b| b.iter(|| sweep_with(&p, &axes, Execution::Serial).unwrap()));
    group.bench_function("parallel", |b| b.iter(|| sweep_with(&p, &axes, Execution::Parallel).unwrap()));
    group.finish();
}

fn correlators(c: &mut Criterion) {
    let p = EngineParams::baseline();
    let m = EngineModel::new(p).unwrap();
    let rho = m.steady_state().unwrap().clone();
    let grid = TauGrid::uniform(30.0 / p.e_j, 600).unwrap();
    c.bench_function("g2_series_600", |b| {
        b.iter(|| stroke_series(&m.liouvillian, &rho, &p, &m.ops, StrokePanel::G2, &grid).unwrap())
    });
    c.bench_function("g2_resolvent_integral", |b| {
        b.iter(|| integrate_correlation(&m.liouvillian, &rho, StrokePanel::G2.correlator(&m.ops), true).unwrap())
    });
}

fn trajectories(c: &mut Criterion) {
    let p = EngineParams::baseline();
    let process = engine_process(&OperatorSet::new(&p)).unwrap();
    let dt = default_dt(&p).unwrap();
    let mut psi0 = [C64::new(0.0, 0.0); 4];
    psi0[2] = C64::new(1.0, 0.0);
    let mut group = c.benchmark_group("trajectories");
    group.sample_size(20);
    group.bench_function("single_100_over_ej", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            process.run(&psi0, 100.0 / p.e_j, dt, seed).unwrap()
        })
    });
    group.bench_function("ensemble_64_counts", |b| {
        b.iter(|| ensemble_counts(&p, 100.0 / p.e_j, 64, 1, dt).unwrap())
    });
    group.finish();
}

criterion_group!(benches, steady_state, sweep, correlators, trajectories);
criterion_main!(benches);
