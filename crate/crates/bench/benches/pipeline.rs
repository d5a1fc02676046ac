use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use tiltgp::compensator::{solve_compensation, Compensator, CompensatorConfig, CompensatorState};
use tiltgp::controller::ControllerGains;
use tiltgp::gp::{kernel_matrix, FitConfig, GpModel};
use tiltgp::simulator::{run_episode, Compensation, TrajectorySpec, VehicleConfig};
use tiltgp_bench::{evaluation_wrenches, model, queries, training_set};

fn gp(c: &mut Criterion) {
    let set = training_set(1);
    let model = model(&set);
    let xs: Vec<_> = set.inputs.iter().map(|x| (*x).into()).collect();
    let h = model.axis(5).unwrap().hyperparameters().clone();
    let qs = queries(&set, 64, 2);

    c.bench_function("kernel_matrix/100", |b| b.iter(|| kernel_matrix(black_box(&xs), &h)));
    c.bench_function("predict/100", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % qs.len();
            model.predict(black_box(&qs[i]))
        })
    });
    c.bench_function("mean_and_jacobian/100", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % qs.len();
            model.mean_and_jacobian(black_box(&qs[i]))
        })
    });

    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("100 points, 1 restart", |b| {
        let cfg = FitConfig { restarts: 1, ..FitConfig::default() };
        b.iter(|| GpModel::fit(black_box(&set), &cfg).unwrap())
    });
    group.finish();
}

fn compensator(c: &mut Criterion) {
    let model = model(&training_set(1));
    let wrenches = evaluation_wrenches(3);
    let cfg = CompensatorConfig::default();

    c.bench_function("solve_compensation/cold", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % wrenches.len();
            solve_compensation(black_box(&wrenches[i]), &model, &cfg, &mut CompensatorState::default()).unwrap()
        })
    });
    c.bench_function("compensator_step/warm", |b| {
        b.iter_batched(
            || Compensator::new(&model, cfg.clone()).unwrap(),
            |mut comp| {
                for w in wrenches.iter().take(100) {
                    black_box(comp.step(w).unwrap());
                }
            },
            BatchSize::SmallInput,
        )
    });
}

fn episode(c: &mut Criterion) {
    let model = model(&training_set(1));
    let cfg = CompensatorConfig::default();
    let spec = TrajectorySpec { duration: 2.0, ..TrajectorySpec::figure8() };
    let vehicle = VehicleConfig::default();
    let gains = ControllerGains::simulation();

    let mut group = c.benchmark_group("episode");
    group.sample_size(10);
    group.bench_function("figure8 2 s, off", |b| b.iter(|| run_episode(&spec, &vehicle, &gains, None, 0).unwrap()));
    group.bench_function("figure8 2 s, on", |b| {
        b.iter(|| run_episode(&spec, &vehicle, &gains, Some(Compensation { model: &model, config: &cfg }), 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, gp, compensator, episode);
criterion_main!(benches);
