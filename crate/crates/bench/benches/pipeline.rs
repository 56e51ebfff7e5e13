use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gpcbf::benchmark;
use gpcbf::confidence::monte_carlo_containment;
use gpcbf::control::{simulate_closed_loop, Plant};
use gpcbf::dynamics::{jet_engine_input_map, jet_engine_problem, jet_engine_system, JetEngine};
use gpcbf::gp::{max_std_bound, BoundMode};
use gpcbf::synthesis::{cegis, verify_candidate, VerifierConfig};
use gpcbf::{GpPosterior, RobustnessMode, SafeController};
use gpcbf_bench::jet_fixture;

fn gp(c: &mut Criterion) {
    let data = benchmark::training_data(benchmark::SAMPLE_COUNT, benchmark::SEED).unwrap();
    let kernels = benchmark::published_kernels();
    c.bench_function("gp/fit_35", |b| b.iter(|| GpPosterior::fit(black_box(&data), &kernels).unwrap()));
    let model = GpPosterior::fit(&data, &kernels).unwrap();
    c.bench_function("gp/predict", |b| {
        b.iter(|| (model.mean(black_box(&[0.3, -0.7])), model.variance(&[0.3, -0.7]).unwrap()))
    });
    let spec = jet_engine_problem();
    c.bench_function("gp/std_bound_grid_50", |b| {
        b.iter(|| max_std_bound(&model, &spec, 50, BoundMode::LipschitzGrid).unwrap())
    });
    c.bench_function("gp/fit_hyperparameters_35", |b| {
        b.iter(|| benchmark::fitted_kernels(&data, benchmark::SEED).unwrap())
    });
}

fn confidence(c: &mut Criterion) {
    let model = benchmark::learned_model(benchmark::SEED).unwrap();
    let spec = jet_engine_problem();
    let dbox = benchmark::confidence_box();
    c.bench_function("confidence/monte_carlo_100k", |b| {
        b.iter(|| monte_carlo_containment(&model, &JetEngine, &spec, &dbox, 100_000, 0.99, 1).unwrap())
    });
}

fn synthesis(c: &mut Criterion) {
    let fx = jet_fixture();
    let spec = jet_engine_problem();
    let g = jet_engine_input_map();
    let dbox = benchmark::confidence_box();
    let mut group = c.benchmark_group("synthesis");
    group.sample_size(10);
    group.bench_function("verify_certified", |b| {
        b.iter(|| verify_candidate(&fx.barrier, &fx.gp, &g, &spec, &dbox, &VerifierConfig::default()).unwrap())
    });
    group.bench_function("cegis_jet_engine", |b| {
        b.iter(|| {
            cegis(&benchmark::barrier_template(), &fx.gp, &g, &spec, &dbox, &benchmark::cegis_config()).unwrap()
        })
    });
    group.finish();
}

fn control(c: &mut Criterion) {
    let fx = jet_fixture();
    let spec = jet_engine_problem();
    let ctrl = SafeController::new(
        fx.barrier.clone(),
        &fx.gp,
        jet_engine_input_map(),
        spec.inputs.clone(),
        benchmark::confidence_box(),
        RobustnessMode::WorstCaseVertices,
    )
    .unwrap();
    c.bench_function("control/select_input", |b| b.iter(|| ctrl.select_input(black_box(&[0.5, 0.2]))));
    let sys = jet_engine_system();
    c.bench_function("control/simulate_1000_steps", |b| {
        b.iter(|| simulate_closed_loop(&ctrl, Plant::True(&sys), &spec, &[0.5, 0.0], 1.0, 1e-3).unwrap())
    });
}

criterion_group!(benches, gp, confidence, synthesis, control);
criterion_main!(benches);
