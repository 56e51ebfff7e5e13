//! Acceptance criteria 1 to 8. Each prints one PASS or FAIL line; the process
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use gpcbf::benchmark;
use gpcbf::binomial::clopper_pearson;
use gpcbf::confidence::monte_carlo_containment;
use gpcbf::control::{
    barrier_monotonicity_check, check_trajectory_safety, simulate_batch, Plant, RobustnessMode,
    SafeController,
};
use gpcbf::dynamics::{
    jet_engine_input_map, jet_engine_problem, jet_engine_system, ConstantInputMap, JetEngine,
    ProblemSpec, StateBox, TrainingSet, VectorField, ZeroField,
};
use gpcbf::gp::{max_std_bound, BoundMode, GpPosterior, KernelSpec};
use gpcbf::synthesis::{
    cegis, encode_feasibility, BarrierCandidate, BarrierTemplate, CegisConfig, SynthesisResult,
};
use gpcbf::ConfidenceBox;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---- criterion 1 ----

fn dense_oracle(data: &TrainingSet, kernel: &KernelSpec, j: usize, x: &[f64]) -> (f64, f64) {
    let n = data.len();
    let noise = data.noise_std * data.noise_std;
    let a = DMatrix::from_fn(n, n, |r, c| {
        kernel.eval(&data.states[r], &data.states[c]) + if r == c { noise } else { 0.0 }
    });
    let y = DVector::from_fn(n, |r, _| data.targets[r][j]);
    let kbar = DVector::from_fn(n, |r, _| kernel.eval(x, &data.states[r]));
    let lu = a.lu();
    let w = lu.solve(&y).expect("regular system");
    let v = lu.solve(&kbar).expect("regular system");
    (kbar.dot(&w), kernel.eval(x, x) - kbar.dot(&v))
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, count: usize) -> (TrainingSet, Vec<KernelSpec>) {
    let states: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let targets = states
        .iter()
        .map(|x| x.iter().map(|v: &f64| v.sin() + rng.random_range(-0.1..0.1)).collect())
        .collect();
    let kernels = (0..n)
        .map(|_| {
            KernelSpec::squared_exponential(
                rng.random_range(0.5..2.0),
                (0..n).map(|_| rng.random_range(0.3..2.0)).collect(),
            )
            .unwrap()
        })
        .collect();
    let data = TrainingSet {
        states,
        targets,
        noise_std: rng.random_range(0.1..0.5),
        seed: 0,
    };
    (data, kernels)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=3);
        let count = rng.random_range(1..=50);
        let (data, kernels) = random_instance(&mut rng, n, count);
        let gp = GpPosterior::fit(&data, &kernels).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.5..2.5)).collect();
            let mean = gp.mean(&x);
            let var = gp.variance(&x).map_err(|e| e.to_string())?;
            for j in 0..n {
                let (m, v) = dense_oracle(&data, &kernels[j], j, &x);
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
                worst = worst.max(rel(mean[j], m)).max(rel(var[j], v));
            }
        }
    }
    check(worst <= 1e-8, format!("max relative error {worst:.2e}"))?;
    Ok(format!("max relative error {worst:.2e} over 50 instances"))
}

// ---- criterion 2 ----

fn criterion_2() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 1 + (seed as usize % 3);
        let count = rng.random_range(2..=40);
        let (data, kernels) = random_instance(&mut rng, n, count + 1);
        let small = data.prefix(count);
        let a = GpPosterior::fit(&small, &kernels).map_err(|e| e.to_string())?;
        let b = GpPosterior::fit(&data, &kernels).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.5..2.5)).collect();
            let va = a.variance(&x).map_err(|e| e.to_string())?;
            let vb = b.variance(&x).map_err(|e| e.to_string())?;
            for j in 0..n {
                worst = worst.max(vb[j] - va[j]);
            }
        }
    }
    check(worst <= 1e-10, format!("variance grew by {worst:.2e}"))?;
    Ok(format!("largest change {worst:.2e} across 20 instances"))
}

// ---- criterion 3 ----

fn bound_max(data: &TrainingSet, kernels: &[KernelSpec]) -> Result<f64, String> {
    let gp = GpPosterior::fit(data, kernels).map_err(|e| e.to_string())?;
    let b = max_std_bound(&gp, &jet_engine_problem(), benchmark::STD_GRID_PER_DIM, BoundMode::LipschitzGrid)
        .map_err(|e| e.to_string())?;
    Ok(b.max())
}

fn criterion_3() -> Outcome {
    let full = benchmark::training_data(100, benchmark::SEED).map_err(|e| e.to_string())?;
    let d35 = full.prefix(benchmark::SAMPLE_COUNT);
    let fitted = benchmark::fitted_kernels(&d35, benchmark::SEED).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for (name, kernels) in [("fitted", fitted), ("published", benchmark::published_kernels())] {
        let sweep: Vec<f64> = benchmark::SAMPLE_SWEEP
            .iter()
            .map(|&n| bound_max(&full.prefix(n), &kernels))
            .collect::<Result<_, _>>()?;
        let at35 = sweep[1];
        check(
            (0.005..=0.1).contains(&at35),
            format!("{name}: bound at N=35 is {at35:.4}"),
        )?;
        check(
            sweep.windows(2).all(|w| w[1] <= w[0]),
            format!("{name}: sweep {sweep:?} increases"),
        )?;
        lines.push(format!("{name} {:.4}/{:.4}/{:.4}", sweep[0], sweep[1], sweep[2]));
    }
    Ok(format!("bound at N=10/35/100: {}", lines.join(", ")))
}

// ---- criterion 4 ----

fn criterion_4() -> Outcome {
    let gp = benchmark::learned_model(benchmark::SEED).map_err(|e| e.to_string())?;
    let est = monte_carlo_containment(
        &gp,
        &JetEngine,
        &jet_engine_problem(),
        &benchmark::confidence_box(),
        benchmark::MONTE_CARLO_TRIALS,
        benchmark::MONTE_CARLO_CONFIDENCE,
        benchmark::SEED,
    )
    .map_err(|e| e.to_string())?;
    check(
        est.lower_bound >= 0.95,
        format!("lower bound {:.5}", est.lower_bound),
    )?;
    // Coverage of the exact interval on synthetic Bernoulli data.
    let (p, trials) = (0.99, 100_000u64);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let binom = rand_distr::Binomial::new(trials, p).unwrap();
    let mut covered = 0;
    for _ in 0..1000 {
        let k = rng.sample(binom);
        let (lo, hi) = clopper_pearson(k, trials, 0.999).map_err(|e| e.to_string())?;
        if lo <= p && p <= hi {
            covered += 1;
        }
    }
    check(covered >= 999, format!("coverage {covered}/1000"))?;
    Ok(format!(
        "{} of {} inside D, interval [{:.5}, {:.5}]; coverage {covered}/1000",
        est.successes, est.trials, est.lower_bound, est.upper_bound
    ))
}

// ---- criterion 5 ----

fn toy_spec() -> ProblemSpec {
    let b = |lo: f64, hi: f64| StateBox::new(vec![lo], vec![hi]).unwrap();
    ProblemSpec {
        n: 1,
        m: 1,
        state_box: b(-1.0, 1.0),
        initial_boxes: vec![b(-0.2, 0.2)],
        unsafe_boxes: vec![b(0.8, 1.0)],
        inputs: vec![vec![-1.0], vec![0.0], vec![1.0]],
    }
}

fn toy_run() -> &'static Result<SynthesisResult, String> {
    static RUN: OnceLock<Result<SynthesisResult, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let t = BarrierTemplate::polynomial(1, 1, 1e6).map_err(|e| e.to_string())?;
        cegis(
            &t,
            &ZeroField(1),
            &ConstantInputMap(DMatrix::from_element(1, 1, 1.0)),
            &toy_spec(),
            &ConfidenceBox::with_half_widths(vec![0.0]).unwrap(),
            &CegisConfig::default(),
        )
        .map_err(|e| e.to_string())
    })
}

fn criterion_5() -> Outcome {
    let r = toy_run().as_ref().map_err(|e| e.clone())?;
    let b = r.candidate().filter(|_| r.is_certified()).ok_or("toy problem not certified")?;
    let spec = toy_spec();
    let eta = b.margin;
    let mut bad = 0;
    for i in 0..1000 {
        let x = -1.0 + 2.0 * i as f64 / 999.0;
        let v = b.value(&[x]);
        let slope = b.gradient(&[x])[0];
        if spec.in_initial(&[x]) && v > 0.0 {
            bad += 1;
        }
        if spec.in_unsafe(&[x]) && v < eta {
            bad += 1;
        }
        if !spec.inputs.iter().any(|u| slope * u[0] <= 0.0) {
            bad += 1;
        }
    }
    check(bad == 0, format!("{bad} grid points violate a condition"))?;
    Ok(format!(
        "certified in {} iterations, B = {:.4} + {:.4} x",
        r.iterations, b.coefficients[0], b.coefficients[1]
    ))
}

// ---- criterion 6 ----

struct JetRun {
    gp: GpPosterior,
    result: SynthesisResult,
}

fn jet_run() -> &'static Result<JetRun, String> {
    static RUN: OnceLock<Result<JetRun, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let gp = benchmark::learned_model(benchmark::SEED).map_err(|e| e.to_string())?;
        let result = cegis(
            &benchmark::barrier_template(),
            &gp,
            &jet_engine_input_map(),
            &jet_engine_problem(),
            &benchmark::confidence_box(),
            &benchmark::cegis_config(),
        )
        .map_err(|e| e.to_string())?;
        Ok(JetRun { gp, result })
    })
}

fn certified_jet() -> Result<(&'static JetRun, &'static BarrierCandidate), String> {
    let run = jet_run().as_ref().map_err(|e| e.clone())?;
    match run.result.candidate() {
        Some(c) if run.result.is_certified() => Ok((run, c)),
        _ => Err(format!("jet engine synthesis ended with {:?}", run.result.outcome)),
    }
}

/// `min_u max_d ∂B/∂x·(μ + d + g u)` written out for the jet engine.
fn oracle_flow(b: &BarrierCandidate, gp: &GpPosterior, x: &[f64]) -> f64 {
    let grad = b.gradient(x);
    let mu = gp.mean(x);
    let w = benchmark::HALF_WIDTH;
    let robust = grad[0] * mu[0] + grad[1] * mu[1] + w * (grad[0].abs() + grad[1].abs());
    jet_engine_problem()
        .inputs
        .iter()
        .map(|u| robust - grad[1] * u[0])
        .fold(f64::INFINITY, f64::min)
}

fn dense_grid(region: &StateBox, per_dim: usize) -> impl Iterator<Item = [f64; 2]> + '_ {
    (0..per_dim * per_dim).map(move |k| {
        let (i, j) = (k / per_dim, k % per_dim);
        let t = |lo: f64, hi: f64, s: usize| lo + (hi - lo) * s as f64 / (per_dim - 1) as f64;
        [
            t(region.lower[0], region.upper[0], i),
            t(region.lower[1], region.upper[1], j),
        ]
    })
}

fn criterion_6() -> Outcome {
    let (run, b) = certified_jet()?;
    check(run.result.iterations <= 50, format!("{} iterations", run.result.iterations))?;
    let spec = jet_engine_problem();
    let mut max_init = f64::NEG_INFINITY;
    for r in &spec.initial_boxes {
        for x in dense_grid(r, 400) {
            max_init = max_init.max(b.value(&x));
        }
    }
    let mut min_unsafe = f64::INFINITY;
    for r in &spec.unsafe_boxes {
        for x in dense_grid(r, 400) {
            min_unsafe = min_unsafe.min(b.value(&x));
        }
    }
    let max_flow = dense_grid(&spec.state_box, 400)
        .map(|x| oracle_flow(b, &run.gp, &x))
        .fold(f64::NEG_INFINITY, f64::max);
    check(max_init <= 0.0, format!("B reaches {max_init:.3e} on X0"))?;
    check(min_unsafe > 0.0, format!("B drops to {min_unsafe:.3e} on X1"))?;
    check(max_flow <= 0.0, format!("flow condition reaches {max_flow:.3e}"))?;

    // Published coefficients against init/unsafe on a 20x20 grid over X.
    let published = benchmark::published_barrier();
    let mut published_bad = 0;
    for x in dense_grid(&spec.state_box, 20) {
        let v = published.value(&x);
        if (spec.in_initial(&x) && v > 0.0) || (spec.in_unsafe(&x) && v <= 0.0) {
            published_bad += 1;
        }
    }
    check(published_bad == 0, format!("published barrier fails at {published_bad} grid points"))?;
    Ok(format!(
        "certified in {} iterations; 400x400 grid: max B on X0 {max_init:.3}, min B on X1 {min_unsafe:.3}, max flow {max_flow:.3e}; published barrier passes init/unsafe",
        run.result.iterations
    ))
}

// ---- criterion 7 ----

fn criterion_7() -> Outcome {
    let (run, b) = certified_jet()?;
    let spec = jet_engine_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(benchmark::SEED);
    let x0s: Vec<Vec<f64>> = (0..100)
        .map(|_| spec.initial_boxes[0].sample_uniform(&mut rng))
        .collect();
    let ctrl = SafeController::new(
        b.clone(),
        &run.gp,
        jet_engine_input_map(),
        spec.inputs.clone(),
        benchmark::confidence_box(),
        RobustnessMode::WorstCaseVertices,
    )
    .map_err(|e| e.to_string())?;
    let sys = jet_engine_system();
    let mut summary = Vec::new();
    for (name, plant, limit) in [("true", Plant::True(&sys), 1e-3), ("mean", Plant::Mean, 1e-6)] {
        let runs = simulate_batch(&ctrl, plant, &spec, &x0s, 10.0, 1e-3);
        let mut unsafe_steps = 0;
        let mut max_increase: f64 = 0.0;
        for r in runs {
            let traj = r.map_err(|e| format!("{name} plant: {e}"))?;
            unsafe_steps += check_trajectory_safety(&traj, &spec).unsafe_steps;
            max_increase = max_increase.max(barrier_monotonicity_check(&traj, b, limit).max_increase);
        }
        check(unsafe_steps == 0, format!("{name} plant: {unsafe_steps} unsafe states"))?;
        check(
            max_increase <= limit,
            format!("{name} plant: B increased by {max_increase:.3e} in one step"),
        )?;
        summary.push(format!("{name} plant max step increase {max_increase:.2e}"));
    }
    Ok(format!("100 runs, no unsafe states; {}", summary.join(", ")))
}

// ---- criterion 8 ----

fn homogeneity<M: VectorField>(
    result: &SynthesisResult,
    mean: &M,
    g: &ConstantInputMap,
    spec: &ProblemSpec,
    dbox: &ConfidenceBox,
) -> Result<(), String> {
    let b = result.candidate().ok_or("no candidate")?;
    let t = BarrierTemplate {
        a_max: f64::INFINITY,
        ..b.template()
    };
    for lambda in [1.0, 0.5, 2.0, 10.0] {
        let margin = lambda * b.margin;
        let sys = encode_feasibility(&t, mean, g, spec, dbox, &result.samples, margin)
            .map_err(|e| e.to_string())?;
        let scaled = b.scaled(lambda);
        check(
            sys.is_satisfied(&scaled.coefficients, margin, 1e-9),
            format!("lambda {lambda}: violation {:.3e}", sys.max_violation(&scaled.coefficients, margin)),
        )?;
    }
    Ok(())
}

fn criterion_8() -> Outcome {
    let toy = toy_run().as_ref().map_err(|e| e.clone())?;
    homogeneity(
        toy,
        &ZeroField(1),
        &ConstantInputMap(DMatrix::from_element(1, 1, 1.0)),
        &toy_spec(),
        &ConfidenceBox::with_half_widths(vec![0.0]).unwrap(),
    )?;
    let (run, _) = certified_jet()?;
    homogeneity(
        &run.result,
        &run.gp,
        &jet_engine_input_map(),
        &jet_engine_problem(),
        &benchmark::confidence_box(),
    )?;
    Ok(format!(
        "toy and jet engine candidates stay feasible on {} and {} samples",
        toy.samples.len(),
        run.result.samples.len()
    ))
}

type Criterion = (&'static str, fn() -> Outcome, u64);

fn main() {
    // Expensive shared runs are computed up front so that each criterion is
    // timed on its own work.
    let _ = toy_run();
    let _ = jet_run();
    let criteria: [Criterion; 8] = [
        ("gp oracle equivalence", criterion_1, 10),
        ("variance monotonicity", criterion_2, 10),
        ("jet-engine learning", criterion_3, 60),
        ("monte-carlo containment", criterion_4, 120),
        ("cegis toy certification", criterion_5, 5),
        ("jet-engine synthesis", criterion_6, 600),
        ("closed-loop safety", criterion_7, 120),
        ("homogeneity", criterion_8, 5),
    ];
    let mut failures = 0;
    for (k, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed > Duration::from_secs(*limit) {
                Err(format!("{msg}; took longer than {limit} s"))
            } else {
                Ok(msg)
            }
        });
        match outcome {
            Ok(msg) => println!("criterion {} [{name}]: PASS ({msg}) in {:.2?}", k + 1, elapsed),
            Err(msg) => {
                failures += 1;
                println!("criterion {} [{name}]: FAIL ({msg}) in {:.2?}", k + 1, elapsed);
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
