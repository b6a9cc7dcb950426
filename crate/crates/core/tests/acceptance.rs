//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! FAIL. Expected values come from oracles written here, independently of
//! the library's solvers.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pa_contracts::benchmark::benchmark_report;
use pa_contracts::cli::{run, Command, RunSpec, SweepAxis};
use pa_contracts::config::Config;
use pa_contracts::contract::{agent_value, Contract, OutputLaw};
use pa_contracts::first_best::{fb_optimal_effort, recruit_optimize, solve_first_best};
use pa_contracts::general_fb::{eta, fb_general_value, GeneralFbSpec, TimePath};
use pa_contracts::model::{
    ComparisonSpec, CostMap, CostSpec, DriftSpec, FirmModel, GrowthBounds, LQBenchmark,
    LinearComparison, ModelSpec, Volatility, ZMatrix,
};
use pa_contracts::monte_carlo::{estimate_utilities, EffortPolicy, Formulation, MCEstimate, SimConfig};
use pa_contracts::second_best::{certify_z, sb_best_response, sb_generator, solve_second_best};
use pa_contracts::verification::{verify_nash, DeviationGrid, Thresholds};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn random_benchmark(rng: &mut ChaCha8Rng) -> LQBenchmark {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    LQBenchmark {
        cost_coeffs: [[u(0.5, 2.0), u(0.5, 2.0)], [u(0.5, 2.0), u(0.5, 2.0)]],
        sigmas: [u(0.6, 1.4), u(0.6, 1.4)],
        gammas: [u(0.0, 1.0), u(0.0, 1.0)],
        agent_risk_aversions: [u(0.5, 2.0), u(0.5, 2.0)],
        principal_risk_aversion: u(0.5, 2.0),
        horizon: u(0.5, 2.0),
        reservation_utilities: [u(-2.0, -0.5), u(-2.0, -0.5)],
    }
}

/// `q_j = 1 + γ_j − γ_{other}` for two agents.
fn weights(b: &LQBenchmark) -> [f64; 2] {
    [1.0 + b.gammas[0] - b.gammas[1], 1.0 + b.gammas[1] - b.gammas[0]]
}

/// `D_jl`: project `j`'s drift loads `+1` on its own agent, `−1` on the other.
fn loading(j: usize, l: usize) -> f64 {
    if j == l {
        1.0
    } else {
        -1.0
    }
}

/// Minimises `f` over a box: a global tensor grid, then nested grids of 21
/// points per axis centred on the incumbent, each spanning ±5 old steps,
/// until the step falls below `resolution`.
fn nested_grid_min(f: impl Fn(&[f64; 4]) -> f64, lo: f64, hi: f64, coarse: usize, resolution: f64) -> [f64; 4] {
    let scan = |center: [f64; 4], half: f64, pts: usize| -> ([f64; 4], f64) {
        let step = 2.0 * half / (pts - 1) as f64;
        let mut best = (center, f(&center));
        let mut p = [0.0; 4];
        for i0 in 0..pts {
            p[0] = center[0] - half + i0 as f64 * step;
            for i1 in 0..pts {
                p[1] = center[1] - half + i1 as f64 * step;
                for i2 in 0..pts {
                    p[2] = center[2] - half + i2 as f64 * step;
                    for i3 in 0..pts {
                        p[3] = center[3] - half + i3 as f64 * step;
                        let v = f(&p);
                        if v < best.1 {
                            best = (p, v);
                        }
                    }
                }
            }
        }
        (best.0, step)
    };
    let mid = 0.5 * (lo + hi);
    let (mut x, mut step) = scan([mid; 4], 0.5 * (hi - lo), coarse);
    while step > resolution {
        let (nx, ns) = scan(x, 5.0 * step, 21);
        x = nx;
        step = ns;
    }
    x
}

/// Two-agent effort/sensitivity matrix from `[m11, m21, m12, m22]`.
fn mat(v: &[f64; 4]) -> DMatrix<f64> {
    DMatrix::from_column_slice(2, 2, v)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut solver_time = Duration::ZERO;
    for _ in 0..20 {
        let b = random_benchmark(&mut rng);
        let q = weights(&b);
        let k = b.cost_coeffs;
        // −q·b(a) + 1·k(a) written out entrywise.
        let objective = |v: &[f64; 4]| {
            let a = [[v[0], v[2]], [v[1], v[3]]];
            let mut s = 0.0;
            for j in 0..2 {
                for l in 0..2 {
                    s += -q[j] * loading(j, l) * a[j][l] + 0.5 * k[j][l] * a[j][l] * a[j][l];
                }
            }
            s
        };
        let oracle = mat(&nested_grid_min(objective, -5.0, 5.0, 41, 1e-8));
        let start = Instant::now();
        let model = b.to_model().unwrap();
        let a = fb_optimal_effort(&model, 0.0).unwrap();
        solver_time += start.elapsed();
        worst = worst.max((a.matrix() - oracle).amax());
    }
    outcome(worst <= 1e-5, format!("max |a − a_grid| = {worst:.2e} over 20 benchmarks (solver {:.3} s)", solver_time.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = |seed| SimConfig { n_steps: 256, n_paths: 100_000, seed };
    let mut worst_rel: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    let mut ok = true;
    for case in 0..10u64 {
        let b = random_benchmark(&mut rng);
        let model = b.to_model().unwrap();
        let fb = solve_first_best(&model).unwrap();
        let sb = solve_second_best(&model).unwrap();
        let pairs = [
            (Contract::Linear(fb.contract.clone()), fb.effort.clone()),
            (Contract::ZRep(sb.contract.clone()), sb.effort.clone()),
        ];
        for (c, (contract, effort)) in pairs.iter().enumerate() {
            let law = OutputLaw::new(&model, effort).unwrap();
            let mc = estimate_utilities(&model, contract, &EffortPolicy::from_path(effort.clone()), &cfg(case * 2 + c as u64), Formulation::Strong)
                .unwrap();
            for i in 0..2 {
                let ubar = b.reservation_utilities[i];
                let v = agent_value(&model, contract, &law, i).unwrap();
                let rel = ((v - ubar) / ubar).abs();
                worst_rel = worst_rel.max(rel);
                let e = &mc.agents[i];
                let z = (e.mean - ubar).abs() / e.std_error;
                worst_z = worst_z.max(z);
                ok &= rel <= 1e-8 && e.is_valid() && e.within(ubar, 3.0);
            }
        }
    }
    outcome(ok, format!("closed-form max relative gap {worst_rel:.2e}; MC max |gap|/SE {worst_z:.2} (20 contracts × 2 agents)"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cfg = SimConfig::default();
    let th = Thresholds::default();
    let grid = DeviationGrid::default();
    let mut ok = true;
    let mut worst_t = f64::NEG_INFINITY;
    let mut control_t = f64::INFINITY;
    for case in 0..3 {
        let b = if case == 0 { LQBenchmark { gammas: [0.5, 0.2], ..Default::default() } } else { random_benchmark(&mut rng) };
        let model = b.to_model().unwrap();
        let sb = solve_second_best(&model).unwrap();
        let contract = Contract::ZRep(sb.contract.clone());
        let policy = EffortPolicy::from_path(sb.effort.clone());
        let checks = verify_nash(&model, &contract, &policy, &grid, &cfg, &th).unwrap();
        for c in &checks {
            ok &= c.passed && c.n_deviations == 64;
            worst_t = worst_t.max(c.max_t);
        }
        for i in 0..2 {
            let zeroed = policy.with_column(i, &DVector::zeros(2)).unwrap();
            let bad = verify_nash(&model, &contract, &zeroed, &grid, &cfg, &th).unwrap();
            let t = bad[i].max_t;
            control_t = control_t.min(t);
            ok &= !bad[i].passed && t > th.gain_se;
        }
    }
    outcome(ok, format!("largest deviation gain {worst_t:.2} SE (limit 2); weakest zeroed-column control {control_t:.1} SE"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    let (mut bounded, mut unbounded) = (0, 0);
    let mut ok = true;
    let mut cases: Vec<LQBenchmark> = (0..200)
        .map(|_| {
            let mut b = random_benchmark(&mut rng);
            b.sigmas = [rng.random_range(0.5..4.0), rng.random_range(0.5..4.0)];
            b.cost_coeffs = [[rng.random_range(0.5..4.0), rng.random_range(0.5..4.0)], [rng.random_range(0.5..4.0), rng.random_range(0.5..4.0)]];
            b
        })
        .collect();
    cases.push(LQBenchmark::default());
    for b in &cases {
        let r = recruit_optimize(b);
        let (a1, a2) = (r.alpha1, r.alpha2);
        let g = |d: f64| (1.0 + d).powi(2) * a1 + (1.0 - d).powi(2) * a2;
        if a1 + a2 > 0.0 {
            bounded += 1;
            // Bracket, then bisect on the sign of the central-difference slope,
            // which resolves a quadratic's minimiser to rounding level.
            let mut w = 1.0;
            while g(w) < g(0.0) || g(-w) < g(0.0) {
                w *= 2.0;
            }
            let slope = |d: f64| g(d + 1e-3) - g(d - 1e-3);
            let (mut lo, mut hi) = (-w, w);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if slope(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let d_num = 0.5 * (lo + hi);
            let d = r.optimum.unwrap_or(f64::NAN);
            let err = (d_num - d).abs() / d.abs().max(1.0);
            worst = worst.max(err);
            ok &= !r.unbounded && err <= 1e-8 && (d - (a2 - a1) / (a1 + a2)).abs() <= 1e-12 * d.abs().max(1.0);
        } else {
            unbounded += 1;
            ok &= r.unbounded && r.optimum.is_none() && g(1e6).min(g(-1e6)) < g(0.0) - 1.0;
        }
    }
    ok &= bounded > 0 && unbounded > 0;
    outcome(ok, format!("{bounded} bounded cases, max argmin error {worst:.2e}; {unbounded} unbounded cases flagged"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut ok = true;
    let mut worst_grad: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let mut worst_display: f64 = 0.0;
    let mut display_mismatches = 0;
    for _ in 0..20 {
        let b = random_benchmark(&mut rng);
        let model = b.to_model().unwrap();
        let q = weights(&b);
        let k = b.cost_coeffs;
        let (s2, ra, rp) = ([b.sigmas[0].powi(2), b.sigmas[1].powi(2)], b.agent_risk_aversions, b.principal_risk_aversion);
        // Negative β: agents answer z with a_jl = D_jl z_jl / k_jl.
        let neg_beta = |v: &[f64; 4]| {
            let z = [[v[0], v[2]], [v[1], v[3]]];
            let mut beta = 0.0;
            for j in 0..2 {
                for l in 0..2 {
                    let a = loading(j, l) * z[j][l] / k[j][l];
                    beta += q[j] * loading(j, l) * a - 0.5 * k[j][l] * a * a - 0.5 * ra[l] * s2[j] * z[j][l] * z[j][l];
                }
                let share = q[j] - z[j][0] - z[j][1];
                beta -= 0.5 * rp * s2[j] * share * share;
            }
            -beta
        };
        let oracle = mat(&nested_grid_min(neg_beta, -5.0, 5.0, 21, 1e-9));
        let report = benchmark_report(&b).unwrap();
        let cert = certify_z(&model, 0.0, &report.z_star).unwrap();
        worst_grad = worst_grad.max(cert.grad_norm);
        let dz = (report.z_star.matrix() - &oracle).amax();
        worst_oracle = worst_oracle.max(dz);
        let mismatch = report.z_star_mismatch();
        worst_display = worst_display.max(mismatch);
        if mismatch > 1e-6 {
            display_mismatches += 1;
        }
        ok &= cert.passed && cert.grad_norm <= 1e-8 && cert.stencil_excess <= 0.0 && dz <= 1e-5;
    }
    outcome(
        ok,
        format!(
            "max ‖∇β‖ {worst_grad:.1e}, max |z* − z_grid| {worst_oracle:.1e}; printed closed form differs on {display_mismatches}/20 (max {worst_display:.3}), oracle value reported"
        ),
    )
}

/// Girsanov weights are lognormal with relative variance e^{‖θ‖²T} − 1; above
/// a few units no feasible path count gives a trustworthy standard error, so
/// cases are drawn among policies whose weight variance is estimable.
const MAX_THETA_SQ_T: f64 = 2.0;

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut worst_w: f64 = 0.0;
    let mut rejected = 0;
    let mut case = 0u64;
    while case < 10 {
        let b = random_benchmark(&mut rng);
        let model = b.to_model().unwrap();
        let (contract, effort) = if case.is_multiple_of(2) {
            let sb = solve_second_best(&model).unwrap();
            (Contract::ZRep(sb.contract), sb.effort)
        } else {
            let fb = solve_first_best(&model).unwrap();
            (Contract::Linear(fb.contract), fb.effort)
        };
        if theta_sq_horizon(&model, &effort) > MAX_THETA_SQ_T {
            rejected += 1;
            assert!(rejected < 10_000, "no estimable cases");
            continue;
        }
        let policy = EffortPolicy::from_path(effort);
        // Independent streams so the combined SE is exact.
        let strong = estimate_utilities(&model, &contract, &policy, &SimConfig { n_steps: 256, n_paths: 100_000, seed: case }, Formulation::Strong)
            .unwrap();
        let weak =
            estimate_utilities(&model, &contract, &policy, &SimConfig { n_steps: 256, n_paths: 100_000, seed: 1000 + case }, Formulation::Weak)
                .unwrap();
        let agree = |s: &MCEstimate, w: &MCEstimate| {
            let z = (s.mean - w.mean).abs() / s.std_error.hypot(w.std_error);
            (s.is_valid() && w.is_valid() && z <= 3.0, z)
        };
        for (s, w) in strong.agents.iter().chain([&strong.principal]).zip(weak.agents.iter().chain([&weak.principal])) {
            let (good, z) = agree(s, w);
            ok &= good;
            worst = worst.max(z);
        }
        let zw = (weak.weight.mean - 1.0).abs() / weak.weight.std_error;
        worst_w = worst_w.max(zw);
        ok &= weak.weight.within(1.0, 3.0);
        case += 1;
    }
    outcome(
        ok,
        format!(
            "max strong/weak gap {worst:.2} combined SE; max |E[weight] − 1| {worst_w:.2} SE (10 cases with ‖θ‖²T ≤ {MAX_THETA_SQ_T}, {rejected} draws above skipped)"
        ),
    )
}

/// ∫‖Σ⁻¹b(a_t)‖² dt for a piecewise-constant effort path under constant volatility.
fn theta_sq_horizon(model: &FirmModel, effort: &[pa_contracts::model::EffortMatrix]) -> f64 {
    let x0 = DVector::zeros(model.n_agents());
    let dt = model.horizon() / effort.len() as f64;
    effort.iter().map(|a| (model.volatility().piece_inverse(0) * model.eval_drift(0.0, a, &x0)).norm_squared() * dt).sum()
}

fn general_model(gammas: [f64; 2], ra: [f64; 2], rp: f64, sigma: f64, bl: f64, k: f64, horizon: f64) -> FirmModel {
    ModelSpec {
        n_agents: 2,
        horizon,
        volatility: Volatility::scalar(2, sigma).unwrap(),
        drift: DriftSpec::Linear { loadings: DMatrix::from_element(2, 2, bl), offset: DVector::zeros(2) },
        cost: CostSpec::Quadratic { coeffs: DMatrix::from_element(2, 2, k), offset: DVector::zeros(2) },
        comparison: ComparisonSpec::Linear(LinearComparison::new(DVector::from_column_slice(&gammas)).unwrap()),
        agent_risk_aversions: DVector::from_column_slice(&ra),
        principal_risk_aversion: rp,
        reservation_utilities: DVector::from_element(2, -1.0),
        action_sets: vec![None; 2],
        growth: GrowthBounds::default(),
    }
    .build()
    .unwrap()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut ok = true;
    let (mut worst_lin, mut worst_zero): (f64, f64) = (0.0, 0.0);
    for case in 0..10 {
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let linear = case < 5;
        let gammas = if linear { [u(0.0, 1.0), u(0.0, 1.0)] } else { [0.0, 0.0] };
        let (ra, rp, sigma, bl, k, horizon) = ([u(0.5, 2.0), u(0.5, 2.0)], u(0.5, 2.0), u(0.5, 1.5), u(0.5, 1.5), u(0.5, 2.0), u(0.5, 2.0));
        let model = general_model(gammas, ra, rp, sigma, bl, k, horizon);
        let spec = GeneralFbSpec {
            b: bl,
            k,
            sigma,
            btilde: TimePath::Constant(DVector::zeros(2)),
            ktilde: TimePath::Constant(DVector::zeros(2)),
            comparison: ComparisonSpec::Linear(LinearComparison::new(DVector::from_column_slice(&gammas)).unwrap()),
        };
        // κ = R_P R̄/(R̄ + N R_P) with R̄ the harmonic mean; η = N B²/(K σ²) − κ.
        let rbar = 2.0 / (1.0 / ra[0] + 1.0 / ra[1]);
        let kappa = rp * rbar / (rbar + 2.0 * rp);
        let eta_oracle = 2.0 * bl * bl / (k * sigma * sigma) - kappa;
        ok &= (eta(&spec, &model) - eta_oracle).abs() <= 1e-14;
        let q = DVector::from_column_slice(&[1.0 + gammas[0] - gammas[1], 1.0 + gammas[1] - gammas[0]]);
        for _ in 0..4 {
            let t = u(0.0, horizon);
            let x = DVector::from_column_slice(&[u(-2.0, 2.0), u(-2.0, 2.0)]);
            let y = fb_general_value(&spec, &model, t, &x, 40).unwrap();
            let expected = q.dot(&x) + 0.5 * eta_oracle * sigma * sigma * q.norm_squared() * (horizon - t);
            let err = (y - expected).abs();
            if linear {
                worst_lin = worst_lin.max(err);
                ok &= err <= 1e-6;
            } else {
                worst_zero = worst_zero.max(err);
                ok &= err <= 1e-10;
            }
        }
    }
    outcome(ok, format!("linear Γ max error {worst_lin:.1e} (≤ 1e-6); Γ ≡ 0 max error {worst_zero:.1e} (≤ 1e-10)"))
}

fn random_general_model(rng: &mut ChaCha8Rng, n: usize) -> FirmModel {
    let loadings = DMatrix::from_fn(n, n, |j, l| if j == l { rng.random_range(0.5..1.5) } else { rng.random_range(-1.0..1.0) });
    let coeffs = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.5..2.0));
    let mut sigma = DMatrix::from_fn(n, n, |r, c| if r > c { rng.random_range(-0.3..0.3) } else { 0.0 });
    for i in 0..n {
        sigma[(i, i)] = rng.random_range(0.6..1.4);
    }
    ModelSpec {
        n_agents: n,
        horizon: rng.random_range(0.5..2.0),
        volatility: Volatility::constant(sigma).unwrap(),
        drift: DriftSpec::Linear { loadings, offset: DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5)) },
        cost: CostSpec::Quadratic { coeffs, offset: DVector::from_fn(n, |_, _| rng.random_range(0.0..0.5)) },
        comparison: ComparisonSpec::Linear(LinearComparison::new(DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0))).unwrap()),
        agent_risk_aversions: DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0)),
        principal_risk_aversion: rng.random_range(0.5..2.0),
        reservation_utilities: DVector::from_fn(n, |_, _| rng.random_range(-2.0..-0.5)),
        action_sets: vec![None; n],
        growth: GrowthBounds::default(),
    }
    .build()
    .unwrap()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut ok = true;
    let mut min_gap = f64::INFINITY;
    for case in 0..30 {
        let model = if case < 20 { random_benchmark(&mut rng).to_model().unwrap() } else { random_general_model(&mut rng, 3) };
        let fb = solve_first_best(&model).unwrap().principal_value;
        let sb = solve_second_best(&model).unwrap().principal_value;
        min_gap = min_gap.min(fb - sb);
        ok &= fb >= sb - 1e-10;
    }
    outcome(ok, format!("min U_FB − U_SB = {min_gap:.3e} over 30 draws (20 two-agent, 10 three-agent)"))
}

fn criterion_9() -> Outcome {
    let general = "[general_fb]\nb = 1.0\nk = 1.5\nsigma = 0.8\nhorizon = 1.0\ngammas = [0.6, 0.2]\ncomparison = \"smooth\"\ncomparison_scale = 0.7\nagent_risk_aversions = [1.0, 2.0]\nprincipal_risk_aversion = 0.5\ntimes = [0.0, 0.5]\n";
    let small = "[lq_benchmark]\ngammas = [0.4, 0.1]\n[simulate]\nn_paths = 5000\nn_steps = 8\nseed = 11\n[verify]\ndeviations = 8\n";
    let specs: Vec<RunSpec> = [
        (Command::FirstBest, small),
        (Command::SecondBest, small),
        (Command::GeneralFb, general),
        (Command::Simulate, small),
        (Command::Verify, small),
        (Command::Recruit, small),
        (Command::Compare, small),
        (Command::Sweep, small),
    ]
    .into_iter()
    .map(|(command, toml)| RunSpec {
        command,
        config: Config::from_toml(toml).unwrap(),
        tol: None,
        sweep: if command == Command::Sweep { vec![SweepAxis::parse("lq_benchmark.gammas.0:0:1:3").unwrap()] } else { Vec::new() },
    })
    .collect();
    let run_with = |threads: usize, spec: &RunSpec| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run(spec).unwrap().files)
    };
    let mut ok = true;
    let mut differing = Vec::new();
    for spec in &specs {
        let reference = run_with(1, spec);
        let same = run_with(1, spec) == reference && run_with(3, spec) == reference && run_with(4, spec) == reference;
        if !same {
            differing.push(spec.command.name());
        }
        ok &= same;
    }
    outcome(ok, format!("{} commands × (repeat, 1/3/4 workers) byte-identical; differing: {differing:?}", specs.len()))
}

/// `k^i = Σ_j c_ji/2 (a^{j,i})² + d/4 (a^{j,i})⁴`, growth exponent 4.
struct QuarticCost {
    c: DMatrix<f64>,
    d: f64,
}

impl CostMap for QuarticCost {
    fn eval(&self, _t: f64, a: &DMatrix<f64>, _x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(a.ncols(), |i, _| {
            (0..a.nrows()).map(|j| 0.5 * self.c[(j, i)] * a[(j, i)].powi(2) + 0.25 * self.d * a[(j, i)].powi(4)).sum()
        })
    }
    fn depends_on_x(&self) -> bool {
        false
    }
    fn is_time_constant(&self) -> bool {
        true
    }
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let lq = random_benchmark(&mut rng).to_model().unwrap();
    let quartic = {
        let mut spec = random_benchmark(&mut rng).to_spec().unwrap();
        spec.cost = CostSpec::Custom(Arc::new(QuarticCost { c: DMatrix::from_fn(2, 2, |_, _| rng.random_range(0.5..2.0)), d: 0.5 }));
        spec.growth = GrowthBounds { c: 10.0, ell: 4.0 };
        spec.build().unwrap()
    };
    let mut ok = true;
    let mut details = Vec::new();
    for (name, model, ell) in [("quadratic", &lq, 2.0), ("quartic", &quartic, 4.0)] {
        let power = 1.0 / (ell - 1.0);
        let mut sample = |lo: f64, hi: f64| -> Option<(f64, f64)> {
            let dir = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let scale = 10f64.powf(rng.random_range(lo..hi));
            let z = ZMatrix::from_vec(2, &(dir.normalize() * scale));
            let x = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let t = rng.random_range(0.0..model.horizon());
            let a = sb_best_response(model, t, &z, &x).ok()?;
            let f = sb_generator(model, t, &z, &x).ok()?;
            let zn = z.norm();
            Some((a.norm() / (1.0 + zn.powf(power)), f.norm() / (1.0 + zn * zn)))
        };
        // Fit C on ‖z‖ ∈ [1e-2, 10], then check the bound with 2C on ‖z‖ ∈ [10, 1e3].
        let mut fit = (0.0f64, 0.0f64);
        let mut failures = 0;
        for _ in 0..2500 {
            match sample(-2.0, 1.0) {
                Some((ra, rf)) if ra.is_finite() && rf.is_finite() => fit = (fit.0.max(ra), fit.1.max(rf)),
                _ => failures += 1,
            }
        }
        let mut held = (0.0f64, 0.0f64);
        for _ in 0..2500 {
            match sample(1.0, 3.0) {
                Some((ra, rf)) if ra.is_finite() && rf.is_finite() => held = (held.0.max(ra), held.1.max(rf)),
                _ => failures += 1,
            }
        }
        let good = failures == 0 && held.0 <= 2.0 * fit.0 && held.1 <= 2.0 * fit.1;
        ok &= good;
        details.push(format!(
            "{name}: C_a {:.3} (held-out {:.3}), C_f {:.3} (held-out {:.3}), {failures} solver failures",
            fit.0, held.0, fit.1, held.1
        ));
    }
    outcome(ok, details.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 10] = [
        ("first-best oracle equivalence", criterion_1, Some(Duration::from_secs(10))),
        ("participation binding", criterion_2, Some(Duration::from_secs(120))),
        ("Nash verification", criterion_3, Some(Duration::from_secs(300))),
        ("recruitment formula", criterion_4, Some(Duration::from_secs(1))),
        ("β-maximizer certificate", criterion_5, Some(Duration::from_secs(30))),
        ("weak/strong Girsanov agreement", criterion_6, None),
        ("general-Γ reduction", criterion_7, None),
        ("value ordering", criterion_8, None),
        ("determinism", criterion_9, None),
        ("generator growth", criterion_10, None),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut all = true;
    for (idx, (name, check, limit)) in criteria.iter().enumerate() {
        let number = idx + 1;
        if !filter.is_empty() && !filter.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check);
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match result {
            Ok(o) => (o.passed, o.detail),
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        if let Some(limit) = limit {
            if elapsed > *limit {
                passed = false;
                detail.push_str(&format!("; exceeded the {} s limit", limit.as_secs()));
            }
        }
        all &= passed;
        println!(
            "criterion {number:>2} {}: {} — {detail} [{:.2} s]",
            name,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
