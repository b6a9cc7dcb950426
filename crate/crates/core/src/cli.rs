//! Command-line front end. [`run`] is pure: it returns the files to write
//! and the report to print, so commands are testable without a process.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use crate::benchmark::benchmark_report;
use crate::config::{Config, ContractChoice, FormulationChoice};
use crate::contract::{agent_value, principal_value, Contract, LinearContract, OutputLaw};
use crate::error::{Error, Result};
use crate::first_best::{recruit_objective, recruit_optimize, solve_first_best, FirstBest};
use crate::general_fb::{eta, fb_general_point, CONVERGENCE_TOL};
use crate::model::FirmModel;
use crate::monte_carlo::{estimate_utilities, EffortPolicy, Formulation, SimConfig, UtilityEstimates};
use crate::output::{fmt_f64, Metadata, Table};
use crate::second_best::{solve_second_best, SecondBest, CERT_GRAD_TOL, CERT_STENCIL_TOL};
use crate::verification::{verify_first_best, verify_second_best, DeviationGrid, Thresholds, VerificationReport, VerifyOptions};

pub const DEFAULT_ORDERING_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// First-best effort, contract, multipliers and value.
    FirstBest,
    /// Second-best sensitivities, contract, multipliers and value.
    SecondBest,
    /// First-best value and effort on a (t, x) grid for a general comparison map.
    GeneralFb,
    /// Monte Carlo utility estimates for a contract and its effort.
    Simulate,
    /// Participation, Nash, martingale and ordering checks; exits non-zero on FAIL.
    Verify,
    /// Optimal competition gap for the two-agent benchmark.
    Recruit,
    /// Scalar outputs over a parameter grid.
    Sweep,
    /// First-best versus second-best values.
    Compare,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FirstBest => "first-best",
            Command::SecondBest => "second-best",
            Command::GeneralFb => "general-fb",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Recruit => "recruit",
            Command::Sweep => "sweep",
            Command::Compare => "compare",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pa-contracts", version, about = "Optimal contracts for a principal hiring competing agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML problem description; the default two-agent benchmark when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for CSV outputs; printed to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long = "quad-order", global = true)]
    pub quad_order: Option<usize>,
    /// Numerical tolerance: quadrature convergence for general-fb, value
    /// ordering for compare/verify/sweep.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Parameter axis `KEY:LO:HI:COUNT` with a dotted config key; repeatable.
    #[arg(long, global = true)]
    pub sweep: Vec<String>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.rsplitn(4, ':').collect();
        if parts.len() != 4 {
            return Err(Error::Config(format!("sweep axis `{s}` is not KEY:LO:HI:COUNT")));
        }
        let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Config(format!("`{v}` is not a number in `{s}`")));
        let count: usize = parts[0].parse().map_err(|_| Error::Config(format!("bad count in `{s}`")))?;
        let axis = Self { key: parts[3].to_string(), lo: num(parts[2])?, hi: num(parts[1])?, count };
        if count == 0 || !(axis.lo <= axis.hi) || !axis.lo.is_finite() || !axis.hi.is_finite() {
            return Err(Error::Config(format!("invalid range in `{s}`")));
        }
        Ok(axis)
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        (0..self.count).map(|k| self.lo + (self.hi - self.lo) * k as f64 / (self.count - 1) as f64).collect()
    }
}

/// Everything a command needs; overrides are already folded into `config`.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub command: Command,
    pub config: Config,
    pub tol: Option<f64>,
    pub sweep: Vec<SweepAxis>,
}

impl RunSpec {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => Config::from_toml(&std::fs::read_to_string(p)?)?,
            None => Config::default(),
        };
        if let Some(s) = cli.seed {
            config.simulate.seed = s;
        }
        if let Some(p) = cli.paths {
            config.simulate.n_paths = p;
        }
        if let Some(s) = cli.steps {
            config.simulate.n_steps = s;
        }
        if let Some(q) = cli.quad_order {
            match config.general_fb.as_mut() {
                Some(g) => g.quad_order = q,
                None if cli.command == Command::GeneralFb => {}
                None => {}
            }
        }
        if let Some(t) = cli.tol {
            if !(t > 0.0) {
                return Err(Error::Config("--tol must be positive".into()));
            }
        }
        let sweep = cli.sweep.iter().map(|s| SweepAxis::parse(s)).collect::<Result<Vec<_>>>()?;
        if cli.command == Command::Sweep && sweep.is_empty() {
            return Err(Error::Config("sweep needs at least one --sweep KEY:LO:HI:COUNT".into()));
        }
        Ok(Self { command: cli.command, config, tol: cli.tol, sweep })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutput {
    /// `(file name, contents)` in a fixed order.
    pub files: Vec<(String, String)>,
    pub report: String,
    pub passed: bool,
}

fn sim_config(cfg: &Config) -> SimConfig {
    SimConfig { n_steps: cfg.simulate.n_steps, n_paths: cfg.simulate.n_paths, seed: cfg.simulate.seed }
}

fn ordering_tol(spec: &RunSpec) -> f64 {
    spec.tol.unwrap_or(DEFAULT_ORDERING_TOL)
}

fn metadata(spec: &RunSpec, seed: bool, tolerances: Vec<(&str, f64)>) -> Metadata {
    Metadata {
        command: spec.command.name().into(),
        config_hash: spec.config.hash(),
        seed: seed.then_some(spec.config.simulate.seed),
        tolerances: tolerances.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    }
}

fn solver_tolerances() -> Vec<(&'static str, f64)> {
    vec![("certificate_gradient", CERT_GRAD_TOL), ("certificate_stencil", CERT_STENCIL_TOL)]
}

/// `name` for a single piece, `name[k]` (1-based) when the path has several.
fn piece_name(name: &str, k: usize, pieces: usize) -> String {
    if pieces == 1 {
        name.to_string()
    } else {
        format!("{name}[{}]", k + 1)
    }
}

pub fn run(spec: &RunSpec) -> Result<RunOutput> {
    match spec.command {
        Command::FirstBest => first_best(spec),
        Command::SecondBest => second_best(spec),
        Command::GeneralFb => general_fb(spec),
        Command::Simulate => simulate(spec),
        Command::Verify => verify(spec),
        Command::Recruit => recruit(spec),
        Command::Sweep => sweep(spec),
        Command::Compare => compare(spec),
    }
}

fn single(spec: &RunSpec, table: Table, meta: &Metadata) -> RunOutput {
    RunOutput { files: vec![(format!("{}.csv", spec.command.name()), table.render(meta))], report: String::new(), passed: true }
}

fn fb_agent_values(model: &FirmModel, fb: &FirstBest) -> Result<DVector<f64>> {
    let law = OutputLaw::new(model, &fb.effort)?;
    let c = Contract::Linear(fb.contract.clone());
    let v: Vec<f64> = (0..model.n_agents()).map(|i| agent_value(model, &c, &law, i)).collect::<Result<_>>()?;
    Ok(DVector::from_vec(v))
}

fn sb_agent_values(model: &FirmModel, sb: &SecondBest) -> Result<DVector<f64>> {
    let law = OutputLaw::new(model, &sb.effort)?;
    let c = Contract::ZRep(sb.contract.clone());
    let v: Vec<f64> = (0..model.n_agents()).map(|i| agent_value(model, &c, &law, i)).collect::<Result<_>>()?;
    Ok(DVector::from_vec(v))
}

fn first_best(spec: &RunSpec) -> Result<RunOutput> {
    let model = spec.config.firm_model()?;
    let fb = solve_first_best(&model)?;
    let mut t = Table::tidy("first-best");
    t.scalar("sharing_coefficient", model.sharing_coefficient());
    t.vector("project_weight", &fb.project_weights);
    let pieces = fb.effort.len();
    for (k, a) in fb.effort.iter().enumerate() {
        t.matrix(&piece_name("effort", k, pieces), a.matrix());
    }
    t.vector("contract_constant", &fb.contract.constants);
    t.matrix("contract_coefficient", &fb.contract.coefficients);
    t.vector("multiplier", &fb.multipliers);
    t.scalar("principal_value", fb.principal_value);
    t.scalar("lagrangian_value", fb.lagrangian_value);
    t.scalar("cost_of_effort", fb.cost_of_effort);
    t.vector("agent_value", &fb_agent_values(&model, &fb)?);
    if let Some(b) = spec.config.benchmark()? {
        let r = recruit_optimize(&b);
        let display = crate::benchmark::display_fb_effort(&b);
        t.matrix("effort_display", display.matrix());
        t.scalar("effort_display_mismatch", (fb.effort[0].matrix() - display.matrix()).amax());
        t.scalar("recruit_alpha1", r.alpha1);
        t.scalar("recruit_alpha2", r.alpha2);
    }
    Ok(single(spec, t, &metadata(spec, false, vec![])))
}

fn second_best(spec: &RunSpec) -> Result<RunOutput> {
    let model = spec.config.firm_model()?;
    let sb = solve_second_best(&model)?;
    let mut t = Table::tidy("second-best");
    let pieces = sb.z.len();
    for (k, (z, a)) in sb.z.iter().zip(&sb.effort).enumerate() {
        t.matrix(&piece_name("z", k, pieces), z.matrix());
        t.matrix(&piece_name("effort", k, pieces), a.matrix());
        t.vector(&piece_name("generator", k, pieces), &sb.contract.generator[k]);
        t.scalar(&piece_name("beta_integral", k, pieces), sb.beta_integrals[k]);
    }
    for (k, c) in sb.certificates.iter().enumerate() {
        let n = sb.certificates.len();
        t.scalar(&piece_name("certificate_grad_norm", k, n), c.grad_norm);
        t.scalar(&piece_name("certificate_stencil_excess", k, n), c.stencil_excess);
        t.flag(&piece_name("certificate_passed", k, n), c.passed);
    }
    t.vector("y0", &sb.contract.y0);
    t.vector("multiplier", &sb.multipliers);
    t.scalar("beta_total", sb.beta_integral);
    t.scalar("principal_value", sb.principal_value);
    t.scalar("lagrangian_value", sb.lagrangian_value);
    t.vector("agent_value", &sb_agent_values(&model, &sb)?);
    if let Some(b) = spec.config.benchmark()? {
        let r = benchmark_report(&b)?;
        t.matrix("z_closed_form", r.z_star_closed_form.matrix());
        t.scalar("z_closed_form_error", r.z_star_closed_form_error());
        t.matrix("z_display", r.z_star_display.matrix());
        t.scalar("z_display_mismatch", r.z_star_mismatch());
        t.matrix("effort_display", r.sb_effort_display.matrix());
        t.scalar("effort_display_mismatch", r.sb_effort_mismatch());
    }
    Ok(single(spec, t, &metadata(spec, false, solver_tolerances())))
}

fn general_fb(spec: &RunSpec) -> Result<RunOutput> {
    let section = spec.config.general_fb.as_ref().ok_or_else(|| Error::Config("general-fb needs a [general_fb] section".into()))?;
    let (model, gspec) = section.to_parts()?;
    let n = model.n_agents();
    let tol = spec.tol.unwrap_or(CONVERGENCE_TOL);
    let et = eta(&gspec, &model);
    let mut cols: Vec<String> = vec!["t".into()];
    cols.extend((1..=n).map(|j| format!("x_{j}")));
    cols.extend(["eta".into(), "value".into()]);
    cols.extend((1..=n).map(|j| format!("grad_{j}")));
    cols.extend((1..=n).map(|j| format!("effort_{j}")));
    cols.extend((1..=n).map(|j| format!("effort_alt_{j}")));
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut table = Table::new("general-fb", &col_refs);
    if section.x_count == 0 {
        return Err(Error::Config("x_count must be positive".into()));
    }
    let xs: Vec<f64> = if section.x_count == 1 {
        vec![section.x_lo]
    } else {
        (0..section.x_count)
            .map(|k| section.x_lo + (section.x_hi - section.x_lo) * k as f64 / (section.x_count - 1) as f64)
            .collect()
    };
    let factor = gspec.b / gspec.k;
    for &t in &section.times {
        let total = section.x_count.pow(n as u32);
        for flat in 0..total {
            let mut rem = flat;
            let x = DVector::from_fn(n, |_, _| {
                let v = xs[rem % section.x_count];
                rem /= section.x_count;
                v
            });
            let (y, z) = fb_general_point(&gspec, &model, t, &x, section.quad_order, tol)?;
            let mut row = vec![fmt_f64(t)];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(et));
            row.push(fmt_f64(y));
            row.extend(z.iter().map(|v| fmt_f64(*v)));
            row.extend(z.iter().map(|v| fmt_f64(factor * v)));
            row.extend(z.iter().map(|v| fmt_f64(factor * gspec.sigma * v)));
            table.row(row);
        }
    }
    let meta = metadata(spec, false, vec![("quadrature_change", tol), ("quad_order", section.quad_order as f64)]);
    Ok(single(spec, table, &meta))
}

/// Contract and the effort it is designed to implement.
pub fn contract_and_policy(model: &FirmModel, choice: ContractChoice) -> Result<(Contract, EffortPolicy)> {
    Ok(match choice {
        ContractChoice::FirstBest => {
            let fb = solve_first_best(model)?;
            (Contract::Linear(fb.contract), EffortPolicy::from_path(fb.effort))
        }
        ContractChoice::SecondBest => {
            let sb = solve_second_best(model)?;
            (Contract::ZRep(sb.contract), EffortPolicy::from_path(sb.effort))
        }
        ContractChoice::Zero => {
            let n = model.n_agents();
            (Contract::Linear(LinearContract::zero(n)), EffortPolicy::Constant(crate::model::EffortMatrix::zeros(n)))
        }
    })
}

fn push_estimates(t: &mut Table, prefix: &str, u: &UtilityEstimates) {
    for (i, e) in u.agents.iter().enumerate() {
        t.entry(&format!("{prefix}.agent_utility_mean"), Some(i), None, e.mean);
        t.entry(&format!("{prefix}.agent_utility_se"), Some(i), None, e.std_error);
    }
    t.scalar(&format!("{prefix}.principal_utility_mean"), u.principal.mean);
    t.scalar(&format!("{prefix}.principal_utility_se"), u.principal.std_error);
    t.scalar(&format!("{prefix}.weight_mean"), u.weight.mean);
    t.scalar(&format!("{prefix}.weight_se"), u.weight.std_error);
    let clipped = u.agents.iter().chain([&u.principal, &u.weight]).map(|e| e.clipped).sum::<u64>();
    t.scalar(&format!("{prefix}.clipped"), clipped as f64);
}

fn simulate(spec: &RunSpec) -> Result<RunOutput> {
    let model = spec.config.firm_model()?;
    let cfg = sim_config(&spec.config);
    let (contract, policy) = contract_and_policy(&model, spec.config.simulate.contract)?;
    let mut t = Table::tidy("simulate");
    t.scalar("n_paths", cfg.n_paths as f64);
    t.scalar("n_steps", cfg.n_steps as f64);
    let forms: &[(Formulation, &str)] = match spec.config.simulate.formulation {
        FormulationChoice::Strong => &[(Formulation::Strong, "strong")],
        FormulationChoice::Weak => &[(Formulation::Weak, "weak")],
        FormulationChoice::Both => &[(Formulation::Strong, "strong"), (Formulation::Weak, "weak")],
    };
    for (f, name) in forms {
        let u = estimate_utilities(&model, &contract, &policy, &cfg, *f)?;
        push_estimates(&mut t, name, &u);
    }
    if model.is_state_free() {
        let path = match &policy {
            EffortPolicy::Constant(a) => vec![a.clone()],
            EffortPolicy::Piecewise(p) => p.clone(),
            EffortPolicy::Feedback(_) => unreachable!("contracts come with deterministic efforts"),
        };
        let law = OutputLaw::new(&model, &path)?;
        for i in 0..model.n_agents() {
            t.entry("closed_form.agent_utility", Some(i), None, agent_value(&model, &contract, &law, i)?);
        }
        t.scalar("closed_form.principal_utility", principal_value(&model, &contract, &law)?);
    }
    Ok(single(spec, t, &metadata(spec, true, vec![])))
}

fn verify_options(spec: &RunSpec) -> VerifyOptions {
    let v = &spec.config.verify;
    VerifyOptions {
        cfg: sim_config(&spec.config),
        grid: DeviationGrid { steps: v.deviation_steps.clone(), per_agent: v.deviations, ..Default::default() },
        thresholds: Thresholds {
            gain_se: v.gain_se,
            equality_se: v.equality_se,
            ordering_tol: ordering_tol(spec),
            ..Default::default()
        },
        checkpoints: v.checkpoints.clone(),
        contract_shift: v.contract_shift,
    }
}

fn status(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn render_report(r: &VerificationReport) -> String {
    let mut s = String::new();
    let th = &r.thresholds;
    s.push_str(&format!(
        "thresholds: gain <= {} SE, equalities within {} SE, terminal identity <= {:e}, ordering tolerance {:e}\n",
        th.gain_se, th.equality_se, th.terminal_tol, th.ordering_tol
    ));
    for p in &r.participation {
        s.push_str(&format!(
            "participation agent {}: estimate {} (SE {}), reservation {}, gap {} {}\n",
            p.agent + 1,
            fmt_f64(p.estimate.mean),
            fmt_f64(p.estimate.std_error),
            fmt_f64(p.reservation),
            fmt_f64(p.gap),
            status(p.passed)
        ));
    }
    for c in &r.nash {
        s.push_str(&format!(
            "nash agent {}: {} deviations, max gain {} (SE {}), max t {} {}\n",
            c.agent + 1,
            c.n_deviations,
            fmt_f64(c.max_gain),
            fmt_f64(c.max_gain_se),
            fmt_f64(c.max_t),
            status(c.passed)
        ));
    }
    if let Some(m) = &r.martingale {
        for (k, t) in m.times.iter().enumerate() {
            let cells: Vec<String> = m.residuals[k]
                .iter()
                .zip(&m.std_errors[k])
                .map(|(r, se)| format!("{} (SE {})", fmt_f64(*r), fmt_f64(*se)))
                .collect();
            s.push_str(&format!("martingale t={}: {}\n", fmt_f64(*t), cells.join(", ")));
        }
        s.push_str(&format!("martingale terminal residual {} {}\n", fmt_f64(m.terminal_residual), status(m.passed)));
    }
    if let Some(o) = &r.ordering {
        s.push_str(&format!(
            "ordering: first best {} >= second best {} {}\n",
            fmt_f64(o.fb_value),
            fmt_f64(o.sb_value),
            status(o.holds)
        ));
    }
    for n in &r.notes {
        s.push_str(&format!("note: {n}\n"));
    }
    s.push_str(&format!("overall: {}\n", status(r.passed())));
    s
}

fn verify(spec: &RunSpec) -> Result<RunOutput> {
    let model = spec.config.firm_model()?;
    let opts = verify_options(spec);
    let report = match spec.config.verify.contract {
        ContractChoice::SecondBest => verify_second_best(&model, &opts)?,
        ContractChoice::FirstBest => verify_first_best(&model, &opts)?,
        ContractChoice::Zero => return Err(Error::Config("verify needs contract = first-best or second-best".into())),
    };
    let mut t = Table::tidy("verify");
    for p in &report.participation {
        t.entry("participation_estimate", Some(p.agent), None, p.estimate.mean);
        t.entry("participation_se", Some(p.agent), None, p.estimate.std_error);
        t.entry("participation_gap", Some(p.agent), None, p.gap);
        t.entry("participation_passed", Some(p.agent), None, p.passed as u8 as f64);
    }
    for c in &report.nash {
        t.entry("nash_max_gain", Some(c.agent), None, c.max_gain);
        t.entry("nash_max_gain_se", Some(c.agent), None, c.max_gain_se);
        t.entry("nash_max_t", Some(c.agent), None, c.max_t);
        t.entry("nash_passed", Some(c.agent), None, c.passed as u8 as f64);
    }
    if let Some(m) = &report.martingale {
        for (k, time) in m.times.iter().enumerate() {
            t.entry("martingale_time", Some(k), None, *time);
            for (i, (r, se)) in m.residuals[k].iter().zip(&m.std_errors[k]).enumerate() {
                t.entry("martingale_residual", Some(k), Some(i), *r);
                t.entry("martingale_se", Some(k), Some(i), *se);
            }
        }
        t.scalar("martingale_terminal_residual", m.terminal_residual);
        t.flag("martingale_passed", m.passed);
    }
    if let Some(o) = &report.ordering {
        t.scalar("fb_principal_value", o.fb_value);
        t.scalar("sb_principal_value", o.sb_value);
        t.flag("ordering_holds", o.holds);
    }
    t.flag("passed", report.passed());
    let th = &report.thresholds;
    let meta = metadata(
        spec,
        true,
        vec![
            ("gain_se", th.gain_se),
            ("equality_se", th.equality_se),
            ("terminal", th.terminal_tol),
            ("ordering", th.ordering_tol),
        ],
    );
    let text = render_report(&report);
    Ok(RunOutput {
        files: vec![("verify.csv".into(), t.render(&meta)), ("verify.txt".into(), text.clone())],
        report: text,
        passed: report.passed(),
    })
}

fn recruit(spec: &RunSpec) -> Result<RunOutput> {
    let b = spec.config.benchmark()?.ok_or_else(|| Error::Config("recruit needs the two-agent [lq_benchmark]".into()))?;
    let r = recruit_optimize(&b);
    let rs = &spec.config.recruit;
    if rs.d_count < 2 || !(rs.d_lo < rs.d_hi) {
        return Err(Error::Config("recruit grid needs d_lo < d_hi and d_count >= 2".into()));
    }
    let mut curve = Table::new("recruit-curve", &["gamma_diff", "g"]);
    let mut best = (f64::INFINITY, f64::NAN);
    for k in 0..rs.d_count {
        let d = rs.d_lo + (rs.d_hi - rs.d_lo) * k as f64 / (rs.d_count - 1) as f64;
        let g = recruit_objective(r.alpha1, r.alpha2, d);
        if g < best.0 {
            best = (g, d);
        }
        curve.row(vec![fmt_f64(d), fmt_f64(g)]);
    }
    let mut t = Table::tidy("recruit");
    t.scalar("alpha1", r.alpha1);
    t.scalar("alpha2", r.alpha2);
    t.scalar("alt_alpha1", r.alt_alpha1);
    t.scalar("alt_alpha2", r.alt_alpha2);
    t.flag("unbounded", r.unbounded);
    if let (Some(d), Some(g)) = (r.optimum, r.g_value) {
        t.scalar("optimum_gamma_diff", d);
        t.scalar("optimum_g", g);
    }
    t.scalar("grid_argmin_gamma_diff", best.1);
    t.scalar("grid_min_g", best.0);
    let meta = metadata(spec, false, vec![]);
    Ok(RunOutput {
        files: vec![("recruit.csv".into(), t.render(&meta)), ("recruit_curve.csv".into(), curve.render(&meta))],
        report: String::new(),
        passed: true,
    })
}

pub const SWEEP_QUANTITIES: [&str; 8] = [
    "fb_principal_value",
    "sb_principal_value",
    "fb_lagrangian_value",
    "sb_lagrangian_value",
    "sb_beta_integral",
    "recruit_alpha1",
    "recruit_alpha2",
    "recruit_optimum",
];

fn sweep_point(config: &Config, wanted: &[String]) -> Result<Vec<(String, f64)>> {
    let model = config.firm_model()?;
    let needs = |q: &str| wanted.iter().any(|w| w == q);
    let fb = if needs("fb_principal_value") || needs("fb_lagrangian_value") { Some(solve_first_best(&model)?) } else { None };
    let sb = if wanted.iter().any(|w| w.starts_with("sb_")) { Some(solve_second_best(&model)?) } else { None };
    let bench = config.benchmark()?;
    let mut out = Vec::new();
    for q in wanted {
        let v = match q.as_str() {
            "fb_principal_value" => fb.as_ref().map(|f| f.principal_value),
            "fb_lagrangian_value" => fb.as_ref().map(|f| f.lagrangian_value),
            "sb_principal_value" => sb.as_ref().map(|s| s.principal_value),
            "sb_lagrangian_value" => sb.as_ref().map(|s| s.lagrangian_value),
            "sb_beta_integral" => sb.as_ref().map(|s| s.beta_integral),
            "recruit_alpha1" => bench.as_ref().map(|b| recruit_optimize(b).alpha1),
            "recruit_alpha2" => bench.as_ref().map(|b| recruit_optimize(b).alpha2),
            "recruit_optimum" => bench.as_ref().map(|b| recruit_optimize(b).optimum.unwrap_or(f64::NAN)),
            _ => None,
        };
        if let Some(v) = v {
            out.push((q.clone(), v));
        }
    }
    Ok(out)
}

fn sweep(spec: &RunSpec) -> Result<RunOutput> {
    let wanted: Vec<String> = if spec.config.sweep.quantities.is_empty() {
        let bench = spec.config.benchmark()?.is_some();
        SWEEP_QUANTITIES.iter().filter(|q| bench || !q.starts_with("recruit")).map(|s| s.to_string()).collect()
    } else {
        spec.config.sweep.quantities.clone()
    };
    if let Some(bad) = wanted.iter().find(|q| !SWEEP_QUANTITIES.contains(&q.as_str())) {
        return Err(Error::Config(format!("unknown sweep quantity `{bad}`")));
    }
    let mut cols: Vec<&str> = spec.sweep.iter().map(|a| a.key.as_str()).collect();
    cols.extend(["quantity", "value"]);
    let mut table = Table::new("sweep", &cols);
    let axes: Vec<Vec<f64>> = spec.sweep.iter().map(|a| a.values()).collect();
    let total: usize = axes.iter().map(|v| v.len()).product();
    for flat in 0..total {
        let mut rem = flat;
        let mut point = Vec::with_capacity(axes.len());
        for v in axes.iter().rev() {
            point.push(v[rem % v.len()]);
            rem /= v.len();
        }
        point.reverse();
        let mut cfg = spec.config.clone();
        for (a, v) in spec.sweep.iter().zip(&point) {
            cfg = cfg.with_value(&a.key, *v)?;
        }
        for (q, v) in sweep_point(&cfg, &wanted)? {
            let mut row: Vec<String> = point.iter().map(|v| fmt_f64(*v)).collect();
            row.push(q);
            row.push(fmt_f64(v));
            table.row(row);
        }
    }
    Ok(single(spec, table, &metadata(spec, false, solver_tolerances())))
}

fn compare(spec: &RunSpec) -> Result<RunOutput> {
    let model = spec.config.firm_model()?;
    let fb = solve_first_best(&model)?;
    let sb = solve_second_best(&model)?;
    let tol = ordering_tol(spec);
    let mut t = Table::tidy("compare");
    t.scalar("fb_principal_value", fb.principal_value);
    t.scalar("sb_principal_value", sb.principal_value);
    t.scalar("fb_lagrangian_value", fb.lagrangian_value);
    t.scalar("sb_lagrangian_value", sb.lagrangian_value);
    // Certainty-equivalent loss from moral hazard.
    let loss = (sb.principal_value / fb.principal_value).ln() / model.principal_risk_aversion();
    t.scalar("certainty_equivalent_loss", loss);
    t.flag("ordering_holds", sb.principal_value <= fb.principal_value + tol);
    t.matrix("fb_effort", fb.effort[0].matrix());
    t.matrix("sb_effort", sb.effort[0].matrix());
    let mut meta = metadata(spec, false, solver_tolerances());
    meta.tolerances.push(("ordering".into(), tol));
    Ok(single(spec, t, &meta))
}
