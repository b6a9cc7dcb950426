//! Monte Carlo simulation of the output process and utility estimation under
//! the drifted (strong) and Girsanov-reweighted driftless (weak) formulations.
//!
//! Path `p` draws its Gaussian increments from a ChaCha8 stream keyed by
//! `(seed, p)`, paths are processed in fixed chunks and chunk statistics are
//! merged in chunk order, so results do not depend on the worker count.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::contract::Contract;
use crate::error::{Error, Result};
use crate::model::{EffortMatrix, FirmModel};

pub const CHUNK: usize = 1024;
/// Exponents above this are clipped; `exp(709)` is close to `f64::MAX`.
pub const EXP_CLIP: f64 = 709.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { n_steps: 256, n_paths: 100_000, seed: 0 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.n_paths == 0 {
            return Err(Error::Config("n_steps and n_paths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    /// Euler–Maruyama on the controlled dynamics.
    Strong,
    /// Driftless paths reweighted by the stochastic exponential of the drift.
    Weak,
}

pub type FeedbackFn = dyn Fn(f64, &DVector<f64>) -> EffortMatrix + Send + Sync;

/// Effort as a function of time and output.
#[derive(Clone)]
pub enum EffortPolicy {
    Constant(EffortMatrix),
    /// Held constant on equal pieces of `[0, T]`.
    Piecewise(Vec<EffortMatrix>),
    Feedback(Arc<FeedbackFn>),
}

impl fmt::Debug for EffortPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffortPolicy::Constant(a) => f.debug_tuple("Constant").field(a).finish(),
            EffortPolicy::Piecewise(p) => f.debug_tuple("Piecewise").field(p).finish(),
            EffortPolicy::Feedback(_) => f.write_str("Feedback(<fn>)"),
        }
    }
}

impl EffortPolicy {
    pub fn from_path(path: Vec<EffortMatrix>) -> Self {
        if path.len() == 1 || path.windows(2).all(|w| w[0] == w[1]) {
            EffortPolicy::Constant(path.into_iter().next().expect("non-empty effort path"))
        } else {
            EffortPolicy::Piecewise(path)
        }
    }

    fn pieces(&self) -> usize {
        match self {
            EffortPolicy::Piecewise(p) => p.len(),
            _ => 1,
        }
    }

    fn is_deterministic(&self) -> bool {
        !matches!(self, EffortPolicy::Feedback(_))
    }

    /// Effort on piece `k` of a deterministic policy.
    fn piece(&self, k: usize) -> &EffortMatrix {
        match self {
            EffortPolicy::Constant(a) => a,
            EffortPolicy::Piecewise(p) => &p[k],
            EffortPolicy::Feedback(_) => unreachable!("feedback policies have no pieces"),
        }
    }

    /// Effort used over step `step` starting at time `t` in state `x`.
    fn at_step(&self, step: usize, n_steps: usize, t: f64, x: &DVector<f64>) -> EffortMatrix {
        match self {
            EffortPolicy::Constant(a) => a.clone(),
            EffortPolicy::Piecewise(p) => p[step * p.len() / n_steps].clone(),
            EffortPolicy::Feedback(f) => f(t, x),
        }
    }

    /// Replaces column `i` of every piece by `column` (deterministic policies only).
    pub fn with_column(&self, i: usize, column: &DVector<f64>) -> Result<EffortPolicy> {
        let replace = |a: &EffortMatrix| {
            let mut a = a.clone();
            a.set_column(i, column);
            a
        };
        match self {
            EffortPolicy::Constant(a) => Ok(EffortPolicy::Constant(replace(a))),
            EffortPolicy::Piecewise(p) => Ok(EffortPolicy::Piecewise(p.iter().map(replace).collect())),
            EffortPolicy::Feedback(_) => Err(Error::Unsupported("column deviations need a deterministic policy".into())),
        }
    }
}

/// Monte Carlo mean with its standard error. Any clipped exponent marks the
/// estimate invalid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub clipped: u64,
}

impl MCEstimate {
    pub fn is_valid(&self) -> bool {
        self.clipped == 0 && self.mean.is_finite() && self.std_error.is_finite()
    }

    /// `|mean − target| ≤ k·SE`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

/// Utilities of one (contract, policy) scenario.
#[derive(Clone, Debug)]
pub struct UtilityEstimates {
    pub agents: Vec<MCEstimate>,
    pub principal: MCEstimate,
    /// Mean likelihood ratio; identically 1 for the strong formulation.
    pub weight: MCEstimate,
    /// Per-path differences of agent utilities against the first scenario of
    /// the batch (common random numbers).
    pub agent_differences: Vec<MCEstimate>,
}

#[derive(Clone, Copy, Debug, Default)]
struct Stat {
    n: u64,
    mean: f64,
    m2: f64,
    clipped: u64,
}

impl Stat {
    fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    fn merge(&mut self, o: &Stat) {
        if o.n == 0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64;
        self.n = n;
        self.clipped += o.clipped;
    }

    fn estimate(&self, seed: u64) -> MCEstimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        MCEstimate {
            mean: self.mean,
            std_error: (var / self.n as f64).sqrt(),
            n_paths: self.n as usize,
            seed,
            clipped: self.clipped,
        }
    }
}

/// `−exp(e)` with the exponent clipped at [`EXP_CLIP`].
fn neg_exp(e: f64, clipped: &mut u64) -> f64 {
    if e > EXP_CLIP {
        *clipped += 1;
        -EXP_CLIP.exp()
    } else {
        -e.exp()
    }
}

fn clipped_exp(e: f64, clipped: &mut u64) -> f64 {
    -neg_exp(e, clipped)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn contract_pieces(contract: &Contract) -> usize {
    match contract {
        Contract::Linear(_) => 1,
        Contract::ZRep(c) => c.grid.pieces,
    }
}

pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Terminal quantities of one path under one scenario.
struct Outcome {
    x_t: DVector<f64>,
    /// Output increments over each contract piece.
    piece_dx: Vec<DVector<f64>>,
    cost: DVector<f64>,
    log_weight: f64,
}

/// Per-block data of a deterministic policy when drift and cost are free of
/// state and time: increments over a block are exactly Gaussian.
struct FastScenario {
    drift: Vec<DVector<f64>>,
    theta: Vec<DVector<f64>>,
    half_theta_sq: f64,
    cost: DVector<f64>,
}

struct Plan<'a> {
    model: &'a FirmModel,
    n: usize,
    n_steps: usize,
    dt: f64,
    /// Number of blocks on which every piecewise input is constant.
    blocks: usize,
    fast: Option<Vec<FastScenario>>,
    scenarios: &'a [(&'a Contract, &'a EffortPolicy)],
    formulation: Formulation,
}

impl<'a> Plan<'a> {
    fn new(
        model: &'a FirmModel,
        scenarios: &'a [(&'a Contract, &'a EffortPolicy)],
        cfg: &SimConfig,
        formulation: Formulation,
    ) -> Result<Self> {
        cfg.validate()?;
        if scenarios.is_empty() {
            return Err(Error::Config("no scenarios to simulate".into()));
        }
        let n = model.n_agents();
        let mut blocks = model.volatility().n_pieces();
        for (c, p) in scenarios {
            blocks = lcm(blocks, lcm(contract_pieces(c), p.pieces()));
            if let Contract::ZRep(z) = c {
                if (z.grid.horizon - model.horizon()).abs() > 1e-12 {
                    return Err(Error::InvalidModel("contract horizon differs from the model".into()));
                }
            }
            if let EffortPolicy::Piecewise(v) = p {
                if v.is_empty() {
                    return Err(Error::Config("empty effort path".into()));
                }
            }
        }
        if !cfg.n_steps.is_multiple_of(blocks) {
            return Err(Error::Config(format!(
                "n_steps = {} must be a multiple of {blocks} so that piece boundaries fall on the time grid",
                cfg.n_steps
            )));
        }
        let dt = model.horizon() / cfg.n_steps as f64;
        let mut plan = Plan { model, n, n_steps: cfg.n_steps, dt, blocks, fast: None, scenarios, formulation };
        let eligible = model.is_state_free()
            && model.is_time_homogeneous()
            && scenarios.iter().all(|(_, p)| p.is_deterministic());
        if eligible {
            plan.fast = Some(scenarios.iter().map(|(_, p)| plan.fast_scenario(p)).collect::<Result<_>>()?);
        }
        Ok(plan)
    }

    fn block_len(&self) -> f64 {
        self.model.horizon() / self.blocks as f64
    }

    fn sigma_piece_of_block(&self, b: usize) -> usize {
        b * self.model.volatility().n_pieces() / self.blocks
    }

    fn fast_scenario(&self, policy: &EffortPolicy) -> Result<FastScenario> {
        let x0 = DVector::zeros(self.n);
        let h = self.block_len();
        let mut drift = Vec::with_capacity(self.blocks);
        let mut theta = Vec::with_capacity(self.blocks);
        let mut half_theta_sq = 0.0;
        let mut cost = DVector::zeros(self.n);
        for b in 0..self.blocks {
            let a = policy.piece(b * policy.pieces() / self.blocks);
            let d = self.model.eval_drift(0.0, a, &x0);
            if !d.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { path: 0 });
            }
            cost += self.model.eval_cost(0.0, a, &x0)? * h;
            let th = self.model.volatility().piece_inverse(self.sigma_piece_of_block(b)) * &d;
            half_theta_sq += 0.5 * th.norm_squared() * h;
            drift.push(d);
            theta.push(th);
        }
        Ok(FastScenario { drift, theta, half_theta_sq, cost })
    }

    fn noise_len(&self) -> usize {
        let per = if self.fast.is_some() { self.blocks } else { self.n_steps };
        per * self.n
    }

    /// Outcomes of every scenario on path `p` given its standard normals.
    fn outcomes(&self, p: usize, z: &[f64]) -> Result<Vec<Outcome>> {
        match &self.fast {
            Some(fast) => Ok(self.fast_outcomes(fast, z)),
            None => self.scenarios.iter().map(|(c, pol)| self.general_outcome(p, c, pol, z)).collect(),
        }
    }

    fn fast_outcomes(&self, fast: &[FastScenario], z: &[f64]) -> Vec<Outcome> {
        let n = self.n;
        let h = self.block_len();
        let sq = h.sqrt();
        let vol = self.model.volatility();
        let dw: Vec<DVector<f64>> = (0..self.blocks).map(|b| DVector::from_fn(n, |r, _| sq * z[b * n + r])).collect();
        let noise: Vec<DVector<f64>> =
            dw.iter().enumerate().map(|(b, w)| vol.piece(self.sigma_piece_of_block(b)) * w).collect();
        fast.iter()
            .zip(self.scenarios)
            .map(|(f, (c, _))| {
                let pieces = contract_pieces(c);
                let mut piece_dx = vec![DVector::zeros(n); pieces];
                let mut x_t = DVector::zeros(n);
                let mut log_weight = 0.0;
                for b in 0..self.blocks {
                    let dx = match self.formulation {
                        Formulation::Strong => &f.drift[b] * h + &noise[b],
                        Formulation::Weak => {
                            log_weight += f.theta[b].dot(&dw[b]);
                            noise[b].clone()
                        }
                    };
                    x_t += &dx;
                    piece_dx[b * pieces / self.blocks] += dx;
                }
                if self.formulation == Formulation::Weak {
                    log_weight -= f.half_theta_sq;
                }
                Outcome { x_t, piece_dx, cost: f.cost.clone(), log_weight }
            })
            .collect()
    }

    fn general_outcome(&self, p: usize, contract: &Contract, policy: &EffortPolicy, z: &[f64]) -> Result<Outcome> {
        let n = self.n;
        let sq = self.dt.sqrt();
        let vol = self.model.volatility();
        let pieces = contract_pieces(contract);
        let mut piece_dx = vec![DVector::zeros(n); pieces];
        let mut x = DVector::zeros(n);
        let mut cost = DVector::zeros(n);
        let mut log_weight = 0.0;
        for k in 0..self.n_steps {
            let t = k as f64 * self.dt;
            let a = policy.at_step(k, self.n_steps, t, &x);
            let b = self.model.eval_drift(t, &a, &x);
            cost += self.model.eval_cost(t, &a, &x)? * self.dt;
            let s = vol.piece_for_step(k, self.n_steps);
            let dw = DVector::from_fn(n, |r, _| sq * z[k * n + r]);
            let mut dx = vol.piece(s) * &dw;
            match self.formulation {
                Formulation::Strong => dx += &b * self.dt,
                Formulation::Weak => {
                    let th = vol.piece_inverse(s) * &b;
                    log_weight += th.dot(&dw) - 0.5 * th.norm_squared() * self.dt;
                }
            }
            if !dx.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { path: p });
            }
            x += &dx;
            piece_dx[k * pieces / self.n_steps] += dx;
        }
        Ok(Outcome { x_t: x, piece_dx, cost, log_weight })
    }
}

/// Agent and principal payments of a contract given a path outcome.
fn payments(model: &FirmModel, contract: &Contract, o: &Outcome) -> DVector<f64> {
    match contract {
        Contract::Linear(c) => c.payments(&o.x_t),
        Contract::ZRep(c) => c.payments(model, &o.x_t, &o.piece_dx),
    }
}

#[derive(Clone, Default)]
struct ScenarioStats {
    agents: Vec<Stat>,
    principal: Stat,
    weight: Stat,
    diffs: Vec<Stat>,
}

impl ScenarioStats {
    fn new(n: usize) -> Self {
        Self { agents: vec![Stat::default(); n], diffs: vec![Stat::default(); n], ..Default::default() }
    }

    fn merge(&mut self, o: &ScenarioStats) {
        for (a, b) in self.agents.iter_mut().zip(&o.agents) {
            a.merge(b);
        }
        for (a, b) in self.diffs.iter_mut().zip(&o.diffs) {
            a.merge(b);
        }
        self.principal.merge(&o.principal);
        self.weight.merge(&o.weight);
    }
}

fn run_chunk(plan: &Plan, seed: u64, start: usize, end: usize) -> Result<Vec<ScenarioStats>> {
    let model = plan.model;
    let n = plan.n;
    let ra = model.agent_risk_aversions();
    let rp = model.principal_risk_aversion();
    let mut stats = vec![ScenarioStats::new(n); plan.scenarios.len()];
    let mut z = vec![0.0; plan.noise_len()];
    let mut base = vec![0.0; n];
    for p in start..end {
        let mut rng = path_rng(seed, p);
        fill_normals(&mut rng, &mut z);
        let outcomes = plan.outcomes(p, &z)?;
        for (s, (o, (contract, _))) in outcomes.iter().zip(plan.scenarios).enumerate() {
            if !o.x_t.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { path: p });
            }
            let xi = payments(model, contract, o);
            let gamma = model.eval_comparison(&o.x_t);
            let st = &mut stats[s];
            for i in 0..n {
                let e = -ra[i] * (xi[i] + gamma[i] - o.cost[i]) + o.log_weight;
                let u = neg_exp(e, &mut st.agents[i].clipped);
                st.agents[i].push(u);
                if s == 0 {
                    base[i] = u;
                }
                st.diffs[i].push(u - base[i]);
            }
            let e = -rp * (&o.x_t - &xi).sum() + o.log_weight;
            let u = neg_exp(e, &mut st.principal.clipped);
            st.principal.push(u);
            let w = clipped_exp(o.log_weight, &mut st.weight.clipped);
            st.weight.push(w);
        }
    }
    Ok(stats)
}

/// Estimates every scenario on the same simulated noise.
pub fn estimate_batch(
    model: &FirmModel,
    scenarios: &[(&Contract, &EffortPolicy)],
    cfg: &SimConfig,
    formulation: Formulation,
) -> Result<Vec<UtilityEstimates>> {
    let plan = Plan::new(model, scenarios, cfg, formulation)?;
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);
    let chunks: Vec<Result<Vec<ScenarioStats>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| run_chunk(&plan, cfg.seed, c * CHUNK, ((c + 1) * CHUNK).min(cfg.n_paths)))
        .collect();
    let mut total = vec![ScenarioStats::new(model.n_agents()); scenarios.len()];
    for chunk in chunks {
        for (t, s) in total.iter_mut().zip(chunk?.iter()) {
            t.merge(s);
        }
    }
    Ok(total
        .into_iter()
        .map(|s| UtilityEstimates {
            agents: s.agents.iter().map(|a| a.estimate(cfg.seed)).collect(),
            principal: s.principal.estimate(cfg.seed),
            weight: s.weight.estimate(cfg.seed),
            agent_differences: s.diffs.iter().map(|a| a.estimate(cfg.seed)).collect(),
        })
        .collect())
}

pub fn estimate_utilities(
    model: &FirmModel,
    contract: &Contract,
    policy: &EffortPolicy,
    cfg: &SimConfig,
    formulation: Formulation,
) -> Result<UtilityEstimates> {
    Ok(estimate_batch(model, &[(contract, policy)], cfg, formulation)?.remove(0))
}

/// `E[−exp(−R_A^i(ξ^i + Γ_i(X_T) − ∫k^i))]` under the drifted dynamics.
pub fn estimate_agent_utility(
    model: &FirmModel,
    contract: &Contract,
    policy: &EffortPolicy,
    cfg: &SimConfig,
    i: usize,
) -> Result<MCEstimate> {
    if i >= model.n_agents() {
        return Err(Error::Config(format!("agent index {i} out of range")));
    }
    Ok(estimate_utilities(model, contract, policy, cfg, Formulation::Strong)?.agents[i])
}

/// `E[−exp(−R_P (X_T − ξ)·1)]` under the drifted dynamics.
pub fn estimate_principal_utility(
    model: &FirmModel,
    contract: &Contract,
    policy: &EffortPolicy,
    cfg: &SimConfig,
) -> Result<MCEstimate> {
    Ok(estimate_utilities(model, contract, policy, cfg, Formulation::Strong)?.principal)
}

/// Stored trajectories on the uniform Euler grid.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    /// Per path, `N × (n_steps + 1)` with `X_0 = 0`.
    pub states: Vec<DMatrix<f64>>,
    /// Per path, Brownian increments `N × n_steps`.
    pub increments: Vec<DMatrix<f64>>,
    /// Per path, `∫ k ds` per agent.
    pub costs: Vec<DVector<f64>>,
    pub seed: u64,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.states.len()
    }

    pub fn terminal(&self, p: usize) -> DVector<f64> {
        let s = &self.states[p];
        s.column(s.ncols() - 1).into_owned()
    }
}

fn simulate(model: &FirmModel, policy: &EffortPolicy, cfg: &SimConfig, drifted: bool) -> Result<PathEnsemble> {
    cfg.validate()?;
    if !cfg.n_steps.is_multiple_of(lcm(model.volatility().n_pieces(), policy.pieces())) {
        return Err(Error::Config("n_steps must be a multiple of the policy and volatility pieces".into()));
    }
    let n = model.n_agents();
    let dt = model.horizon() / cfg.n_steps as f64;
    let sq = dt.sqrt();
    let vol = model.volatility();
    let paths: Vec<Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, p);
            let mut z = vec![0.0; n * cfg.n_steps];
            fill_normals(&mut rng, &mut z);
            let mut states = DMatrix::zeros(n, cfg.n_steps + 1);
            let dw = DMatrix::from_fn(n, cfg.n_steps, |r, k| sq * z[k * n + r]);
            let mut cost = DVector::zeros(n);
            let mut x = DVector::zeros(n);
            for k in 0..cfg.n_steps {
                let t = k as f64 * dt;
                let a = policy.at_step(k, cfg.n_steps, t, &x);
                cost += model.eval_cost(t, &a, &x)? * dt;
                let mut dx = vol.piece(vol.piece_for_step(k, cfg.n_steps)) * dw.column(k);
                if drifted {
                    dx += model.eval_drift(t, &a, &x) * dt;
                }
                x += dx;
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite { path: p });
                }
                states.set_column(k + 1, &x);
            }
            Ok((states, dw, cost))
        })
        .collect();
    let mut ens = PathEnsemble {
        times: (0..=cfg.n_steps).map(|k| k as f64 * dt).collect(),
        states: Vec::with_capacity(cfg.n_paths),
        increments: Vec::with_capacity(cfg.n_paths),
        costs: Vec::with_capacity(cfg.n_paths),
        seed: cfg.seed,
    };
    for r in paths {
        let (s, w, c) = r?;
        ens.states.push(s);
        ens.increments.push(w);
        ens.costs.push(c);
    }
    Ok(ens)
}

/// Euler–Maruyama trajectories of `dX = b dt + Σ dW` under `policy`.
pub fn simulate_paths(model: &FirmModel, policy: &EffortPolicy, cfg: &SimConfig) -> Result<PathEnsemble> {
    simulate(model, policy, cfg, true)
}

/// Trajectories of `dX = Σ dW`; costs are those of `policy` along them.
pub fn simulate_driftless_paths(model: &FirmModel, policy: &EffortPolicy, cfg: &SimConfig) -> Result<PathEnsemble> {
    simulate(model, policy, cfg, false)
}

/// Discretised stochastic exponential `exp(Σ θ_k·ΔW_k − ½‖θ_k‖²Δt)`,
/// `θ = Σ⁻¹ b`, along driftless path `p`.
pub fn girsanov_log_weight(model: &FirmModel, policy: &EffortPolicy, ens: &PathEnsemble, p: usize) -> Result<f64> {
    let n_steps = ens.times.len() - 1;
    let dt = model.horizon() / n_steps as f64;
    let vol = model.volatility();
    let mut lw = 0.0;
    for k in 0..n_steps {
        let t = ens.times[k];
        let x = ens.states[p].column(k).into_owned();
        let a = policy.at_step(k, n_steps, t, &x);
        let th = vol.piece_inverse(vol.piece_for_step(k, n_steps)) * model.eval_drift(t, &a, &x);
        lw += th.dot(&ens.increments[p].column(k)) - 0.5 * th.norm_squared() * dt;
    }
    if !lw.is_finite() {
        return Err(Error::NonFinite { path: p });
    }
    Ok(lw)
}

pub fn girsanov_weight(model: &FirmModel, policy: &EffortPolicy, ens: &PathEnsemble, p: usize) -> Result<f64> {
    Ok(girsanov_log_weight(model, policy, ens, p)?.exp())
}

/// Sample of `M_t^i = −exp(−R_A^i(Y_t^i − ∫_0^t k^i))` where
/// `Y_t = Y₀ − ∫f + ∫zᵀdX` is the value process of a Z-representation.
#[derive(Clone, Debug)]
pub struct ValueProcessSample {
    pub times: Vec<f64>,
    /// `[checkpoint][agent]`.
    pub estimates: Vec<Vec<MCEstimate>>,
    pub initial: DVector<f64>,
    /// `max |Y_T − ξ − Γ(X_T)|` over paths and agents.
    pub terminal_residual: f64,
}

#[derive(Clone)]
struct ValueChunk {
    stats: Vec<Vec<Stat>>,
    residual: f64,
}

/// Simulates the value processes of `contract` under `policy` on the Euler
/// grid; checkpoints are rounded to the nearest grid time.
pub fn simulate_value_process(
    model: &FirmModel,
    contract: &crate::contract::ZRepContract,
    policy: &EffortPolicy,
    cfg: &SimConfig,
    checkpoints: &[f64],
) -> Result<ValueProcessSample> {
    let wrapped = Contract::ZRep(contract.clone());
    let scen = [(&wrapped, policy)];
    let mut plan = Plan::new(model, &scen, cfg, Formulation::Strong)?;
    plan.fast = None;
    let n = model.n_agents();
    let ra = model.agent_risk_aversions().clone();
    let horizon = model.horizon();
    let steps: Vec<usize> = checkpoints
        .iter()
        .map(|t| {
            if !(0.0..=horizon).contains(t) {
                Err(Error::Config(format!("checkpoint {t} outside [0, T]")))
            } else {
                Ok((t / horizon * cfg.n_steps as f64).round() as usize)
            }
        })
        .collect::<Result<_>>()?;
    let pieces = contract.grid.pieces;
    let vol = model.volatility();
    let run = |start: usize, end: usize| -> Result<ValueChunk> {
        let mut stats = vec![vec![Stat::default(); n]; steps.len()];
        let mut residual: f64 = 0.0;
        let mut z = vec![0.0; plan.noise_len()];
        let sq = plan.dt.sqrt();
        for p in start..end {
            let mut rng = path_rng(cfg.seed, p);
            fill_normals(&mut rng, &mut z);
            let mut x = DVector::zeros(n);
            let mut y = contract.y0.clone();
            let mut cost = DVector::zeros(n);
            let mut piece_dx = vec![DVector::zeros(n); pieces];
            let record = |k: usize, y: &DVector<f64>, cost: &DVector<f64>, stats: &mut Vec<Vec<Stat>>| {
                for (c, s) in steps.iter().enumerate() {
                    if *s == k {
                        for i in 0..n {
                            let st = &mut stats[c][i];
                            let v = neg_exp(-ra[i] * (y[i] - cost[i]), &mut st.clipped);
                            st.push(v);
                        }
                    }
                }
            };
            record(0, &y, &cost, &mut stats);
            for k in 0..cfg.n_steps {
                let t = k as f64 * plan.dt;
                let a = policy.at_step(k, cfg.n_steps, t, &x);
                let b = model.eval_drift(t, &a, &x);
                cost += model.eval_cost(t, &a, &x)? * plan.dt;
                let dw = DVector::from_fn(n, |r, _| sq * z[k * n + r]);
                let dx = vol.piece(vol.piece_for_step(k, cfg.n_steps)) * dw + b * plan.dt;
                let cp = k * pieces / cfg.n_steps;
                let zk = contract.z[cp].matrix();
                y += zk.transpose() * &dx - &contract.generator[cp] * plan.dt;
                x += &dx;
                piece_dx[cp] += dx;
                if !y.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite { path: p });
                }
                record(k + 1, &y, &cost, &mut stats);
            }
            let xi = contract.payments(model, &x, &piece_dx);
            let terminal = xi + model.eval_comparison(&x);
            residual = residual.max((&y - terminal).amax());
        }
        Ok(ValueChunk { stats, residual })
    };
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);
    let chunks: Vec<Result<ValueChunk>> =
        (0..n_chunks).into_par_iter().map(|c| run(c * CHUNK, ((c + 1) * CHUNK).min(cfg.n_paths))).collect();
    let mut stats = vec![vec![Stat::default(); n]; steps.len()];
    let mut residual: f64 = 0.0;
    for ch in chunks {
        let ch = ch?;
        residual = residual.max(ch.residual);
        for (a, b) in stats.iter_mut().zip(&ch.stats) {
            for (s, t) in a.iter_mut().zip(b) {
                s.merge(t);
            }
        }
    }
    let initial = DVector::from_fn(n, |i, _| -(-ra[i] * contract.y0[i]).exp());
    Ok(ValueProcessSample {
        times: steps.iter().map(|s| *s as f64 * plan.dt).collect(),
        estimates: stats.iter().map(|row| row.iter().map(|s| s.estimate(cfg.seed)).collect()).collect(),
        initial,
        terminal_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{agent_value, principal_value, LinearContract, OutputLaw};
    use crate::model::{DriftMap, LQBenchmark, ModelSpec};

    fn cfg(paths: usize, steps: usize) -> SimConfig {
        SimConfig { n_steps: steps, n_paths: paths, seed: 7 }
    }

    #[test]
    fn zero_contract_zero_effort_gives_minus_one() {
        let m = LQBenchmark::default().to_model().unwrap();
        let c = Contract::Linear(LinearContract::zero(2));
        let u = estimate_utilities(&m, &c, &EffortPolicy::Constant(EffortMatrix::zeros(2)), &cfg(2000, 16), Formulation::Strong)
            .unwrap();
        for a in &u.agents {
            assert!((a.mean + 1.0).abs() < 1e-15 && a.std_error < 1e-15);
        }
    }

    #[test]
    fn full_pledge_principal_payoff_is_exactly_minus_one() {
        let m = LQBenchmark { gammas: [0.5, 0.2], ..Default::default() }.to_model().unwrap();
        let c = Contract::Linear(LinearContract::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4])));
        let u = estimate_principal_utility(&m, &c, &EffortPolicy::Constant(EffortMatrix::zeros(2)), &cfg(3000, 8)).unwrap();
        assert!((u.mean + 1.0).abs() < 1e-12 && u.std_error < 1e-12);
    }

    #[test]
    fn random_affine_contract_matches_closed_form() {
        let b = LQBenchmark { gammas: [0.3, 0.1], sigmas: [0.7, 1.1], ..Default::default() };
        let m = b.to_model().unwrap();
        let a = EffortMatrix::from_rows(&[&[0.4, -0.2], &[0.1, 0.6]]);
        let c = Contract::Linear(LinearContract::new(
            DVector::from_column_slice(&[0.2, -0.1]),
            DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4]),
        ));
        let law = OutputLaw::new(&m, std::slice::from_ref(&a)).unwrap();
        let pol = EffortPolicy::Constant(a);
        for f in [Formulation::Strong, Formulation::Weak] {
            let u = estimate_utilities(&m, &c, &pol, &cfg(40_000, 32), f).unwrap();
            for i in 0..2 {
                assert!(u.agents[i].within(agent_value(&m, &c, &law, i).unwrap(), 4.0), "{f:?} agent {i}");
            }
            assert!(u.principal.within(principal_value(&m, &c, &law).unwrap(), 4.0));
            assert!(u.weight.within(1.0, 4.0) || f == Formulation::Strong);
        }
    }

    #[test]
    fn general_and_block_branches_agree_in_law() {
        // A feedback policy that ignores the state forces per-step simulation.
        let m = LQBenchmark { gammas: [0.2, 0.0], ..Default::default() }.to_model().unwrap();
        let a = EffortMatrix::from_rows(&[&[0.5, 0.1], &[0.0, 0.3]]);
        let c = Contract::Linear(LinearContract::new(DVector::zeros(2), DMatrix::from_element(2, 2, 0.25)));
        let fixed = a.clone();
        let fb = EffortPolicy::Feedback(Arc::new(move |_, _| fixed.clone()));
        let fast = estimate_utilities(&m, &c, &EffortPolicy::Constant(a), &cfg(20_000, 16), Formulation::Strong).unwrap();
        let slow = estimate_utilities(&m, &c, &fb, &cfg(20_000, 16), Formulation::Strong).unwrap();
        for i in 0..2 {
            let se = (fast.agents[i].std_error.powi(2) + slow.agents[i].std_error.powi(2)).sqrt();
            assert!((fast.agents[i].mean - slow.agents[i].mean).abs() < 4.0 * se);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let m = LQBenchmark::default().to_model().unwrap();
        let c = Contract::Linear(LinearContract::new(DVector::zeros(2), DMatrix::from_element(2, 2, 0.5)));
        let pol = EffortPolicy::Constant(EffortMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_utilities(&m, &c, &pol, &cfg(5000, 8), Formulation::Weak).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.agents, b.agents);
        assert_eq!(a.principal, b.principal);
    }

    #[test]
    fn driftless_sample_moments() {
        let m = LQBenchmark { sigmas: [0.5, 2.0], horizon: 2.0, ..Default::default() }.to_model().unwrap();
        let pol = EffortPolicy::Constant(EffortMatrix::zeros(2));
        let ens = simulate_paths(&m, &pol, &cfg(4000, 8)).unwrap();
        let n = ens.n_paths() as f64;
        let mean1 = (0..ens.n_paths()).map(|p| ens.terminal(p)[1]).sum::<f64>() / n;
        let var1 = (0..ens.n_paths()).map(|p| ens.terminal(p)[1].powi(2)).sum::<f64>() / n;
        assert!(mean1.abs() < 4.0 * (8.0 / n).sqrt());
        assert!((var1 - 8.0).abs() < 4.0 * 8.0 * (2.0 / n).sqrt());
        assert!((0..ens.n_paths()).all(|p| girsanov_weight(&m, &pol, &ens, p).unwrap() == 1.0));
    }

    #[test]
    fn constant_drift_log_weight_has_exact_mean() {
        let m = LQBenchmark { sigmas: [0.5, 1.0], ..Default::default() }.to_model().unwrap();
        let pol = EffortPolicy::Constant(EffortMatrix::from_rows(&[&[0.4, 0.0], &[0.0, 0.3]]));
        let ens = simulate_driftless_paths(&m, &pol, &cfg(4000, 4)).unwrap();
        // θ = Σ⁻¹b = (0.8, 0.3); log-weight ~ N(−½‖θ‖², ‖θ‖²).
        let th2 = 0.64 + 0.09;
        let n = ens.n_paths() as f64;
        let mean = (0..ens.n_paths()).map(|p| girsanov_log_weight(&m, &pol, &ens, p).unwrap()).sum::<f64>() / n;
        assert!((mean + 0.5 * th2).abs() < 4.0 * (th2 / n).sqrt());
    }

    #[test]
    fn clipping_marks_estimate_invalid() {
        let m = LQBenchmark::default().to_model().unwrap();
        let c = Contract::Linear(LinearContract::new(DVector::from_element(2, -1000.0), DMatrix::zeros(2, 2)));
        let u = estimate_utilities(&m, &c, &EffortPolicy::Constant(EffortMatrix::zeros(2)), &cfg(10, 4), Formulation::Strong)
            .unwrap();
        assert!(!u.agents[0].is_valid() && u.agents[0].clipped == 10);
    }

    #[test]
    fn unaligned_grid_is_rejected() {
        let m = LQBenchmark::default().to_model().unwrap();
        let c = Contract::Linear(LinearContract::zero(2));
        let pol = EffortPolicy::Piecewise(vec![EffortMatrix::zeros(2); 3]);
        assert!(matches!(estimate_utilities(&m, &c, &pol, &cfg(10, 16), Formulation::Strong), Err(Error::Config(_))));
    }

    struct Exploding;
    impl DriftMap for Exploding {
        fn eval(&self, _t: f64, _a: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
            x.map(|v| 1e200 * (1.0 + v.abs()))
        }
    }

    #[test]
    fn non_finite_drift_reports_path() {
        let mut spec: ModelSpec = LQBenchmark::default().to_spec().unwrap();
        spec.drift = crate::model::DriftSpec::Custom(Arc::new(Exploding));
        spec.growth.c = f64::INFINITY;
        let m = spec.build().unwrap();
        let r = simulate_paths(&m, &EffortPolicy::Constant(EffortMatrix::zeros(2)), &cfg(3, 64));
        assert!(matches!(r, Err(Error::NonFinite { path: 0 })));
    }
}
