//! First-best (full-information) contracting under a linear comparison map.

use nalgebra::{DMatrix, DVector};

use crate::contract::{self, Contract, LinearContract, OutputLaw};
use crate::error::{Error, Result};
use crate::model::{EffortMatrix, FirmModel, LQBenchmark};
use crate::optimize::{minimize, NewtonOptions};

/// `a ↦ −q·b(t, a) + 1·k(t, a)`, the quantity the principal minimises
/// pointwise in time.
pub fn fb_objective(model: &FirmModel, t: f64, a: &EffortMatrix) -> Result<f64> {
    let q = model.project_weights()?;
    let x0 = DVector::zeros(model.n_agents());
    Ok(-q.dot(&model.eval_drift(t, a, &x0)) + model.cost().eval(t, a.matrix(), &x0).sum())
}

/// Minimiser of [`fb_objective`] at time `t`.
pub fn fb_optimal_effort(model: &FirmModel, t: f64) -> Result<EffortMatrix> {
    model.require_state_free()?;
    let q = model.project_weights()?;
    let n = model.n_agents();
    let x0 = DVector::zeros(n);
    let ones = DVector::from_element(n, 1.0);
    let drift = model.drift();
    let cost = model.cost();
    let mat = |v: &DVector<f64>| DMatrix::from_column_slice(n, n, v.as_slice());
    let f = |v: &DVector<f64>| {
        let a = mat(v);
        -q.dot(&drift.eval(t, &a, &x0)) + cost.eval(t, &a, &x0).sum()
    };
    let g = |v: &DVector<f64>| {
        let a = mat(v);
        -drift.jacobian(t, &a, &x0).transpose() * &q + cost.jacobian(t, &a, &x0).transpose() * &ones
    };
    let h = |v: &DVector<f64>| {
        let a = mat(v);
        cost.weighted_hessian(t, &a, &x0, &ones) - drift.weighted_hessian(t, &a, &x0, &q)
    };
    let opts = NewtonOptions { bounds: model.effort_bounds(), ..Default::default() };
    let r = minimize(f, g, h, DVector::zeros(n * n), &opts)?;
    Ok(EffortMatrix::from_vec(n, &r.x))
}

/// Optimal effort on each piece of the model's policy grid.
pub fn fb_effort_path(model: &FirmModel) -> Result<Vec<EffortMatrix>> {
    let grid = model.policy_grid();
    if model.is_time_homogeneous() {
        let a = fb_optimal_effort(model, 0.0)?;
        return Ok(vec![a; grid.pieces]);
    }
    (0..grid.pieces)
        .map(|k| {
            let (a, b) = grid.bounds(k);
            fb_optimal_effort(model, 0.5 * (a + b))
        })
        .collect()
}

/// Everything the first-best pipeline produces.
#[derive(Clone, Debug)]
pub struct FirstBest {
    pub effort: Vec<EffortMatrix>,
    pub contract: LinearContract,
    pub multipliers: DVector<f64>,
    pub principal_value: f64,
    pub lagrangian_value: f64,
    /// `∫(k·1 − q·b)(a*) ds + ½κ∫‖Σᵀq‖² ds`.
    pub cost_of_effort: f64,
    pub project_weights: DVector<f64>,
}

fn sum_of_reservation_terms(model: &FirmModel) -> f64 {
    // Σ_j ln(−Ū^j)/R_A^j
    model
        .reservation_utilities()
        .iter()
        .zip(model.agent_risk_aversions().iter())
        .map(|(u, r)| (-u).ln() / r)
        .sum()
}

pub fn solve_first_best(model: &FirmModel) -> Result<FirstBest> {
    let q = model.project_weights()?;
    let effort = fb_effort_path(model)?;
    let law = OutputLaw::new(model, &effort)?;
    let kappa = model.sharing_coefficient();
    let rp = model.principal_risk_aversion();
    let m = law.total_mean();
    let cov: DMatrix<f64> = law.covariances.iter().sum();
    let k_int = law.total_cost();
    let qb = q.dot(&m);
    let qvq = q.dot(&(&cov * &q));
    let d = k_int.sum() - qb + 0.5 * kappa * qvq;

    let n = model.n_agents();
    let loadings = model.linear_comparison()?.loadings();
    let ce = model.reservation_certainty_equivalents();
    let ra = model.agent_risk_aversions();
    let mut w = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for i in 0..n {
        w.set_column(i, &(&q * (kappa / ra[i]) - loadings.column(i)));
        c[i] = ce[i] + k_int[i] - kappa / ra[i] * qb + kappa * kappa / (2.0 * ra[i]) * qvq;
    }

    let log_prod = -rp * sum_of_reservation_terms(model);
    let principal_value = -(log_prod + rp * d).exp();
    let u = model.reservation_utilities();
    let multipliers = DVector::from_fn(n, |i, _| -rp / (ra[i] * u[i]) * (log_prod + rp * d).exp());
    let rbar = model.harmonic_risk_aversion();
    let lagrangian_value = (rbar + n as f64 * rp) / rbar * principal_value;
    Ok(FirstBest {
        effort,
        contract: LinearContract::new(c, w),
        multipliers,
        principal_value,
        lagrangian_value,
        cost_of_effort: d,
        project_weights: q,
    })
}

pub fn fb_contract(model: &FirmModel) -> Result<LinearContract> {
    Ok(solve_first_best(model)?.contract)
}

pub fn fb_multipliers(model: &FirmModel) -> Result<DVector<f64>> {
    Ok(solve_first_best(model)?.multipliers)
}

/// Principal's expected utility under the first-best pair.
pub fn fb_principal_value(model: &FirmModel) -> Result<f64> {
    Ok(solve_first_best(model)?.principal_value)
}

/// Value of the Lagrangian relaxation at the optimum; equals
/// `(R̄_A + N R_P)/R̄_A` times [`fb_principal_value`].
pub fn fb_lagrangian_value(model: &FirmModel) -> Result<f64> {
    Ok(solve_first_best(model)?.lagrangian_value)
}

/// Largest relative residual of the participation equations
/// `Π_j(ρ_j R_A^j/R_P)^{κ/R_A^j} · R_P/(ρ_i R_A^i) · e^{κ D} = −Ū^i`.
pub fn fb_multiplier_residual(model: &FirmModel, rho: &DVector<f64>, cost_of_effort: f64) -> f64 {
    let rp = model.principal_risk_aversion();
    let ra = model.agent_risk_aversions();
    let kappa = model.sharing_coefficient();
    let log_prod: f64 = (0..rho.len()).map(|j| kappa / ra[j] * (rho[j] * ra[j] / rp).ln()).sum();
    (0..rho.len())
        .map(|i| {
            let lhs = (log_prod + (rp / (rho[i] * ra[i])).ln() + kappa * cost_of_effort).exp();
            let rhs = -model.reservation_utilities()[i];
            ((lhs - rhs) / rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// Closed-form expected utility of agent `i` under an affine contract and a
/// constant effort matrix.
pub fn fb_agent_value(model: &FirmModel, contract: &LinearContract, effort: &EffortMatrix, i: usize) -> Result<f64> {
    let law = OutputLaw::new(model, std::slice::from_ref(effort))?;
    contract::agent_value(model, &Contract::Linear(contract.clone()), &law, i)
}

/// Outcome of the two-agent recruitment problem.
#[derive(Clone, Debug, PartialEq)]
pub struct RecruitResult {
    pub alpha1: f64,
    pub alpha2: f64,
    /// `γ₁ − γ₂` minimising `g`, `None` when `g` is unbounded below.
    pub optimum: Option<f64>,
    pub unbounded: bool,
    pub g_value: Option<f64>,
    /// Coefficients with the alternative pairing of cost terms
    /// (`1/k¹¹ + 1/k²²` and `1/k¹² + 1/k²¹`), reported for comparison.
    pub alt_alpha1: f64,
    pub alt_alpha2: f64,
}

fn benchmark_kappa(b: &LQBenchmark) -> f64 {
    let rbar = 2.0 / (1.0 / b.agent_risk_aversions[0] + 1.0 / b.agent_risk_aversions[1]);
    let rp = b.principal_risk_aversion;
    rp * rbar / (rbar + 2.0 * rp)
}

/// `(α₁, α₂)` such that the principal's log-value is `R_P T g/2 + const`.
pub fn recruit_alphas(b: &LQBenchmark) -> (f64, f64) {
    let kappa = benchmark_kappa(b);
    let k = &b.cost_coeffs;
    (
        kappa * b.sigmas[0].powi(2) - 1.0 / k[0][0] - 1.0 / k[0][1],
        kappa * b.sigmas[1].powi(2) - 1.0 / k[1][0] - 1.0 / k[1][1],
    )
}

/// `g` as a function of `d = γ₁ − γ₂`.
pub fn recruit_objective(alpha1: f64, alpha2: f64, d: f64) -> f64 {
    (1.0 + d).powi(2) * alpha1 + (1.0 - d).powi(2) * alpha2
}

pub fn recruit_optimize(b: &LQBenchmark) -> RecruitResult {
    let (alpha1, alpha2) = recruit_alphas(b);
    let kappa = benchmark_kappa(b);
    let k = &b.cost_coeffs;
    let alt_alpha1 = kappa * b.sigmas[0].powi(2) - (1.0 / k[0][0] + 1.0 / k[1][1]);
    let alt_alpha2 = kappa * b.sigmas[1].powi(2) - (1.0 / k[0][1] + 1.0 / k[1][0]);
    let s = alpha1 + alpha2;
    let (optimum, g_value) = if s > 0.0 {
        let d = (alpha2 - alpha1) / s;
        (Some(d), Some(recruit_objective(alpha1, alpha2, d)))
    } else {
        (None, None)
    };
    RecruitResult { alpha1, alpha2, optimum, unbounded: optimum.is_none(), g_value, alt_alpha1, alt_alpha2 }
}

/// Guard used by callers that need a finite first-best pair.
pub fn require_finite(fb: &FirstBest) -> Result<()> {
    if fb.principal_value.is_finite() && fb.multipliers.iter().all(|r| r.is_finite() && *r > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidModel("first-best value is not finite for these parameters".into()))
    }
}
