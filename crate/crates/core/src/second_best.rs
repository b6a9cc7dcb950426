//! Second-best (moral hazard) contracting: agents' best responses to a
//! sensitivity matrix `z`, the principal's reduced objective `β`, its
//! maximiser and the resulting contract.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contract::ZRepContract;
use crate::error::{Error, Result};
use crate::model::{vec_index, CostSpec, DriftSpec, EffortMatrix, FirmModel, ZMatrix};
use crate::optimize::{fd_jacobian_of, minimize, NewtonOptions};

const FIXED_POINT_DAMPING: f64 = 0.5;
const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 500;

/// Maximises `Σ_j b^j z^{j,i} − k^i` over column `i` of `a`, the other
/// columns held fixed.
fn column_best_response(
    model: &FirmModel,
    t: f64,
    z: &ZMatrix,
    x: &DVector<f64>,
    a: &DMatrix<f64>,
    i: usize,
) -> Result<DVector<f64>> {
    let n = model.n_agents();
    let zi = z.column(i);
    let mut ei = DVector::zeros(n);
    ei[i] = 1.0;
    let drift = model.drift();
    let cost = model.cost();
    let with_col = |c: &DVector<f64>| {
        let mut m = a.clone();
        m.set_column(i, c);
        m
    };
    let idx: Vec<usize> = (0..n).map(|j| vec_index(n, j, i)).collect();
    let f = |c: &DVector<f64>| {
        let m = with_col(c);
        -(zi.dot(&drift.eval(t, &m, x)) - cost.eval(t, &m, x)[i])
    };
    let g = |c: &DVector<f64>| {
        let m = with_col(c);
        let full = -(drift.jacobian(t, &m, x).transpose() * &zi) + cost.jacobian(t, &m, x).transpose() * &ei;
        DVector::from_fn(n, |r, _| full[idx[r]])
    };
    let h = |c: &DVector<f64>| {
        let m = with_col(c);
        let full = cost.weighted_hessian(t, &m, x, &ei) - drift.weighted_hessian(t, &m, x, &zi);
        DMatrix::from_fn(n, n, |r, s| full[(idx[r], idx[s])])
    };
    let bounds = model.action_sets()[i].as_ref().map(|b| (b.lower.clone(), b.upper.clone()));
    let opts = NewtonOptions { bounds, ..Default::default() };
    match minimize(f, g, h, a.column(i).into_owned(), &opts) {
        Ok(r) => Ok(r.x),
        Err(Error::Unbounded) | Err(Error::Stagnation { .. }) => Err(Error::NoEquilibrium { t }),
        Err(e) => Err(e),
    }
}

/// Equilibrium effort for sensitivities `z` at `(t, x)`.
///
/// Linear drifts decouple the agents' problems; otherwise a damped
/// best-response iteration is run.
pub fn sb_best_response(model: &FirmModel, t: f64, z: &ZMatrix, x: &DVector<f64>) -> Result<EffortMatrix> {
    if model.drift().is_column_separable() {
        let n = model.n_agents();
        let zero = DMatrix::zeros(n, n);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a.set_column(i, &column_best_response(model, t, z, x, &zero, i)?);
        }
        return Ok(EffortMatrix::from_matrix(a));
    }
    sb_best_response_fixed_point(model, t, z, x, &EffortMatrix::zeros(model.n_agents()))
}

/// Damped best-response iteration `a ← (1−λ)a + λ BR(a)` from `start`.
pub fn sb_best_response_fixed_point(
    model: &FirmModel,
    t: f64,
    z: &ZMatrix,
    x: &DVector<f64>,
    start: &EffortMatrix,
) -> Result<EffortMatrix> {
    let n = model.n_agents();
    let mut a = start.matrix().clone();
    for _ in 0..FIXED_POINT_MAX_ITER {
        let mut br = DMatrix::zeros(n, n);
        for i in 0..n {
            br.set_column(i, &column_best_response(model, t, z, x, &a, i)?);
        }
        let next = &a * (1.0 - FIXED_POINT_DAMPING) + &br * FIXED_POINT_DAMPING;
        let step = (&next - &a).amax();
        a = next;
        if step < FIXED_POINT_TOL {
            return Ok(EffortMatrix::from_matrix(a));
        }
    }
    Err(Error::NoEquilibrium { t })
}

/// `f^i = −(R_A^i/2)‖Σᵀ z^{:,i}‖² − k^i(a*) + Σ_j b^j(a*) z^{j,i}`.
pub fn sb_generator(model: &FirmModel, t: f64, z: &ZMatrix, x: &DVector<f64>) -> Result<DVector<f64>> {
    let a = sb_best_response(model, t, z, x)?;
    generator_at(model, t, z, x, &a)
}

fn generator_at(model: &FirmModel, t: f64, z: &ZMatrix, x: &DVector<f64>, a: &EffortMatrix) -> Result<DVector<f64>> {
    let b = model.eval_drift(t, a, x);
    let k = model.eval_cost(t, a, x)?;
    let sigma = model.volatility().at(t, model.horizon());
    let ra = model.agent_risk_aversions();
    Ok(DVector::from_fn(model.n_agents(), |i, _| {
        let zi = z.column(i);
        -0.5 * ra[i] * (sigma.transpose() * &zi).norm_squared() - k[i] + b.dot(&zi)
    }))
}

/// Single-agent generator `sup_{col i} { b·z_i − k^i − (R_A^i/2)‖Σᵀz_i‖² }`
/// with the other columns of `others` frozen.
pub fn sb_agent_generator(
    model: &FirmModel,
    t: f64,
    z: &ZMatrix,
    others: &EffortMatrix,
    x: &DVector<f64>,
    i: usize,
) -> Result<f64> {
    let col = column_best_response(model, t, z, x, others.matrix(), i)?;
    let mut a = others.clone();
    a.set_column(i, &col);
    Ok(generator_at(model, t, z, x, &a)?[i])
}

fn principal_risk_term(model: &FirmModel, t: f64, z: &ZMatrix, q: &DVector<f64>) -> (f64, DMatrix<f64>) {
    let n = model.n_agents();
    let sigma = model.volatility().at(t, model.horizon());
    let cov = sigma * sigma.transpose();
    let share = q - z.matrix() * DVector::from_element(n, 1.0);
    let mut val = -0.5 * model.principal_risk_aversion() * share.dot(&(&cov * &share));
    for i in 0..n {
        let zi = z.column(i);
        val -= 0.5 * model.agent_risk_aversions()[i] * zi.dot(&(&cov * &zi));
    }
    (val, cov)
}

/// `β(t, z) = q·b(a*) − 1·k(a*) − Σ_i (R_A^i/2)‖Σᵀz^{:,i}‖² − (R_P/2)‖Σᵀ(q − z1)‖²`.
pub fn sb_beta(model: &FirmModel, t: f64, z: &ZMatrix) -> Result<f64> {
    model.require_state_free()?;
    let q = model.project_weights()?;
    let x0 = DVector::zeros(model.n_agents());
    let a = sb_best_response(model, t, z, &x0)?;
    let (risk, _) = principal_risk_term(model, t, z, &q);
    Ok(q.dot(&model.eval_drift(t, &a, &x0)) - model.eval_cost(t, &a, &x0)?.sum() + risk)
}

/// `β` and its gradient over `vec(z)`, differentiating the equilibrium
/// effort through the agents' first-order conditions.
pub fn sb_beta_gradient(model: &FirmModel, t: f64, z: &ZMatrix) -> Result<(f64, DVector<f64>)> {
    model.require_state_free()?;
    let n = model.n_agents();
    let nn = n * n;
    let q = model.project_weights()?;
    let ones = DVector::from_element(n, 1.0);
    let x0 = DVector::zeros(n);
    let a = sb_best_response(model, t, z, &x0)?;
    let am = a.matrix();
    let drift = model.drift();
    let cost = model.cost();
    let jb = drift.jacobian(t, am, &x0);
    let jk = cost.jacobian(t, am, &x0);
    let beta_a = jb.transpose() * &q - jk.transpose() * &ones;

    // Rows of the FOC system G(a, z) = 0, one block of N per agent column.
    let mut ga = DMatrix::zeros(nn, nn);
    let mut gz = DMatrix::zeros(nn, nn);
    let bounds = model.effort_bounds();
    for i in 0..n {
        let zi = z.column(i);
        let mut ei = DVector::zeros(n);
        ei[i] = 1.0;
        let hi = drift.weighted_hessian(t, am, &x0, &zi) - cost.weighted_hessian(t, am, &x0, &ei);
        for r in 0..n {
            let row = vec_index(n, r, i);
            let pinned = bounds
                .as_ref()
                .is_some_and(|(lo, hi)| am[(r, i)] <= lo[row] + 1e-12 || am[(r, i)] >= hi[row] - 1e-12);
            if pinned {
                ga[(row, row)] = 1.0;
                continue;
            }
            for c in 0..nn {
                ga[(row, c)] = hi[(row, c)];
            }
            for j in 0..n {
                gz[(row, vec_index(n, j, i))] = jb[(j, row)];
            }
        }
    }
    let y = ga
        .transpose()
        .lu()
        .solve(&beta_a)
        .ok_or(Error::NoEquilibrium { t })?;
    let mut grad = -(gz.transpose() * y);

    let (risk, cov) = principal_risk_term(model, t, z, &q);
    let share = &q - z.matrix() * &ones;
    let principal = &cov * &share * model.principal_risk_aversion();
    for i in 0..n {
        let explicit = &principal - &cov * z.column(i) * model.agent_risk_aversions()[i];
        for j in 0..n {
            grad[vec_index(n, j, i)] += explicit[j];
        }
    }
    let value = q.dot(&model.eval_drift(t, &a, &x0)) - model.eval_cost(t, &a, &x0)?.sum() + risk;
    Ok((value, grad))
}

/// Evidence that a candidate `z*` maximises `β(t, ·)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZCertificate {
    pub beta: f64,
    pub grad_norm: f64,
    /// Largest `β(z* + h·e) − β(z*)` over the `3^{N²}` stencil.
    pub stencil_excess: f64,
    pub passed: bool,
}

pub const CERT_GRAD_TOL: f64 = 1e-8;
pub const CERT_STENCIL_STEP: f64 = 1e-3;
pub const CERT_STENCIL_TOL: f64 = 1e-10;

pub fn certify_z(model: &FirmModel, t: f64, z: &ZMatrix) -> Result<ZCertificate> {
    let n = model.n_agents();
    let nn = n * n;
    let (beta, grad) = sb_beta_gradient(model, t, z)?;
    let mut excess = f64::NEG_INFINITY;
    let total = 3usize.pow(nn as u32);
    let base = z.to_vec();
    for code in 0..total {
        let mut c = code;
        let mut v = base.clone();
        let mut zero = true;
        for k in 0..nn {
            let d = (c % 3) as f64 - 1.0;
            c /= 3;
            if d != 0.0 {
                zero = false;
            }
            v[k] += d * CERT_STENCIL_STEP;
        }
        if zero {
            continue;
        }
        let b = sb_beta(model, t, &ZMatrix::from_vec(n, &v))?;
        excess = excess.max(b - beta);
    }
    let grad_norm = grad.norm();
    Ok(ZCertificate {
        beta,
        grad_norm,
        stencil_excess: excess,
        passed: grad_norm <= CERT_GRAD_TOL && excess <= CERT_STENCIL_TOL,
    })
}

fn is_linear_quadratic(model: &FirmModel) -> bool {
    matches!(model.drift(), DriftSpec::Linear { .. })
        && matches!(model.cost(), CostSpec::Quadratic { .. })
        && model.effort_bounds().is_none()
}

fn maximize_from(model: &FirmModel, t: f64, start: DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let n = model.n_agents();
    let value = |v: &DVector<f64>| match sb_beta(model, t, &ZMatrix::from_vec(n, v)) {
        Ok(b) => -b,
        Err(_) => f64::NAN,
    };
    let grad = |v: &DVector<f64>| match sb_beta_gradient(model, t, &ZMatrix::from_vec(n, v)) {
        Ok((_, g)) => -g,
        Err(_) => DVector::from_element(v.len(), f64::NAN),
    };
    let hess = |v: &DVector<f64>| fd_jacobian_of(&grad, v, 1e-5);
    let r = minimize(value, grad, hess, start, &NewtonOptions::default())?;
    Ok((r.x, -r.value))
}

/// Maximiser of `z ↦ β(t, z)`.
pub fn sb_optimal_z(model: &FirmModel, t: f64) -> Result<ZMatrix> {
    model.require_state_free()?;
    let n = model.n_agents();
    let nn = n * n;
    let mut starts = vec![DVector::zeros(nn)];
    if !is_linear_quadratic(model) {
        for k in 0..nn.min(3) {
            for s in [1.0, -1.0] {
                let mut v = DVector::zeros(nn);
                v[k] = s;
                starts.push(v);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x2b57_a2_75);
        starts.push(DVector::from_fn(nn, |_, _| rng.random_range(-1.0..1.0)));
    }
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut last_err = None;
    for s in starts {
        match maximize_from(model, t, s) {
            Ok((x, v)) => {
                if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                    best = Some((x, v));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((x, _)) => Ok(ZMatrix::from_vec(n, &x)),
        None => Err(last_err.unwrap_or(Error::Unbounded)),
    }
}

/// Everything the second-best pipeline produces. Vectors are indexed by the
/// pieces of the model's policy grid.
#[derive(Clone, Debug)]
pub struct SecondBest {
    pub z: Vec<ZMatrix>,
    pub effort: Vec<EffortMatrix>,
    /// `∫ β ds` over each piece.
    pub beta_integrals: Vec<f64>,
    pub beta_integral: f64,
    pub certificates: Vec<ZCertificate>,
    pub contract: ZRepContract,
    pub multipliers: DVector<f64>,
    pub principal_value: f64,
    pub lagrangian_value: f64,
}

impl SecondBest {
    pub fn z_constant(&self) -> Option<&ZMatrix> {
        self.z.windows(2).all(|w| w[0] == w[1]).then(|| &self.z[0])
    }
}

pub fn solve_second_best(model: &FirmModel) -> Result<SecondBest> {
    model.require_state_free()?;
    let q = model.project_weights()?;
    let n = model.n_agents();
    let grid = model.policy_grid();
    let x0 = DVector::zeros(n);
    let ra = model.agent_risk_aversions();
    let rp = model.principal_risk_aversion();
    let homogeneous = model.is_time_homogeneous();
    let tc_b = model.drift().is_time_constant();
    let tc_k = model.cost().is_time_constant();

    let mut z = Vec::with_capacity(grid.pieces);
    let mut effort = Vec::with_capacity(grid.pieces);
    let mut certificates = Vec::with_capacity(grid.pieces);
    let mut beta_integrals = Vec::with_capacity(grid.pieces);
    let mut generator = Vec::with_capacity(grid.pieces);
    let mut cache: Vec<(usize, ZMatrix, EffortMatrix, ZCertificate)> = Vec::new();
    for k in 0..grid.pieces {
        let (t0, t1) = grid.bounds(k);
        let mid = 0.5 * (t0 + t1);
        let sp = grid.sigma_piece(k);
        let sigma = model.volatility().piece(sp);
        let reuse = homogeneous
            .then(|| cache.iter().find(|(s, ..)| model.volatility().piece(*s) == sigma))
            .flatten()
            .cloned();
        let (zk, ak, cert) = match reuse {
            Some((_, zk, ak, cert)) => (zk, ak, cert),
            None => {
                let zk = sb_optimal_z(model, mid)?;
                let ak = sb_best_response(model, mid, &zk, &x0)?;
                let cert = certify_z(model, mid, &zk)?;
                cache.push((sp, zk.clone(), ak.clone(), cert.clone()));
                (zk, ak, cert)
            }
        };
        let len = t1 - t0;
        let b_int = model.piece_integral(&grid, k, tc_b, |t| model.eval_drift(t, &ak, &x0));
        let mut cost_err = None;
        let k_int = model.piece_integral(&grid, k, tc_k, |t| match model.eval_cost(t, &ak, &x0) {
            Ok(v) => v,
            Err(e) => {
                cost_err = Some(e);
                DVector::zeros(n)
            }
        });
        if let Some(e) = cost_err {
            return Err(e);
        }
        let cov = model.volatility().piece_covariance(sp);
        let ones = DVector::from_element(n, 1.0);
        let share = &q - zk.matrix() * &ones;
        let mut beta = q.dot(&b_int) - k_int.sum() - 0.5 * rp * share.dot(&(cov * &share)) * len;
        let f = DVector::from_fn(n, |i, _| {
            let zi = zk.column(i);
            let risk = 0.5 * ra[i] * zi.dot(&(cov * &zi)) * len;
            beta -= risk;
            (-risk - k_int[i] + b_int.dot(&zi)) / len
        });
        beta_integrals.push(beta);
        generator.push(f);
        z.push(zk);
        effort.push(ak);
        certificates.push(cert);
    }
    let beta_integral: f64 = beta_integrals.iter().sum();
    let ell: f64 = model
        .reservation_utilities()
        .iter()
        .zip(ra.iter())
        .map(|(u, r)| (-u).ln() / r)
        .sum();
    let log_value = -rp * ell - rp * beta_integral;
    let principal_value = -log_value.exp();
    let u = model.reservation_utilities();
    let multipliers = DVector::from_fn(n, |i, _| -rp / (ra[i] * u[i]) * log_value.exp());
    let rbar = model.harmonic_risk_aversion();
    let lagrangian_value = (rbar + n as f64 * rp) / rbar * principal_value;
    let contract = ZRepContract { y0: model.reservation_certainty_equivalents(), grid, z: z.clone(), generator };
    Ok(SecondBest {
        z,
        effort,
        beta_integrals,
        beta_integral,
        certificates,
        contract,
        multipliers,
        principal_value,
        lagrangian_value,
    })
}

pub fn sb_contract(model: &FirmModel) -> Result<ZRepContract> {
    Ok(solve_second_best(model)?.contract)
}

pub fn sb_multipliers(model: &FirmModel) -> Result<DVector<f64>> {
    Ok(solve_second_best(model)?.multipliers)
}

/// Principal's expected utility under the second-best pair.
pub fn sb_principal_value(model: &FirmModel) -> Result<f64> {
    Ok(solve_second_best(model)?.principal_value)
}

/// Value of the Lagrangian relaxation at the optimum.
pub fn sb_lagrangian_value(model: &FirmModel) -> Result<f64> {
    Ok(solve_second_best(model)?.lagrangian_value)
}

/// Lagrangian value expressed through the multipliers,
/// `−((R̄_A+NR_P)/R̄_A)·exp(κ(Σ_i log(ρ_iR_A^i/R_P)/R_A^i − ∫β))`.
pub fn sb_lagrangian_from_multipliers(model: &FirmModel, rho: &DVector<f64>, beta_integral: f64) -> f64 {
    let n = model.n_agents() as f64;
    let rp = model.principal_risk_aversion();
    let rbar = model.harmonic_risk_aversion();
    let ra = model.agent_risk_aversions();
    let kappa = model.sharing_coefficient();
    let s: f64 = (0..rho.len()).map(|i| (rho[i] * ra[i] / rp).ln() / ra[i]).sum();
    -((rbar + n * rp) / rbar) * (kappa * (s - beta_integral)).exp()
}

/// Initial agent values maximising the Lagrangian for given multipliers.
pub fn sb_initial_values(model: &FirmModel, rho: &DVector<f64>, beta_integral: f64) -> DVector<f64> {
    let rp = model.principal_risk_aversion();
    let ra = model.agent_risk_aversions();
    let kappa = model.sharing_coefficient();
    let s: f64 = (0..rho.len()).map(|j| (rho[j] * ra[j] / rp).ln() / ra[j]).sum();
    DVector::from_fn(rho.len(), |i, _| {
        (rho[i] * ra[i] / rp).ln() / ra[i] - kappa / ra[i] * s + kappa / ra[i] * beta_integral
    })
}
