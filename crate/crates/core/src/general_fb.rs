//! First-best value and effort for a general comparison map when drift and
//! cost are `b^i = B Σ_l a^{i,l} + b̃^i(t)`, `k^i = (K/2)‖a^{:,i}‖² + k̃^i(t)`
//! and `Σ = σ I`. The value is a log-Gaussian integral evaluated by tensor
//! Gauss–Hermite quadrature.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ComparisonSpec, EffortMatrix, FirmModel};
use crate::quadrature::{for_each_tensor_node, standard_normal_rule};

/// Below this `|η|`, `(1/η) log E[e^{ηS}]` is replaced by its limit `E[S]`.
pub const ETA_DEGENERACY: f64 = 1e-8;
pub const DEFAULT_ORDER: usize = 40;
pub const MAX_DIM: usize = 3;
/// Relative change tolerated between the requested order and 1.5× it.
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// Deterministic path on a uniform partition of `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub enum TimePath {
    Constant(DVector<f64>),
    Piecewise(Vec<DVector<f64>>),
}

impl TimePath {
    fn dim(&self) -> usize {
        match self {
            TimePath::Constant(v) => v.len(),
            TimePath::Piecewise(p) => p.first().map_or(0, |v| v.len()),
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = &DVector<f64>> + '_> {
        match self {
            TimePath::Constant(v) => Box::new(std::iter::once(v)),
            TimePath::Piecewise(p) => Box::new(p.iter()),
        }
    }

    /// `∫_{t0}^{t1}` of the path.
    pub fn integral(&self, t0: f64, t1: f64, horizon: f64) -> DVector<f64> {
        match self {
            TimePath::Constant(v) => v * (t1 - t0),
            TimePath::Piecewise(p) => {
                let h = horizon / p.len() as f64;
                let mut acc = DVector::zeros(self.dim());
                for (k, v) in p.iter().enumerate() {
                    let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
                    let overlap = b.min(t1) - a.max(t0);
                    if overlap > 0.0 {
                        acc += v * overlap;
                    }
                }
                acc
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneralFbSpec {
    pub b: f64,
    pub k: f64,
    pub sigma: f64,
    pub btilde: TimePath,
    pub ktilde: TimePath,
    pub comparison: ComparisonSpec,
}

impl GeneralFbSpec {
    pub fn validate(&self, model: &FirmModel) -> Result<()> {
        let n = model.n_agents();
        let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
        if !(self.k.is_finite() && self.k > 0.0) {
            return bad("cost curvature K must be positive");
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad("volatility must be positive");
        }
        if !self.b.is_finite() {
            return bad("drift loading must be finite");
        }
        if self.btilde.dim() != n || self.ktilde.dim() != n {
            return bad("dimension mismatch in drift/cost offsets");
        }
        if self.ktilde.values().any(|v| v.iter().any(|c| !(*c >= 0.0))) {
            return bad("cost offsets must be non-negative");
        }
        if n > MAX_DIM {
            return Err(Error::Unsupported(format!("tensor quadrature is limited to N <= {MAX_DIM}")));
        }
        let lip = self.lipschitz_estimate(n);
        if !lip.is_finite() {
            return bad("comparison map is not Lipschitz on sampled points");
        }
        Ok(())
    }

    /// Largest sampled difference quotient of Γ.
    pub fn lipschitz_estimate(&self, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x11b5);
        let mut best: f64 = 0.0;
        for _ in 0..512 {
            let scale = 10f64.powf(rng.random_range(-2.0..3.0));
            let x = DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0));
            let d = (&x - &y).norm();
            if d > 0.0 {
                best = best.max((self.comparison.eval(&x) - self.comparison.eval(&y)).norm() / d);
            }
        }
        best
    }
}

/// `η = N B²/(K σ²) − R_P R̄_A/(R̄_A + N R_P)`.
pub fn eta(spec: &GeneralFbSpec, model: &FirmModel) -> f64 {
    let n = model.n_agents() as f64;
    n * spec.b * spec.b / (spec.k * spec.sigma * spec.sigma) - model.sharing_coefficient()
}

/// Value and its spatial gradient at `(t, x)` for one quadrature order.
fn evaluate_order(spec: &GeneralFbSpec, model: &FirmModel, t: f64, x: &DVector<f64>, order: usize) -> (f64, DVector<f64>) {
    let n = model.n_agents();
    let horizon = model.horizon();
    let ones = DVector::from_element(n, 1.0);
    let k_int = spec.ktilde.integral(t, horizon, horizon).sum();
    let tau = horizon - t;
    if tau <= 0.0 {
        let y = x.sum() + spec.comparison.eval(x).sum();
        let z = &ones + spec.comparison.jacobian(x).transpose() * &ones;
        return (y, z);
    }
    let et = eta(spec, model);
    let mu = spec.btilde.integral(t, horizon, horizon);
    let sd = spec.sigma * tau.sqrt();
    let rule = standard_normal_rule(order);
    // Nodes are recentred on the tilt of the linearised exponent,
    // E[h(ξ)] = E[h(ξ + c) e^{−c·ξ − |c|²/2}], so the rule covers the mass of
    // e^{ηS} however large η·sd is; exact when Γ is linear.
    let degenerate = et.abs() < ETA_DEGENERACY;
    let centre = &mu + x;
    let slope = &ones + spec.comparison.jacobian(&centre).transpose() * &ones;
    let c = if degenerate { DVector::zeros(n) } else { slope * (et * sd) };
    let c_sq = c.norm_squared();

    // Log-sum-exp over nodes with a running maximum.
    let mut max_l = f64::NEG_INFINITY;
    let mut sum_w = 0.0;
    let mut sum_ws = 0.0;
    let mut sum_wz = DVector::zeros(n);
    let mut u = DVector::zeros(n);
    for_each_tensor_node(&rule, n, |xi, lw| {
        let mut lw = lw - 0.5 * c_sq;
        for j in 0..n {
            u[j] = mu[j] + sd * (xi[j] + c[j]);
            lw -= c[j] * xi[j];
        }
        let ux = &u + x;
        let s = u.sum() + spec.comparison.eval(&ux).sum();
        let grad = &ones + spec.comparison.jacobian(&ux).transpose() * &ones;
        let l = if degenerate { lw } else { lw + et * s };
        if l > max_l {
            let scale = (max_l - l).exp();
            sum_w *= scale;
            sum_ws *= scale;
            sum_wz *= scale;
            max_l = l;
        }
        let w = (l - max_l).exp();
        sum_w += w;
        sum_ws += w * s;
        sum_wz += grad * w;
    });
    let log_term = if degenerate { sum_ws / sum_w } else { (max_l + sum_w.ln()) / et };
    (x.sum() - k_int + log_term, sum_wz / sum_w)
}

/// Value and gradient at `(t, x)`, failing when raising the order by half
/// changes either by more than `tol` (relative).
pub fn fb_general_point(
    spec: &GeneralFbSpec,
    model: &FirmModel,
    t: f64,
    x: &DVector<f64>,
    order: usize,
    tol: f64,
) -> Result<(f64, DVector<f64>)> {
    spec.validate(model)?;
    if !(0.0..=model.horizon()).contains(&t) {
        return Err(Error::InvalidModel(format!("time {t} outside [0, T]")));
    }
    if order == 0 {
        return Err(Error::InvalidModel("quadrature order must be positive".into()));
    }
    let (y, z) = evaluate_order(spec, model, t, x, order);
    if t < model.horizon() {
        let (y2, z2) = evaluate_order(spec, model, t, x, order + order.div_ceil(2));
        let change = ((y2 - y).abs() / y.abs().max(1.0)).max((&z2 - &z).amax() / z.amax().max(1.0));
        if !(change <= tol) {
            return Err(Error::Quadrature { change });
        }
    }
    Ok((y, z))
}

/// `Y_t` at output level `x`.
pub fn fb_general_value(spec: &GeneralFbSpec, model: &FirmModel, t: f64, x: &DVector<f64>, order: usize) -> Result<f64> {
    Ok(fb_general_point(spec, model, t, x, order, CONVERGENCE_TOL)?.0)
}

/// `∇_x Y_t`, the tilted mean of `1 + Σ_i ∇Γ_i`.
pub fn fb_general_gradient(spec: &GeneralFbSpec, model: &FirmModel, t: f64, x: &DVector<f64>, order: usize) -> Result<DVector<f64>> {
    Ok(fb_general_point(spec, model, t, x, order, CONVERGENCE_TOL)?.1)
}

/// Optimal effort `(B/K) ∇_x Y_t 1ᵀ`: every agent spends the same vector.
pub fn fb_general_effort(spec: &GeneralFbSpec, model: &FirmModel, t: f64, x: &DVector<f64>, order: usize) -> Result<EffortMatrix> {
    let z = fb_general_gradient(spec, model, t, x, order)?;
    Ok(rank_one_effort(&z, spec.b / spec.k))
}

pub(crate) fn rank_one_effort(z: &DVector<f64>, factor: f64) -> EffortMatrix {
    let n = z.len();
    let mut a = EffortMatrix::zeros(n);
    for j in 0..n {
        for l in 0..n {
            a.set(j, l, factor * z[j]);
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::first_best::solve_first_best;
    use crate::model::{CostSpec, DriftSpec, GrowthBounds, LinearComparison, ModelSpec, Volatility};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn model(n: usize, gammas: &[f64], ra: f64, rp: f64, sigma: f64, b: f64, k: f64, horizon: f64) -> FirmModel {
        ModelSpec {
            n_agents: n,
            horizon,
            volatility: Volatility::scalar(n, sigma).unwrap(),
            drift: DriftSpec::Linear { loadings: DMatrix::from_element(n, n, b), offset: DVector::zeros(n) },
            cost: CostSpec::Quadratic { coeffs: DMatrix::from_element(n, n, k), offset: DVector::zeros(n) },
            comparison: ComparisonSpec::Linear(LinearComparison::new(DVector::from_column_slice(gammas)).unwrap()),
            agent_risk_aversions: DVector::from_element(n, ra),
            principal_risk_aversion: rp,
            reservation_utilities: DVector::from_element(n, -1.0),
            action_sets: vec![None; n],
            growth: GrowthBounds::default(),
        }
        .build()
        .unwrap()
    }

    fn spec(n: usize, comparison: ComparisonSpec) -> GeneralFbSpec {
        GeneralFbSpec {
            b: 1.0,
            k: 1.0,
            sigma: 1.0,
            btilde: TimePath::Constant(DVector::zeros(n)),
            ktilde: TimePath::Constant(DVector::zeros(n)),
            comparison,
        }
    }

    #[test]
    fn eta_example_and_cancellation() {
        let m = model(2, &[0.0, 0.0], 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let s = spec(2, ComparisonSpec::Linear(LinearComparison::new(DVector::zeros(2)).unwrap()));
        assert_relative_eq!(eta(&s, &m), 2.0 - 1.0 / 3.0, epsilon = 1e-15);
        let kappa = m.sharing_coefficient();
        let s2 = GeneralFbSpec { b: (kappa / 2.0).sqrt(), ..s };
        assert!(eta(&s2, &m).abs() < 1e-15);
    }

    #[test]
    fn zero_comparison_matches_gaussian_mgf() {
        let m = model(2, &[0.0, 0.0], 1.0, 1.0, 1.0, 1.0, 1.0, 2.0);
        let s = spec(2, ComparisonSpec::Linear(LinearComparison::new(DVector::zeros(2)).unwrap()));
        let x = DVector::from_column_slice(&[0.3, -1.1]);
        let t = 0.5;
        let y = fb_general_value(&s, &m, t, &x, 40).unwrap();
        let et = eta(&s, &m);
        assert_relative_eq!(y, x.sum() + et * 2.0 * 1.5 / 2.0, epsilon = 1e-10);
        let a = fb_general_effort(&s, &m, t, &x, 40).unwrap();
        assert!(a.matrix().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn terminal_condition() {
        let m = model(2, &[1.0, 0.5], 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let cmp = ComparisonSpec::Smooth { gammas: DVector::from_column_slice(&[1.0, 0.5]), scale: 0.8 };
        let s = spec(2, cmp.clone());
        let x = DVector::from_column_slice(&[0.7, -0.2]);
        let y = fb_general_value(&s, &m, 1.0, &x, 40).unwrap();
        assert_relative_eq!(y, x.sum() + cmp.eval(&x).sum(), epsilon = 1e-14);
    }

    #[test]
    fn linear_comparison_matches_first_best() {
        let g = [0.8, 0.3];
        let m = model(2, &g, 1.5, 0.7, 0.9, 1.2, 2.0, 1.0);
        let s = GeneralFbSpec {
            b: 1.2,
            k: 2.0,
            sigma: 0.9,
            ..spec(2, ComparisonSpec::Linear(LinearComparison::new(DVector::from_column_slice(&g)).unwrap()))
        };
        let fb = solve_first_best(&m).unwrap();
        let q = fb.project_weights.clone();
        let x = DVector::from_column_slice(&[0.4, 0.1]);
        let y = fb_general_value(&s, &m, 0.0, &x, 40).unwrap();
        assert_relative_eq!(y, q.dot(&x) - fb.cost_of_effort, epsilon = 1e-8);
        let a = fb_general_effort(&s, &m, 0.0, &x, 40).unwrap();
        assert!((a.matrix() - fb.effort[0].matrix()).amax() < 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences_of_value() {
        let m = model(2, &[1.0, 0.5], 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let s = spec(2, ComparisonSpec::Smooth { gammas: DVector::from_column_slice(&[1.0, 0.5]), scale: 0.8 });
        let x = DVector::from_column_slice(&[0.2, -0.3]);
        let z = fb_general_gradient(&s, &m, 0.3, &x, 40).unwrap();
        for j in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += 1e-4;
            xm[j] -= 1e-4;
            let fd = (fb_general_value(&s, &m, 0.3, &xp, 40).unwrap() - fb_general_value(&s, &m, 0.3, &xm, 40).unwrap()) / 2e-4;
            assert_relative_eq!(z[j], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn degenerate_eta_branch_is_continuous() {
        let m = model(2, &[0.5, 0.5], 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let kappa = m.sharing_coefficient();
        let cmp = ComparisonSpec::Smooth { gammas: DVector::from_column_slice(&[0.5, 0.5]), scale: 1.0 };
        let x = DVector::from_column_slice(&[0.1, 0.4]);
        let at = |target_eta: f64| {
            let b = ((target_eta + kappa) / 2.0).sqrt();
            fb_general_value(&GeneralFbSpec { b, ..spec(2, cmp.clone()) }, &m, 0.0, &x, 40).unwrap()
        };
        assert!((at(0.0) - at(1.0001e-8)).abs() < 1e-6);
        assert!((at(0.0) - at(-1.0001e-8)).abs() < 1e-6);
    }

    #[test]
    fn refuses_large_dimension() {
        let m = model(4, &[0.0; 4], 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let s = spec(4, ComparisonSpec::Linear(LinearComparison::new(DVector::zeros(4)).unwrap()));
        assert!(matches!(fb_general_value(&s, &m, 0.0, &DVector::zeros(4), 10), Err(Error::Unsupported(_))));
    }
}
