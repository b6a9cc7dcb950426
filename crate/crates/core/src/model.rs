//! Firm specification: projects driven by an N-dimensional Brownian motion,
//! an N×N effort matrix, drift/cost/comparison maps and the parties'
//! preferences.
//!
//! Orientation of the effort matrix is fixed crate-wide: entry `(j, l)` is the
//! effort Agent `l` spends on the project managed by Agent `j`. Column `l` is
//! therefore Agent `l`'s full action vector, and row `j` collects everything
//! project `j` receives. The cost of Agent `i` reads column `i`; the drift of
//! project `j` reads row `j`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Flat index of entry `(row, col)` in the column-major vectorisation of an
/// N×N matrix.
#[inline]
pub fn vec_index(n: usize, row: usize, col: usize) -> usize {
    row + col * n
}

macro_rules! square_matrix_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            entries: DMatrix<f64>,
        }

        impl $name {
            pub fn zeros(n: usize) -> Self {
                Self { entries: DMatrix::zeros(n, n) }
            }

            /// Panics if `m` is not square.
            pub fn from_matrix(m: DMatrix<f64>) -> Self {
                assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
                Self { entries: m }
            }

            /// Builds the matrix from row slices; panics if not square.
            pub fn from_rows(rows: &[&[f64]]) -> Self {
                let n = rows.len();
                let mut m = DMatrix::zeros(n, n);
                for (j, row) in rows.iter().enumerate() {
                    assert_eq!(row.len(), n, "matrix must be square");
                    for (l, v) in row.iter().enumerate() {
                        m[(j, l)] = *v;
                    }
                }
                Self { entries: m }
            }

            /// Inverse of [`Self::to_vec`].
            pub fn from_vec(n: usize, v: &DVector<f64>) -> Self {
                assert_eq!(v.len(), n * n);
                Self { entries: DMatrix::from_column_slice(n, n, v.as_slice()) }
            }

            pub fn n(&self) -> usize {
                self.entries.nrows()
            }

            pub fn matrix(&self) -> &DMatrix<f64> {
                &self.entries
            }

            pub fn into_matrix(self) -> DMatrix<f64> {
                self.entries
            }

            pub fn get(&self, row: usize, col: usize) -> f64 {
                self.entries[(row, col)]
            }

            pub fn set(&mut self, row: usize, col: usize, value: f64) {
                self.entries[(row, col)] = value;
            }

            pub fn column(&self, i: usize) -> DVector<f64> {
                self.entries.column(i).into_owned()
            }

            pub fn set_column(&mut self, i: usize, col: &DVector<f64>) {
                self.entries.set_column(i, col);
            }

            /// Column-major vectorisation (column `i` occupies `i*n..(i+1)*n`).
            pub fn to_vec(&self) -> DVector<f64> {
                DVector::from_column_slice(self.entries.as_slice())
            }

            pub fn norm(&self) -> f64 {
                self.entries.norm()
            }

            pub fn is_finite(&self) -> bool {
                self.entries.iter().all(|v| v.is_finite())
            }
        }
    };
}

square_matrix_newtype!(
    /// N×N action matrix; `get(j, l)` is Agent `l`'s effort on project `j`.
    EffortMatrix
);

square_matrix_newtype!(
    /// N×N contract sensitivity matrix; column `i` is Agent `i`'s exposure to
    /// each project's noise.
    ZMatrix
);

/// Piecewise-constant volatility on a uniform partition of `[0, T]`.
#[derive(Clone, Debug)]
pub struct Volatility {
    pieces: Vec<DMatrix<f64>>,
    inverses: Vec<DMatrix<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl Volatility {
    pub fn constant(sigma: DMatrix<f64>) -> Result<Self> {
        Self::piecewise(vec![sigma])
    }

    /// `σ I_N`.
    pub fn scalar(n: usize, sigma: f64) -> Result<Self> {
        Self::constant(DMatrix::identity(n, n) * sigma)
    }

    pub fn diagonal(sigmas: &[f64]) -> Result<Self> {
        Self::constant(DMatrix::from_diagonal(&DVector::from_column_slice(sigmas)))
    }

    /// One matrix per piece of a uniform partition of the horizon.
    pub fn piecewise(pieces: Vec<DMatrix<f64>>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidModel("volatility needs at least one matrix".into()));
        }
        let n = pieces[0].nrows();
        let mut inverses = Vec::with_capacity(pieces.len());
        let mut covariances = Vec::with_capacity(pieces.len());
        for (k, m) in pieces.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidModel("volatility dimension mismatch".into()));
            }
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidModel("volatility must be bounded".into()));
            }
            let sv = m.clone().singular_values();
            let max = sv.max();
            let min = sv.min();
            if !(min > 1e-12 * max.max(f64::MIN_POSITIVE)) {
                return Err(Error::SingularVolatility { t: k as f64 });
            }
            inverses.push(m.clone().try_inverse().ok_or(Error::SingularVolatility { t: k as f64 })?);
            covariances.push(m * m.transpose());
        }
        Ok(Self { pieces, inverses, covariances })
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].nrows()
    }

    pub fn n_pieces(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_constant(&self) -> bool {
        self.pieces.len() == 1
    }

    pub fn piece_index(&self, t: f64, horizon: f64) -> usize {
        let p = self.pieces.len();
        let k = (t / horizon * p as f64 + 1e-12).floor();
        (k.max(0.0) as usize).min(p - 1)
    }

    /// Piece containing the left end of step `step` out of `n_steps`.
    pub fn piece_for_step(&self, step: usize, n_steps: usize) -> usize {
        (step * self.pieces.len() / n_steps).min(self.pieces.len() - 1)
    }

    pub fn piece_bounds(&self, k: usize, horizon: f64) -> (f64, f64) {
        let p = self.pieces.len() as f64;
        (horizon * k as f64 / p, horizon * (k + 1) as f64 / p)
    }

    pub fn piece(&self, k: usize) -> &DMatrix<f64> {
        &self.pieces[k]
    }

    pub fn piece_inverse(&self, k: usize) -> &DMatrix<f64> {
        &self.inverses[k]
    }

    pub fn piece_covariance(&self, k: usize) -> &DMatrix<f64> {
        &self.covariances[k]
    }

    pub fn at(&self, t: f64, horizon: f64) -> &DMatrix<f64> {
        &self.pieces[self.piece_index(t, horizon)]
    }

    /// `∫_0^T Σ_s Σ_s^T ds`.
    pub fn integrated_covariance(&self, horizon: f64) -> DMatrix<f64> {
        let dt = horizon / self.pieces.len() as f64;
        self.covariances.iter().fold(DMatrix::zeros(self.dim(), self.dim()), |acc, c| acc + c * dt)
    }

    /// `∫_0^T ‖Σ_s^T v‖² ds`.
    pub fn integrated_quadratic(&self, horizon: f64, v: &DVector<f64>) -> f64 {
        v.dot(&(self.integrated_covariance(horizon) * v))
    }
}

/// User-supplied drift. Component `j` may only read row `j` of `a`.
pub trait DriftMap: Send + Sync {
    fn eval(&self, t: f64, a: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64>;
    fn depends_on_x(&self) -> bool {
        true
    }
    fn is_time_constant(&self) -> bool {
        false
    }
}

/// User-supplied cost. Component `i` may only read column `i` of `a`.
pub trait CostMap: Send + Sync {
    fn eval(&self, t: f64, a: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64>;
    fn depends_on_x(&self) -> bool {
        true
    }
    fn is_time_constant(&self) -> bool {
        false
    }
}

/// User-supplied comparison map Γ.
pub trait ComparisonMap: Send + Sync {
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `J[i, j] = ∂Γ_i/∂x^j`; `None` falls back to central differences.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Clone)]
pub enum DriftSpec {
    /// `b^j(a) = Σ_l loadings[j,l] a^{j,l} + offset_j`.
    Linear { loadings: DMatrix<f64>, offset: DVector<f64> },
    Custom(Arc<dyn DriftMap>),
}

#[derive(Clone)]
pub enum CostSpec {
    /// `k^i(a) = Σ_j coeffs[j,i]/2 (a^{j,i})² + offset_i`.
    Quadratic { coeffs: DMatrix<f64>, offset: DVector<f64> },
    Custom(Arc<dyn CostMap>),
}

/// Average-relative comparison `Γ_i(x) = γ_i (x^i − x̄^{−i})`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearComparison {
    gammas: DVector<f64>,
}

impl LinearComparison {
    pub fn new(gammas: DVector<f64>) -> Result<Self> {
        if gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidModel("competition indices must be non-negative".into()));
        }
        Ok(Self { gammas })
    }

    pub fn gammas(&self) -> &DVector<f64> {
        &self.gammas
    }

    /// `(γ̄⁻)^i`, the mean of the other agents' indices (0 when N = 1).
    pub fn gamma_bar_minus(&self) -> DVector<f64> {
        let n = self.gammas.len();
        if n < 2 {
            return DVector::zeros(n);
        }
        let total = self.gammas.sum();
        DVector::from_fn(n, |i, _| (total - self.gammas[i]) / (n - 1) as f64)
    }

    /// Matrix whose column `i` is `γ_i (e_i − ē_{−i})`, so `Γ(x) = Gᵀ x`.
    pub fn loadings(&self) -> DMatrix<f64> {
        let n = self.gammas.len();
        let mut g = DMatrix::zeros(n, n);
        if n < 2 {
            return g;
        }
        for i in 0..n {
            for j in 0..n {
                g[(j, i)] = if i == j {
                    self.gammas[i]
                } else {
                    -self.gammas[i] / (n - 1) as f64
                };
            }
        }
        g
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.loadings().transpose() * x
    }
}

#[derive(Clone)]
pub enum ComparisonSpec {
    Linear(LinearComparison),
    /// `γ_i · clamp(x^i − x̄^{−i}, −cap, cap)`.
    Capped { gammas: DVector<f64>, cap: f64 },
    /// `γ_i · s · tanh((x^i − x̄^{−i}) / s)`.
    Smooth { gammas: DVector<f64>, scale: f64 },
    Custom(Arc<dyn ComparisonMap>),
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftSpec::Linear { loadings, offset } => f
                .debug_struct("Linear")
                .field("loadings", loadings)
                .field("offset", offset)
                .finish(),
            DriftSpec::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostSpec::Quadratic { coeffs, offset } => f
                .debug_struct("Quadratic")
                .field("coeffs", coeffs)
                .field("offset", offset)
                .finish(),
            CostSpec::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl fmt::Debug for ComparisonSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComparisonSpec::Linear(l) => f.debug_tuple("Linear").field(l).finish(),
            ComparisonSpec::Capped { gammas, cap } => {
                f.debug_struct("Capped").field("gammas", gammas).field("cap", cap).finish()
            }
            ComparisonSpec::Smooth { gammas, scale } => {
                f.debug_struct("Smooth").field("gammas", gammas).field("scale", scale).finish()
            }
            ComparisonSpec::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Relative performance `x^i − x̄^{−i}` for every agent (0 when N = 1).
fn relative_performance(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    if n < 2 {
        return DVector::zeros(n);
    }
    let total = x.sum();
    DVector::from_fn(n, |i, _| x[i] - (total - x[i]) / (n - 1) as f64)
}

/// Jacobian of [`relative_performance`]: row `i` is `e_i − ē_{−i}`.
fn relative_performance_jacobian(n: usize) -> DMatrix<f64> {
    if n < 2 {
        return DMatrix::zeros(n, n);
    }
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { -1.0 / (n - 1) as f64 })
}

fn central_jacobian<F>(n_out: usize, x: &DVector<f64>, step: f64, f: F) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut jac = DMatrix::zeros(n_out, x.len());
    let mut xp = x.clone();
    for k in 0..x.len() {
        let h = step * x[k].abs().max(1.0);
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        jac.set_column(k, &((fp - fm) / (2.0 * h)));
    }
    jac
}

fn central_hessian<F>(x: &DVector<f64>, step: f64, f: F) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let m = x.len();
    let mut h = DMatrix::zeros(m, m);
    let f0 = f(x);
    let mut xp = x.clone();
    let steps: Vec<f64> = x.iter().map(|v| step * v.abs().max(1.0)).collect();
    for p in 0..m {
        xp[p] = x[p] + steps[p];
        let fpp = f(&xp);
        xp[p] = x[p] - steps[p];
        let fmm = f(&xp);
        xp[p] = x[p];
        h[(p, p)] = (fpp - 2.0 * f0 + fmm) / (steps[p] * steps[p]);
        for r in 0..p {
            let mut val = 0.0;
            for (sp, sr, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                xp[p] = x[p] + sp * steps[p];
                xp[r] = x[r] + sr * steps[r];
                val += sign * f(&xp);
            }
            xp[p] = x[p];
            xp[r] = x[r];
            let v = val / (4.0 * steps[p] * steps[r]);
            h[(p, r)] = v;
            h[(r, p)] = v;
        }
    }
    h
}

impl DriftSpec {
    pub fn eval(&self, t: f64, a: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DriftSpec::Linear { loadings, offset } => {
                DVector::from_fn(offset.len(), |j, _| loadings.row(j).dot(&a.row(j)) + offset[j])
            }
            DriftSpec::Custom(m) => m.eval(t, a, x),
        }
    }

    /// `∂b^j/∂vec(a)` as an `N × N²` matrix.
    pub fn jacobian(&self, t: f64, a: &DMatrix<f64>, x: &DVector<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        match self {
            DriftSpec::Linear { loadings, .. } => {
                let mut jac = DMatrix::zeros(n, n * n);
                for j in 0..n {
                    for l in 0..n {
                        jac[(j, vec_index(n, j, l))] = loadings[(j, l)];
                    }
                }
                jac
            }
            DriftSpec::Custom(m) => {
                let v = DVector::from_column_slice(a.as_slice());
                central_jacobian(n, &v, 1e-6, |w| m.eval(t, &DMatrix::from_column_slice(n, n, w.as_slice()), x))
            }
        }
    }

    /// Hessian of `a ↦ w·b(t, a, x)` over `vec(a)`.
    pub fn weighted_hessian(&self, t: f64, a: &DMatrix<f64>, x: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        match self {
            DriftSpec::Linear { .. } => DMatrix::zeros(n * n, n * n),
            DriftSpec::Custom(m) => {
                let v = DVector::from_column_slice(a.as_slice());
                central_hessian(&v, 1e-4, |u| w.dot(&m.eval(t, &DMatrix::from_column_slice(n, n, u.as_slice()), x)))
            }
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            DriftSpec::Linear { .. } => false,
            DriftSpec::Custom(m) => m.depends_on_x(),
        }
    }

    pub fn is_time_constant(&self) -> bool {
        match self {
            DriftSpec::Linear { .. } => true,
            DriftSpec::Custom(m) => m.is_time_constant(),
        }
    }

    /// True when each agent's best response ignores the other columns.
    pub fn is_column_separable(&self) -> bool {
        matches!(self, DriftSpec::Linear { .. })
    }
}

impl CostSpec {
    pub fn eval(&self, t: f64, a: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
        match self {
            CostSpec::Quadratic { coeffs, offset } => DVector::from_fn(offset.len(), |i, _| {
                let col = a.column(i);
                let c = coeffs.column(i);
                0.5 * col.iter().zip(c.iter()).map(|(ai, ci)| ci * ai * ai).sum::<f64>() + offset[i]
            }),
            CostSpec::Custom(m) => m.eval(t, a, x),
        }
    }

    /// `∂k^i/∂vec(a)` as an `N × N²` matrix.
    pub fn jacobian(&self, t: f64, a: &DMatrix<f64>, x: &DVector<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        match self {
            CostSpec::Quadratic { coeffs, .. } => {
                let mut jac = DMatrix::zeros(n, n * n);
                for i in 0..n {
                    for j in 0..n {
                        jac[(i, vec_index(n, j, i))] = coeffs[(j, i)] * a[(j, i)];
                    }
                }
                jac
            }
            CostSpec::Custom(m) => {
                let v = DVector::from_column_slice(a.as_slice());
                central_jacobian(n, &v, 1e-6, |w| m.eval(t, &DMatrix::from_column_slice(n, n, w.as_slice()), x))
            }
        }
    }

    /// Hessian of `a ↦ w·k(t, a, x)` over `vec(a)`.
    pub fn weighted_hessian(&self, t: f64, a: &DMatrix<f64>, x: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        match self {
            CostSpec::Quadratic { coeffs, .. } => {
                let mut h = DMatrix::zeros(n * n, n * n);
                for i in 0..n {
                    for j in 0..n {
                        let k = vec_index(n, j, i);
                        h[(k, k)] = w[i] * coeffs[(j, i)];
                    }
                }
                h
            }
            CostSpec::Custom(m) => {
                let v = DVector::from_column_slice(a.as_slice());
                central_hessian(&v, 1e-4, |u| w.dot(&m.eval(t, &DMatrix::from_column_slice(n, n, u.as_slice()), x)))
            }
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            CostSpec::Quadratic { .. } => false,
            CostSpec::Custom(m) => m.depends_on_x(),
        }
    }

    pub fn is_time_constant(&self) -> bool {
        match self {
            CostSpec::Quadratic { .. } => true,
            CostSpec::Custom(m) => m.is_time_constant(),
        }
    }
}

impl ComparisonSpec {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ComparisonSpec::Linear(l) => l.eval(x),
            ComparisonSpec::Capped { gammas, cap } => {
                let d = relative_performance(x);
                DVector::from_fn(x.len(), |i, _| gammas[i] * d[i].clamp(-cap, *cap))
            }
            ComparisonSpec::Smooth { gammas, scale } => {
                let d = relative_performance(x);
                DVector::from_fn(x.len(), |i, _| gammas[i] * scale * (d[i] / scale).tanh())
            }
            ComparisonSpec::Custom(m) => m.eval(x),
        }
    }

    /// `J[i, j] = ∂Γ_i/∂x^j` (almost everywhere for kinked maps).
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        match self {
            ComparisonSpec::Linear(l) => l.loadings().transpose(),
            ComparisonSpec::Capped { gammas, cap } => {
                let d = relative_performance(x);
                let r = relative_performance_jacobian(n);
                DMatrix::from_fn(n, n, |i, j| if d[i].abs() < *cap { gammas[i] * r[(i, j)] } else { 0.0 })
            }
            ComparisonSpec::Smooth { gammas, scale } => {
                let d = relative_performance(x);
                let r = relative_performance_jacobian(n);
                DMatrix::from_fn(n, n, |i, j| {
                    let c = (d[i] / scale).cosh();
                    gammas[i] * r[(i, j)] / (c * c)
                })
            }
            ComparisonSpec::Custom(m) => m.jacobian(x).unwrap_or_else(|| central_jacobian(n, x, 1e-5, |y| m.eval(y))),
        }
    }

    pub fn as_linear(&self) -> Option<&LinearComparison> {
        match self {
            ComparisonSpec::Linear(l) => Some(l),
            _ => None,
        }
    }
}

/// Box constraint on one agent's action vector (a column of the effort matrix).
#[derive(Clone, Debug, PartialEq)]
pub struct ActionBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// Constants of the growth spot checks on user-supplied maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthBounds {
    pub c: f64,
    pub ell: f64,
}

impl Default for GrowthBounds {
    fn default() -> Self {
        Self { c: 10.0, ell: 2.0 }
    }
}

/// Editable description of a firm; [`ModelSpec::build`] validates it into a
/// [`FirmModel`].
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub n_agents: usize,
    pub horizon: f64,
    pub volatility: Volatility,
    pub drift: DriftSpec,
    pub cost: CostSpec,
    pub comparison: ComparisonSpec,
    pub agent_risk_aversions: DVector<f64>,
    pub principal_risk_aversion: f64,
    pub reservation_utilities: DVector<f64>,
    /// One optional box per agent; `None` means all of ℝ^N.
    pub action_sets: Vec<Option<ActionBox>>,
    pub growth: GrowthBounds,
}

/// Validated, immutable firm model.
#[derive(Clone, Debug)]
pub struct FirmModel {
    spec: ModelSpec,
}

impl ModelSpec {
    pub fn build(self) -> Result<FirmModel> {
        self.validate()?;
        Ok(FirmModel { spec: self })
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_agents;
        let bad = |msg: &str| Err(Error::InvalidModel(msg.to_string()));
        if n == 0 {
            return bad("at least one agent is required");
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if self.agent_risk_aversions.len() != n || self.reservation_utilities.len() != n {
            return bad("dimension mismatch in agent parameters");
        }
        if self.agent_risk_aversions.iter().any(|r| !(r.is_finite() && *r > 0.0))
            || !(self.principal_risk_aversion.is_finite() && self.principal_risk_aversion > 0.0)
        {
            return bad("risk aversion must be positive");
        }
        if self.reservation_utilities.iter().any(|u| !(u.is_finite() && *u < 0.0)) {
            return bad("reservation utility must be negative");
        }
        if self.volatility.dim() != n {
            return bad("dimension mismatch in volatility");
        }
        match &self.drift {
            DriftSpec::Linear { loadings, offset } => {
                if loadings.nrows() != n || loadings.ncols() != n || offset.len() != n {
                    return bad("dimension mismatch in drift");
                }
                if !loadings.iter().chain(offset.iter()).all(|v| v.is_finite()) {
                    return bad("drift coefficients must be finite");
                }
            }
            DriftSpec::Custom(_) => {}
        }
        match &self.cost {
            CostSpec::Quadratic { coeffs, offset } => {
                if coeffs.nrows() != n || coeffs.ncols() != n || offset.len() != n {
                    return bad("dimension mismatch in cost");
                }
                if coeffs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                    return bad("cost coefficients must be positive");
                }
                if offset.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                    return bad("cost offsets must be non-negative");
                }
            }
            CostSpec::Custom(_) => {}
        }
        match &self.comparison {
            ComparisonSpec::Linear(l) => {
                if l.gammas().len() != n {
                    return bad("dimension mismatch in comparison");
                }
            }
            ComparisonSpec::Capped { gammas, cap } => {
                if gammas.len() != n || !(*cap > 0.0) || gammas.iter().any(|g| !(*g >= 0.0)) {
                    return bad("capped comparison needs N non-negative indices and a positive cap");
                }
            }
            ComparisonSpec::Smooth { gammas, scale } => {
                if gammas.len() != n || !(*scale > 0.0) || gammas.iter().any(|g| !(*g >= 0.0)) {
                    return bad("smooth comparison needs N non-negative indices and a positive scale");
                }
            }
            ComparisonSpec::Custom(_) => {}
        }
        if self.action_sets.len() != n {
            return bad("dimension mismatch in action sets");
        }
        for b in self.action_sets.iter().flatten() {
            if b.lower.len() != n || b.upper.len() != n {
                return bad("dimension mismatch in action sets");
            }
            if b.lower.iter().zip(b.upper.iter()).any(|(l, u)| !(l <= u)) {
                return bad("action set lower bound exceeds upper bound");
            }
        }
        if !(self.growth.c > 0.0 && self.growth.ell >= 2.0) {
            return bad("growth constants need C > 0 and ell >= 2");
        }
        self.spot_check_user_maps()
    }

    /// Randomised growth and sign checks on user-supplied maps only; the
    /// built-in linear/quadratic forms satisfy them structurally.
    fn spot_check_user_maps(&self) -> Result<()> {
        let custom = matches!(self.drift, DriftSpec::Custom(_))
            || matches!(self.cost, CostSpec::Custom(_))
            || matches!(self.comparison, ComparisonSpec::Custom(_));
        if !custom {
            return Ok(());
        }
        let n = self.n_agents;
        let GrowthBounds { c, ell } = self.growth;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_c4ec);
        let zero = DMatrix::zeros(n, n);
        for s in 0..256 {
            let t = rng.random::<f64>() * self.horizon;
            let scale = 10f64.powf(rng.random_range(-2.0..3.0));
            let a = if s == 0 { zero.clone() } else { DMatrix::from_fn(n, n, |_, _| scale * rng.random_range(-1.0..1.0)) };
            let x = DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0));
            let (an, xn) = (a.norm(), x.norm());
            if let DriftSpec::Custom(m) = &self.drift {
                let b = m.eval(t, &a, &x);
                if b.len() != n || b.iter().any(|v| v.abs() > c * (1.0 + an + xn)) {
                    return Err(Error::InvalidModel(format!("drift violates linear growth at t={t:.3}")));
                }
            }
            if let CostSpec::Custom(m) = &self.cost {
                let k = m.eval(t, &a, &x);
                if k.len() != n {
                    return Err(Error::InvalidModel("dimension mismatch in cost".into()));
                }
                if let Some((i, v)) = k.iter().enumerate().find(|(_, v)| **v < 0.0) {
                    return Err(Error::NegativeCost { agent: i, value: *v });
                }
                if k.norm() > c * (1.0 + an.powf(ell) + xn) {
                    return Err(Error::InvalidModel(format!("cost violates growth bound at t={t:.3}")));
                }
            }
            if let ComparisonSpec::Custom(m) = &self.comparison {
                let g = m.eval(&x);
                if g.len() != n || g.iter().any(|v| v.abs() > c * (1.0 + xn)) {
                    return Err(Error::InvalidModel("comparison map violates linear growth".into()));
                }
            }
        }
        Ok(())
    }
}

impl FirmModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Editable copy, for building variants of this model.
    pub fn to_spec(&self) -> ModelSpec {
        self.spec.clone()
    }

    pub fn n_agents(&self) -> usize {
        self.spec.n_agents
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn volatility(&self) -> &Volatility {
        &self.spec.volatility
    }

    pub fn drift(&self) -> &DriftSpec {
        &self.spec.drift
    }

    pub fn cost(&self) -> &CostSpec {
        &self.spec.cost
    }

    pub fn comparison(&self) -> &ComparisonSpec {
        &self.spec.comparison
    }

    pub fn agent_risk_aversions(&self) -> &DVector<f64> {
        &self.spec.agent_risk_aversions
    }

    pub fn principal_risk_aversion(&self) -> f64 {
        self.spec.principal_risk_aversion
    }

    pub fn reservation_utilities(&self) -> &DVector<f64> {
        &self.spec.reservation_utilities
    }

    pub fn action_sets(&self) -> &[Option<ActionBox>] {
        &self.spec.action_sets
    }

    pub fn eval_drift(&self, t: f64, a: &EffortMatrix, x: &DVector<f64>) -> DVector<f64> {
        self.spec.drift.eval(t, a.matrix(), x)
    }

    /// Errors if a user-supplied cost map returns a negative component.
    pub fn eval_cost(&self, t: f64, a: &EffortMatrix, x: &DVector<f64>) -> Result<DVector<f64>> {
        let k = self.spec.cost.eval(t, a.matrix(), x);
        match k.iter().enumerate().find(|(_, v)| **v < 0.0) {
            Some((i, v)) => Err(Error::NegativeCost { agent: i, value: *v }),
            None => Ok(k),
        }
    }

    pub fn eval_comparison(&self, x: &DVector<f64>) -> DVector<f64> {
        self.spec.comparison.eval(x)
    }

    /// `R̄_A = N / Σ_i 1/R_A^i`.
    pub fn harmonic_risk_aversion(&self) -> f64 {
        let n = self.spec.n_agents as f64;
        n / self.spec.agent_risk_aversions.iter().map(|r| 1.0 / r).sum::<f64>()
    }

    /// Optimal risk-sharing coefficient `R_P R̄_A / (R̄_A + N R_P)`.
    pub fn sharing_coefficient(&self) -> f64 {
        let rbar = self.harmonic_risk_aversion();
        let rp = self.spec.principal_risk_aversion;
        rp * rbar / (rbar + self.spec.n_agents as f64 * rp)
    }

    /// Certainty equivalents of the reservation utilities, `−ln(−Ū^i)/R_A^i`.
    pub fn reservation_certainty_equivalents(&self) -> DVector<f64> {
        self.spec
            .reservation_utilities
            .zip_map(&self.spec.agent_risk_aversions, |u, r| -(-u).ln() / r)
    }

    pub fn linear_comparison(&self) -> Result<&LinearComparison> {
        self.spec
            .comparison
            .as_linear()
            .ok_or_else(|| Error::Unsupported("this computation requires a linear comparison map".into()))
    }

    /// `q = 1_N + γ − γ̄⁻`, the principal's effective project weights once
    /// the agents' comparison terms are neutralised.
    pub fn project_weights(&self) -> Result<DVector<f64>> {
        let l = self.linear_comparison()?;
        let n = self.spec.n_agents;
        Ok(DVector::from_element(n, 1.0) + l.loadings() * DVector::from_element(n, 1.0))
    }

    /// True when drift and cost ignore the output state.
    pub fn is_state_free(&self) -> bool {
        !self.spec.drift.depends_on_x() && !self.spec.cost.depends_on_x()
    }

    /// True when drift and cost ignore time (volatility may still be piecewise).
    pub fn is_time_homogeneous(&self) -> bool {
        self.spec.drift.is_time_constant() && self.spec.cost.is_time_constant()
    }

    /// Grid for deterministic controls: the volatility pieces when drift and
    /// cost ignore time, otherwise a refinement with at least 64 pieces per
    /// unit time.
    pub fn policy_grid(&self) -> PieceGrid {
        let sp = self.spec.volatility.n_pieces();
        let pieces = if self.is_time_homogeneous() {
            sp
        } else {
            let per = ((64.0 * self.spec.horizon) / sp as f64).ceil().max(1.0) as usize;
            sp * per
        };
        PieceGrid { horizon: self.spec.horizon, pieces, sigma_pieces: sp }
    }

    /// `∫ g(t) dt` over piece `k` of `grid`, exact for time-constant `g`.
    pub(crate) fn piece_integral<F>(&self, grid: &PieceGrid, k: usize, time_constant: bool, mut g: F) -> DVector<f64>
    where
        F: FnMut(f64) -> DVector<f64>,
    {
        let (t0, t1) = grid.bounds(k);
        if time_constant {
            return g(0.5 * (t0 + t1)) * (t1 - t0);
        }
        let rule = crate::quadrature::gauss_legendre(4);
        let half = 0.5 * (t1 - t0);
        let mid = 0.5 * (t0 + t1);
        let mut acc = DVector::zeros(self.spec.n_agents);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            acc += g(mid + half * x) * (w * half);
        }
        acc
    }

    pub(crate) fn require_state_free(&self) -> Result<()> {
        if self.is_state_free() {
            Ok(())
        } else {
            Err(Error::Unsupported("drift and cost must not depend on the output state".into()))
        }
    }

    /// Lower/upper bounds on `vec(a)`, infinite where unconstrained.
    pub fn effort_bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        if self.spec.action_sets.iter().all(|b| b.is_none()) {
            return None;
        }
        let n = self.spec.n_agents;
        let mut lo = DVector::from_element(n * n, f64::NEG_INFINITY);
        let mut hi = DVector::from_element(n * n, f64::INFINITY);
        for (i, b) in self.spec.action_sets.iter().enumerate() {
            if let Some(b) = b {
                for j in 0..n {
                    lo[vec_index(n, j, i)] = b.lower[j];
                    hi[vec_index(n, j, i)] = b.upper[j];
                }
            }
        }
        Some((lo, hi))
    }
}

/// Uniform partition of `[0, T]` on which deterministic controls (efforts,
/// contract sensitivities) are held constant. Always a refinement of the
/// volatility partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PieceGrid {
    pub horizon: f64,
    pub pieces: usize,
    pub sigma_pieces: usize,
}

impl PieceGrid {
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let p = self.pieces as f64;
        (self.horizon * k as f64 / p, self.horizon * (k + 1) as f64 / p)
    }

    pub fn length(&self) -> f64 {
        self.horizon / self.pieces as f64
    }

    pub fn sigma_piece(&self, k: usize) -> usize {
        k * self.sigma_pieces / self.pieces
    }

    pub fn piece_index(&self, t: f64) -> usize {
        let k = (t / self.horizon * self.pieces as f64 + 1e-12).floor();
        (k.max(0.0) as usize).min(self.pieces - 1)
    }

    /// Piece containing the left end of step `step` out of `n_steps`.
    pub fn piece_for_step(&self, step: usize, n_steps: usize) -> usize {
        (step * self.pieces / n_steps).min(self.pieces - 1)
    }
}

/// Two-agent linear-quadratic benchmark: `b = (a¹¹ − a¹², a²² − a²¹)`,
/// `k¹ = k¹¹/2 (a¹¹)² + k²¹/2 (a²¹)²`, `k² = k²²/2 (a²²)² + k¹²/2 (a¹²)²`,
/// `Σ = diag(σ₁, σ₂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LQBenchmark {
    /// `[[k¹¹, k¹²], [k²¹, k²²]]`, laid out like the effort matrix.
    pub cost_coeffs: [[f64; 2]; 2],
    pub sigmas: [f64; 2],
    pub gammas: [f64; 2],
    pub agent_risk_aversions: [f64; 2],
    pub principal_risk_aversion: f64,
    pub horizon: f64,
    pub reservation_utilities: [f64; 2],
}

impl LQBenchmark {
    pub fn to_spec(&self) -> Result<ModelSpec> {
        if self.cost_coeffs.iter().flatten().any(|k| !(*k > 0.0)) {
            return Err(Error::InvalidModel("cost coefficients must be positive".into()));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidModel("volatilities must be positive".into()));
        }
        let k = &self.cost_coeffs;
        Ok(ModelSpec {
            n_agents: 2,
            horizon: self.horizon,
            volatility: Volatility::diagonal(&self.sigmas)?,
            drift: DriftSpec::Linear {
                loadings: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
                offset: DVector::zeros(2),
            },
            cost: CostSpec::Quadratic {
                coeffs: DMatrix::from_row_slice(2, 2, &[k[0][0], k[0][1], k[1][0], k[1][1]]),
                offset: DVector::zeros(2),
            },
            comparison: ComparisonSpec::Linear(LinearComparison::new(DVector::from_column_slice(&self.gammas))?),
            agent_risk_aversions: DVector::from_column_slice(&self.agent_risk_aversions),
            principal_risk_aversion: self.principal_risk_aversion,
            reservation_utilities: DVector::from_column_slice(&self.reservation_utilities),
            action_sets: vec![None, None],
            growth: GrowthBounds::default(),
        })
    }

    pub fn to_model(&self) -> Result<FirmModel> {
        self.to_spec()?.build()
    }
}

impl Default for LQBenchmark {
    fn default() -> Self {
        Self {
            cost_coeffs: [[1.0, 1.0], [1.0, 1.0]],
            sigmas: [1.0, 1.0],
            gammas: [0.0, 0.0],
            agent_risk_aversions: [1.0, 1.0],
            principal_risk_aversion: 1.0,
            horizon: 1.0,
            reservation_utilities: [-1.0, -1.0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lq(k: [[f64; 2]; 2]) -> FirmModel {
        LQBenchmark { cost_coeffs: k, ..Default::default() }.to_model().unwrap()
    }

    fn x0() -> DVector<f64> {
        DVector::zeros(2)
    }

    #[test]
    fn builds_two_agent_benchmark() {
        let m = LQBenchmark::default().to_model().unwrap();
        assert_eq!(m.n_agents(), 2);
    }

    #[test]
    fn rejects_zero_principal_risk_aversion() {
        let b = LQBenchmark { principal_risk_aversion: 0.0, ..Default::default() };
        let err = b.to_model().unwrap_err().to_string();
        assert!(err.contains("risk aversion must be positive"), "{err}");
    }

    #[test]
    fn rejects_positive_reservation_utility() {
        let b = LQBenchmark { reservation_utilities: [1.0, -1.0], ..Default::default() };
        let err = b.to_model().unwrap_err().to_string();
        assert!(err.contains("reservation utility must be negative"), "{err}");
    }

    #[test]
    fn rejects_singular_volatility() {
        let mut spec = LQBenchmark::default().to_spec().unwrap();
        let singular = Volatility::constant(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(matches!(singular, Err(Error::SingularVolatility { .. })));
        spec.agent_risk_aversions = DVector::from_column_slice(&[1.0]);
        assert!(spec.build().is_err());
    }

    #[test]
    fn benchmark_drift_examples() {
        let m = lq([[1.0; 2]; 2]);
        let b = m.eval_drift(0.0, &EffortMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]), &x0());
        assert_eq!(b.as_slice(), &[1.0, 1.0]);
        let b = m.eval_drift(0.0, &EffortMatrix::zeros(2), &x0());
        assert_eq!(b.as_slice(), &[0.0, 0.0]);
        let b = m.eval_drift(0.0, &EffortMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]), &x0());
        assert_eq!(b.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn benchmark_cost_examples() {
        let m = lq([[1.0; 2]; 2]);
        assert_eq!(m.eval_cost(0.0, &EffortMatrix::zeros(2), &x0()).unwrap().as_slice(), &[0.0, 0.0]);
        let m = lq([[2.0; 2]; 2]);
        let k = m.eval_cost(0.0, &EffortMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]), &x0()).unwrap();
        assert_eq!(k.as_slice(), &[2.0, 2.0]);
        let m = lq([[2.0, 1.0], [1.0, 1.0]]);
        let k = m.eval_cost(0.0, &EffortMatrix::from_rows(&[&[3.0, 0.0], &[0.0, 0.0]]), &x0()).unwrap();
        assert_eq!(k[0], 9.0);
    }

    struct NegativeCost;
    impl CostMap for NegativeCost {
        fn eval(&self, _t: f64, a: &DMatrix<f64>, _x: &DVector<f64>) -> DVector<f64> {
            DVector::from_fn(a.nrows(), |i, _| a.column(i).sum() - 1.0)
        }
    }

    #[test]
    fn negative_user_cost_is_an_error() {
        let mut spec = LQBenchmark::default().to_spec().unwrap();
        spec.cost = CostSpec::Custom(Arc::new(NegativeCost));
        assert!(matches!(spec.clone().build(), Err(Error::NegativeCost { .. })));
        // Evaluation itself also refuses negative components.
        let spec_ok = LQBenchmark::default().to_spec().unwrap();
        let m = FirmModel { spec: ModelSpec { cost: CostSpec::Custom(Arc::new(NegativeCost)), ..spec_ok } };
        assert!(matches!(m.eval_cost(0.0, &EffortMatrix::zeros(2), &x0()), Err(Error::NegativeCost { .. })));
    }

    #[test]
    fn comparison_examples() {
        let l = LinearComparison::new(DVector::from_column_slice(&[2.0, 1.0])).unwrap();
        let g = l.eval(&DVector::from_column_slice(&[3.0, 1.0]));
        assert_eq!(g.as_slice(), &[4.0, -2.0]);
        let g = l.eval(&DVector::from_element(2, 7.5));
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        let zero = LinearComparison::new(DVector::zeros(3)).unwrap();
        assert!(zero.eval(&DVector::from_column_slice(&[1.0, -2.0, 5.0])).iter().all(|v| *v == 0.0));
        assert!(LinearComparison::new(DVector::from_column_slice(&[-0.1, 0.0])).is_err());
    }

    #[test]
    fn aggregate_comparison_matches_gamma_minus_mean() {
        let l = LinearComparison::new(DVector::from_column_slice(&[0.3, 1.2, 0.0])).unwrap();
        let x = DVector::from_column_slice(&[1.0, -0.5, 2.0]);
        let lhs = l.eval(&x).sum();
        let rhs = (l.gammas() - l.gamma_bar_minus()).dot(&x);
        assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
    }

    #[test]
    fn harmonic_risk_aversion_examples() {
        let mut b = LQBenchmark { agent_risk_aversions: [2.5, 2.5], ..Default::default() };
        assert_relative_eq!(b.to_model().unwrap().harmonic_risk_aversion(), 2.5, epsilon = 1e-15);
        b.agent_risk_aversions = [1.0, 3.0];
        assert_relative_eq!(b.to_model().unwrap().harmonic_risk_aversion(), 1.5, epsilon = 1e-15);
        let mut spec = b.to_spec().unwrap();
        spec.n_agents = 1;
        spec.volatility = Volatility::scalar(1, 1.0).unwrap();
        spec.drift = DriftSpec::Linear { loadings: DMatrix::from_element(1, 1, 1.0), offset: DVector::zeros(1) };
        spec.cost = CostSpec::Quadratic { coeffs: DMatrix::from_element(1, 1, 1.0), offset: DVector::zeros(1) };
        spec.comparison = ComparisonSpec::Linear(LinearComparison::new(DVector::zeros(1)).unwrap());
        spec.agent_risk_aversions = DVector::from_element(1, 5.0);
        spec.reservation_utilities = DVector::from_element(1, -1.0);
        spec.action_sets = vec![None];
        assert_relative_eq!(spec.build().unwrap().harmonic_risk_aversion(), 5.0, epsilon = 1e-15);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let m = lq([[1.5, 0.7], [2.0, 0.4]]);
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 0.8, 2.1]);
        let x = x0();
        let jb = m.drift().jacobian(0.0, &a, &x);
        let jk = m.cost().jacobian(0.0, &a, &x);
        let v = DVector::from_column_slice(a.as_slice());
        let jb_fd = central_jacobian(2, &v, 1e-6, |w| m.drift().eval(0.0, &DMatrix::from_column_slice(2, 2, w.as_slice()), &x));
        let jk_fd = central_jacobian(2, &v, 1e-6, |w| m.cost().eval(0.0, &DMatrix::from_column_slice(2, 2, w.as_slice()), &x));
        assert!((jb - jb_fd).norm() < 1e-8);
        assert!((jk - jk_fd).norm() < 1e-8);
        let w = DVector::from_column_slice(&[0.6, 1.7]);
        let hk = m.cost().weighted_hessian(0.0, &a, &x, &w);
        let hk_fd = central_hessian(&v, 1e-4, |u| w.dot(&m.cost().eval(0.0, &DMatrix::from_column_slice(2, 2, u.as_slice()), &x)));
        assert!((hk - hk_fd).norm() < 1e-6);
    }

    #[test]
    fn comparison_jacobians_match_finite_differences() {
        let x = DVector::from_column_slice(&[0.4, -0.3, 0.1]);
        let gammas = DVector::from_column_slice(&[0.5, 1.0, 2.0]);
        for spec in [
            ComparisonSpec::Linear(LinearComparison::new(gammas.clone()).unwrap()),
            ComparisonSpec::Capped { gammas: gammas.clone(), cap: 10.0 },
            ComparisonSpec::Smooth { gammas: gammas.clone(), scale: 0.7 },
        ] {
            let fd = central_jacobian(3, &x, 1e-6, |y| spec.eval(y));
            assert!((spec.jacobian(&x) - fd).norm() < 1e-8, "{spec:?}");
        }
    }

    fn arb_matrix() -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-5.0f64..5.0, 9).prop_map(|v| DMatrix::from_column_slice(3, 3, &v))
    }

    fn three_agent_model() -> FirmModel {
        ModelSpec {
            n_agents: 3,
            horizon: 1.0,
            volatility: Volatility::scalar(3, 0.5).unwrap(),
            drift: DriftSpec::Linear {
                loadings: DMatrix::from_row_slice(3, 3, &[1.0, -0.5, 0.2, 0.3, 1.0, -1.0, -0.7, 0.1, 1.0]),
                offset: DVector::from_column_slice(&[0.1, 0.0, -0.2]),
            },
            cost: CostSpec::Quadratic {
                coeffs: DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, 1.5, 1.0, 3.0, 0.8, 0.9, 1.0]),
                offset: DVector::zeros(3),
            },
            comparison: ComparisonSpec::Linear(LinearComparison::new(DVector::from_column_slice(&[0.2, 0.0, 1.0])).unwrap()),
            agent_risk_aversions: DVector::from_element(3, 1.0),
            principal_risk_aversion: 1.0,
            reservation_utilities: DVector::from_element(3, -1.0),
            action_sets: vec![None, None, None],
            growth: GrowthBounds::default(),
        }
        .build()
        .unwrap()
    }

    proptest! {
        #[test]
        fn cost_is_column_local(a in arb_matrix(), d in arb_matrix(), i in 0usize..3) {
            let m = three_agent_model();
            let x = DVector::zeros(3);
            let mut b = a.clone();
            for j in 0..3 {
                if j != i { b.set_column(j, &d.column(j)); }
            }
            let ka = m.cost().eval(0.0, &a, &x);
            let kb = m.cost().eval(0.0, &b, &x);
            prop_assert!((ka[i] - kb[i]).abs() < 1e-12);
        }

        #[test]
        fn drift_is_row_local(a in arb_matrix(), d in arb_matrix(), j in 0usize..3) {
            let m = three_agent_model();
            let x = DVector::zeros(3);
            let mut b = a.clone();
            for r in 0..3 {
                if r != j { b.set_row(r, &d.row(r)); }
            }
            let ba = m.drift().eval(0.0, &a, &x);
            let bb = m.drift().eval(0.0, &b, &x);
            prop_assert!((ba[j] - bb[j]).abs() < 1e-12);
        }

        #[test]
        fn linear_comparison_is_linear(
            x in proptest::collection::vec(-50.0f64..50.0, 3),
            y in proptest::collection::vec(-50.0f64..50.0, 3),
            al in -3.0f64..3.0, be in -3.0f64..3.0,
        ) {
            let l = LinearComparison::new(DVector::from_column_slice(&[0.2, 1.5, 0.7])).unwrap();
            let x = DVector::from_vec(x);
            let y = DVector::from_vec(y);
            let lhs = l.eval(&(&x * al + &y * be));
            let rhs = l.eval(&x) * al + l.eval(&y) * be;
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }

        #[test]
        fn builtin_maps_satisfy_growth_bounds(a in arb_matrix(), s in -2.0f64..3.0) {
            let m = three_agent_model();
            let scale = 10f64.powf(s);
            let a = a * scale;
            let x = DVector::from_element(3, scale);
            let GrowthBounds { c, ell } = m.spec().growth;
            let b = m.drift().eval(0.0, &a, &x);
            let k = m.cost().eval(0.0, &a, &x);
            prop_assert!(b.iter().all(|v| v.abs() <= c * (1.0 + a.norm() + x.norm())));
            prop_assert!(k.norm() <= c * (1.0 + a.norm().powf(ell) + x.norm()));
            prop_assert!(k.iter().all(|v| *v >= 0.0));
        }
    }
}
