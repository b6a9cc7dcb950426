//! Contract representations and closed-form CARA values under Gaussian output.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{EffortMatrix, FirmModel, PieceGrid, ZMatrix};

/// Affine contract `ξ^i = c_i + w_i · X_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearContract {
    pub constants: DVector<f64>,
    /// Column `i` is `w_i`.
    pub coefficients: DMatrix<f64>,
}

impl LinearContract {
    pub fn new(constants: DVector<f64>, coefficients: DMatrix<f64>) -> Self {
        assert_eq!(coefficients.ncols(), constants.len());
        Self { constants, coefficients }
    }

    /// Flat zero wage.
    pub fn zero(n: usize) -> Self {
        Self { constants: DVector::zeros(n), coefficients: DMatrix::zeros(n, n) }
    }

    pub fn payments(&self, x_t: &DVector<f64>) -> DVector<f64> {
        &self.constants + self.coefficients.transpose() * x_t
    }

    pub fn coefficient(&self, i: usize) -> DVector<f64> {
        self.coefficients.column(i).into_owned()
    }
}

/// Contract in Z-representation, `ξ = Y₀ − Γ(X_T) − ∫f ds + ∫zᵀ dX`, with
/// deterministic `z` and `f` held constant on the pieces of `grid`.
#[derive(Clone, Debug)]
pub struct ZRepContract {
    pub y0: DVector<f64>,
    pub grid: PieceGrid,
    pub z: Vec<ZMatrix>,
    /// Generator value on each piece.
    pub generator: Vec<DVector<f64>>,
}

impl ZRepContract {
    /// `∫_0^t f ds`.
    pub fn generator_integral(&self, t: f64) -> DVector<f64> {
        let n = self.y0.len();
        let mut acc = DVector::zeros(n);
        for k in 0..self.grid.pieces {
            let (a, b) = self.grid.bounds(k);
            if a >= t {
                break;
            }
            acc += &self.generator[k] * (b.min(t) - a);
        }
        acc
    }

    pub fn is_time_constant(&self) -> bool {
        self.z.windows(2).all(|w| w[0] == w[1]) && self.generator.windows(2).all(|w| w[0] == w[1])
    }

    /// Payments given terminal output and per-piece output increments.
    pub fn payments(&self, model: &FirmModel, x_t: &DVector<f64>, increments: &[DVector<f64>]) -> DVector<f64> {
        let mut xi = &self.y0 - model.eval_comparison(x_t) - self.generator_integral(self.grid.horizon);
        for (z, dx) in self.z.iter().zip(increments) {
            xi += z.matrix().transpose() * dx;
        }
        xi
    }

    /// Affine form, available when `z` is constant in time and Γ is linear.
    pub fn to_linear(&self, model: &FirmModel) -> Result<LinearContract> {
        if !self.is_time_constant() {
            return Err(Error::Unsupported("time-varying sensitivities have no affine form".into()));
        }
        let g = model.linear_comparison()?.loadings();
        let constants = &self.y0 - self.generator_integral(self.grid.horizon);
        Ok(LinearContract::new(constants, self.z[0].matrix() - g))
    }
}

#[derive(Clone, Debug)]
pub enum Contract {
    Linear(LinearContract),
    ZRep(ZRepContract),
}

impl Contract {
    /// Adds `delta` to every agent's fixed wage.
    pub fn shifted(&self, delta: f64) -> Contract {
        match self {
            Contract::Linear(c) => {
                let mut c = c.clone();
                c.constants.add_scalar_mut(delta);
                Contract::Linear(c)
            }
            Contract::ZRep(c) => {
                let mut c = c.clone();
                c.y0.add_scalar_mut(delta);
                Contract::ZRep(c)
            }
        }
    }

    /// Per-agent constant and per-piece exposure of `ξ^i + Γ_i(X_T)` to the
    /// output increments.
    fn agent_exposure(&self, model: &FirmModel, grid: &PieceGrid, i: usize) -> Result<(f64, Vec<DVector<f64>>)> {
        match self {
            Contract::Linear(c) => {
                let g = model.linear_comparison()?.loadings();
                let v = c.coefficient(i) + g.column(i);
                Ok((c.constants[i], vec![v; grid.pieces]))
            }
            Contract::ZRep(c) => {
                check_grid(&c.grid, grid)?;
                let f = c.generator_integral(c.grid.horizon);
                Ok((c.y0[i] - f[i], c.z.iter().map(|z| z.column(i)).collect()))
            }
        }
    }

    /// Constant and per-piece exposure of the principal's `(X_T − ξ)·1`.
    fn principal_exposure(&self, model: &FirmModel, grid: &PieceGrid) -> Result<(f64, Vec<DVector<f64>>)> {
        let n = model.n_agents();
        let ones = DVector::from_element(n, 1.0);
        match self {
            Contract::Linear(c) => {
                let u = &ones - &c.coefficients * &ones;
                Ok((-c.constants.sum(), vec![u; grid.pieces]))
            }
            Contract::ZRep(c) => {
                check_grid(&c.grid, grid)?;
                let q = model.project_weights()?;
                let f = c.generator_integral(c.grid.horizon);
                let exposures = c.z.iter().map(|z| &q - z.matrix() * &ones).collect();
                Ok((-(&c.y0 - f).sum(), exposures))
            }
        }
    }
}

fn check_grid(a: &PieceGrid, b: &PieceGrid) -> Result<()> {
    if a.pieces != b.pieces || (a.horizon - b.horizon).abs() > 1e-12 {
        return Err(Error::InvalidModel("contract and effort grids differ".into()));
    }
    Ok(())
}

/// Exact law of the output under a deterministic effort path held constant
/// on each piece: independent Gaussian increments plus deterministic costs.
#[derive(Clone, Debug)]
pub struct OutputLaw {
    pub grid: PieceGrid,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// `∫ k ds` over each piece.
    pub costs: Vec<DVector<f64>>,
}

impl OutputLaw {
    /// `efforts` holds one matrix per piece of the model's policy grid, or a
    /// single matrix used throughout.
    pub fn new(model: &FirmModel, efforts: &[EffortMatrix]) -> Result<Self> {
        model.require_state_free()?;
        let grid = model.policy_grid();
        if efforts.len() != 1 && efforts.len() != grid.pieces {
            return Err(Error::InvalidModel("effort path does not match the policy grid".into()));
        }
        let x0 = DVector::zeros(model.n_agents());
        let tc_b = model.drift().is_time_constant();
        let tc_k = model.cost().is_time_constant();
        let mut means = Vec::with_capacity(grid.pieces);
        let mut covariances = Vec::with_capacity(grid.pieces);
        let mut costs = Vec::with_capacity(grid.pieces);
        for k in 0..grid.pieces {
            let a = if efforts.len() == 1 { &efforts[0] } else { &efforts[k] };
            means.push(model.piece_integral(&grid, k, tc_b, |t| model.eval_drift(t, a, &x0)));
            let mut err = None;
            let c = model.piece_integral(&grid, k, tc_k, |t| match model.eval_cost(t, a, &x0) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    DVector::zeros(x0.len())
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            costs.push(c);
            covariances.push(model.volatility().piece_covariance(grid.sigma_piece(k)) * grid.length());
        }
        Ok(Self { grid, means, covariances, costs })
    }

    pub fn total_mean(&self) -> DVector<f64> {
        self.means.iter().fold(DVector::zeros(self.means[0].len()), |acc, m| acc + m)
    }

    pub fn total_cost(&self) -> DVector<f64> {
        self.costs.iter().fold(DVector::zeros(self.costs[0].len()), |acc, c| acc + c)
    }

    /// `ln E[exp(−r (c + Σ_k v_k·ΔX_k))]`.
    fn log_mgf(&self, r: f64, constant: f64, exposures: &[DVector<f64>]) -> f64 {
        let mut mean = constant;
        let mut var = 0.0;
        for ((v, m), cov) in exposures.iter().zip(&self.means).zip(&self.covariances) {
            mean += v.dot(m);
            var += v.dot(&(cov * v));
        }
        -r * mean + 0.5 * r * r * var
    }
}

/// Agent `i`'s expected CARA utility of `ξ^i + Γ_i(X_T) − ∫k^i`.
pub fn agent_value(model: &FirmModel, contract: &Contract, law: &OutputLaw, i: usize) -> Result<f64> {
    let (c, v) = contract.agent_exposure(model, &law.grid, i)?;
    let r = model.agent_risk_aversions()[i];
    Ok(-law.log_mgf(r, c - law.total_cost()[i], &v).exp())
}

/// Principal's expected CARA utility of `(X_T − ξ)·1`.
pub fn principal_value(model: &FirmModel, contract: &Contract, law: &OutputLaw) -> Result<f64> {
    let (c, v) = contract.principal_exposure(model, &law.grid)?;
    Ok(-law.log_mgf(model.principal_risk_aversion(), c, &v).exp())
}
