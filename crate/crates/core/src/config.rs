//! TOML problem descriptions.
//!
//! A config holds either a general `[model]` (linear drift, quadratic cost)
//! or the two-agent `[lq_benchmark]`, plus optional sections for the
//! general-comparison first best and for simulation, verification,
//! recruitment and sweep settings. Unknown keys are rejected.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::general_fb::{GeneralFbSpec, TimePath, DEFAULT_ORDER};
use crate::model::{
    ComparisonSpec, CostSpec, DriftSpec, FirmModel, GrowthBounds, LQBenchmark, LinearComparison, ModelSpec,
    Volatility,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonKind {
    #[default]
    Linear,
    Capped,
    Smooth,
}

fn comparison(kind: ComparisonKind, gammas: &[f64], scale: Option<f64>) -> Result<ComparisonSpec> {
    let g = DVector::from_column_slice(gammas);
    let need_scale = || match scale {
        Some(s) if s > 0.0 && s.is_finite() => Ok(s),
        _ => Err(Error::Config("comparison_scale must be positive for capped/smooth comparison".into())),
    };
    if gammas.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Config("competition indices must be non-negative".into()));
    }
    Ok(match kind {
        ComparisonKind::Linear => ComparisonSpec::Linear(LinearComparison::new(g)?),
        ComparisonKind::Capped => ComparisonSpec::Capped { gammas: g, cap: need_scale()? },
        ComparisonKind::Smooth => ComparisonSpec::Smooth { gammas: g, scale: need_scale()? },
    })
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

fn vector(v: &Option<Vec<f64>>, n: usize, what: &str) -> Result<DVector<f64>> {
    match v {
        None => Ok(DVector::zeros(n)),
        Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
        Some(_) => Err(Error::Config(format!("{what} must have {n} entries"))),
    }
}

/// General model: `b = D∘a row sums + offset`, `k = C∘a² column sums / 2 + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub horizon: f64,
    /// Constant volatility matrix.
    pub sigma: Option<Vec<Vec<f64>>>,
    /// Volatility on equal pieces of `[0, T]`.
    pub sigma_pieces: Option<Vec<Vec<Vec<f64>>>>,
    pub drift_loadings: Vec<Vec<f64>>,
    pub drift_offset: Option<Vec<f64>>,
    pub cost_coeffs: Vec<Vec<f64>>,
    pub cost_offset: Option<Vec<f64>>,
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub comparison: ComparisonKind,
    pub comparison_scale: Option<f64>,
    pub agent_risk_aversions: Vec<f64>,
    pub principal_risk_aversion: f64,
    pub reservation_utilities: Vec<f64>,
}

impl ModelSection {
    pub fn to_model(&self) -> Result<FirmModel> {
        let n = self.gammas.len();
        if n == 0 {
            return Err(Error::Config("gammas must list one index per agent".into()));
        }
        let volatility = match (&self.sigma, &self.sigma_pieces) {
            (Some(s), None) => Volatility::constant(matrix(s, n, "sigma")?)?,
            (None, Some(p)) if !p.is_empty() => {
                Volatility::piecewise(p.iter().map(|s| matrix(s, n, "sigma_pieces entry")).collect::<Result<_>>()?)?
            }
            _ => return Err(Error::Config("give exactly one of sigma and sigma_pieces".into())),
        };
        let check = |v: &[f64], what: &str| {
            if v.len() == n {
                Ok(DVector::from_column_slice(v))
            } else {
                Err(Error::Config(format!("{what} must have {n} entries")))
            }
        };
        ModelSpec {
            n_agents: n,
            horizon: self.horizon,
            volatility,
            drift: DriftSpec::Linear {
                loadings: matrix(&self.drift_loadings, n, "drift_loadings")?,
                offset: vector(&self.drift_offset, n, "drift_offset")?,
            },
            cost: CostSpec::Quadratic {
                coeffs: matrix(&self.cost_coeffs, n, "cost_coeffs")?,
                offset: vector(&self.cost_offset, n, "cost_offset")?,
            },
            comparison: comparison(self.comparison, &self.gammas, self.comparison_scale)?,
            agent_risk_aversions: check(&self.agent_risk_aversions, "agent_risk_aversions")?,
            principal_risk_aversion: self.principal_risk_aversion,
            reservation_utilities: check(&self.reservation_utilities, "reservation_utilities")?,
            action_sets: vec![None; n],
            growth: GrowthBounds::default(),
        }
        .build()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    /// `[[k¹¹, k¹²], [k²¹, k²²]]`.
    pub cost_coeffs: [[f64; 2]; 2],
    pub sigmas: [f64; 2],
    pub gammas: [f64; 2],
    pub agent_risk_aversions: [f64; 2],
    pub principal_risk_aversion: f64,
    pub horizon: f64,
    pub reservation_utilities: [f64; 2],
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self::from(&LQBenchmark::default())
    }
}

impl From<&LQBenchmark> for BenchmarkSection {
    fn from(b: &LQBenchmark) -> Self {
        Self {
            cost_coeffs: b.cost_coeffs,
            sigmas: b.sigmas,
            gammas: b.gammas,
            agent_risk_aversions: b.agent_risk_aversions,
            principal_risk_aversion: b.principal_risk_aversion,
            horizon: b.horizon,
            reservation_utilities: b.reservation_utilities,
        }
    }
}

impl BenchmarkSection {
    pub fn to_benchmark(&self) -> LQBenchmark {
        LQBenchmark {
            cost_coeffs: self.cost_coeffs,
            sigmas: self.sigmas,
            gammas: self.gammas,
            agent_risk_aversions: self.agent_risk_aversions,
            principal_risk_aversion: self.principal_risk_aversion,
            horizon: self.horizon,
            reservation_utilities: self.reservation_utilities,
        }
    }
}

/// First best with a general comparison map: `b^j = B Σ_l a^{j,l} + b̃^j(t)`,
/// `k^i = K/2 ‖a^{:,i}‖² + k̃^i(t)`, `Σ = σ I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralFbSection {
    pub b: f64,
    pub k: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub comparison: ComparisonKind,
    pub comparison_scale: Option<f64>,
    pub agent_risk_aversions: Vec<f64>,
    pub principal_risk_aversion: f64,
    /// Constant offsets; `*_pieces` gives values on equal pieces of `[0, T]`.
    pub btilde: Option<Vec<f64>>,
    pub btilde_pieces: Option<Vec<Vec<f64>>>,
    pub ktilde: Option<Vec<f64>>,
    pub ktilde_pieces: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_x_lo")]
    pub x_lo: f64,
    #[serde(default = "default_x_hi")]
    pub x_hi: f64,
    #[serde(default = "default_x_count")]
    pub x_count: usize,
    #[serde(default = "default_order")]
    pub quad_order: usize,
}

fn default_times() -> Vec<f64> {
    vec![0.0]
}
fn default_x_lo() -> f64 {
    -1.0
}
fn default_x_hi() -> f64 {
    1.0
}
fn default_x_count() -> usize {
    3
}
fn default_order() -> usize {
    DEFAULT_ORDER
}

fn time_path(constant: &Option<Vec<f64>>, pieces: &Option<Vec<Vec<f64>>>, n: usize, what: &str) -> Result<TimePath> {
    match (constant, pieces) {
        (None, None) => Ok(TimePath::Constant(DVector::zeros(n))),
        (Some(_), None) => Ok(TimePath::Constant(vector(constant, n, what)?)),
        (None, Some(p)) if !p.is_empty() => Ok(TimePath::Piecewise(
            p.iter().map(|v| vector(&Some(v.clone()), n, what)).collect::<Result<_>>()?,
        )),
        _ => Err(Error::Config(format!("give at most one of {what} and {what}_pieces"))),
    }
}

impl GeneralFbSection {
    /// The model supplying dimension, horizon and risk aversions, and the
    /// drift/cost/comparison specification.
    pub fn to_parts(&self) -> Result<(FirmModel, GeneralFbSpec)> {
        let n = self.gammas.len();
        if n == 0 || self.agent_risk_aversions.len() != n {
            return Err(Error::Config("gammas and agent_risk_aversions must have one entry per agent".into()));
        }
        let cmp = comparison(self.comparison, &self.gammas, self.comparison_scale)?;
        let spec = GeneralFbSpec {
            b: self.b,
            k: self.k,
            sigma: self.sigma,
            btilde: time_path(&self.btilde, &self.btilde_pieces, n, "btilde")?,
            ktilde: time_path(&self.ktilde, &self.ktilde_pieces, n, "ktilde")?,
            comparison: cmp.clone(),
        };
        if !(self.sigma > 0.0) || !(self.k > 0.0) {
            return Err(Error::Config("sigma and k must be positive".into()));
        }
        let model = ModelSpec {
            n_agents: n,
            horizon: self.horizon,
            volatility: Volatility::scalar(n, self.sigma)?,
            drift: DriftSpec::Linear { loadings: DMatrix::from_element(n, n, self.b), offset: DVector::zeros(n) },
            cost: CostSpec::Quadratic { coeffs: DMatrix::from_element(n, n, self.k), offset: DVector::zeros(n) },
            comparison: cmp,
            agent_risk_aversions: DVector::from_column_slice(&self.agent_risk_aversions),
            principal_risk_aversion: self.principal_risk_aversion,
            reservation_utilities: DVector::from_element(n, -1.0),
            action_sets: vec![None; n],
            growth: GrowthBounds::default(),
        }
        .build()?;
        spec.validate(&model)?;
        Ok((model, spec))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractChoice {
    FirstBest,
    #[default]
    SecondBest,
    /// Flat zero wage.
    Zero,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulationChoice {
    Strong,
    Weak,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub contract: ContractChoice,
    pub formulation: FormulationChoice,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { n_paths: 100_000, n_steps: 256, seed: 0, contract: ContractChoice::SecondBest, formulation: FormulationChoice::Both }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub contract: ContractChoice,
    /// Added to every fixed wage before verification.
    pub contract_shift: f64,
    pub deviations: usize,
    pub deviation_steps: Vec<f64>,
    /// Fractions of the horizon.
    pub checkpoints: Vec<f64>,
    pub gain_se: f64,
    pub equality_se: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            contract: ContractChoice::SecondBest,
            contract_shift: 0.0,
            deviations: 64,
            deviation_steps: vec![0.1, 0.25, 0.5, 1.0],
            checkpoints: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            gain_se: 2.0,
            equality_se: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecruitSection {
    pub d_lo: f64,
    pub d_hi: f64,
    pub d_count: usize,
}

impl Default for RecruitSection {
    fn default() -> Self {
        Self { d_lo: -3.0, d_hi: 3.0, d_count: 601 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Scalar outputs to tabulate; empty means all.
    pub quantities: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: Option<ModelSection>,
    pub lq_benchmark: Option<BenchmarkSection>,
    pub general_fb: Option<GeneralFbSection>,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub recruit: RecruitSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    /// SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The benchmark, when the config describes one (the default when no
    /// model is given).
    pub fn benchmark(&self) -> Result<Option<LQBenchmark>> {
        match (&self.model, &self.lq_benchmark) {
            (Some(_), Some(_)) => Err(Error::Config("give at most one of [model] and [lq_benchmark]".into())),
            (Some(_), None) => Ok(None),
            (None, Some(b)) => Ok(Some(b.to_benchmark())),
            (None, None) => Ok(Some(LQBenchmark::default())),
        }
    }

    pub fn firm_model(&self) -> Result<FirmModel> {
        match self.benchmark()? {
            Some(b) => b.to_model(),
            None => self.model.as_ref().expect("checked above").to_model(),
        }
    }

    /// Sets a dotted key such as `lq_benchmark.gammas.0` and re-validates.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Config> {
        let mut base = self.clone();
        if base.model.is_none() && base.lq_benchmark.is_none() {
            base.lq_benchmark = Some(BenchmarkSection::from(&LQBenchmark::default()));
        }
        let mut doc = toml::Value::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        let mut node = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (depth, part) in parts.iter().enumerate() {
            let last = depth + 1 == parts.len();
            node = match node {
                toml::Value::Table(t) => {
                    if !t.contains_key(*part) {
                        return Err(Error::Config(format!("unknown key `{key}`")));
                    }
                    t.get_mut(*part).expect("present")
                }
                toml::Value::Array(a) => {
                    let idx: usize = part.parse().map_err(|_| Error::Config(format!("`{part}` in `{key}` is not an index")))?;
                    a.get_mut(idx).ok_or_else(|| Error::Config(format!("index {idx} out of range in `{key}`")))?
                }
                _ => return Err(Error::Config(format!("`{key}` descends into a scalar"))),
            };
            if last {
                *node = match node {
                    toml::Value::Integer(_) if value.fract() == 0.0 && value >= 0.0 => toml::Value::Integer(value as i64),
                    toml::Value::Float(_) | toml::Value::Integer(_) => toml::Value::Float(value),
                    _ => return Err(Error::Config(format!("`{key}` is not numeric"))),
                };
            }
        }
        let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
        Config::from_toml(&text)
    }
}
