//! Two-agent linear-quadratic benchmark: closed forms derived from the
//! canonical objectives, the textbook displays, and an entrywise comparison.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::first_best::fb_optimal_effort;
use crate::model::{EffortMatrix, LQBenchmark, ZMatrix};
use crate::second_best::{sb_best_response, sb_optimal_z};

fn weights(b: &LQBenchmark) -> [f64; 2] {
    let d = b.gammas[0] - b.gammas[1];
    [1.0 + d, 1.0 - d]
}

/// Drift sign of entry `(j, l)`: `+1` on the diagonal, `−1` off it.
fn sign(j: usize, l: usize) -> f64 {
    if j == l {
        1.0
    } else {
        -1.0
    }
}

/// First-best effort `a^{j,l} = ± q_j / k^{j,l}`.
pub fn lq_fb_effort(b: &LQBenchmark) -> EffortMatrix {
    let q = weights(b);
    let k = &b.cost_coeffs;
    EffortMatrix::from_matrix(DMatrix::from_fn(2, 2, |j, l| sign(j, l) * q[j] / k[j][l]))
}

/// First-best effort as printed in the textbook display.
pub fn display_fb_effort(b: &LQBenchmark) -> EffortMatrix {
    let [q1, q2] = weights(b);
    let k = &b.cost_coeffs;
    EffortMatrix::from_rows(&[&[q1 / k[0][0], q2 / k[0][1]], &[-q2 / k[1][0], -q1 / k[1][1]]])
}

/// Best response to `z`: `a^{j,l} = ± z^{j,l} / k^{j,l}`.
pub fn lq_sb_response(b: &LQBenchmark, z: &ZMatrix) -> EffortMatrix {
    let k = &b.cost_coeffs;
    EffortMatrix::from_matrix(DMatrix::from_fn(2, 2, |j, l| sign(j, l) * z.get(j, l) / k[j][l]))
}

/// Best response as printed: `z^{j,l} / k^{j,l}` with no sign.
pub fn display_sb_response(b: &LQBenchmark, z: &ZMatrix) -> EffortMatrix {
    let k = &b.cost_coeffs;
    EffortMatrix::from_matrix(DMatrix::from_fn(2, 2, |j, l| z.get(j, l) / k[j][l]))
}

/// Maximiser of `β`: row `j` solves a 2×2 linear system in closed form.
pub fn lq_z_star(b: &LQBenchmark) -> ZMatrix {
    let q = weights(b);
    let k = &b.cost_coeffs;
    let ra = b.agent_risk_aversions;
    let rp = b.principal_risk_aversion;
    let mut z = ZMatrix::zeros(2);
    for j in 0..2 {
        let s2 = b.sigmas[j] * b.sigmas[j];
        let c: Vec<f64> = (0..2).map(|l| 1.0 / k[j][l] + ra[l] * s2).collect();
        let inv_sum: f64 = c.iter().map(|c| 1.0 / c).sum();
        let lead: f64 = (0..2).map(|l| q[j] / (k[j][l] * c[l])).sum();
        let row_sum = (lead + rp * s2 * q[j] * inv_sum) / (1.0 + rp * s2 * inv_sum);
        for l in 0..2 {
            z.set(j, l, (q[j] / k[j][l] + rp * s2 * (q[j] - row_sum)) / c[l]);
        }
    }
    z
}

/// The textbook `z*` display with its `α^{i,j}` coefficients, taken literally.
pub fn display_z_star(b: &LQBenchmark) -> ZMatrix {
    let k = &b.cost_coeffs;
    let s2 = [b.sigmas[0].powi(2), b.sigmas[1].powi(2)];
    let ra = b.agent_risk_aversions;
    let rp = b.principal_risk_aversion;
    let g = b.gammas;
    let mut z = ZMatrix::zeros(2);
    for (i, j) in [(0, 1), (1, 0)] {
        let alpha = 1.0
            + s2[i] * (ra[i] + rp) * k[i][i]
            + (s2[j] * ra[i] + s2[i] * rp) * k[j][i]
            + s2[i] * ra[i] * (s2[j] * (ra[i] + rp) + s2[i] * rp) * k[j][i] * k[i][i];
        let dij = 1.0 + g[i] - g[j];
        let dji = 1.0 + g[j] - g[i];
        let zii = ((1.0 + k[i][i] * k[i][j] * rp * ra[i] * s2[0] * s2[1]) * dij
            + 2.0 * k[i][i] * k[i][j] * (rp * s2[i]).powi(2))
            / alpha;
        let zji = -((2.0 + s2[i] * k[i][i] * ra[i]) * dij + rp * s2[i] * k[i][j] * (1.0 + s2[i] * k[i][i] * (ra[i] + rp)) * dji)
            / alpha;
        z.set(i, i, zii);
        z.set(j, i, zji);
    }
    z
}

/// Derived quantities next to their printed counterparts.
#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub fb_effort: EffortMatrix,
    pub fb_effort_display: EffortMatrix,
    pub z_star: ZMatrix,
    pub z_star_closed_form: ZMatrix,
    pub z_star_display: ZMatrix,
    pub sb_effort: EffortMatrix,
    pub sb_effort_display: EffortMatrix,
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

impl BenchmarkReport {
    pub fn fb_effort_mismatch(&self) -> f64 {
        max_diff(self.fb_effort.matrix(), self.fb_effort_display.matrix())
    }

    pub fn z_star_mismatch(&self) -> f64 {
        max_diff(self.z_star.matrix(), self.z_star_display.matrix())
    }

    /// Solver against the derived closed form; should be at rounding level.
    pub fn z_star_closed_form_error(&self) -> f64 {
        max_diff(self.z_star.matrix(), self.z_star_closed_form.matrix())
    }

    pub fn sb_effort_mismatch(&self) -> f64 {
        max_diff(self.sb_effort.matrix(), self.sb_effort_display.matrix())
    }
}

/// Solves the benchmark numerically and lines up each printed closed form.
pub fn benchmark_report(b: &LQBenchmark) -> Result<BenchmarkReport> {
    let model = b.to_model()?;
    let fb_effort = fb_optimal_effort(&model, 0.0)?;
    let z_star = sb_optimal_z(&model, 0.0)?;
    let x0 = nalgebra::DVector::zeros(2);
    let sb_effort = sb_best_response(&model, 0.0, &z_star, &x0)?;
    Ok(BenchmarkReport {
        fb_effort_display: display_fb_effort(b),
        fb_effort,
        z_star_closed_form: lq_z_star(b),
        z_star_display: display_z_star(b),
        sb_effort_display: display_sb_response(b, &z_star),
        z_star,
        sb_effort,
    })
}
