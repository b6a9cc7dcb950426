//! Gauss rules from the Jacobi matrix (Golub–Welsch) with a Newton polish of
//! nodes and Christoffel weights.

use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Clone, Debug, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Orthonormal polynomials `p̃_0..p̃_n` and `p̃_n'` at `x` for the recurrence
/// `β_{k+1} p̃_{k+1} = x p̃_k − β_k p̃_{k−1}`.
fn orthonormal_values(x: f64, n: usize, mu0: f64, beta: &dyn Fn(usize) -> f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0 / mu0.sqrt();
    let mut d_prev = 0.0;
    let mut d = 0.0;
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += p * p;
        let bk = if k == 0 { 0.0 } else { beta(k) };
        let b_next = beta(k + 1);
        let p_next = (x * p - bk * p_prev) / b_next;
        let d_next = (p + x * d - bk * d_prev) / b_next;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d, sum_sq)
}

fn golub_welsch(n: usize, mu0: f64, beta: &dyn Fn(usize) -> f64) -> GaussRule {
    assert!(n >= 1, "quadrature order must be at least 1");
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        jacobi[(k - 1, k)] = beta(k);
        jacobi[(k, k - 1)] = beta(k);
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, d, _) = orthonormal_values(*x, n, mu0, beta);
            if d != 0.0 && d.is_finite() {
                *x -= p / d;
            }
        }
        let (_, _, sum_sq) = orthonormal_values(*x, n, mu0, beta);
        weights.push(1.0 / sum_sq);
    }
    // Both weight functions used here are even.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GaussRule { nodes, weights }
}

/// Gauss–Legendre on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> GaussRule {
    golub_welsch(n, 2.0, &|k| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    })
}

/// Gauss–Hermite for the weight `e^{−x²}`.
pub fn gauss_hermite(n: usize) -> GaussRule {
    golub_welsch(n, std::f64::consts::PI.sqrt(), &|k| (k as f64 / 2.0).sqrt())
}

/// Rule for `E[f(ξ)]`, `ξ ~ N(0, 1)`.
pub fn standard_normal_rule(n: usize) -> GaussRule {
    let r = gauss_hermite(n);
    let s = std::f64::consts::PI.sqrt();
    GaussRule {
        nodes: r.nodes.iter().map(|x| x * std::f64::consts::SQRT_2).collect(),
        weights: r.weights.iter().map(|w| w / s).collect(),
    }
}

impl GaussRule {
    /// Integral over `[a, b]` of a Legendre rule mapped affinely.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
    }
}

/// Composite Gauss–Legendre with `pieces` equal panels on `[a, b]`.
pub fn composite_legendre<F: FnMut(f64) -> f64>(rule: &GaussRule, a: f64, b: f64, pieces: usize, mut f: F) -> f64 {
    let pieces = pieces.max(1);
    let h = (b - a) / pieces as f64;
    (0..pieces).map(|k| rule.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &mut f)).sum()
}

/// Tensor-product nodes of a one-dimensional standard normal rule in `dim`
/// dimensions, with log-weights. Visits `order^dim` points.
pub fn for_each_tensor_node<F: FnMut(&[f64], f64)>(rule: &GaussRule, dim: usize, mut f: F) {
    let m = rule.nodes.len();
    let log_w: Vec<f64> = rule.weights.iter().map(|w| w.ln()).collect();
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    loop {
        let mut lw = 0.0;
        for d in 0..dim {
            point[d] = rule.nodes[idx[d]];
            lw += log_w[idx[d]];
        }
        f(&point, lw);
        let mut d = 0;
        loop {
            if d == dim {
                return;
            }
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 64] {
            let r = gauss_legendre(n);
            assert_relative_eq!(r.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            for deg in 0..(2 * n).min(40) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got = r.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn normal_rule_reproduces_moments() {
        let r = standard_normal_rule(40);
        assert_relative_eq!(r.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        let mut dfact = 1.0;
        for k in (2..=20).step_by(2) {
            dfact *= (k - 1) as f64;
            let m: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k)).sum();
            assert_relative_eq!(m, dfact, max_relative = 1e-11);
        }
        let e: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * (0.7 * x).exp()).sum();
        assert_relative_eq!(e, (0.245f64).exp(), max_relative = 1e-13);
    }

    #[test]
    fn composite_rule_on_smooth_function() {
        let r = gauss_legendre(8);
        let got = composite_legendre(&r, 0.0, 3.0, 4, |t| t.sin());
        assert_relative_eq!(got, 1.0 - 3f64.cos(), epsilon = 1e-13);
    }

    #[test]
    fn tensor_nodes_cover_grid() {
        let r = standard_normal_rule(5);
        let mut count = 0;
        let mut total = 0.0;
        for_each_tensor_node(&r, 3, |p, lw| {
            assert_eq!(p.len(), 3);
            count += 1;
            total += lw.exp();
        });
        assert_eq!(count, 125);
        assert_relative_eq!(total, 1.0, epsilon = 1e-13);
    }
}
