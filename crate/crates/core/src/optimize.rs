//! Damped projected Newton minimiser with Armijo backtracking.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Iterates beyond this norm are reported as [`Error::Unbounded`].
    pub divergence_norm: f64,
    /// When no descent step exists (rounding floor), a projected gradient
    /// below this, relative to the starting gradient when that exceeds 1,
    /// is accepted as converged.
    pub stall_tol: f64,
    pub bounds: Option<(DVector<f64>, DVector<f64>)>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-10, max_iter: 200, divergence_norm: 1e8, stall_tol: 1e-7, bounds: None }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn project(x: &mut DVector<f64>, bounds: &Option<(DVector<f64>, DVector<f64>)>) {
    if let Some((lo, hi)) = bounds {
        for k in 0..x.len() {
            x[k] = x[k].clamp(lo[k], hi[k]);
        }
    }
}

/// Indices not pinned at a bound by an outward-pointing gradient.
fn free_set(x: &DVector<f64>, g: &DVector<f64>, bounds: &Option<(DVector<f64>, DVector<f64>)>) -> Vec<bool> {
    match bounds {
        None => vec![true; x.len()],
        Some((lo, hi)) => (0..x.len())
            .map(|k| !((x[k] <= lo[k] && g[k] > 0.0) || (x[k] >= hi[k] && g[k] < 0.0)))
            .collect(),
    }
}

fn projected_grad_norm(x: &DVector<f64>, g: &DVector<f64>, bounds: &Option<(DVector<f64>, DVector<f64>)>) -> f64 {
    let free = free_set(x, g, bounds);
    g.iter().zip(free).filter(|(_, f)| *f).map(|(v, _)| v * v).sum::<f64>().sqrt()
}

/// Solves `H d = −g` on the free coordinates, shifting `H` until it is
/// positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>, free: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..g.len()).filter(|k| free[*k]).collect();
    let m = idx.len();
    let mut d = DVector::zeros(g.len());
    if m == 0 {
        return d;
    }
    let hf = DMatrix::from_fn(m, m, |r, c| h[(idx[r], idx[c])]);
    let gf = DVector::from_fn(m, |r, _| g[idx[r]]);
    let scale = hf.amax().max(1.0);
    let mut shift = 0.0;
    for _ in 0..40 {
        let shifted = &hf + DMatrix::identity(m, m) * shift;
        if let Some(ch) = shifted.cholesky() {
            let sol = ch.solve(&(-&gf));
            if sol.iter().all(|v| v.is_finite()) {
                for (r, k) in idx.iter().enumerate() {
                    d[*k] = sol[r];
                }
                return d;
            }
        }
        shift = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
    }
    for k in idx {
        d[k] = -g[k];
    }
    d
}

/// Minimises `f` given its gradient and Hessian.
pub fn minimize<F, G, H>(f: F, grad: G, hess: H, x0: DVector<f64>, opts: &NewtonOptions) -> Result<NewtonResult>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
    H: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut x = x0;
    project(&mut x, &opts.bounds);
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::InvalidModel("objective is not finite at the starting point".into()));
    }
    let mut g = grad(&x);
    let mut gn = projected_grad_norm(&x, &g, &opts.bounds);
    let stall = opts.stall_tol * gn.max(1.0);
    for it in 0..opts.max_iter {
        if gn <= opts.grad_tol {
            return Ok(NewtonResult { x, value: fx, grad_norm: gn, iterations: it });
        }
        let free = free_set(&x, &g, &opts.bounds);
        let mask = DVector::from_fn(g.len(), |k, _| if free[k] { 1.0 } else { 0.0 });
        let newton = newton_direction(&hess(&x), &g, &free);
        let mut accepted = None;
        {
            // Near the optimum value differences drown in rounding; a full
            // Newton step that shrinks the gradient without raising the value
            // beyond that noise is taken regardless.
            let mut xn = &x + &newton;
            project(&mut xn, &opts.bounds);
            let fxn = f(&xn);
            let noise = 1e-12 * fx.abs().max(1.0);
            if fxn.is_finite() && fxn <= fx + noise && (fx - fxn).abs() <= noise {
                let gnn = projected_grad_norm(&xn, &grad(&xn), &opts.bounds);
                if gnn < gn {
                    accepted = Some((xn, fxn));
                }
            }
        }
        for direction in [newton, -g.component_mul(&mask)] {
            if accepted.is_some() {
                break;
            }
            let mut alpha = 1.0;
            for _ in 0..60 {
                let mut xn = &x + &direction * alpha;
                project(&mut xn, &opts.bounds);
                let fxn = f(&xn);
                let decrease = g.dot(&(&xn - &x));
                if fxn.is_finite() && fxn <= fx + 1e-4 * decrease && fxn < fx {
                    let (mut xb, mut fb) = (xn, fxn);
                    if alpha == 1.0 {
                        // Expand along directions of sustained decrease; this is
                        // what exposes objectives that are unbounded below.
                        let mut beta = 2.0;
                        for _ in 0..60 {
                            let mut xe = &x + &direction * beta;
                            project(&mut xe, &opts.bounds);
                            let fe = f(&xe);
                            if !(fe.is_finite() && fe < fb) {
                                break;
                            }
                            xb = xe;
                            fb = fe;
                            if xb.norm() > opts.divergence_norm {
                                break;
                            }
                            beta *= 2.0;
                        }
                    }
                    accepted = Some((xb, fb));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((xn, fxn)) = accepted else {
            if gn <= stall {
                return Ok(NewtonResult { x, value: fx, grad_norm: gn, iterations: it });
            }
            return Err(Error::Stagnation { best: x.iter().copied().collect(), grad_norm: gn, iterations: it });
        };
        if xn.norm() > opts.divergence_norm || fxn < -1e300 {
            return Err(Error::Unbounded);
        }
        x = xn;
        fx = fxn;
        g = grad(&x);
        gn = projected_grad_norm(&x, &g, &opts.bounds);
    }
    if gn <= opts.grad_tol {
        return Ok(NewtonResult { x, value: fx, grad_norm: gn, iterations: opts.max_iter });
    }
    Err(Error::Stagnation { best: x.iter().copied().collect(), grad_norm: gn, iterations: opts.max_iter })
}

/// Central-difference gradient with relative step `h·max(1, |x_k|)`.
pub fn fd_gradient<F: Fn(&DVector<f64>) -> f64>(f: &F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut xp = x.clone();
    DVector::from_fn(x.len(), |k, _| {
        let s = h * x[k].abs().max(1.0);
        xp[k] = x[k] + s;
        let fp = f(&xp);
        xp[k] = x[k] - s;
        let fm = f(&xp);
        xp[k] = x[k];
        (fp - fm) / (2.0 * s)
    })
}

/// Symmetrised central-difference Jacobian of a gradient map.
pub fn fd_jacobian_of<G: Fn(&DVector<f64>) -> DVector<f64>>(g: &G, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for k in 0..n {
        let s = h * x[k].abs().max(1.0);
        xp[k] = x[k] + s;
        let gp = g(&xp);
        xp[k] = x[k] - s;
        let gm = g(&xp);
        xp[k] = x[k];
        jac.set_column(k, &((gp - gm) / (2.0 * s)));
    }
    (&jac + jac.transpose()) * 0.5
}
