//! Quasi-Newton (BFGS) ascent with backtracking line search.
//!
//! The objective may refuse a point by returning `None`; the line search
//! treats that as a rejected step and shrinks.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub max_iter: usize,
    /// Converged once the gradient sup-norm drops below this.
    pub grad_tol: f64,
    /// Converged once an accepted (or attempted) step is shorter than this.
    pub step_tol: f64,
    /// Longest step, in sup-norm, tried by the line search.
    pub max_step: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options { max_iter: 200, grad_tol: 1e-6, step_tol: 1e-9, max_step: 2.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(libm::fabs(*x)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `f`, which returns the value and gradient or `None` when the
/// point is outside the domain. Returns `None` if `x0` itself is infeasible.
pub fn maximize<F>(mut f: F, x0: &[f64], opts: Options) -> Option<Outcome>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let m = x0.len();
    let mut x = x0.to_vec();
    let (mut val, mut grad) = f(&x)?;
    // Inverse Hessian of the negated objective.
    let mut h = identity(m);
    let mut scaled = false;

    for it in 0..opts.max_iter {
        if sup_norm(&grad) < opts.grad_tol {
            return Some(Outcome { x, value: val, grad, iterations: it, converged: true });
        }
        // Ascent direction d = H ∇f.
        let mut d = mat_vec(&h, &grad, m);
        if dot(&d, &grad) <= 0.0 {
            h = identity(m);
            d = grad.clone();
        }
        let dn = sup_norm(&d);
        if dn > opts.max_step {
            for v in &mut d {
                *v *= opts.max_step / dn;
            }
        }
        let slope = dot(&d, &grad);
        let mut t = 1.0;
        let mut accepted = None;
        while t * sup_norm(&d) >= opts.step_tol {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if let Some((v, g)) = f(&trial) {
                if v.is_finite() && v >= val + 1e-4 * t * slope {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((x_new, v_new, g_new)) = accepted else {
            // No improving step above the step tolerance.
            return Some(Outcome { x, value: val, grad, iterations: it + 1, converged: true });
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        // Gradient change of the negated objective.
        let y: Vec<f64> = grad.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 {
            if !scaled {
                let scale = sy / dot(&y, &y);
                h = identity(m);
                for i in 0..m {
                    h[i * m + i] = scale;
                }
                scaled = true;
            }
            bfgs_update(&mut h, &s, &y, sy, m);
        }
        x = x_new;
        val = v_new;
        grad = g_new;
        if sup_norm(&s) < opts.step_tol {
            return Some(Outcome { x, value: val, grad, iterations: it + 1, converged: true });
        }
    }
    let converged = sup_norm(&grad) < opts.grad_tol;
    Some(Outcome { x, value: val, grad, iterations: opts.max_iter, converged })
}

fn identity(m: usize) -> Vec<f64> {
    let mut h = vec![0.0; m * m];
    for i in 0..m {
        h[i * m + i] = 1.0;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64], m: usize) -> Vec<f64> {
    (0..m).map(|i| (0..m).map(|j| h[i * m + j] * v[j]).sum()).collect()
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, m: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, m);
    let yhy = dot(y, &hy);
    for i in 0..m {
        for j in 0..m {
            h[i * m + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn maximizes_concave_quadratic() {
        let f = |x: &[f64]| {
            let a = x[0] - 1.0;
            let b = x[1] + 2.0;
            Some((-(a * a) - 3.0 * b * b - a * b, vec![-2.0 * a - b, -6.0 * b - a]))
        };
        let out = maximize(f, &[0.0, 0.0], Options::default()).unwrap();
        assert!(out.converged);
        assert_abs_diff_eq!(out.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out.x[1], -2.0, epsilon = 1e-6);
    }

    #[test]
    fn respects_domain() {
        // log(x) - x on x > 0, maximum at 1.
        let f = |x: &[f64]| (x[0] > 0.0).then(|| (libm::log(x[0]) - x[0], vec![1.0 / x[0] - 1.0]));
        let out = maximize(f, &[0.05], Options::default()).unwrap();
        assert_abs_diff_eq!(out.x[0], 1.0, epsilon = 1e-6);
        assert!(maximize(f, &[-1.0], Options::default()).is_none());
    }
}
