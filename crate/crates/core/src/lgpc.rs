//! Local Gaussian partial correlation `α(z)` from a local correlation
//! matrix, its gradient with respect to the pair correlations, and
//! delta-method standard errors.
//!
//! With `Σ = R₁₁ − R₁₂ R₂₂⁻¹ R₂₁` the 2×2 partial covariance of the two
//! target variables given the rest, `α = Σ₁₂ / √(Σ₁₁ Σ₂₂)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::linalg::{pair_indices, Matrix};
use crate::locallik::{gaussian_density, local_score, LocalLikelihood};
use crate::loccor::{LocalCorrelationEstimator, Method, PointDiagnostics};
use crate::normal;
use crate::{Error, Result};

/// `∫ K²` for the bivariate standard Gaussian kernel.
pub const GAUSSIAN_KERNEL_SQ_INTEGRAL_2D: f64 = 1.0 / (4.0 * PI);

/// Index order placing the two targets first and the conditioners after.
fn partition_order(p: usize, targets: (usize, usize)) -> Result<Vec<usize>> {
    let (a, b) = targets;
    if a == b || a >= p || b >= p {
        return Err(Error::invalid("targets must be two distinct variables"));
    }
    let mut order = vec![a, b];
    order.extend((0..p).filter(|&i| i != a && i != b));
    Ok(order)
}

struct Partition {
    sigma: Matrix,
    /// `R₂₂⁻¹ R₂₁`, `(p−2)×2`.
    c: Matrix,
    order: Vec<usize>,
}

fn partition(r: &Matrix, targets: (usize, usize)) -> Result<Partition> {
    let p = r.rows();
    let order = partition_order(p, targets)?;
    let t = &order[..2];
    let rest = &order[2..];
    let r11 = r.select(t, t);
    if rest.is_empty() {
        return Ok(Partition { sigma: r11, c: Matrix::zeros(0, 2), order });
    }
    let r22 = r.select(rest, rest);
    let r21 = r.select(rest, t);
    let r22_inv = r22.spd_inverse().ok_or(Error::SingularConditioning)?.0;
    let c = r22_inv.mul(&r21);
    let sigma = r11.sub(&r21.transpose().mul(&c));
    Ok(Partition { sigma, c, order })
}

/// Partial covariance matrix of the targets given all other variables.
pub fn partial_cov(r: &Matrix, targets: (usize, usize)) -> Result<Matrix> {
    let part = partition(r, targets)?;
    if !(part.sigma[(0, 0)] > 0.0 && part.sigma[(1, 1)] > 0.0) {
        return Err(Error::SingularConditioning);
    }
    Ok(part.sigma)
}

fn alpha_of(sigma: &Matrix) -> f64 {
    (sigma[(0, 1)] / libm::sqrt(sigma[(0, 0)] * sigma[(1, 1)])).clamp(-1.0, 1.0)
}

/// Local Gaussian partial correlation between `targets` given the rest.
pub fn lgpc_from_r(r: &Matrix, targets: (usize, usize)) -> Result<f64> {
    Ok(alpha_of(&partial_cov(r, targets)?))
}

/// Closed form for three variables:
/// `(ρ₁₂ − ρ₁₃ρ₂₃) / (√(1−ρ₁₃²) √(1−ρ₂₃²))`.
pub fn lgpc_scalar(r12: f64, r13: f64, r23: f64) -> f64 {
    (r12 - r13 * r23) / (libm::sqrt(1.0 - r13 * r13) * libm::sqrt(1.0 - r23 * r23))
}

/// `∂α/∂ρ_jk` for every pair `(j, k)` of the `p×p` matrix, in row-major
/// pair order.
pub fn lgpc_gradient(r: &Matrix, targets: (usize, usize)) -> Result<Vec<f64>> {
    let p = r.rows();
    let part = partition(r, targets)?;
    let s = &part.sigma;
    let (s11, s22, s12) = (s[(0, 0)], s[(1, 1)], s[(0, 1)]);
    if !(s11 > 0.0 && s22 > 0.0) {
        return Err(Error::SingularConditioning);
    }
    let root = libm::sqrt(s11 * s22);
    let alpha = s12 / root;
    let mut pos = vec![0usize; p];
    for (k, &v) in part.order.iter().enumerate() {
        pos[v] = k;
    }
    let c = &part.c;
    let grad = pair_indices(p)
        .map(|(a, b)| {
            let (pa, pb) = (pos[a].min(pos[b]), pos[a].max(pos[b]));
            // Derivative of the partial covariance (entries 11, 22, 12).
            let (d11, d22, d12) = if pb < 2 {
                // Entry of R₁₁.
                (0.0, 0.0, 1.0)
            } else if pa < 2 {
                // Entry of the cross block: −(E₁₂C + CᵀE₂₁).
                let i = pa;
                let j = pb - 2;
                let d = |x: usize, y: usize| -((x == i) as u8 as f64 * c[(j, y)] + (y == i) as u8 as f64 * c[(j, x)]);
                (d(0, 0), d(1, 1), d(0, 1))
            } else {
                // Entry of R₂₂: Cᵀ E₂₂ C.
                let (i, j) = (pa - 2, pb - 2);
                let d = |x: usize, y: usize| c[(i, x)] * c[(j, y)] + c[(j, x)] * c[(i, y)];
                (d(0, 0), d(1, 1), d(0, 1))
            };
            d12 / root - 0.5 * alpha * (d11 / s11 + d22 / s22)
        })
        .collect();
    Ok(grad)
}

/// Inputs for one pair's contribution to the pairwise variance.
#[derive(Debug, Clone, Copy)]
pub struct PairTerm {
    /// Evaluation coordinates `(z_j, z_k)` of the pair.
    pub point: [f64; 2],
    pub rho: f64,
    pub bandwidths: [f64; 2],
    /// `∂α/∂ρ` for this pair.
    pub gradient: f64,
}

/// Asymptotic variance `Ω` of one bivariate local correlation, scaled by
/// `n b_j b_k`: `∫K² / (u² ψ)`, the model density standing in for the
/// unknown pair density.
pub fn pair_omega(point: [f64; 2], rho: f64) -> Result<f64> {
    let r = Matrix::correlation_from_pairs(2, &[rho]);
    let (r_inv, _) = r.spd_inverse().ok_or(Error::NotPositiveDefinite)?;
    let u = local_score(&point, &r_inv)[0];
    let psi = gaussian_density(&point, &r).ok_or(Error::NotPositiveDefinite)?;
    if !(libm::fabs(u) > 1e-10) || !(psi > 0.0) {
        return Err(Error::VarianceUnavailable("local score vanishes at the evaluation point"));
    }
    Ok(GAUSSIAN_KERNEL_SQ_INTEGRAL_2D / (u * u * psi))
}

/// Delta-method standard error of `α̂` for the pairwise estimate, using the
/// diagonal asymptotic covariance of the pair correlations.
pub fn variance_pairwise(terms: &[PairTerm], n: usize) -> Result<f64> {
    let mut var = 0.0;
    for t in terms {
        if t.gradient == 0.0 {
            continue;
        }
        let omega = pair_omega(t.point, t.rho)?;
        var += t.gradient * t.gradient * omega / (n as f64 * t.bandwidths[0] * t.bandwidths[1]);
    }
    Ok(libm::sqrt(var))
}

/// Sandwich covariance `Ĵ⁻¹ M̂ Ĵ⁻¹ / n` of the local correlations fitted at
/// `z`, with `Ĵ` the negated Hessian of the local likelihood and `M̂` the
/// empirical covariance of the kernel-weighted local scores.
pub fn sandwich_covariance(problem: &LocalLikelihood<'_>, z: &[f64], rho: &[f64]) -> Result<Matrix> {
    let d = problem.dim();
    let r = Matrix::correlation_from_pairs(d, rho);
    let moments = problem.moments(z);
    let hess = moments.hessian(&r).ok_or(Error::NotPositiveDefinite)?;
    let j_inv = hess
        .scale(-1.0)
        .inverse()
        .ok_or(Error::VarianceUnavailable("local information matrix is singular"))?;
    let (r_inv, _) = r.spd_inverse().ok_or(Error::NotPositiveDefinite)?;
    let n = problem.n();
    let m = rho.len();
    let w = problem.weights(z);
    let mut mean = vec![0.0; m];
    let mut outer = Matrix::zeros(m, m);
    let mut zi = vec![0.0; d];
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        for (j, col) in problem.columns().iter().enumerate() {
            zi[j] = col[i];
        }
        let u = local_score(&zi, &r_inv);
        for a in 0..m {
            mean[a] += wi * u[a];
            for b in 0..m {
                outer[(a, b)] += wi * wi * u[a] * u[b];
            }
        }
    }
    let nf = n as f64;
    let mut mhat = outer.scale(1.0 / nf);
    for a in 0..m {
        for b in 0..m {
            mhat[(a, b)] -= mean[a] * mean[b] / (nf * nf);
        }
    }
    Ok(j_inv.mul(&mhat).mul(&j_inv.transpose()).scale(1.0 / nf))
}

/// Delta-method standard error of `α̂` for the trivariate estimate.
pub fn variance_trivariate(problem: &LocalLikelihood<'_>, z: &[f64], rho: &[f64], gradient: &[f64]) -> Result<f64> {
    let cov = sandwich_covariance(problem, z, rho)?;
    let v = cov.quad_form(gradient);
    if !(v >= 0.0) {
        return Err(Error::VarianceUnavailable("sandwich variance is not positive"));
    }
    Ok(libm::sqrt(v))
}

/// `α ± Φ⁻¹(1 − (1−level)/2) · se`, clipped to `[−1, 1]`.
pub fn confidence_band(alpha: f64, std_err: f64, level: f64) -> (f64, f64) {
    let q = normal::quantile(1.0 - (1.0 - level) / 2.0);
    ((alpha - q * std_err).max(-1.0), (alpha + q * std_err).min(1.0))
}

/// `α̂` at one point with its uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCorrelationEstimate {
    pub alpha: f64,
    pub point: Vec<f64>,
    pub x_point: Option<Vec<f64>>,
    pub std_err: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub gradient: Vec<f64>,
    pub method: Method,
    pub diagnostics: PointDiagnostics,
}

/// Estimates `α̂(z)` for variables 0 and 1 given the rest, with a
/// confidence band at `level` where a variance estimate is available.
pub fn estimate_partial_correlation(
    est: &LocalCorrelationEstimator<'_>,
    z: &[f64],
    level: f64,
) -> Result<PartialCorrelationEstimate> {
    let lc = est.estimate_or_global(z, None)?;
    let alpha = lgpc_from_r(&lc.matrix, (0, 1))?;
    let gradient = lgpc_gradient(&lc.matrix, (0, 1))?;
    let std_err = match est.method() {
        Method::Trivariate => match (&lc.fits.first(), est.joint_problem()) {
            (Some(Some(fit)), Some(problem)) if fit.converged => {
                variance_trivariate(problem, z, &fit.rho, &gradient).ok()
            }
            _ => None,
        },
        Method::Pairwise => {
            if lc.diagnostics.repaired || lc.fits.len() != gradient.len() {
                None
            } else {
                let terms: Option<Vec<PairTerm>> = pair_indices(est.p())
                    .zip(&lc.fits)
                    .zip(&gradient)
                    .map(|(((j, k), fit), &g)| {
                        let fit = fit.as_ref()?;
                        let problem = est.pair_problem(j, k)?;
                        let bw = problem.bandwidth();
                        Some(PairTerm { point: [z[j], z[k]], rho: fit.rho[0], bandwidths: [bw[0], bw[1]], gradient: g })
                    })
                    .collect();
                let n = est.pair_problem(0, 1).map_or(0, |p| p.n());
                terms.and_then(|t| variance_pairwise(&t, n).ok())
            }
        }
    };
    let (ci_low, ci_high) = match std_err {
        Some(se) => {
            let (lo, hi) = confidence_band(alpha, se, level);
            (Some(lo), Some(hi))
        }
        None => (None, None),
    };
    Ok(PartialCorrelationEstimate {
        alpha,
        point: z.to_vec(),
        x_point: None,
        std_err,
        ci_low,
        ci_high,
        gradient,
        method: est.method(),
        diagnostics: lc.diagnostics,
    })
}

/// [`estimate_partial_correlation`] at every point, evaluated in parallel.
pub fn partial_correlation_map(
    est: &LocalCorrelationEstimator<'_>,
    points: &[Vec<f64>],
    level: f64,
) -> Vec<Result<PartialCorrelationEstimate>> {
    crate::par::map_indices(points.len(), |i| estimate_partial_correlation(est, &points[i], level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn partial_cov_examples() {
        let r = Matrix::correlation_from_pairs(3, &[0.4, 0.0, 0.0]);
        let s = partial_cov(&r, (0, 1)).unwrap();
        assert_eq!(s, r.select(&[0, 1], &[0, 1]));
        let r = Matrix::correlation_from_pairs(3, &[0.5, 0.6, 0.6]);
        let s = partial_cov(&r, (0, 1)).unwrap();
        assert_abs_diff_eq!(s[(0, 0)], 0.64, epsilon = 1e-15);
        assert_abs_diff_eq!(s[(1, 1)], 0.64, epsilon = 1e-15);
        assert_abs_diff_eq!(s[(0, 1)], 0.14, epsilon = 1e-15);
    }

    #[test]
    fn lgpc_examples() {
        let r = Matrix::correlation_from_pairs(3, &[0.5, 0.0, 0.0]);
        assert_eq!(lgpc_from_r(&r, (0, 1)).unwrap(), 0.5);
        let r = Matrix::correlation_from_pairs(3, &[0.3, 0.6, 0.6]);
        assert_abs_diff_eq!(lgpc_from_r(&r, (0, 1)).unwrap(), -0.09375, epsilon = 1e-15);
        assert_abs_diff_eq!(lgpc_scalar(0.3, 0.6, 0.6), -0.09375, epsilon = 1e-15);
        let g = lgpc_gradient(&Matrix::correlation_from_pairs(3, &[0.2, 0.0, 0.0]), (0, 1)).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_conditioning_detected() {
        let r = Matrix::correlation_from_pairs(4, &[0.1, 0.2, 0.3, 0.2, 0.1, 1.0]);
        assert_eq!(partial_cov(&r, (0, 1)), Err(Error::SingularConditioning));
        assert!(partial_cov(&r, (0, 0)).is_err());
    }

    #[test]
    fn band_examples() {
        let (lo, hi) = confidence_band(0.0, 0.1, 0.95);
        assert_abs_diff_eq!(lo, -0.195_996_398_454_005_4, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.195_996_398_454_005_4, epsilon = 1e-12);
        assert_eq!(confidence_band(0.3, 0.0, 0.95), (0.3, 0.3));
        assert_eq!(confidence_band(0.95, 0.1, 0.95).1, 1.0);
    }

    #[test]
    fn kernel_square_integral() {
        assert_abs_diff_eq!(GAUSSIAN_KERNEL_SQ_INTEGRAL_2D, 0.079_577_471_545_947_67, epsilon = 1e-15);
        assert!(matches!(pair_omega([0.0, 0.0], 0.0), Err(Error::VarianceUnavailable(_))));
    }

    fn random_correlation(p: usize, seed: u64) -> Matrix {
        // Normalized Gram matrix of random vectors.
        let mut state = seed;
        let mut next = || {
            state = crate::stream::mix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let v: Vec<Vec<f64>> = (0..p).map(|_| (0..p + 2).map(|_| next()).collect()).collect();
        let mut m = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                m[(i, j)] = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum();
            }
        }
        let d: Vec<f64> = (0..p).map(|i| libm::sqrt(m[(i, i)])).collect();
        Matrix::correlation_from_pairs(p, &pair_indices(p).map(|(i, j)| m[(i, j)] / (d[i] * d[j])).collect::<Vec<_>>())
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for p in 3..=5 {
            for seed in 0..5u64 {
                let r = random_correlation(p, seed * 31 + p as u64);
                let rho = r.upper_pairs();
                for targets in [(0, 1), (1, 2), (2, 0)] {
                    let g = lgpc_gradient(&r, targets).unwrap();
                    let h = 1e-6;
                    for (k, gk) in g.iter().enumerate() {
                        let mut up = rho.clone();
                        let mut dn = rho.clone();
                        up[k] += h;
                        dn[k] -= h;
                        let fd = (lgpc_from_r(&Matrix::correlation_from_pairs(p, &up), targets).unwrap()
                            - lgpc_from_r(&Matrix::correlation_from_pairs(p, &dn), targets).unwrap())
                            / (2.0 * h);
                        assert_abs_diff_eq!(*gk, fd, epsilon = 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_form_agrees_with_matrix_form() {
        for seed in 0..20 {
            let r = random_correlation(3, seed);
            let a = lgpc_from_r(&r, (0, 1)).unwrap();
            assert_abs_diff_eq!(a, lgpc_scalar(r[(0, 1)], r[(0, 2)], r[(1, 2)]), epsilon = 1e-12);
            assert_abs_diff_eq!(a, lgpc_from_r(&r, (1, 0)).unwrap(), epsilon = 1e-14);
        }
    }
}
