//! Kernel weights and the local likelihood fit of Gaussian correlation
//! parameters at a point.
//!
//! The fitted family is the zero-mean, unit-variance Gaussian density
//! `ψ(·, R)`. With a Gaussian product kernel the local log-likelihood
//! depends on the data only through the kernel mass and the kernel-weighted
//! second-moment matrix at the evaluation point, and the penalty integral
//! `∫ K_b(y − z) ψ(y, R) dy` is the Gaussian density `N(z; 0, R + B)` with
//! `B = diag(b²)`. A fit therefore costs one pass over the data followed by
//! an optimization whose iterations are independent of `n`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::linalg::{pair_indices, Matrix};
use crate::optim::{self, Options};
use crate::{Error, Result};

/// Largest absolute value a fitted local correlation may take.
pub const RHO_BOUND: f64 = 0.999;
/// Largest absolute value used for starting values.
pub const INIT_BOUND: f64 = 0.95;
/// Kernel mass (sum of weights) below which a neighborhood is degenerate.
pub const MIN_KERNEL_MASS: f64 = 1e-8;
/// Support radius, in bandwidth units, of the truncated Gaussian kernel.
pub const TRUNCATION_RADIUS: f64 = 5.0;
/// Largest dimension of a single local fit.
pub const MAX_DIM: usize = 8;

/// Local correlation estimation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// One three-parameter fit of the full trivariate Gaussian (p = 3 only).
    Trivariate,
    /// One single-parameter fit per pair of variables, any p.
    Pairwise,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Trivariate => "trivariate",
            Method::Pairwise => "pairwise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthRule {
    /// `c · n^(-1/9)`.
    TrivariateN19,
    /// `c · n^(-1/6)`.
    PairwiseN16,
    Explicit,
}

/// Per-variable kernel bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth {
    /// One value per variable, or a single value shared by all variables.
    values: Vec<f64>,
    pub c: Option<f64>,
    pub rule: BandwidthRule,
}

impl Bandwidth {
    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::invalid("bandwidths must be positive and finite"));
        }
        Ok(Bandwidth { values, c: None, rule: BandwidthRule::Explicit })
    }

    /// Same bandwidth in every dimension.
    pub fn uniform(b: f64) -> Result<Self> {
        Bandwidth::explicit(vec![b])
    }

    /// Bandwidth for variable `j`.
    pub fn get(&self, j: usize) -> f64 {
        if self.values.len() == 1 {
            self.values[0]
        } else {
            self.values[j]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bandwidths for the listed variables.
    pub fn for_columns(&self, cols: &[usize]) -> Vec<f64> {
        cols.iter().map(|&j| self.get(j)).collect()
    }
}

/// Plug-in bandwidth `c·n^(-1/9)` (trivariate) or `c·n^(-1/6)` (pairwise).
pub fn plugin_bandwidth(n: usize, c: f64, method: Method) -> Result<Bandwidth> {
    if n < 2 {
        return Err(Error::invalid("plug-in bandwidth needs n >= 2"));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid("bandwidth constant must be positive"));
    }
    let (exp, rule) = match method {
        Method::Trivariate => (-1.0 / 9.0, BandwidthRule::TrivariateN19),
        Method::Pairwise => (-1.0 / 6.0, BandwidthRule::PairwiseN16),
    };
    Ok(Bandwidth { values: vec![c * libm::pow(n as f64, exp)], c: Some(c), rule })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// Product of normal densities.
    #[default]
    Gaussian,
    /// Gaussian cut off at `TRUNCATION_RADIUS` bandwidths and renormalized.
    /// The penalty integral keeps the untruncated closed form; the two
    /// differ by less than the mass beyond the radius (about 1e-5 for d = 3).
    TruncatedGaussian,
}

/// `P(χ²_d <= x)`.
fn chi_square_cdf(d: usize, x: f64) -> f64 {
    let mut p;
    let mut k;
    if d % 2 == 1 {
        p = libm::erf(libm::sqrt(x / 2.0));
        k = 1;
    } else {
        p = 1.0 - libm::exp(-x / 2.0);
        k = 2;
    }
    while k < d {
        let half = k as f64 / 2.0;
        p -= libm::pow(x / 2.0, half) * libm::exp(-x / 2.0) / libm::tgamma(half + 1.0);
        k += 2;
    }
    p
}

fn kernel_norm(bw: &[f64], kernel: Kernel) -> f64 {
    let d = bw.len();
    let mut norm = libm::pow(2.0 * PI, -(d as f64) / 2.0) / bw.iter().product::<f64>();
    if kernel == Kernel::TruncatedGaussian {
        norm /= chi_square_cdf(d, TRUNCATION_RADIUS * TRUNCATION_RADIUS);
    }
    norm
}

/// Product-kernel weight `Π (1/b_i) φ((z_obs,i − z_eval,i)/b_i)`.
pub fn kernel_weight(z_obs: &[f64], z_eval: &[f64], b: &Bandwidth, kernel: Kernel) -> f64 {
    let bw: Vec<f64> = (0..z_obs.len()).map(|j| b.get(j)).collect();
    let u: f64 = z_obs
        .iter()
        .zip(z_eval)
        .zip(&bw)
        .map(|((o, e), b)| {
            let t = (o - e) / b;
            t * t
        })
        .sum();
    if kernel == Kernel::TruncatedGaussian && u > TRUNCATION_RADIUS * TRUNCATION_RADIUS {
        return 0.0;
    }
    kernel_norm(&bw, kernel) * libm::exp(-0.5 * u)
}

/// Density of `N(0, R)` at `z` (the fitted family `ψ(z, R)`).
pub fn gaussian_density(z: &[f64], r: &Matrix) -> Option<f64> {
    let (inv, log_det) = r.spd_inverse()?;
    let d = z.len() as f64;
    Some(libm::exp(-0.5 * (d * libm::log(2.0 * PI) + log_det + inv.quad_form(z))))
}

/// Local score `∂ log ψ(z, R) / ∂ρ_jk` for every pair, given `R⁻¹`.
pub fn local_score(z: &[f64], r_inv: &Matrix) -> Vec<f64> {
    let w = r_inv.mul_vec(z);
    pair_indices(z.len()).map(|(j, k)| -r_inv[(j, k)] + w[j] * w[k]).collect()
}

/// Kernel-weighted sufficient statistics of the local likelihood at a point.
#[derive(Debug, Clone)]
pub struct LocalMoments {
    pub point: Vec<f64>,
    /// Squared bandwidths.
    pub bw2: Vec<f64>,
    /// `Σ K_i`.
    pub total_weight: f64,
    /// `n⁻¹ Σ K_i`.
    pub mass: f64,
    /// `n⁻¹ Σ K_i z_i z_iᵀ`.
    pub second: Matrix,
    /// Whether the penalty integral is part of the objective. Off for the
    /// global (unweighted) Gaussian likelihood.
    pub penalized: bool,
}

impl LocalMoments {
    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// Local log-likelihood and its gradient with respect to the pair
    /// correlations; `None` when `r` is not positive definite.
    pub fn objective(&self, r: &Matrix) -> Option<(f64, Vec<f64>)> {
        let d = self.dim();
        let (p, log_det) = r.spd_inverse()?;
        let ps = p.mul(&self.second);
        let psp = ps.mul(&p);
        let trace: f64 = (0..d).map(|i| ps[(i, i)]).sum();
        let mut value = -self.mass * 0.5 * (d as f64 * libm::log(2.0 * PI) + log_det) - 0.5 * trace;
        let mut grad: Vec<f64> =
            pair_indices(d).map(|(j, k)| -self.mass * p[(j, k)] + psp[(j, k)]).collect();
        if self.penalized {
            let (vi, a, dens) = self.penalty_parts(r)?;
            value -= dens;
            for (g, (j, k)) in grad.iter_mut().zip(pair_indices(d)) {
                *g -= dens * (-vi[(j, k)] + a[j] * a[k]);
            }
        }
        Some((value, grad))
    }

    /// `(V⁻¹, V⁻¹z, N(z; 0, V))` with `V = R + B`.
    fn penalty_parts(&self, r: &Matrix) -> Option<(Matrix, Vec<f64>, f64)> {
        let d = self.dim();
        let mut v = r.clone();
        for i in 0..d {
            v[(i, i)] += self.bw2[i];
        }
        let (vi, log_det) = v.spd_inverse()?;
        let a = vi.mul_vec(&self.point);
        let q: f64 = a.iter().zip(&self.point).map(|(x, y)| x * y).sum();
        let dens = libm::exp(-0.5 * (d as f64 * libm::log(2.0 * PI) + log_det + q));
        Some((vi, a, dens))
    }

    /// Hessian of [`LocalMoments::objective`] with respect to the pair
    /// correlations.
    pub fn hessian(&self, r: &Matrix) -> Option<Matrix> {
        let d = self.dim();
        let pairs: Vec<(usize, usize)> = pair_indices(d).collect();
        let m = pairs.len();
        let (p, _) = r.spd_inverse()?;
        let q = p.mul(&self.second).mul(&p);
        let pen = if self.penalized { Some(self.penalty_parts(r)?) } else { None };
        let mut h = Matrix::zeros(m, m);
        for (ai, &(j, k)) in pairs.iter().enumerate() {
            for (bi, &(l, mm)) in pairs.iter().enumerate() {
                let pep = p[(j, l)] * p[(mm, k)] + p[(j, mm)] * p[(l, k)];
                let peq = p[(j, l)] * q[(mm, k)] + p[(j, mm)] * q[(l, k)];
                let qep = q[(j, l)] * p[(mm, k)] + q[(j, mm)] * p[(l, k)];
                let mut val = self.mass * pep - peq - qep;
                if let Some((vi, a, dens)) = &pen {
                    let ga = -vi[(j, k)] + a[j] * a[k];
                    let gb = -vi[(l, mm)] + a[l] * a[mm];
                    let vev = vi[(j, l)] * vi[(mm, k)] + vi[(j, mm)] * vi[(l, k)];
                    let daj = -(vi[(j, l)] * a[mm] + vi[(j, mm)] * a[l]);
                    let dak = -(vi[(k, l)] * a[mm] + vi[(k, mm)] * a[l]);
                    val -= dens * (ga * gb + vev + daj * a[k] + a[j] * dak);
                }
                h[(ai, bi)] = val;
            }
        }
        Some(h)
    }
}

/// Result of one local likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    /// Pair correlations in row-major pair order (length 1 or 3 for the
    /// bivariate and trivariate problems).
    pub rho: Vec<f64>,
    pub point: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective_value: f64,
    pub fell_back_to_global: bool,
}

impl LocalFit {
    pub fn matrix(&self) -> Matrix {
        Matrix::correlation_from_pairs(self.point.len(), &self.rho)
    }
}

/// A local likelihood problem on a fixed set of z-scale columns.
///
/// Construction computes the global Gaussian maximum likelihood
/// correlations, which serve as starting values and as the fallback for
/// fits that fail to converge.
#[derive(Debug, Clone)]
pub struct LocalLikelihood<'a> {
    columns: Vec<&'a [f64]>,
    bandwidth: Vec<f64>,
    kernel: Kernel,
    norm: f64,
    global: Vec<f64>,
    options: Options,
}

impl<'a> LocalLikelihood<'a> {
    pub fn new(columns: Vec<&'a [f64]>, bandwidth: Vec<f64>, kernel: Kernel) -> Result<Self> {
        let d = columns.len();
        if !(2..=MAX_DIM).contains(&d) {
            return Err(Error::invalid("a local correlation fit needs between two and eight columns"));
        }
        if bandwidth.len() != d || bandwidth.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::invalid("one positive bandwidth per column is required"));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("columns have different lengths"));
        }
        if n < 10 {
            return Err(Error::invalid("a local correlation fit needs at least 10 observations"));
        }
        let global = global_mle(&columns);
        let norm = kernel_norm(&bandwidth, kernel);
        Ok(LocalLikelihood { columns, bandwidth, kernel, norm, global, options: Options::default() })
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn columns(&self) -> &[&'a [f64]] {
        &self.columns
    }

    /// Global Gaussian MLE pair correlations (unit variances, zero means).
    pub fn global_correlations(&self) -> &[f64] {
        &self.global
    }

    /// Kernel weight of every observation at `z_eval`.
    pub fn weights(&self, z_eval: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.weight(i, z_eval)).collect()
    }

    #[inline]
    fn weight(&self, i: usize, z_eval: &[f64]) -> f64 {
        let mut u = 0.0;
        for (j, col) in self.columns.iter().enumerate() {
            let t = (col[i] - z_eval[j]) / self.bandwidth[j];
            u += t * t;
        }
        if self.kernel == Kernel::TruncatedGaussian && u > TRUNCATION_RADIUS * TRUNCATION_RADIUS {
            0.0
        } else {
            self.norm * libm::exp(-0.5 * u)
        }
    }

    pub fn moments(&self, z_eval: &[f64]) -> LocalMoments {
        let d = self.dim();
        let n = self.n();
        let mut total = 0.0;
        let mut second = Matrix::zeros(d, d);
        let mut zi = [0.0; MAX_DIM];
        for i in 0..n {
            let wi = self.weight(i, z_eval);
            if wi == 0.0 {
                continue;
            }
            total += wi;
            for j in 0..d {
                zi[j] = self.columns[j][i];
            }
            for j in 0..d {
                let wz = wi * zi[j];
                for k in j..d {
                    second[(j, k)] += wz * zi[k];
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for j in 0..d {
            for k in j..d {
                let v = second[(j, k)] * inv_n;
                second[(j, k)] = v;
                second[(k, j)] = v;
            }
        }
        LocalMoments {
            point: z_eval.to_vec(),
            bw2: self.bandwidth.iter().map(|b| b * b).collect(),
            total_weight: total,
            mass: total * inv_n,
            second,
            penalized: true,
        }
    }

    /// Fits the local correlations at `z_eval`, starting from `init` (or the
    /// global MLE). Non-convergence yields the global MLE with
    /// `fell_back_to_global` set.
    pub fn fit(&self, z_eval: &[f64], init: Option<&[f64]>) -> Result<LocalFit> {
        if z_eval.len() != self.dim() || z_eval.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("evaluation point has wrong dimension or is not finite"));
        }
        let moments = self.moments(z_eval);
        if moments.total_weight < MIN_KERNEL_MASS {
            return Err(Error::DegenerateNeighborhood { mass: moments.total_weight });
        }
        let start = init.unwrap_or(&self.global);
        match maximize_correlations(&moments, start, self.options) {
            Some((rho, value, iterations)) => Ok(LocalFit {
                rho,
                point: z_eval.to_vec(),
                converged: true,
                iterations,
                objective_value: value,
                fell_back_to_global: false,
            }),
            None => {
                let r = Matrix::correlation_from_pairs(self.dim(), &self.global);
                let value = moments.objective(&r).map_or(f64::NAN, |(v, _)| v);
                Ok(LocalFit {
                    rho: self.global.clone(),
                    point: z_eval.to_vec(),
                    converged: false,
                    iterations: self.options.max_iter,
                    objective_value: value,
                    fell_back_to_global: true,
                })
            }
        }
    }
}

/// Maximizes the moment objective over tanh-reparameterized correlations.
/// Returns clamped correlations, the objective and the iteration count, or
/// `None` without convergence.
fn maximize_correlations(moments: &LocalMoments, start: &[f64], opts: Options) -> Option<(Vec<f64>, f64, usize)> {
    let d = moments.dim();
    let mut init: Vec<f64> = start.iter().map(|r| r.clamp(-INIT_BOUND, INIT_BOUND)).collect();
    if !Matrix::correlation_from_pairs(d, &init).is_positive_definite() {
        init.iter_mut().for_each(|r| *r = 0.0);
    }
    let theta0: Vec<f64> = init.iter().map(|r| libm::atanh(*r)).collect();
    // Scaling by the kernel mass leaves the maximizer unchanged and makes
    // the gradient tolerance relative to the amount of local data.
    let scale = if moments.penalized { 1.0 / moments.mass.max(f64::MIN_POSITIVE) } else { 1.0 };
    let objective = |theta: &[f64]| {
        let rho: Vec<f64> = theta.iter().map(|t| libm::tanh(*t)).collect();
        if rho.iter().any(|r| libm::fabs(*r) >= 1.0) {
            return None;
        }
        let r = Matrix::correlation_from_pairs(d, &rho);
        let (v, g) = moments.objective(&r)?;
        let g = g.iter().zip(&rho).map(|(gi, r)| gi * (1.0 - r * r) * scale).collect();
        Some((v * scale, g))
    };
    let out = optim::maximize(objective, &theta0, opts)?;
    if !out.converged {
        return None;
    }
    let rho: Vec<f64> = out.x.iter().map(|t| libm::tanh(*t)).collect();
    Some((clamp_correlations(d, rho), out.value / scale, out.iterations))
}

/// Clamps pair correlations to `±RHO_BOUND`, shrinking toward zero if the
/// clamped matrix lost positive definiteness.
pub fn clamp_correlations(dim: usize, rho: Vec<f64>) -> Vec<f64> {
    let mut rho: Vec<f64> = rho.into_iter().map(|r| r.clamp(-RHO_BOUND, RHO_BOUND)).collect();
    while dim > 2 && !Matrix::correlation_from_pairs(dim, &rho).is_positive_definite() {
        rho.iter_mut().for_each(|r| *r *= 0.999);
    }
    rho
}

/// Global Gaussian maximum likelihood correlations with means fixed at zero
/// and variances at one, started from the Pearson correlations.
pub fn global_mle(columns: &[&[f64]]) -> Vec<f64> {
    let d = columns.len();
    let n = columns[0].len() as f64;
    let mut second = Matrix::zeros(d, d);
    for j in 0..d {
        for k in j..d {
            let s: f64 = columns[j].iter().zip(columns[k]).map(|(a, b)| a * b).sum::<f64>() / n;
            second[(j, k)] = s;
            second[(k, j)] = s;
        }
    }
    let pearson: Vec<f64> = pair_indices(d).map(|(j, k)| pearson(columns[j], columns[k])).collect();
    let moments = LocalMoments {
        point: vec![0.0; d],
        bw2: vec![0.0; d],
        total_weight: n,
        mass: 1.0,
        second,
        penalized: false,
    };
    let opts = Options { grad_tol: 1e-10, ..Options::default() };
    maximize_correlations(&moments, &pearson, opts).map_or_else(
        || clamp_correlations(d, pearson.iter().map(|r| r.clamp(-INIT_BOUND, INIT_BOUND)).collect()),
        |(rho, _, _)| rho,
    )
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / libm::sqrt(saa * sbb)
}

/// One-shot local fit on the given columns.
pub fn fit_local(
    z_eval: &[f64],
    columns: &[&[f64]],
    b: &Bandwidth,
    kernel: Kernel,
    init: Option<&[f64]>,
) -> Result<LocalFit> {
    let bw = (0..columns.len()).map(|j| b.get(j)).collect();
    LocalLikelihood::new(columns.to_vec(), bw, kernel)?.fit(z_eval, init)
}
