//! Locally Gaussian conditional densities `f(z_t | z_C)` tabulated on a
//! grid, with a clipped cubic spline interpolant and accept–reject
//! sampling.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::{pair_indices, Matrix};
use crate::locallik::{Bandwidth, Kernel, LocalLikelihood};
use crate::loccor::assemble_pairwise;
use crate::normal;
use crate::{Error, Result};

/// Acceptance rate below which sampling gives up.
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-3;
/// Envelope factor over the tabulated maximum.
pub const ENVELOPE_FACTOR: f64 = 1.05;
const REFINE: usize = 10;
const MIN_ATTEMPTS: usize = 1000;

/// Equispaced evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lo: -4.5, hi: 4.5, points: 101 }
    }
}

impl GridSpec {
    pub fn abscissae(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.points < 3 || !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::invalid("density grid needs at least 3 points on a finite range"));
        }
        Ok(())
    }
}

/// Mean and variance of variable `target` given `conds` at `z_cond` under
/// the Gaussian with correlation matrix `r`.
pub fn conditional_params(r: &Matrix, target: usize, conds: &[usize], z_cond: &[f64]) -> Result<(f64, f64)> {
    if conds.is_empty() || conds.len() != z_cond.len() || conds.contains(&target) {
        return Err(Error::invalid("need one conditioning value per conditioning variable"));
    }
    let t = [target];
    let r_cc = r.select(conds, conds);
    let r_ct = r.select(conds, &t);
    let (inv, _) = r_cc.spd_inverse().ok_or(Error::SingularConditioning)?;
    let coef = inv.mul(&r_ct);
    let mu = (0..conds.len()).map(|i| coef[(i, 0)] * z_cond[i]).sum();
    let sigma2 = 1.0 - (0..conds.len()).map(|i| coef[(i, 0)] * r_ct[(i, 0)]).sum::<f64>();
    if !(sigma2 > 0.0) {
        return Err(Error::SingularConditioning);
    }
    Ok((mu, sigma2))
}

/// Second derivatives of the natural cubic spline through `(x, y)`.
fn natural_spline(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations.
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0;
        let b = 2.0 * (h0 + h1);
        let cc = h1;
        let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        let denom = b - a * c[i - 1];
        c[i] = cc / denom;
        d[i] = (rhs - a * d[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

/// A conditional density of one coordinate tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDensity {
    pub target_index: usize,
    pub conditioning_values: Vec<f64>,
    pub grid: Vec<f64>,
    /// Normalized density values at the grid abscissae.
    pub values: Vec<f64>,
    second_derivatives: Vec<f64>,
    pub envelope_constant: f64,
    /// Trapezoidal integral before normalization.
    pub raw_integral: f64,
    /// `raw_integral` fell outside `[0.9, 1.1]`.
    pub integral_flagged: bool,
    /// Grid points where a degenerate fit was replaced by the global value.
    pub fallbacks: usize,
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
}

impl ConditionalDensity {
    /// Normalizes `values` over `grid` and builds the interpolant.
    pub fn from_values(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 3 || grid.len() != values.len() || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("density grid must be strictly increasing with one value per point"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("density values must be finite and non-negative"));
        }
        let raw = trapezoid(&grid, &values);
        if !(raw > 0.0) {
            return Err(Error::invalid("density integrates to zero over the grid"));
        }
        let values: Vec<f64> = values.iter().map(|v| v / raw).collect();
        let second_derivatives = natural_spline(&grid, &values);
        let mut d = ConditionalDensity {
            target_index: 0,
            conditioning_values: Vec::new(),
            grid,
            values,
            second_derivatives,
            envelope_constant: 0.0,
            raw_integral: raw,
            integral_flagged: !(0.9..=1.1).contains(&raw),
            fallbacks: 0,
        };
        let (lo, hi) = d.range();
        let fine = (d.grid.len() - 1) * REFINE;
        let peak = (0..=fine)
            .map(|i| d.density(lo + (hi - lo) * i as f64 / fine as f64))
            .chain(d.values.iter().copied())
            .fold(0.0, f64::max);
        d.envelope_constant = ENVELOPE_FACTOR * peak;
        Ok(d)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    /// Interpolated density, clipped at zero and zero outside the grid.
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return 0.0;
        }
        let n = self.grid.len();
        let i = match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => return self.values[i],
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let (m0, m1) = (self.second_derivatives[i], self.second_derivatives[i + 1]);
        let v = a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        v.max(0.0)
    }

    /// Trapezoidal integral of the normalized tabulated values.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// Copy with the envelope multiplied by `factor`.
    pub fn with_envelope_scaled(&self, factor: f64) -> Self {
        ConditionalDensity { envelope_constant: self.envelope_constant * factor, ..self.clone() }
    }

    /// Draws `count` values by accept–reject with a uniform proposal over
    /// the grid range. Fails when the acceptance rate drops below
    /// [`MIN_ACCEPTANCE_RATE`] or a proposal lands above the envelope.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<f64>> {
        let (lo, hi) = self.range();
        let m = self.envelope_constant;
        if !(m > 0.0) {
            return Err(Error::EnvelopeFailure { rate: 0.0 });
        }
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count {
            attempts += 1;
            let x = lo + (hi - lo) * rng.random::<f64>();
            let f = self.density(x);
            if f > m {
                return Err(Error::EnvelopeFailure { rate: out.len() as f64 / attempts as f64 });
            }
            if m * rng.random::<f64>() < f {
                out.push(x);
            }
            if attempts >= MIN_ATTEMPTS {
                let rate = out.len() as f64 / attempts as f64;
                if rate < MIN_ACCEPTANCE_RATE {
                    return Err(Error::EnvelopeFailure { rate });
                }
            }
        }
        Ok(out)
    }
}

/// Estimates `f(z_target | z_conds)` from a pseudo-normal sample by fitting
/// bivariate local correlations for every pair among the target and the
/// conditioners and conditioning the assembled local Gaussian.
#[derive(Debug, Clone)]
pub struct ConditionalDensityEstimator<'a> {
    target: usize,
    conds: Vec<usize>,
    /// Pair problems over local indices (0 = target, 1.. = conditioners).
    pairs: Vec<LocalLikelihood<'a>>,
    grid: GridSpec,
}

impl<'a> ConditionalDensityEstimator<'a> {
    /// `columns` are z-scale sample columns; `b` gives one bandwidth per
    /// column (or a uniform one).
    pub fn new(
        columns: &[&'a [f64]],
        target: usize,
        conds: &[usize],
        b: &Bandwidth,
        kernel: Kernel,
        grid: GridSpec,
    ) -> Result<Self> {
        grid.validate()?;
        if conds.is_empty() || conds.contains(&target) || conds.iter().chain([&target]).any(|&c| c >= columns.len()) {
            return Err(Error::invalid("need a target and at least one distinct conditioning column"));
        }
        if columns[target].len() < 50 {
            return Err(Error::invalid("conditional density estimation needs at least 50 observations"));
        }
        let vars: Vec<usize> = core::iter::once(target).chain(conds.iter().copied()).collect();
        let pairs = pair_indices(vars.len())
            .map(|(j, k)| {
                let (a, c) = (vars[j], vars[k]);
                LocalLikelihood::new(vec![columns[a], columns[c]], vec![b.get(a), b.get(c)], kernel)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConditionalDensityEstimator { target, conds: conds.to_vec(), pairs, grid })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    fn pair_rho(problem: &LocalLikelihood<'_>, point: [f64; 2], init: Option<f64>, fallbacks: &mut usize) -> Result<f64> {
        let start = init.map(|r| [r]);
        match problem.fit(&point, start.as_ref().map(|s| &s[..])) {
            Ok(fit) => Ok(fit.rho[0]),
            Err(Error::DegenerateNeighborhood { .. }) => {
                *fallbacks += 1;
                Ok(problem.global_correlations()[0])
            }
            Err(e) => Err(e),
        }
    }

    /// Conditional density at the conditioning values `z_cond`.
    pub fn estimate(&self, z_cond: &[f64]) -> Result<ConditionalDensity> {
        let q = self.conds.len();
        if z_cond.len() != q || z_cond.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("need one finite conditioning value per conditioning variable"));
        }
        let d = q + 1;
        let mut fallbacks = 0;
        let mut rho = vec![0.0; self.pairs.len()];
        // Pairs among conditioners do not depend on the grid abscissa.
        let mut target_pairs = Vec::with_capacity(q);
        for (idx, (j, k)) in pair_indices(d).enumerate() {
            if j == 0 {
                target_pairs.push((idx, k));
            } else {
                rho[idx] = Self::pair_rho(&self.pairs[idx], [z_cond[j - 1], z_cond[k - 1]], None, &mut fallbacks)?;
            }
        }
        let cond_idx: Vec<usize> = (1..d).collect();
        let grid = self.grid.abscissae();
        let mut values = Vec::with_capacity(grid.len());
        let mut prev: Option<Vec<f64>> = None;
        for &g in &grid {
            for (slot, &(idx, k)) in target_pairs.iter().enumerate() {
                let init = prev.as_ref().map(|p| p[slot]);
                rho[idx] = Self::pair_rho(&self.pairs[idx], [g, z_cond[k - 1]], init, &mut fallbacks)?;
            }
            prev = Some(target_pairs.iter().map(|&(idx, _)| rho[idx]).collect());
            let (r, _) = assemble_pairwise(d, &rho);
            let (mu, s2) = conditional_params(&r, 0, &cond_idx, z_cond)?;
            values.push(normal::pdf_scaled(g, mu, s2));
        }
        let mut dens = ConditionalDensity::from_values(grid, values)?;
        dens.target_index = self.target;
        dens.conditioning_values = z_cond.to_vec();
        dens.fallbacks = fallbacks;
        Ok(dens)
    }
}

/// One-shot estimate of `f(z_target | z_conds = z_cond)`.
pub fn estimate_conditional_density(
    columns: &[&[f64]],
    target: usize,
    conds: &[usize],
    z_cond: &[f64],
    b: &Bandwidth,
) -> Result<ConditionalDensity> {
    ConditionalDensityEstimator::new(columns, target, conds, b, Kernel::Gaussian, GridSpec::default())?.estimate(z_cond)
}

/// Accept–reject draws from `density`.
pub fn sample_accept_reject<R: Rng + ?Sized>(density: &ConditionalDensity, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    density.sample(count, rng)
}
