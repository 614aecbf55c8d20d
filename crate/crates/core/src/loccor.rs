//! Local correlation matrices `R(z)` over evaluation points, from either a
//! full trivariate fit or one bivariate fit per pair of variables.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{pair_indices, pair_position, repair_correlation, Matrix};
use crate::locallik::{Bandwidth, Kernel, LocalFit, LocalLikelihood};
pub use crate::locallik::Method;
use crate::transform::PseudoSample;
use crate::{Error, Result};

/// Smallest eigenvalue kept when repairing a pairwise assembly.
pub const EIGEN_FLOOR: f64 = 1e-4;

/// Fit diagnostics for one evaluation point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointDiagnostics {
    /// Every underlying fit converged.
    pub converged: bool,
    /// Fits that did not converge and were replaced by the global MLE.
    pub fallbacks: usize,
    /// Fits whose neighborhood carried no kernel mass.
    pub degenerate: usize,
    /// The pairwise assembly was not positive definite and was repaired.
    pub repaired: bool,
}

/// A local correlation matrix at one point plus how it was obtained.
#[derive(Debug, Clone)]
pub struct LocalCorrelation {
    pub matrix: Matrix,
    /// Trivariate: one fit. Pairwise: one entry per pair, `None` where the
    /// neighborhood was degenerate and the global value was used.
    pub fits: Vec<Option<LocalFit>>,
    pub diagnostics: PointDiagnostics,
}

/// Reusable estimator of `R(z)` for one sample, method and bandwidth.
#[derive(Debug, Clone)]
pub struct LocalCorrelationEstimator<'a> {
    method: Method,
    bandwidth: Bandwidth,
    p: usize,
    joint: Option<LocalLikelihood<'a>>,
    pairs: Vec<LocalLikelihood<'a>>,
}

impl<'a> LocalCorrelationEstimator<'a> {
    pub fn new(sample: &'a PseudoSample, method: Method, bandwidth: Bandwidth, kernel: Kernel) -> Result<Self> {
        let p = sample.p();
        match method {
            Method::Trivariate => {
                if p != 3 {
                    return Err(Error::invalid("the trivariate method needs exactly three variables"));
                }
                let cols = sample.z.iter().map(Vec::as_slice).collect();
                let joint = LocalLikelihood::new(cols, bandwidth.for_columns(&[0, 1, 2]), kernel)?;
                Ok(LocalCorrelationEstimator { method, bandwidth, p, joint: Some(joint), pairs: Vec::new() })
            }
            Method::Pairwise => {
                if p < 2 {
                    return Err(Error::invalid("the pairwise method needs at least two variables"));
                }
                let pairs = pair_indices(p)
                    .map(|(j, k)| {
                        LocalLikelihood::new(
                            vec![sample.z[j].as_slice(), sample.z[k].as_slice()],
                            bandwidth.for_columns(&[j, k]),
                            kernel,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LocalCorrelationEstimator { method, bandwidth, p, joint: None, pairs })
            }
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn bandwidth(&self) -> &Bandwidth {
        &self.bandwidth
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Global MLE correlation matrix (the large-bandwidth limit).
    pub fn global_matrix(&self) -> Matrix {
        match &self.joint {
            Some(j) => Matrix::correlation_from_pairs(3, j.global_correlations()),
            None => {
                let g: Vec<f64> = self.pairs.iter().map(|l| l.global_correlations()[0]).collect();
                Matrix::correlation_from_pairs(self.p, &g)
            }
        }
    }

    /// The bivariate problem for pair `(j, k)`, `j < k` (pairwise only).
    pub fn pair_problem(&self, j: usize, k: usize) -> Option<&LocalLikelihood<'a>> {
        self.pairs.get(pair_position(self.p, j, k))
    }

    /// The trivariate problem (trivariate only).
    pub fn joint_problem(&self) -> Option<&LocalLikelihood<'a>> {
        self.joint.as_ref()
    }

    /// Local correlation matrix at `z`, optionally warm-started from the
    /// pair correlations `init`.
    pub fn estimate(&self, z: &[f64], init: Option<&[f64]>) -> Result<LocalCorrelation> {
        if z.len() != self.p {
            return Err(Error::invalid("evaluation point has the wrong dimension"));
        }
        match &self.joint {
            Some(joint) => {
                let fit = joint.fit(z, init)?;
                let diagnostics = PointDiagnostics {
                    converged: fit.converged,
                    fallbacks: usize::from(fit.fell_back_to_global),
                    degenerate: 0,
                    repaired: false,
                };
                Ok(LocalCorrelation { matrix: fit.matrix(), fits: vec![Some(fit)], diagnostics })
            }
            None => self.estimate_pairwise(z, init, None),
        }
    }

    /// Pairwise estimate where pairs with a `Some` entry in `fixed` take
    /// that value instead of being refitted. Those pairs report no fit.
    pub fn estimate_with_fixed(&self, z: &[f64], fixed: &[Option<f64>]) -> Result<LocalCorrelation> {
        if self.joint.is_some() || fixed.len() != self.pairs.len() {
            return Err(Error::invalid("fixed pair values need the pairwise method and one entry per pair"));
        }
        if z.len() != self.p {
            return Err(Error::invalid("evaluation point has the wrong dimension"));
        }
        self.estimate_pairwise(z, None, Some(fixed))
    }

    fn estimate_pairwise(&self, z: &[f64], init: Option<&[f64]>, fixed: Option<&[Option<f64>]>) -> Result<LocalCorrelation> {
        let mut rho = Vec::with_capacity(self.pairs.len());
        let mut fits = Vec::with_capacity(self.pairs.len());
        let mut diag = PointDiagnostics { converged: true, ..Default::default() };
        for (idx, ((j, k), problem)) in pair_indices(self.p).zip(&self.pairs).enumerate() {
            if let Some(v) = fixed.and_then(|f| f[idx]) {
                rho.push(v);
                fits.push(None);
                continue;
            }
            let start = init.map(|s| [s[idx]]);
            match problem.fit(&[z[j], z[k]], start.as_ref().map(|s| &s[..])) {
                Ok(fit) => {
                    if fit.fell_back_to_global {
                        diag.fallbacks += 1;
                        diag.converged = false;
                    }
                    rho.push(fit.rho[0]);
                    fits.push(Some(fit));
                }
                Err(Error::DegenerateNeighborhood { .. }) => {
                    diag.degenerate += 1;
                    diag.converged = false;
                    rho.push(problem.global_correlations()[0]);
                    fits.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        if diag.degenerate == self.pairs.len() {
            return Err(Error::DegenerateNeighborhood { mass: 0.0 });
        }
        let (matrix, repaired) = assemble_pairwise(self.p, &rho);
        diag.repaired = repaired;
        Ok(LocalCorrelation { matrix, fits, diagnostics: diag })
    }

    /// Like [`LocalCorrelationEstimator::estimate`] but replaces a degenerate
    /// neighborhood by the global matrix, flagged in the diagnostics.
    pub fn estimate_or_global(&self, z: &[f64], init: Option<&[f64]>) -> Result<LocalCorrelation> {
        match self.estimate(z, init) {
            Err(Error::DegenerateNeighborhood { .. }) => Ok(LocalCorrelation {
                matrix: self.global_matrix(),
                fits: Vec::new(),
                diagnostics: PointDiagnostics { converged: false, fallbacks: 0, degenerate: 1, repaired: false },
            }),
            other => other,
        }
    }
}

/// Symmetric unit-diagonal matrix from pair correlations, repaired by
/// eigenvalue clipping when it is not positive definite.
pub fn assemble_pairwise(p: usize, rho: &[f64]) -> (Matrix, bool) {
    let m = Matrix::correlation_from_pairs(p, rho);
    if m.is_positive_definite() {
        (m, false)
    } else {
        (repair_correlation(&m, EIGEN_FLOOR), true)
    }
}

/// Single-point trivariate estimate.
pub fn estimate_r_trivariate(sample: &PseudoSample, z_eval: &[f64], b: &Bandwidth) -> Result<LocalCorrelation> {
    LocalCorrelationEstimator::new(sample, Method::Trivariate, b.clone(), Kernel::Gaussian)?.estimate(z_eval, None)
}

/// Single-point pairwise estimate.
pub fn estimate_r_pairwise(sample: &PseudoSample, z_eval: &[f64], b: &Bandwidth) -> Result<LocalCorrelation> {
    if sample.p() < 3 {
        return Err(Error::invalid("the pairwise assembly needs at least three variables"));
    }
    LocalCorrelationEstimator::new(sample, Method::Pairwise, b.clone(), Kernel::Gaussian)?.estimate(z_eval, None)
}

/// Local correlation matrices over a set of z-scale points.
#[derive(Debug, Clone)]
pub struct LocalCorrelationField {
    pub points: Vec<Vec<f64>>,
    pub method: Method,
    pub matrices: Vec<Matrix>,
    pub diagnostics: Vec<PointDiagnostics>,
    pub bandwidth: Bandwidth,
    /// Matrix entry `(j, k)` of each pair correlation, in output order.
    pub pair_index: Vec<(usize, usize)>,
}

impl LocalCorrelationField {
    /// Pair correlations of point `i` in `pair_index` order.
    pub fn pair_values(&self, i: usize) -> Vec<f64> {
        self.pair_index.iter().map(|&(j, k)| self.matrices[i][(j, k)]).collect()
    }
}

/// Evaluates `R(z)` at every grid point, sweeping in the given order and
/// warm-starting each fit from the nearest earlier point whose fit
/// converged. Degenerate neighborhoods get the global matrix, flagged.
pub fn estimate_field(
    sample: &PseudoSample,
    grid: &[Vec<f64>],
    method: Method,
    b: &Bandwidth,
    kernel: Kernel,
) -> Result<LocalCorrelationField> {
    if grid.is_empty() {
        return Err(Error::invalid("empty evaluation grid"));
    }
    let est = LocalCorrelationEstimator::new(sample, method, b.clone(), kernel)?;
    let p = sample.p();
    let mut matrices = Vec::with_capacity(grid.len());
    let mut diagnostics = Vec::with_capacity(grid.len());
    let mut converged_points: Vec<usize> = Vec::new();
    for (i, z) in grid.iter().enumerate() {
        let init = nearest(grid, &converged_points, z).map(|k| matrices_pairs(&matrices[k]));
        let lc = est.estimate_or_global(z, init.as_deref())?;
        if lc.diagnostics.converged {
            converged_points.push(i);
        }
        matrices.push(lc.matrix);
        diagnostics.push(lc.diagnostics);
    }
    Ok(LocalCorrelationField {
        points: grid.to_vec(),
        method,
        matrices,
        diagnostics,
        bandwidth: b.clone(),
        pair_index: pair_indices(p).collect(),
    })
}

fn matrices_pairs(m: &Matrix) -> Vec<f64> {
    m.upper_pairs()
}

fn nearest(grid: &[Vec<f64>], candidates: &[usize], z: &[f64]) -> Option<usize> {
    let dist = |k: usize| grid[k].iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    candidates.iter().copied().min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
}

/// Tensor grid of empirical z-quantiles of each margin at the given levels,
/// in row-major order (last coordinate fastest).
pub fn quantile_grid(sample: &PseudoSample, levels: &[f64]) -> Vec<Vec<f64>> {
    let per_dim: Vec<Vec<f64>> = sample
        .z
        .iter()
        .map(|col| {
            let mut s = col.clone();
            s.sort_by(f64::total_cmp);
            levels.iter().map(|&q| empirical_quantile(&s, q)).collect()
        })
        .collect();
    tensor_grid(&per_dim)
}

/// Default levels `0.1, 0.2, …, 0.9`.
pub fn default_levels() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Cartesian product of per-dimension coordinates, last dimension fastest.
pub fn tensor_grid(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Linear-interpolation quantile of an ascending sample.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(n - 1);
    let f = pos - lo as f64;
    sorted[lo] + f * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_grid_is_row_major() {
        let g = tensor_grid(&[vec![0.0, 1.0], vec![5.0, 6.0, 7.0]]);
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], vec![0.0, 5.0]);
        assert_eq!(g[1], vec![0.0, 6.0]);
        assert_eq!(g[3], vec![1.0, 5.0]);
    }

    #[test]
    fn pairwise_repair_is_flagged() {
        let (m, repaired) = assemble_pairwise(3, &[0.9, 0.9, -0.9]);
        assert!(repaired);
        assert!(m.is_positive_definite());
        let (m, repaired) = assemble_pairwise(3, &[0.1, 0.2, 0.3]);
        assert!(!repaired);
        assert_eq!(m[(1, 2)], 0.3);
    }

    #[test]
    fn empty_grid_rejected() {
        let z: Vec<Vec<f64>> = (0..3).map(|j| (0..20).map(|i| ((i * (j + 3)) % 20) as f64 / 10.0 - 1.0).collect()).collect();
        let s = PseudoSample::from_z_columns(z).unwrap();
        let b = Bandwidth::uniform(1.0).unwrap();
        assert!(estimate_field(&s, &[], Method::Pairwise, &b, Kernel::Gaussian).is_err());
    }
}
