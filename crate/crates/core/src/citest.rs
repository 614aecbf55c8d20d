//! Conditional independence test `H₀: Z₁ ⊥ Z₂ | Z₃` based on the average
//! of `h(α̂)` over the sample, with a bootstrap null that resamples the two
//! targets from locally Gaussian conditional densities given the fixed
//! conditioning rows.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::conddens::{ConditionalDensity, ConditionalDensityEstimator, GridSpec};
use crate::lgpc::lgpc_from_r;
use crate::linalg::pair_indices;
use crate::locallik::{plugin_bandwidth, Bandwidth, Kernel};
use crate::loccor::{LocalCorrelationEstimator, Method};
use crate::normal;
use crate::par::map_indices;
use crate::stream::{derive_seed, stream};
use crate::transform::{normal_scores, to_pseudo_normal, DataMatrix, PseudoSample};
use crate::{Error, Result};

/// Largest tolerated share of failed bootstrap replicates.
pub const MAX_FAILED_SHARE: f64 = 0.05;
/// Envelope enlargement for the single retry of a failed replicate.
pub const RETRY_ENVELOPE_FACTOR: f64 = 2.0;
const BOOTSTRAP_TAG: u64 = 0xB007;

/// Function applied to `α̂` before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HFunction {
    #[default]
    Square,
    Absolute,
    Identity,
}

impl HFunction {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            HFunction::Square => a * a,
            HFunction::Absolute => libm::fabs(a),
            HFunction::Identity => a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HFunction::Square => "square",
            HFunction::Absolute => "abs",
            HFunction::Identity => "identity",
        }
    }
}

impl FromStr for HFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(HFunction::Square),
            "abs" | "absolute" => Ok(HFunction::Absolute),
            "identity" => Ok(HFunction::Identity),
            _ => Err(Error::invalid(alloc::format!("unknown h function '{s}'"))),
        }
    }
}

/// Set of observations entering the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Region {
    #[default]
    All,
    /// Observations whose every coordinate has `Φ(z)` in `[lo, hi]`.
    QuantileBox { lo: f64, hi: f64 },
}

impl Region {
    pub fn quantile_box(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::invalid("quantile box needs 0 <= lo < hi <= 1"));
        }
        Ok(Region::QuantileBox { lo, hi })
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        match *self {
            Region::All => true,
            Region::QuantileBox { lo, hi } => z.iter().all(|&v| {
                let u = normal::cdf(v);
                u >= lo && u <= hi
            }),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::All => f.write_str("all"),
            Region::QuantileBox { lo, hi } => write!(f, "{lo},{hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub h: HFunction,
    pub region: Region,
    /// Number of bootstrap replicates.
    pub b_reps: usize,
    /// Bandwidth constant.
    pub c: f64,
    /// `None` picks trivariate for three variables and pairwise otherwise.
    pub method: Option<Method>,
    pub seed: u64,
    pub kernel: Kernel,
    pub grid: GridSpec,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            h: HFunction::Square,
            region: Region::All,
            b_reps: 500,
            c: 1.75,
            method: None,
            seed: 0,
            kernel: Kernel::Gaussian,
            grid: GridSpec::default(),
        }
    }
}

impl TestConfig {
    fn validate(&self) -> Result<()> {
        if self.b_reps < 1 {
            return Err(Error::invalid("at least one bootstrap replicate is required"));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid("bandwidth constant must be positive"));
        }
        if let Region::QuantileBox { lo, hi } = self.region {
            Region::quantile_box(lo, hi)?;
        }
        Ok(())
    }

    pub fn resolve_method(&self, p: usize) -> Method {
        self.method.unwrap_or(if p == 3 { Method::Trivariate } else { Method::Pairwise })
    }
}

/// Fit counts accumulated over the points of the statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatisticDiagnostics {
    pub fallbacks: usize,
    pub degenerate: usize,
    pub repaired: usize,
}

impl StatisticDiagnostics {
    fn add(&mut self, other: &StatisticDiagnostics) {
        self.fallbacks += other.fallbacks;
        self.degenerate += other.degenerate;
        self.repaired += other.repaired;
    }
}

/// Diagnostics of a full test run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TestDiagnostics {
    /// Observed statistic.
    pub observed: StatisticDiagnostics,
    /// Summed over successful replicates.
    pub replicates: StatisticDiagnostics,
    /// Grid points of the null densities that used the global correlation.
    pub density_fallbacks: usize,
    /// Null densities whose raw integral was outside `[0.9, 1.1]`.
    pub densities_flagged: usize,
    pub retried_replicates: usize,
    pub failed_replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub t_observed: f64,
    /// Statistics of the successful replicates, in replicate order.
    pub t_replicates: Vec<f64>,
    pub p_value: f64,
    pub config: TestConfig,
    pub method: Method,
    /// Bandwidth of the statistic's local fits.
    pub bandwidth: f64,
    /// Bandwidth of the null conditional density fits.
    pub density_bandwidth: f64,
    pub n: usize,
    pub n_points_used: usize,
    pub diagnostics: TestDiagnostics,
}

/// `(1 + #{t* ≥ t}) / (B + 1)`.
pub fn bootstrap_p_value(t_observed: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|&&t| t >= t_observed).count();
    (1 + exceed) as f64 / (replicates.len() + 1) as f64
}

/// Local fitting machinery for the statistic on one sample.
struct StatisticEngine<'a> {
    estimator: LocalCorrelationEstimator<'a>,
}

impl<'a> StatisticEngine<'a> {
    fn new(sample: &'a PseudoSample, method: Method, b: &Bandwidth, kernel: Kernel) -> Result<Self> {
        Ok(StatisticEngine { estimator: LocalCorrelationEstimator::new(sample, method, b.clone(), kernel)? })
    }

    /// Pair correlations among conditioners at every observation; these do
    /// not change between bootstrap replicates.
    fn conditioner_cache(&self, sample: &PseudoSample) -> Result<Vec<Vec<Option<f64>>>> {
        let p = sample.p();
        (0..sample.n())
            .map(|i| {
                pair_indices(p)
                    .map(|(j, k)| {
                        if j < 2 {
                            return Ok(None);
                        }
                        let problem = self.estimator.pair_problem(j, k).expect("pairwise estimator");
                        match problem.fit(&[sample.z[j][i], sample.z[k][i]], None) {
                            Ok(fit) => Ok(Some(fit.rho[0])),
                            Err(Error::DegenerateNeighborhood { .. }) => Ok(Some(problem.global_correlations()[0])),
                            Err(e) => Err(e),
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn alpha_at(&self, z: &[f64], fixed: Option<&[Option<f64>]>, diag: &mut StatisticDiagnostics) -> Result<f64> {
        let lc = match fixed {
            Some(f) => self.estimator.estimate_with_fixed(z, f),
            None => self.estimator.estimate_or_global(z, None),
        }?;
        diag.fallbacks += lc.diagnostics.fallbacks;
        diag.degenerate += lc.diagnostics.degenerate;
        diag.repaired += usize::from(lc.diagnostics.repaired);
        lgpc_from_r(&lc.matrix, (0, 1))
    }

    fn statistic(
        &self,
        sample: &PseudoSample,
        h: HFunction,
        region: Region,
        cache: Option<&[Vec<Option<f64>>]>,
    ) -> Result<(f64, usize, StatisticDiagnostics)> {
        let mut diag = StatisticDiagnostics::default();
        let mut sum = 0.0;
        let mut used = 0;
        for i in 0..sample.n() {
            let z = sample.row(i);
            if !region.contains(&z) {
                continue;
            }
            let a = self.alpha_at(&z, cache.map(|c| c[i].as_slice()), &mut diag)?;
            sum += h.apply(a);
            used += 1;
        }
        if used == 0 {
            return Err(Error::EmptyRegion);
        }
        Ok((sum / sample.n() as f64, used, diag))
    }
}

/// `T = n⁻¹ Σ_{Z_i ∈ S} h(α̂(Z_i))` for variables 0 and 1 given the rest.
pub fn test_statistic(sample: &PseudoSample, config: &TestConfig, b: &Bandwidth) -> Result<f64> {
    check_sample(sample)?;
    let method = config.resolve_method(sample.p());
    StatisticEngine::new(sample, method, b, config.kernel)?
        .statistic(sample, config.h, config.region, None)
        .map(|(t, _, _)| t)
}

fn check_sample(sample: &PseudoSample) -> Result<()> {
    if sample.p() < 3 {
        return Err(Error::invalid("the test needs two target variables and at least one conditioner"));
    }
    if sample.n() < 50 {
        return Err(Error::invalid("the test needs at least 50 observations"));
    }
    Ok(())
}

/// Null conditional densities of each target at every observation's
/// conditioning values.
pub struct NullModel {
    pub target1: Vec<ConditionalDensity>,
    pub target2: Vec<ConditionalDensity>,
    pub bandwidth: f64,
}

impl NullModel {
    pub fn estimate(sample: &PseudoSample, config: &TestConfig) -> Result<Self> {
        check_sample(sample)?;
        let b = plugin_bandwidth(sample.n(), config.c, Method::Pairwise)?;
        let cols: Vec<&[f64]> = sample.z.iter().map(Vec::as_slice).collect();
        let conds: Vec<usize> = (2..sample.p()).collect();
        let est1 = ConditionalDensityEstimator::new(&cols, 0, &conds, &b, config.kernel, config.grid)?;
        let est2 = ConditionalDensityEstimator::new(&cols, 1, &conds, &b, config.kernel, config.grid)?;
        let pairs: Vec<Result<(ConditionalDensity, ConditionalDensity)>> = map_indices(sample.n(), |i| {
            let zc: Vec<f64> = conds.iter().map(|&j| sample.z[j][i]).collect();
            Ok((est1.estimate(&zc)?, est2.estimate(&zc)?))
        });
        let mut target1 = Vec::with_capacity(sample.n());
        let mut target2 = Vec::with_capacity(sample.n());
        for r in pairs {
            let (a, b) = r?;
            target1.push(a);
            target2.push(b);
        }
        Ok(NullModel { target1, target2, bandwidth: b.get(0) })
    }

    /// Draws one replicate of both targets; `envelope_factor` scales every
    /// envelope.
    fn draw(&self, seed: u64, index: u64, envelope_factor: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = stream(seed, index);
        let n = self.target1.len();
        let mut z1 = Vec::with_capacity(n);
        let mut z2 = Vec::with_capacity(n);
        for (d1, d2) in self.target1.iter().zip(&self.target2) {
            if envelope_factor == 1.0 {
                z1.push(d1.sample(1, &mut rng)?[0]);
                z2.push(d2.sample(1, &mut rng)?[0]);
            } else {
                z1.push(d1.with_envelope_scaled(envelope_factor).sample(1, &mut rng)?[0]);
                z2.push(d2.with_envelope_scaled(envelope_factor).sample(1, &mut rng)?[0]);
            }
        }
        Ok((z1, z2))
    }
}

enum ReplicateOutcome {
    Done { t: f64, diag: StatisticDiagnostics, retried: bool },
    Failed { retried: bool },
}

/// Bootstrap statistics under the null, one per replicate, each from its
/// own random stream. Returns the successful statistics and the diagnostics.
pub fn bootstrap_null(
    sample: &PseudoSample,
    config: &TestConfig,
    b: &Bandwidth,
) -> Result<(Vec<f64>, TestDiagnostics)> {
    config.validate()?;
    let null = NullModel::estimate(sample, config)?;
    bootstrap_with(sample, config, b, &null, None)
}

fn bootstrap_with(
    sample: &PseudoSample,
    config: &TestConfig,
    b: &Bandwidth,
    null: &NullModel,
    cache: Option<&[Vec<Option<f64>>]>,
) -> Result<(Vec<f64>, TestDiagnostics)> {
    let method = config.resolve_method(sample.p());
    let seed = derive_seed(config.seed, BOOTSTRAP_TAG, 0);
    let outcomes = map_indices(config.b_reps, |m| -> Result<ReplicateOutcome> {
        let mut retried = false;
        let mut draw = null.draw(seed, m as u64, 1.0);
        if matches!(draw, Err(Error::EnvelopeFailure { .. })) {
            retried = true;
            draw = null.draw(seed, m as u64, RETRY_ENVELOPE_FACTOR);
        }
        let (z1, z2) = match draw {
            Ok(d) => d,
            Err(Error::EnvelopeFailure { .. }) => return Ok(ReplicateOutcome::Failed { retried }),
            Err(e) => return Err(e),
        };
        let mut cols = vec![normal_scores(&z1), normal_scores(&z2)];
        cols.extend(sample.z[2..].iter().cloned());
        let rep = PseudoSample::from_z_columns(cols)?;
        let engine = StatisticEngine::new(&rep, method, b, config.kernel)?;
        match engine.statistic(&rep, config.h, config.region, cache) {
            Ok((t, _, diag)) => Ok(ReplicateOutcome::Done { t, diag, retried }),
            Err(Error::EmptyRegion) => Ok(ReplicateOutcome::Failed { retried }),
            Err(e) => Err(e),
        }
    });
    let mut diagnostics = TestDiagnostics::default();
    for d in null.target1.iter().chain(&null.target2) {
        diagnostics.density_fallbacks += d.fallbacks;
        diagnostics.densities_flagged += usize::from(d.integral_flagged);
    }
    let mut stats = Vec::with_capacity(config.b_reps);
    for outcome in outcomes {
        match outcome? {
            ReplicateOutcome::Done { t, diag, retried } => {
                stats.push(t);
                diagnostics.replicates.add(&diag);
                diagnostics.retried_replicates += usize::from(retried);
            }
            ReplicateOutcome::Failed { retried } => {
                diagnostics.failed_replicates += 1;
                diagnostics.retried_replicates += usize::from(retried);
            }
        }
    }
    if diagnostics.failed_replicates as f64 > MAX_FAILED_SHARE * config.b_reps as f64 {
        return Err(Error::BootstrapFailed { failed: diagnostics.failed_replicates, total: config.b_reps });
    }
    Ok((stats, diagnostics))
}

/// Runs the test on data already on the pseudo-normal scale. Columns are
/// ordered target 1, target 2, conditioners.
pub fn ci_test_pseudo(sample: &PseudoSample, config: &TestConfig) -> Result<TestResult> {
    config.validate()?;
    check_sample(sample)?;
    let method = config.resolve_method(sample.p());
    let b = plugin_bandwidth(sample.n(), config.c, method)?;
    let engine = StatisticEngine::new(sample, method, &b, config.kernel)?;
    let cache = match method {
        Method::Pairwise => Some(engine.conditioner_cache(sample)?),
        Method::Trivariate => None,
    };
    let (t_observed, n_points_used, observed) = engine.statistic(sample, config.h, config.region, None)?;
    let null = NullModel::estimate(sample, config)?;
    let (t_replicates, mut diagnostics) = bootstrap_with(sample, config, &b, &null, cache.as_deref())?;
    diagnostics.observed = observed;
    Ok(TestResult {
        t_observed,
        p_value: bootstrap_p_value(t_observed, &t_replicates),
        t_replicates,
        config: config.clone(),
        method,
        bandwidth: b.get(0),
        density_bandwidth: null.bandwidth,
        n: sample.n(),
        n_points_used,
        diagnostics,
    })
}

/// Tests whether the first two columns of `data` are conditionally
/// independent given the remaining columns.
pub fn ci_test(data: &DataMatrix, config: &TestConfig) -> Result<TestResult> {
    if data.n_cols() < 3 {
        return Err(Error::invalid("the test needs two target columns and at least one conditioning column"));
    }
    ci_test_pseudo(&to_pseudo_normal(data)?, config)
}

/// Lag-one Granger non-causality test of `cause → effect`:
/// `H₀: Y_t ⊥ X_{t−1} | Y_{t−1}` with the trivariate method.
pub fn granger_test(cause: &[f64], effect: &[f64], config: &TestConfig) -> Result<TestResult> {
    if cause.len() != effect.len() {
        return Err(Error::invalid(alloc::format!(
            "series lengths differ: {} and {}",
            cause.len(),
            effect.len()
        )));
    }
    if cause.len() < 51 {
        return Err(Error::invalid("Granger test needs series of length at least 51"));
    }
    let y_t = effect[1..].to_vec();
    let x_lag = cause[..cause.len() - 1].to_vec();
    let y_lag = effect[..effect.len() - 1].to_vec();
    let names = vec![String::from("y_t"), String::from("x_lag1"), String::from("y_lag1")];
    let data = DataMatrix::new(names, vec![y_t, x_lag, y_lag])?;
    let config = TestConfig { method: Some(Method::Trivariate), ..config.clone() };
    ci_test(&data, &config)
}
