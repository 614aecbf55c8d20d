//! Simulation designs for level and power studies of conditional
//! independence tests, and a Monte Carlo driver.
//!
//! Every design produces `(X₁ₜ, X₂ₜ, X₃ₜ…)`; the null of interest is
//! `X₁ₜ ⊥ X₂ₜ | X₃ₜ`. The base family conditions on `X₁,ₜ₋₁`, the primed
//! family on two lags of `X₁` and the double-primed family on three.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::citest::{ci_test, TestConfig};
use crate::par::map_indices;
use crate::stream::{derive_seed, stream};
use crate::transform::DataMatrix;
use crate::{Error, Result};

pub const DEFAULT_BURN_IN: usize = 200;
const DATA_TAG: u64 = 0xDA7A;
const TEST_TAG: u64 = 0x7E57;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DgpFamily {
    /// One conditioning variable.
    Base,
    /// Two conditioning variables.
    Primed,
    /// Three conditioning variables.
    DoublePrimed,
}

impl DgpFamily {
    pub fn lags(self) -> usize {
        match self {
            DgpFamily::Base => 1,
            DgpFamily::Primed => 2,
            DgpFamily::DoublePrimed => 3,
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            DgpFamily::Base => "",
            DgpFamily::Primed => "'",
            DgpFamily::DoublePrimed => "''",
        }
    }
}

/// A design: family plus number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DgpId {
    pub family: DgpFamily,
    pub id: u8,
}

impl DgpId {
    pub fn new(family: DgpFamily, id: u8) -> Result<Self> {
        let ok = match family {
            DgpFamily::Base => (1..=10).contains(&id),
            _ => matches!(id, 1 | 2 | 5..=10),
        };
        if !ok {
            return Err(Error::invalid(format!("no design {id}{}", family.suffix())));
        }
        Ok(DgpId { family, id })
    }

    /// Designs under which the conditional independence null holds.
    pub fn is_null(self) -> bool {
        self.id <= 4
    }

    /// Label such as `5`, `5'` or `5''`.
    pub fn label(self) -> String {
        format!("{}{}", self.id, self.family.suffix())
    }
}

impl fmt::Display for DgpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for DgpId {
    type Err = Error;

    /// Accepts `5`, `5'`, `5''`, `5p`, `5pp`, `5′` and `5″`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let digits: String = s.chars().take_while(char::is_ascii_digit).collect();
        let id: u8 = digits.parse().map_err(|_| Error::invalid(format!("bad design label '{s}'")))?;
        let family = match &s[digits.len()..] {
            "" => DgpFamily::Base,
            "'" | "p" | "′" => DgpFamily::Primed,
            "''" | "pp" | "″" | "′′" => DgpFamily::DoublePrimed,
            _ => return Err(Error::invalid(format!("bad design label '{s}'"))),
        };
        DgpId::new(family, id)
    }
}

/// Parses a comma-separated list of design labels.
pub fn parse_dgp_list(s: &str) -> Result<Vec<DgpId>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

/// Coefficients where the printed designs leave room for interpretation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpReadings {
    /// Autoregressive coefficient of `X₂` in design 9.
    pub dgp9_x2_ar_coef: f64,
    /// ARCH coefficient on `X₂,ₜ₋₁²` in the `h₂` recursion of design 10.
    pub dgp10_h2_arch_coef: f64,
}

impl Default for DgpReadings {
    fn default() -> Self {
        DgpReadings { dgp9_x2_ar_coef: 0.5, dgp10_h2_arch_coef: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub dgp: DgpId,
    pub n: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub readings: DgpReadings,
}

impl DgpSpec {
    pub fn new(dgp: DgpId, n: usize, seed: u64) -> Self {
        DgpSpec { dgp, n, seed, burn_in: DEFAULT_BURN_IN, readings: DgpReadings::default() }
    }
}

fn column_names(family: DgpFamily) -> Vec<String> {
    let mut names = vec!["x1".to_string(), "x2".to_string()];
    match family {
        DgpFamily::Base => names.push("x3".to_string()),
        f => names.extend((1..=f.lags()).map(|k| format!("x3_{k}"))),
    }
    names
}

/// Simulates one sample of `spec.n` rows.
pub fn generate(spec: &DgpSpec) -> Result<DataMatrix> {
    let DgpId { family, id } = DgpId::new(spec.dgp.family, spec.dgp.id)?;
    if spec.n < 1 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let lags = family.lags();
    let total = spec.burn_in + spec.n + lags;
    let mut e1 = stream(spec.seed, 1);
    let mut e2 = stream(spec.seed, 2);
    let draw = |rng: &mut crate::stream::StreamRng| -> f64 { rng.sample(StandardNormal) };

    if id == 1 {
        // Independent noise, conditioners included.
        let mut e3 = stream(spec.seed, 3);
        let x1 = (0..spec.n).map(|_| draw(&mut e1)).collect();
        let x2 = (0..spec.n).map(|_| draw(&mut e2)).collect();
        let mut cols = vec![x1, x2];
        cols.extend((0..lags).map(|_| (0..spec.n).map(|_| draw(&mut e3)).collect()));
        return DataMatrix::new(column_names(family), cols);
    }

    let rd = spec.readings;
    let mut x1 = vec![0.0; total];
    let mut x2 = vec![0.0; total];
    // Unconditional means of the variance recursions.
    let (mut h1, mut h2) = match id {
        4 => (0.2, 0.2),
        10 => {
            let h2 = 0.01 / (1.0 - 0.9 - rd.dgp10_h2_arch_coef);
            let h2 = if h2 > 0.0 { h2 } else { 0.2 };
            ((0.01 + 0.5 * h2) / 0.5, h2)
        }
        _ => (0.0, 0.0),
    };
    let lag = |x: &[f64], t: usize, k: usize| if t >= k { x[t - k] } else { 0.0 };
    // Lagged own-dynamics of X₁ for each family: 0.5, 0.25, 0.125.
    let ar = |x: &[f64], t: usize| -> f64 {
        let mut s = 0.5 * lag(x, t, 1);
        if lags >= 2 {
            s += 0.25 * lag(x, t, 2);
        }
        if lags >= 3 {
            s += 0.125 * lag(x, t, 3);
        }
        s
    };
    let higher = |x: &[f64], t: usize| -> f64 {
        let mut s = 0.0;
        if lags >= 2 {
            s += 0.25 * lag(x, t, 2);
        }
        if lags >= 3 {
            s += 0.125 * lag(x, t, 3);
        }
        s
    };
    for t in 0..total {
        let a = draw(&mut e1);
        let b = draw(&mut e2);
        let x1l = lag(&x1, t, 1);
        let x2l = lag(&x2, t, 1);
        match id {
            2 => {
                x1[t] = ar(&x1, t) + a;
                x2[t] = 0.5 * x2l + b;
            }
            3 => {
                x1[t] = a * libm::sqrt(0.01 + 0.5 * x1l * x1l);
                x2[t] = 0.5 * x2l + b;
            }
            4 => {
                h1 = 0.01 + 0.9 * h1 + 0.05 * x1l * x1l;
                h2 = 0.01 + 0.9 * h2 + 0.05 * x2l * x2l;
                x1[t] = a * libm::sqrt(h1);
                x2[t] = b * libm::sqrt(h2);
            }
            5 => {
                x2[t] = 0.5 * x2l + b;
                x1[t] = ar(&x1, t) + 0.5 * x2[t] + a;
            }
            6 => {
                x2[t] = 0.5 * x2l + b;
                x1[t] = ar(&x1, t) + 0.5 * x2[t] * x2[t] + a;
            }
            7 => {
                x2[t] = 0.5 * x2l + b;
                x1[t] = 0.5 * x1l * x2[t] + higher(&x1, t) + a;
            }
            8 => {
                x2[t] = 0.5 * x2l + b;
                x1[t] = ar(&x1, t) + 0.5 * x2[t] * a;
            }
            9 => {
                x2[t] = rd.dgp9_x2_ar_coef * x2l + b;
                let mut h = 0.01 + 0.5 * x1l * x1l + 0.25 * x2[t] * x2[t];
                if lags >= 2 {
                    let v = lag(&x1, t, 2);
                    h += 0.25 * v * v;
                }
                if lags >= 3 {
                    let v = lag(&x1, t, 3);
                    h += 0.125 * v * v;
                }
                x1[t] = a * libm::sqrt(h);
            }
            10 => {
                h2 = 0.01 + 0.9 * h2 + rd.dgp10_h2_arch_coef * x2l * x2l;
                x2[t] = b * libm::sqrt(h2);
                h1 = 0.01 + 0.1 * h1 + 0.4 * x1l * x1l + 0.5 * x2[t] * x2[t];
                x1[t] = a * libm::sqrt(h1);
            }
            _ => unreachable!("validated above"),
        }
    }
    let start = total - spec.n;
    let mut cols = vec![x1[start..].to_vec(), x2[start..].to_vec()];
    for k in 1..=lags {
        cols.push(x1[start - k..total - k].to_vec());
    }
    DataMatrix::new(column_names(family), cols)
}

/// Rejection summary for one design.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub dgp: DgpId,
    pub n: usize,
    pub c: f64,
    pub b_reps: usize,
    pub reps: usize,
    pub rejections: usize,
    /// Replications that ended in an error.
    pub failures: usize,
    /// Rejections over successful replications.
    pub rejection_rate: f64,
    /// Per-replication p-values, `None` for failures.
    pub p_values: Vec<Option<f64>>,
    pub elapsed_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub level: f64,
    pub seed: u64,
    pub rows: Vec<BenchmarkRow>,
}

/// Replication `rep` of design `dgp`: its data and the test config it is
/// run with. Exposed so single replications can be reproduced.
pub fn replication(dgp: DgpId, n: usize, rep: usize, config: &TestConfig, seed: u64) -> (DgpSpec, TestConfig) {
    let key = ((dgp.family as u64) << 8) | dgp.id as u64;
    let data_seed = derive_seed(derive_seed(seed, DATA_TAG, key), DATA_TAG, rep as u64);
    let test_seed = derive_seed(derive_seed(seed, TEST_TAG, key), TEST_TAG, rep as u64);
    (DgpSpec::new(dgp, n, data_seed), TestConfig { seed: test_seed, ..config.clone() })
}

/// Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkOptions {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Rejection threshold for the p-value.
    pub level: f64,
    pub readings: DgpReadings,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions { n: 100, reps: 200, seed: 0, level: 0.05, readings: DgpReadings::default() }
    }
}

/// Runs `opts.reps` replications of each design and counts rejections.
/// Replications run in parallel and are reproducible from `opts.seed`.
pub fn benchmark(dgps: &[DgpId], opts: &BenchmarkOptions, config: &TestConfig) -> Result<BenchmarkReport> {
    if opts.reps < 1 {
        return Err(Error::invalid("at least one replication is required"));
    }
    let rows = dgps
        .iter()
        .map(|&dgp| {
            #[cfg(feature = "std")]
            let clock = std::time::Instant::now();
            let p_values: Vec<Option<f64>> = map_indices(opts.reps, |r| {
                let (mut spec, cfg) = replication(dgp, opts.n, r, config, opts.seed);
                spec.readings = opts.readings;
                let data = generate(&spec).ok()?;
                ci_test(&data, &cfg).ok().map(|t| t.p_value)
            });
            #[cfg(feature = "std")]
            let elapsed_secs = Some(clock.elapsed().as_secs_f64());
            #[cfg(not(feature = "std"))]
            let elapsed_secs = None;
            let ok: Vec<f64> = p_values.iter().flatten().copied().collect();
            let rejections = ok.iter().filter(|&&p| p <= opts.level).count();
            BenchmarkRow {
                dgp,
                n: opts.n,
                c: config.c,
                b_reps: config.b_reps,
                reps: opts.reps,
                rejections,
                failures: opts.reps - ok.len(),
                rejection_rate: if ok.is_empty() { f64::NAN } else { rejections as f64 / ok.len() as f64 },
                p_values,
                elapsed_secs,
            }
        })
        .collect();
    Ok(BenchmarkReport { level: opts.level, seed: opts.seed, rows })
}
