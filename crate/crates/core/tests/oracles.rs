//! Estimator behaviour checked against closed-form Gaussian results.

use lgpc_core::citest::{granger_test, TestConfig};
use lgpc_core::conddens::{ConditionalDensity, ConditionalDensityEstimator, GridSpec};
use lgpc_core::dgp::{generate, DgpSpec};
use lgpc_core::lgpc::{estimate_partial_correlation, lgpc_from_r, partial_cov};
use lgpc_core::linalg::{pair_indices, Matrix};
use lgpc_core::loccor::LocalCorrelationEstimator;
use lgpc_core::stream::stream;
use lgpc_core::{normal, plugin_bandwidth, to_pseudo_normal, DataMatrix, Kernel, Method};
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_sample(r: &Matrix, n: usize, seed: u64) -> DataMatrix {
    let l = r.cholesky().unwrap();
    let p = r.rows();
    let mut rng = stream(seed, 0);
    let mut cols = vec![Vec::with_capacity(n); p];
    for _ in 0..n {
        let e: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        for (col, x) in cols.iter_mut().zip(l.mul_vec(&e)) {
            col.push(x);
        }
    }
    DataMatrix::from_columns(cols).unwrap()
}

/// Plain Gauss–Jordan inverse, kept separate from the library routines.
fn gauss_jordan(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().copied().chain((0..n).map(|j| if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot_row = m[c].clone();
                m[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    m.into_iter().map(|row| row[n..].to_vec()).collect()
}

fn rows_of(r: &Matrix) -> Vec<Vec<f64>> {
    (0..r.rows()).map(|i| (0..r.cols()).map(|j| r[(i, j)]).collect()).collect()
}

#[test]
fn schur_complement_matches_full_inverse() {
    let pairs = [0.3, -0.2, 0.1, 0.25, 0.15, 0.05, -0.1, 0.2, 0.3, -0.15];
    let r = Matrix::correlation_from_pairs(5, &pairs);
    let inv = gauss_jordan(&rows_of(&r));
    for (a, b) in [(0, 1), (1, 3), (2, 4)] {
        let block = vec![vec![inv[a][a], inv[a][b]], vec![inv[b][a], inv[b][b]]];
        let expect = gauss_jordan(&block);
        let got = partial_cov(&r, (a, b)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((got[(i, j)] - expect[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn four_variable_partial_matches_recursion() {
    // rho_{ij.S} from rho_{..} conditioned one variable at a time.
    let pairs = [0.5, 0.3, 0.2, 0.4, -0.1, 0.25];
    let r = Matrix::correlation_from_pairs(4, &pairs);
    let p1 = |a: usize, b: usize, c: usize| {
        let (ab, ac, bc) = (r[(a, b)], r[(a, c)], r[(b, c)]);
        (ab - ac * bc) / ((1.0 - ac * ac) * (1.0 - bc * bc)).sqrt()
    };
    let (r01, r03, r13) = (p1(0, 1, 2), p1(0, 3, 2), p1(1, 3, 2));
    let expect = (r01 - r03 * r13) / ((1.0 - r03 * r03) * (1.0 - r13 * r13)).sqrt();
    assert!((lgpc_from_r(&r, (0, 1)).unwrap() - expect).abs() < 1e-12);
}

fn conditional_density(data: &DataMatrix, z_cond: &[f64]) -> ConditionalDensity {
    let s = to_pseudo_normal(data).unwrap();
    let cols: Vec<&[f64]> = s.z.iter().map(Vec::as_slice).collect();
    let b = plugin_bandwidth(s.n(), 1.75, Method::Pairwise).unwrap();
    ConditionalDensityEstimator::new(&cols, 0, &[1, 2], &b, Kernel::Gaussian, GridSpec::default())
        .unwrap()
        .estimate(z_cond)
        .unwrap()
}

#[test]
fn conditional_density_recovers_gaussian() {
    let r = Matrix::correlation_from_pairs(3, &[0.5, 0.3, 0.2]);
    let data = gaussian_sample(&r, 2000, 11);
    let z_cond = [0.3, -0.5];
    let dens = conditional_density(&data, &z_cond);
    // Gaussian conditional from the true matrix, computed by hand.
    let (r12, r13, r23) = (0.5, 0.3, 0.2);
    let det = 1.0 - r23 * r23;
    let beta = [(r12 - r13 * r23) / det, (r13 - r12 * r23) / det];
    let mu = beta[0] * z_cond[0] + beta[1] * z_cond[1];
    let s2 = 1.0 - beta[0] * r12 - beta[1] * r13;
    let sup = (0..=180)
        .map(|i| -4.5 + 0.05 * i as f64)
        .map(|x| (dens.density(x) - (-(x - mu).powi(2) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt()).abs())
        .fold(0.0, f64::max);
    assert!(sup < 0.05, "sup error {sup}");
    assert!((dens.integral() - 1.0).abs() < 1e-9);
}

#[test]
fn conditional_density_under_independence_is_standard_normal() {
    let data = gaussian_sample(&Matrix::identity(3), 2000, 12);
    let dens = conditional_density(&data, &[0.8, -0.4]);
    let h = 0.01;
    let tv: f64 = 0.5 * (0..900).map(|i| -4.5 + h * (i as f64 + 0.5)).map(|x| (dens.density(x) - normal::pdf(x)).abs() * h).sum::<f64>();
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn accept_reject_matches_target_distribution() {
    let grid = GridSpec::default().abscissae();
    let values = grid.iter().map(|&x| normal::pdf(x)).collect();
    let dens = ConditionalDensity::from_values(grid, values).unwrap();
    let mut draws = dens.sample(20_000, &mut stream(13, 0)).unwrap();
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal::cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS distance {ks}");
}

#[test]
fn garch_design_has_the_stated_long_run_variance() {
    let x = generate(&DgpSpec::new("4".parse().unwrap(), 200_000, 14)).unwrap();
    for col in &x.columns[..2] {
        let m = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
        assert!((m - 0.2).abs() < 0.02, "mean square {m}");
    }
}

#[test]
fn recursive_designs_are_stationary_after_burn_in() {
    for label in ["2", "3", "4", "5", "6", "7", "8", "9", "10", "5'", "5''"] {
        let x = generate(&DgpSpec::new(label.parse().unwrap(), 100_000, 15)).unwrap();
        for col in &x.columns[..2] {
            let (a, b) = col.split_at(col.len() / 2);
            let var = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
            };
            let ratio = var(a) / var(b);
            assert!((ratio - 1.0).abs() < 0.1, "design {label}: half variance ratio {ratio}");
        }
    }
}

#[test]
fn trivariate_standard_error_shrinks_with_n() {
    let r = Matrix::correlation_from_pairs(3, &[0.5, 0.2, 0.2]);
    let se = |n: usize| {
        let s = to_pseudo_normal(&gaussian_sample(&r, n, 16)).unwrap();
        let b = plugin_bandwidth(n, 1.75, Method::Trivariate).unwrap();
        let est = LocalCorrelationEstimator::new(&s, Method::Trivariate, b, Kernel::Gaussian).unwrap();
        estimate_partial_correlation(&est, &[0.0; 3], 0.95).unwrap().std_err.unwrap()
    };
    let ratio = se(2000) / se(500);
    assert!((0.3..=0.8).contains(&ratio), "ratio {ratio}");
}

#[test]
fn band_covers_zero_under_conditional_independence() {
    let r = Matrix::correlation_from_pairs(3, &[0.35, 0.7, 0.5]);
    let s = to_pseudo_normal(&gaussian_sample(&r, 1000, 17)).unwrap();
    let b = plugin_bandwidth(1000, 1.75, Method::Trivariate).unwrap();
    let est = LocalCorrelationEstimator::new(&s, Method::Trivariate, b, Kernel::Gaussian).unwrap();
    let e = estimate_partial_correlation(&est, &[0.0; 3], 0.95).unwrap();
    let (lo, hi) = (e.ci_low.unwrap(), e.ci_high.unwrap());
    assert!(lo < 0.0 && hi > 0.0, "band [{lo}, {hi}]");
}

#[test]
fn pairwise_and_trivariate_agree_on_gaussian_data() {
    let r = Matrix::correlation_from_pairs(3, &[0.5, 0.3, 0.4]);
    let s = to_pseudo_normal(&gaussian_sample(&r, 3000, 18)).unwrap();
    for method in [Method::Pairwise, Method::Trivariate] {
        let b = plugin_bandwidth(3000, 1.75, method).unwrap();
        let est = LocalCorrelationEstimator::new(&s, method, b, Kernel::Gaussian).unwrap();
        let fit = est.estimate(&[0.0; 3], None).unwrap();
        for ((j, k), got) in pair_indices(3).zip(fit.matrix.upper_pairs()) {
            assert!((got - r[(j, k)]).abs() < 0.1, "{method:?} pair ({j},{k}): {got}");
        }
    }
}

#[test]
fn granger_detects_linear_lag_dependence() {
    let n = 200;
    let mut rng = stream(19, 0);
    let mut x = vec![0.0; n + 50];
    let mut y = vec![0.0; n + 50];
    for t in 1..n + 50 {
        x[t] = 0.5 * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
        y[t] = 0.3 * y[t - 1] + 0.6 * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
    }
    let (x, y) = (&x[50..], &y[50..]);
    let config = TestConfig { b_reps: 100, seed: 19, ..TestConfig::default() };
    let forward = granger_test(x, y, &config).unwrap();
    assert!(forward.p_value < 0.05, "x -> y p-value {}", forward.p_value);
    assert_eq!(forward.method, Method::Trivariate);
}
