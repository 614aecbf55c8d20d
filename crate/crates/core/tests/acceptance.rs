//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line.
//!
//! The Monte Carlo criteria (1–4) take tens of minutes on a single core.
//! Numeric arguments select criteria: `cargo test --test acceptance -- 5 9`.

use lgpc_core::citest::{ci_test, TestConfig};
use lgpc_core::dgp::{benchmark, BenchmarkOptions, DgpId};
use lgpc_core::lgpc::{estimate_partial_correlation, lgpc_from_r, lgpc_gradient, lgpc_scalar, variance_trivariate};
use lgpc_core::linalg::{pair_indices, Matrix};
use lgpc_core::loccor::{estimate_field, quantile_grid, tensor_grid, LocalCorrelationEstimator};
use lgpc_core::stream::stream;
use lgpc_core::{normal, plugin_bandwidth, to_pseudo_normal, DataMatrix, Kernel, Method};
use rand::Rng;
use rand_distr::StandardNormal;

fn report(criterion: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!("criterion {criterion:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}

fn ids(labels: &[&str]) -> Vec<DgpId> {
    labels.iter().map(|l| l.parse().unwrap()).collect()
}

/// Rejection rates for each design; `bounds` gives `(lo, hi)` per design.
fn run_rates(criterion: u32, name: &str, labels: &[&str], n: usize, c: f64, reps: usize, bounds: &[(f64, f64)]) -> bool {
    let config = TestConfig { b_reps: 100, c, ..TestConfig::default() };
    let opts = BenchmarkOptions { n, reps, seed: 20_190_601 + criterion as u64, ..BenchmarkOptions::default() };
    let report_ = benchmark(&ids(labels), &opts, &config).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (row, &(lo, hi)) in report_.rows.iter().zip(bounds) {
        let ok = row.failures == 0 && row.rejection_rate >= lo && row.rejection_rate <= hi;
        pass &= ok;
        parts.push(format!(
            "DGP{} rate {:.3} in [{lo}, {hi}]{} {}",
            row.dgp,
            row.rejection_rate,
            if row.failures > 0 { format!(" failures {}", row.failures) } else { String::new() },
            if ok { "ok" } else { "MISS" }
        ));
    }
    report(criterion, name, pass, &format!("n={n}, c={c}, B=100, reps={reps}: {}", parts.join("; ")))
}

fn criterion_01_level() -> bool {
    run_rates(1, "level, designs 1-4", &["1", "2", "3", "4"], 100, 1.0, 200, &[(0.01, 0.10); 4])
}

fn criterion_02_power_n100() -> bool {
    run_rates(2, "power n=100", &["5", "8", "9"], 100, 1.0, 200, &[(0.83, 1.0), (0.91, 1.0), (0.89, 1.0)])
}

fn criterion_03_power_n200() -> bool {
    run_rates(3, "power n=200", &["5", "7"], 200, 1.4, 100, &[(0.92, 1.0), (0.85, 1.0)])
}

fn criterion_04_pairwise_power() -> bool {
    run_rates(4, "pairwise power, 4 and 5 dims", &["5'", "5''"], 200, 1.75, 100, &[(0.90, 1.0), (0.90, 1.0)])
}

fn gaussian_sample(r: &Matrix, n: usize, seed: u64) -> DataMatrix {
    let l = r.cholesky().unwrap();
    let p = r.rows();
    let mut rng = stream(seed, 0);
    let mut cols = vec![Vec::with_capacity(n); p];
    for _ in 0..n {
        let e: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let x = l.mul_vec(&e);
        for j in 0..p {
            cols[j].push(x[j]);
        }
    }
    DataMatrix::from_columns(cols).unwrap()
}

fn criterion_05_gaussian_reduction() -> bool {
    let r = Matrix::correlation_from_pairs(3, &[0.5, 0.3, 0.4]);
    let truth = lgpc_scalar(0.5, 0.3, 0.4);
    let sample = to_pseudo_normal(&gaussian_sample(&r, 5000, 5)).unwrap();
    let b = plugin_bandwidth(5000, 4.0, Method::Trivariate).unwrap();
    let est = LocalCorrelationEstimator::new(&sample, Method::Trivariate, b, Kernel::Gaussian).unwrap();
    let axis: Vec<f64> = [0.25, 0.375, 0.5, 0.625, 0.75].iter().map(|&q| normal::quantile(q)).collect();
    let grid = tensor_grid(&[axis.clone(), axis.clone(), axis]);
    let errs: Vec<f64> = grid
        .iter()
        .map(|z| (lgpc_from_r(&est.estimate(z, None).unwrap().matrix, (0, 1)).unwrap() - truth).abs())
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    report(
        5,
        "Gaussian reduction",
        mean <= 0.05,
        &format!("mean |alpha - {truth:.4}| = {mean:.4} over {} points of [0.25,0.75]^3, n=5000, c=4", errs.len()),
    )
}

fn criterion_06_structural_model() -> bool {
    let n = 500;
    let mut rng = stream(606, 0);
    let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x3: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x2: Vec<f64> = x1.iter().zip(&x3).map(|(a, c)| a * a + c).collect();
    let data = DataMatrix::from_columns(vec![x1, x2, x3]).unwrap();

    // Ordinary partial correlation from the inverse sample correlation matrix.
    let cols: Vec<&[f64]> = data.columns.iter().map(Vec::as_slice).collect();
    let pairs: Vec<f64> = pair_indices(3).map(|(j, k)| lgpc_core::locallik::pearson(cols[j], cols[k])).collect();
    let prec = Matrix::correlation_from_pairs(3, &pairs).spd_inverse().unwrap().0;
    let partial = -prec[(0, 1)] / (prec[(0, 0)] * prec[(1, 1)]).sqrt();

    let config = TestConfig { b_reps: 199, seed: 6, ..TestConfig::default() };
    let p = ci_test(&data, &config).unwrap().p_value;

    let sample = to_pseudo_normal(&data).unwrap();
    let b = plugin_bandwidth(n, 4.0, Method::Trivariate).unwrap();
    let est = LocalCorrelationEstimator::new(&sample, Method::Trivariate, b, Kernel::Gaussian).unwrap();
    let along = |x: f64| {
        let (z, _) = sample.x_to_z_point(&[x, x * x, 0.0]).unwrap();
        lgpc_from_r(&est.estimate_or_global(&z, None).unwrap().matrix, (0, 1)).unwrap()
    };
    let left: Vec<f64> = [-1.5, -1.0, -0.5].iter().map(|&x| along(x)).collect();
    let right: Vec<f64> = [0.5, 1.0, 1.5].iter().map(|&x| along(x)).collect();
    let sign_change = left.iter().all(|&a| a < 0.0) && right.iter().all(|&a| a > 0.0);
    report(
        6,
        "structural model",
        partial.abs() < 0.1 && p <= 0.01 && sign_change,
        &format!(
            "partial correlation {partial:.3}, p-value {p:.4} (B=199), alpha along x2=x1^2 at x1=-1.5,-1,-0.5: {left:.3?}; at 0.5,1,1.5: {right:.3?}"
        ),
    )
}

fn criterion_07_monotone_invariance() -> bool {
    let data = lgpc_core::generate(&lgpc_core::DgpSpec::new("8".parse().unwrap(), 300, 77)).unwrap();
    let mut moved = data.clone();
    moved.columns[0] = moved.columns[0].iter().map(|x| x.exp()).collect();
    moved.columns[1] = moved.columns[1].iter().map(|x| x * x * x).collect();
    let field = |d: &DataMatrix| {
        let s = to_pseudo_normal(d).unwrap();
        let grid = quantile_grid(&s, &[0.2, 0.4, 0.6, 0.8]);
        let b = plugin_bandwidth(s.n(), 1.75, Method::Trivariate).unwrap();
        let f = estimate_field(&s, &grid, Method::Trivariate, &b, Kernel::Gaussian).unwrap();
        let alphas: Vec<u64> = f.matrices.iter().map(|m| lgpc_from_r(m, (0, 1)).unwrap().to_bits()).collect();
        (s.z, alphas)
    };
    let (za, aa) = field(&data);
    let (zb, ab) = field(&moved);
    report(
        7,
        "monotone invariance",
        za == zb && aa == ab,
        &format!("{} grid points, exp on column 1 and cube on column 2, bitwise comparison", aa.len()),
    )
}

fn random_correlation<R: Rng>(p: usize, rng: &mut R) -> Matrix {
    loop {
        let v: Vec<Vec<f64>> = (0..p).map(|_| (0..p + 1).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let pairs: Vec<f64> = pair_indices(p).map(|(j, k)| dot(&v[j], &v[k]) / (dot(&v[j], &v[j]) * dot(&v[k], &v[k])).sqrt()).collect();
        let r = Matrix::correlation_from_pairs(p, &pairs);
        // Keep away from the boundary where finite differences lose accuracy.
        if r.symmetric_eigen().0.iter().all(|&e| e > 0.05) {
            return r;
        }
    }
}

fn criterion_08_gradient_suite() -> bool {
    let mut rng = stream(808, 0);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for p in 3..=5 {
        for _ in 0..100 {
            let r = random_correlation(p, &mut rng);
            let rho = r.upper_pairs();
            let g = lgpc_gradient(&r, (0, 1)).unwrap();
            let h = 1e-6;
            let fd: Vec<f64> = (0..rho.len())
                .map(|k| {
                    let mut up = rho.clone();
                    let mut dn = rho.clone();
                    up[k] += h;
                    dn[k] -= h;
                    let f = |x: &[f64]| lgpc_from_r(&Matrix::correlation_from_pairs(p, x), (0, 1)).unwrap();
                    (f(&up) - f(&dn)) / (2.0 * h)
                })
                .collect();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&diff) / norm(&g));
            count += 1;
        }
    }
    report(8, "gradient suite", worst < 1e-5, &format!("worst relative error {worst:.2e} over {count} configurations, p = 3, 4, 5"))
}

fn criterion_09_variance_calibration() -> bool {
    // Pairwise: plug-in standard error against the Monte Carlo spread.
    let n = 500;
    let r2 = Matrix::correlation_from_pairs(2, &[0.5]);
    let b2 = plugin_bandwidth(n, 1.75, Method::Pairwise).unwrap();
    let mut rhos = Vec::new();
    let mut ses = Vec::new();
    for rep in 0..500 {
        let s = to_pseudo_normal(&gaussian_sample(&r2, n, 9_000 + rep)).unwrap();
        let est = LocalCorrelationEstimator::new(&s, Method::Pairwise, b2.clone(), Kernel::Gaussian).unwrap();
        let e = estimate_partial_correlation(&est, &[0.0, 0.0], 0.95).unwrap();
        rhos.push(e.alpha);
        ses.push(e.std_err.unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sd = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let mc_sd = sd(&rhos);
    let plug = mean(&ses);
    let ratio_pair = plug / mc_sd;
    let pair_ok = (ratio_pair - 1.0).abs() <= 0.25;

    // Trivariate: sandwich standard error against a 200-resample bootstrap.
    let r3 = Matrix::correlation_from_pairs(3, &[0.5, 0.0, 0.0]);
    let data = gaussian_sample(&r3, n, 99);
    let b3 = plugin_bandwidth(n, 1.75, Method::Trivariate).unwrap();
    let z0 = [0.0; 3];
    let s = to_pseudo_normal(&data).unwrap();
    let est = LocalCorrelationEstimator::new(&s, Method::Trivariate, b3.clone(), Kernel::Gaussian).unwrap();
    let fit = est.estimate(&z0, None).unwrap();
    let rho = fit.matrix.upper_pairs();
    let grad = lgpc_gradient(&fit.matrix, (0, 1)).unwrap();
    let se3 = variance_trivariate(est.joint_problem().unwrap(), &z0, &rho, &grad).unwrap();
    let mut rng = stream(990, 0);
    let boot: Vec<f64> = (0..200)
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let cols = data.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect();
            let s = to_pseudo_normal(&DataMatrix::from_columns(cols).unwrap()).unwrap();
            let est = LocalCorrelationEstimator::new(&s, Method::Trivariate, b3.clone(), Kernel::Gaussian).unwrap();
            lgpc_from_r(&est.estimate_or_global(&z0, None).unwrap().matrix, (0, 1)).unwrap()
        })
        .collect();
    let boot_sd = sd(&boot);
    let ratio_tri = se3 / boot_sd;
    let tri_ok = (ratio_tri - 1.0).abs() <= 0.5;
    report(
        9,
        "variance calibration",
        pair_ok && tri_ok,
        &format!(
            "pairwise: mean plug-in se {plug:.4} vs Monte Carlo sd {mc_sd:.4} (ratio {ratio_pair:.3}, need within 25%); trivariate: se {se3:.4} vs bootstrap sd {boot_sd:.4} (ratio {ratio_tri:.3}, need within 50%)"
        ),
    )
}

fn criterion_10_scalar_equivalence() -> bool {
    let mut rng = stream(1010, 0);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 100_000 {
        let (a, b, c) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = Matrix::correlation_from_pairs(3, &[a, b, c]);
        if !r.is_positive_definite() {
            continue;
        }
        worst = worst.max((lgpc_from_r(&r, (0, 1)).unwrap() - lgpc_scalar(a, b, c)).abs());
        count += 1;
    }
    report(10, "matrix vs scalar form", worst <= 1e-12, &format!("max difference {worst:.2e} over {count} valid triples"))
}

fn main() {
    let criteria: [(u32, fn() -> bool); 10] = [
        (1, criterion_01_level),
        (2, criterion_02_power_n100),
        (3, criterion_03_power_n200),
        (4, criterion_04_pairwise_power),
        (5, criterion_05_gaussian_reduction),
        (6, criterion_06_structural_model),
        (7, criterion_07_monotone_invariance),
        (8, criterion_08_gradient_suite),
        (9, criterion_09_variance_calibration),
        (10, criterion_10_scalar_equivalence),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, run) in criteria {
        if (selected.is_empty() || selected.contains(&id)) && !run() {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
