//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lgpc_core::citest::{ci_test, granger_test, HFunction, Region, TestConfig};
use lgpc_core::dgp::{self, parse_dgp_list, BenchmarkOptions, DgpId, DgpSpec};
use lgpc_core::lgpc::partial_correlation_map;
use lgpc_core::loccor::{empirical_quantile, LocalCorrelationEstimator};
use lgpc_core::{plugin_bandwidth, to_pseudo_normal, DataMatrix, Kernel, Method};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::io::{format_sig, header_lines, read_table, write_columns, write_rows, Output};
use crate::report::{benchmark_json, test_result_json};

#[derive(Debug, Parser)]
#[command(name = "lgpc", version, about = "Local Gaussian partial correlation maps and conditional independence tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank-transform every column to standard normal scores.
    Transform(TransformArgs),
    /// Local partial correlation of two variables over a grid, with the
    /// conditioning variables held at fixed values.
    Map(MapArgs),
    /// Bootstrap test of conditional independence.
    Test(TestArgs),
    /// Lag-one Granger causality tests in both directions.
    Granger(GrangerArgs),
    /// Simulate one of the benchmark designs.
    Simulate(SimulateArgs),
    /// Rejection rates of the test over simulated designs.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub x1: String,
    #[arg(long)]
    pub x2: String,
    /// Conditioning values on the data scale, `NAME=VALUE[,NAME=VALUE…]`.
    #[arg(long)]
    pub cond: String,
    /// Points per axis.
    #[arg(long, default_value_t = 25)]
    pub grid: usize,
    #[arg(long = "c", default_value_t = 4.0)]
    pub c: f64,
    /// Default: trivariate with one conditioner, pairwise otherwise.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// `LO,HI` on the data scale (default: 2% and 98% sample quantiles).
    #[arg(long = "x1-range", value_parser = parse_pair)]
    pub x1_range: Option<(f64, f64)>,
    #[arg(long = "x2-range", value_parser = parse_pair)]
    pub x2_range: Option<(f64, f64)>,
    /// Confidence level of the bands.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct TestOptions {
    #[arg(long = "c", default_value_t = 1.75)]
    pub c: f64,
    #[arg(long = "B", default_value_t = 500)]
    pub b_reps: usize,
    #[arg(long, default_value = "square", value_parser = parse_h)]
    pub h: HFunction,
    /// Quantile box `LO,HI` applied to every coordinate (default: all points).
    #[arg(long, value_parser = parse_pair)]
    pub region: Option<(f64, f64)>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the JSON document to standard output.
    #[arg(long)]
    pub json: bool,
}

impl TestOptions {
    fn config(&self, method: Option<Method>) -> CliResult<TestConfig> {
        let region = match self.region {
            Some((lo, hi)) => Region::quantile_box(lo, hi)?,
            None => Region::All,
        };
        Ok(TestConfig { h: self.h, region, b_reps: self.b_reps, c: self.c, method, seed: self.seed, ..TestConfig::default() })
    }
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Default: first column.
    #[arg(long)]
    pub x1: Option<String>,
    /// Default: second column.
    #[arg(long)]
    pub x2: Option<String>,
    /// Conditioning columns `NAME[,NAME…]` (default: all other columns).
    #[arg(long)]
    pub cond: Option<String>,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[command(flatten)]
    pub opts: TestOptions,
}

#[derive(Debug, Args)]
pub struct GrangerArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub x1: String,
    #[arg(long)]
    pub x2: String,
    #[command(flatten)]
    pub opts: TestOptions,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Design label such as `5`, `5'` (or `5p`), `5''` (or `5pp`).
    #[arg(long)]
    pub dgp: String,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "burn-in", default_value_t = dgp::DEFAULT_BURN_IN)]
    pub burn_in: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Comma-separated design labels.
    #[arg(long, visible_alias = "dgps", default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub dgp: String,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long = "B", default_value_t = 100)]
    pub b_reps: usize,
    #[arg(long = "c", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "square", value_parser = parse_h)]
    pub h: HFunction,
    #[arg(long, value_parser = parse_pair)]
    pub region: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Rejection level for the p-values.
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Table destination; a JSON sidecar with per-replication p-values is
    /// written next to it as `<output>.json`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Print the JSON document instead of the table.
    #[arg(long)]
    pub json: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "trivariate" => Ok(Method::Trivariate),
        "pairwise" => Ok(Method::Pairwise),
        _ => Err(format!("expected 'trivariate' or 'pairwise', got '{s}'")),
    }
}

fn parse_h(s: &str) -> Result<HFunction, String> {
    s.parse().map_err(|e: lgpc_core::Error| e.to_string())
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got '{s}'"))?;
    let lo = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
    let hi = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
    Ok((lo, hi))
}

/// `NAME=VALUE[,…]`.
pub fn parse_assignments(s: &str) -> CliResult<Vec<(String, f64)>> {
    s.split(',')
        .map(|item| {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("conditioning value '{item}' is not NAME=VALUE")))?;
            let v: f64 = value
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| CliError::input(format!("conditioning value '{item}' is not a finite number")))?;
            Ok((name.trim().to_string(), v))
        })
        .collect()
}

fn column(data: &DataMatrix, name: &str, source: &Path) -> CliResult<usize> {
    data.column_index(name).ok_or_else(|| {
        CliError::input(format!("{}: unknown column '{name}' (columns: {})", source.display(), data.names.join(", ")))
    })
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

/// Parses arguments and runs the command, returning the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { crate::error::EXIT_INPUT } else { crate::error::EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => crate::error::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Transform(a) => run_transform(a),
        Command::Map(a) => run_map(a),
        Command::Test(a) => run_test(a),
        Command::Granger(a) => run_granger(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Benchmark(a) => run_benchmark(a),
    }
}

pub fn run_transform(a: &TransformArgs) -> CliResult<()> {
    let data = read_table(&a.input)?;
    let sample = to_pseudo_normal(&data)?;
    let mut out = Output::create(a.output.as_deref())?;
    write_columns(&mut out, &data.names, &sample.z)?;
    out.finish()
}

fn axis(values: &[f64], range: Option<(f64, f64)>, points: usize) -> CliResult<Vec<f64>> {
    let (lo, hi) = match range {
        Some(r) => r,
        None => {
            let mut s = values.to_vec();
            s.sort_by(f64::total_cmp);
            (empirical_quantile(&s, 0.02), empirical_quantile(&s, 0.98))
        }
    };
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(CliError::input(format!("invalid grid range {lo},{hi}")));
    }
    if points == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    Ok((0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect())
}

pub fn run_map(a: &MapArgs) -> CliResult<()> {
    if a.grid < 1 {
        return Err(CliError::input("--grid must be at least 1"));
    }
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::input("--level must lie in (0, 1)"));
    }
    let data = read_table(&a.input)?;
    let i1 = column(&data, &a.x1, &a.input)?;
    let i2 = column(&data, &a.x2, &a.input)?;
    let conds = parse_assignments(&a.cond)?;
    let mut idx = vec![i1, i2];
    for (name, _) in &conds {
        idx.push(column(&data, name, &a.input)?);
    }
    let mut seen = idx.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != idx.len() {
        return Err(CliError::input("--x1, --x2 and --cond must name distinct columns"));
    }
    let sub = data.select(&idx);
    let sample = to_pseudo_normal(&sub)?;
    let p = sample.p();
    let method = a.method.unwrap_or(if p == 3 { Method::Trivariate } else { Method::Pairwise });
    let bw = plugin_bandwidth(sample.n(), a.c, method)?;
    let est = LocalCorrelationEstimator::new(&sample, method, bw.clone(), Kernel::Gaussian)?;

    let ax1 = axis(&sub.columns[0], a.x1_range, a.grid)?;
    let ax2 = axis(&sub.columns[1], a.x2_range, a.grid)?;
    let mut x_points = Vec::with_capacity(ax1.len() * ax2.len());
    let mut z_points = Vec::with_capacity(x_points.capacity());
    let mut clamped = Vec::with_capacity(x_points.capacity());
    for &u in &ax1 {
        for &v in &ax2 {
            let mut x = vec![u, v];
            x.extend(conds.iter().map(|(_, c)| *c));
            let (z, flags) = sample.x_to_z_point(&x)?;
            clamped.push(flags.iter().any(|&f| f));
            x_points.push(x);
            z_points.push(z);
        }
    }
    let results = partial_correlation_map(&est, &z_points, a.level);

    let mut names: Vec<String> = sub.names.iter().map(|n| format!("x_{n}")).collect();
    names.extend(sub.names.iter().map(|n| format!("z_{n}")));
    names.extend(["alpha", "std_err", "ci_low", "ci_high", "flags"].map(String::from));
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format_sig(v, 15));
    let mut rows = Vec::with_capacity(results.len());
    for (k, r) in results.into_iter().enumerate() {
        let mut row: Vec<String> = x_points[k].iter().chain(&z_points[k]).map(|v| format_sig(*v, 15)).collect();
        let mut flags = Vec::new();
        if clamped[k] {
            flags.push("outside_data");
        }
        match r {
            Ok(e) => {
                if e.diagnostics.degenerate > 0 {
                    flags.push("degenerate");
                }
                if e.diagnostics.fallbacks > 0 {
                    flags.push("fallback");
                }
                if e.diagnostics.repaired {
                    flags.push("repaired");
                }
                if e.std_err.is_none() {
                    flags.push("no_std_err");
                }
                row.extend([format_sig(e.alpha, 15), opt(e.std_err), opt(e.ci_low), opt(e.ci_high)]);
            }
            Err(e) if e.is_input_error() => return Err(e.into()),
            Err(_) => {
                flags.push("failed");
                row.extend([String::new(), String::new(), String::new(), String::new()]);
            }
        }
        row.push(if flags.is_empty() { "ok".to_string() } else { flags.join("|") });
        rows.push(row);
    }
    let config = vec![
        kv("command", "map"),
        kv("input", a.input.display()),
        kv("x1", &a.x1),
        kv("x2", &a.x2),
        kv("cond", &a.cond),
        kv("n", sample.n()),
        kv("grid", a.grid),
        kv("x1_range", format!("{},{}", ax1[0], ax1[ax1.len() - 1])),
        kv("x2_range", format!("{},{}", ax2[0], ax2[ax2.len() - 1])),
        kv("c", a.c),
        kv("method", method.name()),
        kv("bandwidth", bw.get(0)),
        kv("kernel", "gaussian"),
        kv("level", a.level),
    ];
    let mut out = Output::create(a.output.as_deref())?;
    out.write_str(&header_lines(&config))?;
    write_rows(&mut out, &names, &rows)?;
    out.finish()
}

/// Writes `doc` to `output` if given. Standard output gets the JSON when
/// asked for or when there is no output file, and `summary` otherwise.
fn emit_json(doc: &Value, output: Option<&Path>, to_stdout: bool, summary: &str) -> CliResult<()> {
    let text = serde_json::to_string_pretty(doc).expect("JSON values serialize") + "\n";
    if let Some(path) = output {
        let mut out = Output::create(Some(path))?;
        out.write_str(&text)?;
        out.finish()?;
    }
    let mut out = Output::create(None)?;
    out.write_str(if to_stdout || output.is_none() { &text } else { summary })?;
    out.finish()
}

pub fn run_test(a: &TestArgs) -> CliResult<()> {
    let data = read_table(&a.input)?;
    if data.n_cols() < 3 {
        return Err(CliError::input(format!("{}: the test needs at least three columns", a.input.display())));
    }
    let i1 = match &a.x1 {
        Some(n) => column(&data, n, &a.input)?,
        None => 0,
    };
    let i2 = match &a.x2 {
        Some(n) => column(&data, n, &a.input)?,
        None => (0..data.n_cols()).find(|&j| j != i1).unwrap_or(1),
    };
    let conds: Vec<usize> = match &a.cond {
        Some(list) => {
            if list.contains('=') {
                return Err(CliError::input("--cond for `test` takes column names only"));
            }
            list.split(',').map(|n| column(&data, n.trim(), &a.input)).collect::<CliResult<_>>()?
        }
        None => (0..data.n_cols()).filter(|&j| j != i1 && j != i2).collect(),
    };
    let mut idx = vec![i1, i2];
    idx.extend(&conds);
    let mut seen = idx.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != idx.len() || conds.is_empty() {
        return Err(CliError::input("targets and conditioning columns must be distinct, with at least one conditioner"));
    }
    let sub = data.select(&idx);
    let config = a.opts.config(a.method)?;
    let result = ci_test(&sub, &config)?;
    let doc = test_result_json(
        &result,
        &[
            ("command", json!("test")),
            ("input", json!(a.input.display().to_string())),
            ("x1", json!(sub.names[0])),
            ("x2", json!(sub.names[1])),
            ("cond", json!(sub.names[2..])),
        ],
    );
    let summary = format!("t = {}, p = {}\n", format_sig(result.t_observed, 6), format_sig(result.p_value, 6));
    emit_json(&doc, a.output.as_deref(), a.opts.json, &summary)
}

pub fn run_granger(a: &GrangerArgs) -> CliResult<()> {
    let data = read_table(&a.input)?;
    let i1 = column(&data, &a.x1, &a.input)?;
    let i2 = column(&data, &a.x2, &a.input)?;
    let config = a.opts.config(Some(Method::Trivariate))?;
    let mut results = Vec::new();
    let mut summary = String::new();
    for (cause, effect) in [(i1, i2), (i2, i1)] {
        let direction = format!("{} -> {}", data.names[cause], data.names[effect]);
        let r = granger_test(&data.columns[cause], &data.columns[effect], &config)?;
        summary += &format!("{direction}: t = {}, p = {}\n", format_sig(r.t_observed, 6), format_sig(r.p_value, 6));
        results.push(test_result_json(
            &r,
            &[
                ("direction", json!(direction)),
                ("cause", json!(data.names[cause])),
                ("effect", json!(data.names[effect])),
            ],
        ));
    }
    let doc = json!({
        "command": "granger",
        "input": a.input.display().to_string(),
        "results": results,
    });
    emit_json(&doc, a.output.as_deref(), a.opts.json, &summary)
}

pub fn run_simulate(a: &SimulateArgs) -> CliResult<()> {
    let id: DgpId = a.dgp.parse()?;
    let spec = DgpSpec { burn_in: a.burn_in, ..DgpSpec::new(id, a.n, a.seed) };
    let data = dgp::generate(&spec)?;
    let config = vec![
        kv("command", "simulate"),
        kv("dgp", id.label()),
        kv("n", a.n),
        kv("seed", a.seed),
        kv("burn_in", a.burn_in),
        kv("dgp9_x2_ar_coef", spec.readings.dgp9_x2_ar_coef),
        kv("dgp10_h2_arch_coef", spec.readings.dgp10_h2_arch_coef),
    ];
    let mut out = Output::create(a.output.as_deref())?;
    out.write_str(&header_lines(&config))?;
    write_columns(&mut out, &data.names, &data.columns)?;
    out.finish()
}

pub fn run_benchmark(a: &BenchmarkArgs) -> CliResult<()> {
    let dgps = parse_dgp_list(&a.dgp)?;
    if dgps.is_empty() {
        return Err(CliError::input("--dgp lists no designs"));
    }
    let region = match a.region {
        Some((lo, hi)) => Region::quantile_box(lo, hi)?,
        None => Region::All,
    };
    let config = TestConfig { h: a.h, region, b_reps: a.b_reps, c: a.c, method: a.method, seed: a.seed, ..TestConfig::default() };
    let opts = BenchmarkOptions { n: a.n, reps: a.reps, seed: a.seed, level: a.level, ..BenchmarkOptions::default() };
    let report = dgp::benchmark(&dgps, &opts, &config)?;
    let cfg = vec![
        kv("command", "benchmark"),
        kv("dgp", &a.dgp),
        kv("n", a.n),
        kv("reps", a.reps),
        kv("B", a.b_reps),
        kv("c", a.c),
        kv("h", a.h.name()),
        kv("region", region),
        kv("method", a.method.map_or("auto", Method::name)),
        kv("level", a.level),
        kv("seed", a.seed),
        kv("dgp9_x2_ar_coef", opts.readings.dgp9_x2_ar_coef),
        kv("dgp10_h2_arch_coef", opts.readings.dgp10_h2_arch_coef),
    ];
    let doc = benchmark_json(&report, &cfg);
    let names: Vec<String> = ["dgp", "null", "n", "c", "B", "reps", "failures", "rejection_rate"].map(String::from).into();
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.dgp.label(),
                r.dgp.is_null().to_string(),
                r.n.to_string(),
                r.c.to_string(),
                r.b_reps.to_string(),
                r.reps.to_string(),
                r.failures.to_string(),
                format_sig(r.rejection_rate, 6),
            ]
        })
        .collect();
    let text = serde_json::to_string_pretty(&doc).expect("JSON values serialize") + "\n";
    if let Some(path) = &a.output {
        let mut out = Output::create(Some(path))?;
        out.write_str(&header_lines(&cfg))?;
        write_rows(&mut out, &names, &rows)?;
        out.finish()?;
        let mut side_path = path.clone().into_os_string();
        side_path.push(".json");
        let mut side = Output::create(Some(Path::new(&side_path)))?;
        side.write_str(&text)?;
        side.finish()?;
    }
    if a.json {
        let mut out = Output::create(None)?;
        out.write_str(&text)?;
        out.finish()
    } else if a.output.is_none() {
        let mut out = Output::create(None)?;
        out.write_str(&header_lines(&cfg))?;
        write_rows(&mut out, &names, &rows)?;
        out.finish()
    } else {
        Ok(())
    }
}
