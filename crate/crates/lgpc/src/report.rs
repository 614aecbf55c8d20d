//! JSON documents for test and benchmark results.

use lgpc_core::citest::{StatisticDiagnostics, TestDiagnostics};
use lgpc_core::dgp::BenchmarkReport;
use lgpc_core::TestResult;
use serde_json::{json, Map, Value};

fn statistic_diagnostics(d: &StatisticDiagnostics) -> Value {
    json!({ "fallbacks": d.fallbacks, "degenerate": d.degenerate, "repaired": d.repaired })
}

fn diagnostics(d: &TestDiagnostics) -> Value {
    json!({
        "observed": statistic_diagnostics(&d.observed),
        "replicates": statistic_diagnostics(&d.replicates),
        "density_fallbacks": d.density_fallbacks,
        "densities_flagged": d.densities_flagged,
        "retried_replicates": d.retried_replicates,
        "failed_replicates": d.failed_replicates,
    })
}

/// Test result with its resolved configuration. `extra` entries are added
/// at the top level.
pub fn test_result_json(r: &TestResult, extra: &[(&str, Value)]) -> Value {
    let mut m = Map::new();
    for (k, v) in extra {
        m.insert((*k).to_string(), v.clone());
    }
    let c = &r.config;
    let fields = [
        ("t_observed", json!(r.t_observed)),
        ("p_value", json!(r.p_value)),
        ("B", json!(c.b_reps)),
        ("c", json!(c.c)),
        ("method", json!(r.method.name())),
        ("h", json!(c.h.name())),
        ("region", json!(c.region.to_string())),
        ("seed", json!(c.seed)),
        ("n", json!(r.n)),
        ("n_points_used", json!(r.n_points_used)),
        ("bandwidth", json!(r.bandwidth)),
        ("density_bandwidth", json!(r.density_bandwidth)),
        ("density_grid", json!({ "lo": c.grid.lo, "hi": c.grid.hi, "points": c.grid.points })),
        ("diagnostics", diagnostics(&r.diagnostics)),
        ("replicates", json!(r.t_replicates)),
    ];
    for (k, v) in fields {
        m.insert(k.to_string(), v);
    }
    Value::Object(m)
}

pub fn benchmark_json(report: &BenchmarkReport, config: &[(String, String)]) -> Value {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "dgp": r.dgp.label(),
                "n": r.n,
                "c": r.c,
                "B": r.b_reps,
                "reps": r.reps,
                "rejections": r.rejections,
                "failures": r.failures,
                "rejection_rate": r.rejection_rate,
                "elapsed_secs": r.elapsed_secs,
                "p_values": r.p_values,
            })
        })
        .collect();
    let cfg: Map<String, Value> = config.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    json!({ "level": report.level, "seed": report.seed, "config": cfg, "rows": rows })
}
