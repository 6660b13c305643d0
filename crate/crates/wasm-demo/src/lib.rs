//! Browser bindings: toy growth curves, a two-run comparison with adjustable
//! threshold and perturbation, and the strong-scaling table of the bundled
//! rheticus logs. Every export returns a JSON string.

use std::path::PathBuf;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use simregress::metric::{compare, render_report, MetricSpec, ViolationKind};
use simregress::timers::{scaling_table_from_logs, RunConfig};
use simregress::timeseries::{MacroscopicSeries, Quantity};
use simregress::toysim::{simulate, ToyConfig};

const SCALING_RUNS: [(&str, &str, &str); 5] = [
    ("12,1,4,3,pathological", "rheticus_12", include_str!("../../core/fixtures/scaling/rheticus_12/out_loop3")),
    ("24,2,4,6", "rheticus_24", include_str!("../../core/fixtures/scaling/rheticus_24/out_loop3")),
    ("48,4,4,12", "rheticus_48", include_str!("../../core/fixtures/scaling/rheticus_48/out_loop3")),
    ("96,8,8,12", "rheticus_96", include_str!("../../core/fixtures/scaling/rheticus_96/out_loop3")),
    ("192,16,16,12", "rheticus_192", include_str!("../../core/fixtures/scaling/rheticus_192/out_loop3")),
];

#[derive(Serialize)]
struct Curves {
    times: Vec<f64>,
    modes: Vec<u32>,
    gamma: Vec<f64>,
    /// `[mode][record]`
    magnetic_energy: Vec<Vec<f64>>,
    magnetic_growth: Vec<Vec<Option<f64>>>,
    kinetic_growth: Vec<Vec<Option<f64>>>,
}

#[derive(Serialize)]
struct Point {
    time: f64,
    quantity: String,
    mode: u32,
    reldiff: Option<f64>,
}

#[derive(Serialize)]
struct Comparison {
    verdict: String,
    compared_lines: usize,
    total_lines: usize,
    max_relative_difference: f64,
    violations: Vec<Point>,
    report: String,
}

#[derive(Serialize)]
struct Row {
    keyword: String,
    elapsed: Vec<f64>,
    speedup: Vec<Option<f64>>,
    efficiency: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct Scaling {
    iteration: usize,
    cores: Vec<u32>,
    nodes: Vec<u32>,
    mpi_procs: Vec<u32>,
    threads: Vec<u32>,
    pathological: Vec<bool>,
    rows: Vec<Row>,
}

#[derive(Serialize)]
struct Failure {
    error: String,
}

fn json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v),
        Err(error) => serde_json::to_string(&Failure { error }),
    }
    .unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

fn by_mode<T: Clone>(rows: &[Vec<T>]) -> Vec<Vec<T>> {
    let m = rows.first().map_or(0, Vec::len);
    (0..m).map(|k| rows.iter().map(|r| r[k].clone()).collect()).collect()
}

fn config(text: &str, seed: u32) -> Result<ToyConfig, String> {
    let mut cfg = if text.trim().is_empty() {
        ToyConfig::default()
    } else {
        ToyConfig::parse(text).map_err(|e| e.to_string())?
    };
    cfg.seed = u64::from(seed);
    Ok(cfg)
}

/// Toy simulator output for a config in the `key = value` format (empty
/// text means the built-in config).
#[wasm_bindgen]
pub fn simulate_curves(config_text: &str, seed: u32) -> String {
    json((|| {
        let cfg = config(config_text, seed)?;
        let s = simulate(&cfg).map_err(|e| e.to_string())?;
        Ok(Curves {
            modes: s.modes.clone(),
            gamma: cfg.gamma.clone(),
            magnetic_energy: by_mode(s.energy(Quantity::Magnetic)),
            magnetic_growth: by_mode(s.growth(Quantity::Magnetic)),
            kinetic_growth: by_mode(s.growth(Quantity::Kinetic)),
            times: s.times,
        })
    })())
}

fn scale_growth(series: &mut MacroscopicSeries, factor: f64) {
    for q in Quantity::ALL {
        for row in series.growth_mut(q).iter_mut() {
            for g in row.iter_mut().flatten() {
                *g *= factor;
            }
        }
    }
}

/// Compares seed `seed_b` (growth rates multiplied by `scale`) against
/// reference seed `seed_a` over `[t_start, t_end]` for every mode.
#[wasm_bindgen]
pub fn compare_runs(config_text: &str, seed_a: u32, seed_b: u32, scale: f64, thr: f64, t_start: f64, t_end: f64) -> String {
    json((|| {
        let a = simulate(&config(config_text, seed_a)?).map_err(|e| e.to_string())?;
        let mut b = simulate(&config(config_text, seed_b)?).map_err(|e| e.to_string())?;
        scale_growth(&mut b, scale);
        let spec = MetricSpec::new(t_start, t_end, thr, Quantity::ALL.to_vec(), a.modes.clone())
            .map_err(|e| e.to_string())?;
        let report = compare(&a, &b, &spec).map_err(|e| e.to_string())?;
        Ok(Comparison {
            verdict: report.verdict.to_string(),
            compared_lines: report.compared_lines,
            total_lines: report.total_lines,
            max_relative_difference: report.max_relative_difference,
            violations: report
                .violations
                .iter()
                .map(|v| Point {
                    time: v.time,
                    quantity: v.quantity.to_string(),
                    mode: v.mode,
                    reldiff: (v.kind == ViolationKind::Threshold).then_some(v.relative_difference),
                })
                .collect(),
            report: render_report(&report),
        })
    })())
}

/// Timers of one iteration across the bundled strong-scaling runs.
#[wasm_bindgen]
pub fn scaling_table(iteration: usize, exclude_pathological: bool) -> String {
    json((|| {
        let runs = SCALING_RUNS
            .iter()
            .map(|(c, dir, log)| Ok((c.parse::<RunConfig>()?, PathBuf::from(dir), log.to_string())))
            .collect::<Result<Vec<_>, simregress::timers::TimerError>>()
            .map_err(|e| e.to_string())?;
        let t = scaling_table_from_logs(&runs, iteration).map_err(|e| e.to_string())?;
        Ok(Scaling {
            iteration,
            cores: t.configs.iter().map(|c| c.cores).collect(),
            nodes: t.configs.iter().map(|c| c.nodes).collect(),
            mpi_procs: t.configs.iter().map(|c| c.mpi_procs).collect(),
            threads: t.configs.iter().map(|c| c.threads).collect(),
            pathological: t.configs.iter().map(|c| c.pathological).collect(),
            rows: t
                .keywords
                .iter()
                .zip(&t.elapsed)
                .map(|(k, e)| Row {
                    keyword: k.clone(),
                    elapsed: e.clone(),
                    speedup: t.speedup(k, exclude_pathological),
                    efficiency: t.efficiency(k, exclude_pathological),
                })
                .collect(),
        })
    })())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn curves_follow_the_config() {
        let v: Value = serde_json::from_str(&simulate_curves("", 7)).unwrap();
        assert_eq!(v["times"].as_array().unwrap().len(), 69);
        assert_eq!(v["magnetic_growth"].as_array().unwrap().len(), 2);
        assert!(v["magnetic_growth"][0][0].is_null());
        let bad: Value = serde_json::from_str(&simulate_curves("gamma = -1\ne0 = 1\ne_sat = 2\n", 1)).unwrap();
        assert!(bad["error"].as_str().unwrap().contains("gamma"));
    }

    #[test]
    fn perturbation_flips_the_verdict() {
        let ok: Value = serde_json::from_str(&compare_runs("", 7, 8, 1.0, 0.01, 30.0, 120.0)).unwrap();
        assert_eq!(ok["verdict"], "OK");
        let fail: Value = serde_json::from_str(&compare_runs("", 7, 8, 1.05, 0.01, 30.0, 120.0)).unwrap();
        assert_eq!(fail["verdict"], "FAIL");
        assert!(fail["report"].as_str().unwrap().starts_with("FAIL (nb lines compared: "));
    }

    #[test]
    fn bundled_scaling_table() {
        let v: Value = serde_json::from_str(&scaling_table(1, true)).unwrap();
        assert_eq!(v["cores"][4], 192);
        let facto = v["rows"].as_array().unwrap().iter().find(|r| r["keyword"] == "facto").unwrap();
        assert_eq!(facto["elapsed"][0], 265.8);
        assert!(facto["speedup"][0].is_null());
        let missing: Value = serde_json::from_str(&scaling_table(9, false)).unwrap();
        assert!(missing["error"].is_string());
    }
}
