//! Executes a validated config into JSONL rows plus a run sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{ExperimentConfig, Kind, Range1dMethod, SimMode};
use super::report::{csv_extract, kpoint_table, Report};
use crate::bm_range::{endpoint_mc, quenched_z1d, scaling_study, CellOptions, PathScheme, TwoSidedEnvironment};
use crate::chaos::{chaos_replicas, law_comparison, summarize, ChaosPlan, LawOptions, PlanOptions};
use crate::disorder::{beta_schedule, lambda, SiteField};
use crate::error::{RclError, Result};
use crate::kpoint::{cpoint, kpt_limit_exact, kpt_limit_mc, CPoint};
use crate::lattice::{point, ClosedForm, Point};
use crate::par::with_width;
use crate::polymer::{annealed_partition, point_to_point_partition, quenched_partition, PartitionEstimate};
use crate::rng::{derive_seed, label};
use crate::stats::{ols, Welford};

/// Sidecar written next to the JSONL rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub version: String,
    pub wall_ms: u64,
    pub rows: usize,
    pub flagged: usize,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    pub rows: Vec<Value>,
}

pub fn version_stamp() -> String {
    match option_env!("RCL_GIT_REV") {
        Some(rev) => format!("rcl {} ({rev})", env!("CARGO_PKG_VERSION")),
        None => format!("rcl {}", env!("CARGO_PKG_VERSION")),
    }
}

fn ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn flagged_row(kind: Kind, extra: Value, err: &RclError) -> Value {
    let mut row = json!({ "kind": kind.as_str(), "flagged": true, "error": err.to_string() });
    if let (Value::Object(m), Value::Object(e)) = (&mut row, extra) {
        m.extend(e);
    }
    row
}

/// Validates and runs `config` under its parallelism width.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let start = Instant::now();
    let rows = with_width(config.width, || match config.kind {
        Kind::Simulate => run_simulate(config),
        Kind::Kpoint => run_kpoint(config),
        Kind::Chaos => run_chaos(config),
        Kind::LawComparison => run_law(config),
        Kind::Range1d => run_range1d(config),
    })?;
    let flagged = rows.iter().filter(|r| r.get("flagged").and_then(Value::as_bool) == Some(true)).count();
    Ok(RunOutput {
        record: RunRecord {
            config_hash: config.hash(),
            version: version_stamp(),
            wall_ms: ms(start),
            rows: rows.len(),
            flagged,
            config: config.clone(),
        },
        rows,
    })
}

#[allow(clippy::too_many_arguments)]
fn estimate_row(mode: SimMode, d: usize, n: u64, t: f64, beta: f64, h: f64, seed: u64, replica: usize, est: &PartitionEstimate, wall: u64) -> Value {
    json!({
        "kind": "simulate",
        "mode": mode,
        "d": d,
        "n": n,
        "t": t,
        "beta": beta,
        "h": h,
        "replica": replica,
        "value": est.value,
        "stderr": est.stderr,
        "log_value": est.log_value,
        "ess": est.ess,
        "samples": est.samples,
        "seed": seed,
        "wall_ms": wall,
    })
}

fn run_simulate(config: &ExperimentConfig) -> Result<Vec<Value>> {
    let p = config.simulate.as_ref().expect("validated");
    let seed = config.seed;
    let beta = match p.beta {
        Some(b) => b,
        None => beta_schedule(p.d, p.beta_hat)?.beta(p.n as f64),
    };
    let h = p.h.unwrap_or(-lambda(p.law, beta));
    let steps = match p.mode {
        SimMode::Intermediate => (p.n as f64 * p.t).round() as usize,
        _ => p.n as usize,
    };
    let mut rows = Vec::new();
    if p.mode == SimMode::Annealed {
        let t0 = Instant::now();
        match annealed_partition(p.d, steps, p.law, beta, h, p.walkers, seed) {
            Ok(est) => rows.push(estimate_row(p.mode, p.d, p.n, p.t, beta, h, seed, 0, &est, ms(t0))),
            Err(e) => rows.push(flagged_row(Kind::Simulate, json!({ "mode": p.mode, "replica": 0 }), &e)),
        }
        return Ok(rows);
    }
    let kernel = if p.mode == SimMode::P2p { Some(ClosedForm::new(p.d, steps)?) } else { None };
    let end: Point = match &p.end {
        Some(e) => point(e),
        None => {
            let mut z = [0i64; crate::lattice::MAX_DIM];
            z[0] = (steps % 2) as i64;
            z
        }
    };
    for r in 0..p.replicas {
        let t0 = Instant::now();
        let rseed = derive_seed(seed, r as u64);
        let field = SiteField {
            law: p.law,
            seed: derive_seed(rseed, label::ENV),
        };
        let est = match &kernel {
            Some(k) => point_to_point_partition(&field, p.d, steps, &end, beta, h, p.walkers, k, rseed),
            None => quenched_partition(&field, p.d, steps, beta, h, p.walkers, rseed),
        };
        match est {
            Ok(est) => rows.push(estimate_row(p.mode, p.d, p.n, p.t, beta, h, seed, r, &est, ms(t0))),
            Err(e) => rows.push(flagged_row(Kind::Simulate, json!({ "mode": p.mode, "replica": r }), &e)),
        }
    }
    Ok(rows)
}

fn run_kpoint(config: &ExperimentConfig) -> Result<Vec<Value>> {
    let p = config.kpoint.as_ref().expect("validated");
    let xs: Vec<CPoint> = p.points.iter().map(|x| cpoint(x)).collect();
    let mut rows = Vec::new();
    for (i, &big_n) in p.n_list.iter().enumerate() {
        let t0 = Instant::now();
        let res = if p.samples == 0 {
            kpt_limit_exact(p.d, p.t, &xs, &[big_n])
        } else {
            kpt_limit_mc(p.d, p.t, &xs, &[big_n], p.samples, derive_seed(config.seed, i as u64))
        };
        match res {
            Ok(r) => {
                let r = &r[0];
                rows.push(json!({
                    "kind": "kpoint",
                    "d": p.d,
                    "t": p.t,
                    "points": p.points,
                    "n": r.n,
                    "estimate": r.estimate,
                    "stderr": r.stderr,
                    "limit": r.limit,
                    "ratio": r.ratio,
                    "samples": p.samples,
                    "seed": config.seed,
                    "wall_ms": ms(t0),
                }));
            }
            Err(e) => rows.push(flagged_row(Kind::Kpoint, json!({ "n": big_n }), &e)),
        }
    }
    Ok(rows)
}

fn run_chaos(config: &ExperimentConfig) -> Result<Vec<Value>> {
    let p = config.chaos.as_ref().expect("validated");
    let t0 = Instant::now();
    let opts = PlanOptions {
        delta: p.delta,
        coarse2: p.coarse2,
        coarse3: if p.order < 3 { p.coarse2 } else { p.coarse3 },
        ..PlanOptions::default()
    };
    let plan = ChaosPlan::new(p.d, p.t, p.order, &opts)?;
    let samples = chaos_replicas(&plan, p.beta_hat, p.replicas, config.seed)?;
    let summary = summarize(&plan, p.beta_hat, &samples);
    let per = ms(t0) / samples.len().max(1) as u64;
    let mut rows: Vec<Value> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "kind": "chaos",
                "d": p.d,
                "t": p.t,
                "beta_hat": p.beta_hat,
                "order": p.order,
                "replica": i,
                "terms": s.terms,
                "value": s.value,
                "seed": config.seed,
                "wall_ms": per,
            })
        })
        .collect();
    rows.push(json!({
        "kind": "chaos",
        "d": p.d,
        "t": p.t,
        "beta_hat": p.beta_hat,
        "order": p.order,
        "summary": summary,
        "norm_sq": plan.norm_sq,
        "seed": config.seed,
        "wall_ms": ms(t0),
    }));
    Ok(rows)
}

fn run_law(config: &ExperimentConfig) -> Result<Vec<Value>> {
    let p = config.law_comparison.as_ref().expect("validated");
    let t0 = Instant::now();
    let opts = LawOptions {
        replicas: p.replicas,
        walkers: p.walkers,
        overlap_pairs: p.overlap_pairs,
        chaos_replicas: p.chaos_replicas,
        plan: PlanOptions {
            delta: p.delta,
            coarse3: if p.order < 3 { 5 } else { 10 },
            ..PlanOptions::default()
        },
    };
    let rep = law_comparison(p.d, p.t, p.beta_hat, &p.n_list, p.order, p.law, &opts, config.seed)?;
    let per = ms(t0) / rep.rows.len().max(1) as u64;
    Ok(rep
        .rows
        .iter()
        .map(|r| {
            json!({
                "kind": "law_comparison",
                "d": p.d,
                "t": p.t,
                "beta_hat": p.beta_hat,
                "order": p.order,
                "n": r.n,
                "ks": r.ks,
                "lattice_mean": r.lattice_mean,
                "lattice_mean_stderr": r.lattice_mean_stderr,
                "lattice_variance": r.lattice_variance,
                "overlap_variance": r.overlap_variance,
                "overlap_variance_stderr": r.overlap_variance_stderr,
                "median_ess": r.median_ess,
                "chaos_variance": rep.chaos.variance,
                "chaos_variance_stderr": rep.chaos.variance_stderr,
                "seed": config.seed,
                "wall_ms": per,
            })
        })
        .collect())
}

/// Log-log slope over the previous and current rows.
fn window_slopes(t: &[f64], y: &[f64]) -> Vec<Option<f64>> {
    (0..t.len())
        .map(|i| {
            if i == 0 || y[i] <= 0.0 || y[i - 1] <= 0.0 {
                None
            } else {
                Some((y[i] / y[i - 1]).ln() / (t[i] / t[i - 1]).ln())
            }
        })
        .collect()
}

fn run_range1d(config: &ExperimentConfig) -> Result<Vec<Value>> {
    let p = config.range1d.as_ref().expect("validated");
    let t0 = Instant::now();
    struct Row {
        t: f64,
        median_rescaled: f64,
        mean_log_z: f64,
        mean_log_z_stderr: f64,
        mean_abs_end: f64,
        ess: f64,
    }
    let rows: Vec<Row> = match p.method {
        Range1dMethod::Cell => {
            let opts = CellOptions {
                cells_per_unit: p.cells_per_unit,
                sub: p.sub,
            };
            scaling_study(&p.t_list, p.beta, p.replicas, &opts, config.seed)?
                .rows
                .into_iter()
                .map(|r| Row {
                    t: r.t,
                    median_rescaled: r.median_rescaled_log_z,
                    mean_log_z: r.mean_log_z,
                    mean_log_z_stderr: r.mean_log_z_stderr,
                    mean_abs_end: r.mean_abs_end,
                    ess: r.ess,
                })
                .collect()
        }
        Range1dMethod::Mc => {
            let mut out = Vec::new();
            for (ti, &t) in p.t_list.iter().enumerate() {
                let tseed = derive_seed(config.seed, ti as u64);
                let mut logz = Vec::with_capacity(p.replicas);
                for r in 0..p.replicas {
                    let rseed = derive_seed(tseed, r as u64);
                    let mut env = TwoSidedEnvironment::new(p.dx, derive_seed(rseed, label::ENV))?;
                    let dt = p.dt.min(t / 100.0);
                    logz.push(quenched_z1d(&mut env, t, p.beta, p.paths, dt, PathScheme::Bridge, rseed)?.log_value);
                }
                let end = endpoint_mc(t, p.beta, p.replicas, p.paths, p.dt.min(t / 100.0), p.dx, PathScheme::Bridge, tseed)?;
                let w = Welford::from_slice(&logz);
                let resc: Vec<f64> = logz.iter().map(|l| l / t.cbrt()).collect();
                out.push(Row {
                    t,
                    median_rescaled: crate::stats::median(&resc),
                    mean_log_z: w.mean,
                    mean_log_z_stderr: w.stderr(),
                    mean_abs_end: end.mean_abs_end,
                    ess: end.min_ess,
                });
            }
            out
        }
    };
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let slopes = window_slopes(&t, &rows.iter().map(|r| r.mean_log_z).collect::<Vec<_>>());
    let chis = window_slopes(&t, &rows.iter().map(|r| r.mean_abs_end).collect::<Vec<_>>());
    let lt: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let fit = |y: Vec<f64>| -> Option<f64> {
        (y.iter().all(|v| *v > 0.0) && y.len() >= 2).then(|| ols(&lt, &y.iter().map(|v| v.ln()).collect::<Vec<_>>()).0)
    };
    let slope_all = if p.beta == 0.0 { None } else { fit(rows.iter().map(|r| r.mean_log_z).collect()) };
    let chi_all = fit(rows.iter().map(|r| r.mean_abs_end).collect());
    let per = ms(t0) / rows.len().max(1) as u64;
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "kind": "range1d",
                "beta": p.beta,
                "t": r.t,
                "method": p.method,
                "median_rescaled_log_z": r.median_rescaled,
                "mean_log_z": r.mean_log_z,
                "mean_log_z_stderr": r.mean_log_z_stderr,
                "mean_abs_end": r.mean_abs_end,
                "slope_window": slopes[i],
                "chi_window": chis[i],
                "slope_fit": slope_all,
                "chi_hat": chi_all,
                "ess": r.ess,
                "replicas": p.replicas,
                "seed": config.seed,
                "wall_ms": per,
            })
        })
        .collect())
}

/// Where the JSONL, CSV and sidecar files go for a requested output path:
/// a `.csv` path names the CSV extract and the JSONL sits beside it.
pub fn output_paths(out: &Path) -> (PathBuf, Option<PathBuf>, PathBuf) {
    let is_csv = out.extension().is_some_and(|e| e == "csv");
    let jsonl = if is_csv { out.with_extension("jsonl") } else { out.to_path_buf() };
    let csv = if is_csv { Some(out.to_path_buf()) } else { None };
    let mut side = jsonl.clone().into_os_string();
    side.push(".run.json");
    (jsonl, csv, PathBuf::from(side))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RclError + '_ {
    move |source| RclError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// Writes rows, sidecar and (for CSV outputs) the extract; returns the paths.
pub fn write_outputs(output: &RunOutput) -> Result<Vec<PathBuf>> {
    let (jsonl, csv, side) = output_paths(&output.record.config.out);
    let mut body = Vec::new();
    for row in &output.rows {
        serde_json::to_writer(&mut body, row).map_err(|e| RclError::Record(e.to_string()))?;
        body.write_all(b"\n").map_err(io_err(&jsonl))?;
    }
    write_text(&jsonl, std::str::from_utf8(&body).expect("json is utf-8"))?;
    let sidecar = serde_json::to_string_pretty(&output.record).map_err(|e| RclError::Record(e.to_string()))?;
    write_text(&side, &sidecar)?;
    let mut written = vec![jsonl, side];
    if let Some(csv) = csv {
        if output.record.config.kind == Kind::Kpoint {
            write_text(&csv, &kpoint_table(&output.rows))?;
            written.push(csv);
        } else if let Report::Table { csv: text, .. } = csv_extract(&output.rows)? {
            write_text(&csv, &text)?;
            written.push(csv);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{KpointParams, SimulateParams};

    fn strip_wall(rows: &[Value]) -> Vec<Value> {
        rows.iter()
            .cloned()
            .map(|mut r| {
                if let Value::Object(m) = &mut r {
                    m.remove("wall_ms");
                }
                r
            })
            .collect()
    }

    fn sim_config(width: usize) -> ExperimentConfig {
        ExperimentConfig {
            kind: Kind::Simulate,
            seed: 3,
            width,
            out: "x.jsonl".into(),
            simulate: Some(SimulateParams {
                mode: SimMode::Intermediate,
                d: 2,
                n: 256,
                t: 1.0,
                beta_hat: 0.5,
                beta: None,
                h: None,
                law: Default::default(),
                walkers: 600,
                replicas: 3,
                end: None,
            }),
            kpoint: None,
            chaos: None,
            law_comparison: None,
            range1d: None,
        }
    }

    #[test]
    fn reruns_and_widths_agree() {
        let a = run(&sim_config(1)).unwrap();
        let b = run(&sim_config(1)).unwrap();
        let c = run(&sim_config(4)).unwrap();
        assert_eq!(strip_wall(&a.rows), strip_wall(&b.rows));
        let va: Vec<&Value> = a.rows.iter().map(|r| &r["value"]).collect();
        let vc: Vec<&Value> = c.rows.iter().map(|r| &r["value"]).collect();
        assert_eq!(va, vc);
        assert_eq!(a.rows.len(), 3);
    }

    #[test]
    fn failures_are_flagged_not_fatal() {
        let mut c = sim_config(1);
        c.kind = Kind::Kpoint;
        c.simulate = None;
        c.kpoint = Some(KpointParams {
            d: 2,
            t: 1.0,
            points: vec![vec![0.0, 0.0]],
            n_list: vec![64],
            samples: 0,
        });
        let out = run(&c).unwrap();
        assert_eq!(out.record.flagged, 1);
        assert_eq!(out.rows[0]["flagged"], true);
    }

    #[test]
    fn output_path_layout() {
        let (j, c, s) = output_paths(Path::new("out/table.csv"));
        assert_eq!(j, PathBuf::from("out/table.jsonl"));
        assert_eq!(c, Some(PathBuf::from("out/table.csv")));
        assert_eq!(s, PathBuf::from("out/table.jsonl.run.json"));
    }
}
