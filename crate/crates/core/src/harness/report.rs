//! Tables and CSV plot data from JSONL rows of a single kind.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use super::config::Kind;
use crate::error::{RclError, Result};
use crate::stats::Welford;

/// Marker printed for an empty input.
pub const EMPTY_MARKER: &str = "EMPTY REPORT: no records";

#[derive(Clone, Debug, PartialEq)]
pub enum Report {
    Empty,
    Table {
        kind: Kind,
        csv: String,
        summary: Vec<String>,
    },
}

pub fn read_records(path: &Path) -> Result<Vec<Value>> {
    let text = std::fs::read_to_string(path).map_err(|source| RclError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| RclError::Record(format!("line {}: {e}", i + 1))))
        .collect()
}

fn kind_of(row: &Value) -> Result<Kind> {
    let k = row
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| RclError::Record("row without a `kind` field".into()))?;
    Kind::parse(k).map_err(|_| RclError::Record(format!("unknown kind `{k}`")))
}

fn num(row: &Value, key: &str) -> f64 {
    row.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn flagged(row: &Value) -> bool {
    row.get("flagged").and_then(Value::as_bool) == Some(true)
}

/// The `kpoint --out` table: the report columns plus the MC standard error
/// (0 for the exact route).
pub fn kpoint_table(rows: &[Value]) -> String {
    let mut sorted: Vec<&Value> = rows.iter().filter(|r| !flagged(r)).collect();
    sorted.sort_by(|a, b| num(a, "n").total_cmp(&num(b, "n")));
    let mut csv = String::from("N,estimate,stderr,limit,ratio\n");
    for r in &sorted {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            num(r, "n"),
            cell(num(r, "estimate")),
            cell(num(r, "stderr")),
            cell(num(r, "limit")),
            cell(num(r, "ratio"))
        );
    }
    let _ = writeln!(csv, "# monotone_drift={}", monotone_drift(&sorted));
    csv
}

fn monotone_drift(sorted: &[&Value]) -> bool {
    let gaps: Vec<f64> = sorted.iter().map(|r| (num(r, "ratio") - 1.0).abs()).collect();
    gaps.len() >= 2 && gaps.windows(2).all(|w| w[1] <= w[0])
}

/// Same as [`report`] with the kind taken from the rows.
pub fn csv_extract(rows: &[Value]) -> Result<Report> {
    report(rows, None)
}

/// Builds the table for `rows`; all rows must share one kind, and it must
/// equal `expect` when given.
pub fn report(rows: &[Value], expect: Option<Kind>) -> Result<Report> {
    if rows.is_empty() {
        return Ok(Report::Empty);
    }
    let kind = kind_of(&rows[0])?;
    for r in rows {
        let k = kind_of(r)?;
        if k != kind {
            return Err(RclError::Record(format!(
                "mixed kinds in input: `{}` and `{}`",
                kind.as_str(),
                k.as_str()
            )));
        }
    }
    if let Some(e) = expect {
        if e != kind {
            return Err(RclError::Record(format!("expected `{}` records, found `{}`", e.as_str(), kind.as_str())));
        }
    }
    let good: Vec<&Value> = rows.iter().filter(|r| !flagged(r)).collect();
    let n_flagged = rows.len() - good.len();
    let mut csv = String::new();
    let mut summary = Vec::new();
    match kind {
        Kind::Kpoint => {
            let mut sorted = good.clone();
            sorted.sort_by(|a, b| num(a, "n").total_cmp(&num(b, "n")));
            csv.push_str("N,estimate,limit,ratio\n");
            for r in &sorted {
                let _ = writeln!(csv, "{},{},{},{}", num(r, "n"), cell(num(r, "estimate")), cell(num(r, "limit")), cell(num(r, "ratio")));
            }
            let monotone = monotone_drift(&sorted);
            let _ = writeln!(csv, "# monotone_drift={monotone}");
            summary.push(format!("monotone approach to the limit: {monotone}"));
            if let Some(last) = sorted.last() {
                summary.push(format!("largest N {}: ratio {:.6}", num(last, "n"), num(last, "ratio")));
            }
        }
        Kind::LawComparison => {
            let mut sorted = good.clone();
            sorted.sort_by(|a, b| num(a, "n").total_cmp(&num(b, "n")));
            csv.push_str("N,ks,ks_decreased,lattice_variance,overlap_variance,chaos_variance\n");
            let mut dec = 0;
            for (i, r) in sorted.iter().enumerate() {
                let d = i > 0 && num(r, "ks") < num(sorted[i - 1], "ks");
                dec += d as usize;
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    num(r, "n"),
                    cell(num(r, "ks")),
                    if i == 0 { String::new() } else { d.to_string() },
                    cell(num(r, "lattice_variance")),
                    cell(num(r, "overlap_variance")),
                    cell(num(r, "chaos_variance")),
                );
            }
            summary.push(format!("KS decreased in {dec} of {} steps", sorted.len().saturating_sub(1)));
        }
        Kind::Range1d => {
            let mut sorted = good.clone();
            sorted.sort_by(|a, b| num(a, "t").total_cmp(&num(b, "t")));
            csv.push_str("t,median_rescaled_logZ,slope_window,chi_hat,ess\n");
            for r in &sorted {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    num(r, "t"),
                    cell(num(r, "median_rescaled_log_z")),
                    cell(num(r, "slope_window")),
                    cell(num(r, "chi_window")),
                    cell(num(r, "ess")),
                );
            }
            if let Some(r) = sorted.first() {
                summary.push(format!("free-energy slope fit: {}", cell(num(r, "slope_fit"))));
                summary.push(format!("endpoint exponent fit: {}", cell(num(r, "chi_hat"))));
            }
        }
        Kind::Simulate => {
            csv.push_str("mode,d,n,replica,value,stderr,ess\n");
            let mut w = Welford::default();
            for r in &good {
                let mode = r.get("mode").and_then(Value::as_str).unwrap_or("");
                let _ = writeln!(
                    csv,
                    "{mode},{},{},{},{},{},{}",
                    num(r, "d"),
                    num(r, "n"),
                    num(r, "replica"),
                    cell(num(r, "value")),
                    cell(num(r, "stderr")),
                    cell(num(r, "ess")),
                );
                w.push(num(r, "value"));
            }
            summary.push(format!("replica mean {} ± {} over {} rows", w.mean, w.stderr(), w.n));
        }
        Kind::Chaos => {
            let reps: Vec<&&Value> = good.iter().filter(|r| r.get("summary").is_none()).collect();
            let order = reps.first().map(|r| num(r, "order") as usize).unwrap_or(0);
            csv.push_str("replica,value");
            for k in 1..=order {
                let _ = write!(csv, ",term{k}");
            }
            csv.push('\n');
            for r in &reps {
                let _ = write!(csv, "{},{}", num(r, "replica"), cell(num(r, "value")));
                let terms = r.get("terms").and_then(Value::as_array).cloned().unwrap_or_default();
                for k in 1..=order {
                    let _ = write!(csv, ",{}", cell(terms.get(k).and_then(Value::as_f64).unwrap_or(f64::NAN)));
                }
                csv.push('\n');
            }
            let w = Welford::from_slice(&reps.iter().map(|r| num(r, "value")).collect::<Vec<_>>());
            summary.push(format!("mean {} ± {}, variance {} over {} replicas", w.mean, w.stderr(), w.variance(), w.n));
        }
    }
    if n_flagged > 0 {
        summary.push(format!("{n_flagged} flagged rows skipped"));
    }
    Ok(Report::Table { kind, csv, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn kpoint_table_has_four_columns_and_flag() {
        let rows = vec![
            json!({"kind": "kpoint", "n": 4096, "estimate": 0.25, "limit": 0.2, "ratio": 1.25}),
            json!({"kind": "kpoint", "n": 32768, "estimate": 0.23, "limit": 0.2, "ratio": 1.15}),
        ];
        let Report::Table { csv, .. } = report(&rows, Some(Kind::Kpoint)).unwrap() else {
            panic!("expected a table")
        };
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0].split(',').count(), 4);
        assert_eq!(lines[1].split(',').count(), 4);
        assert_eq!(lines.last().unwrap(), &"# monotone_drift=true");
    }

    #[test]
    fn mixed_kinds_rejected() {
        let rows = vec![json!({"kind": "kpoint", "n": 1}), json!({"kind": "chaos", "replica": 0})];
        assert!(report(&rows, None).is_err());
    }

    #[test]
    fn empty_input_is_marked() {
        assert_eq!(report(&[], None).unwrap(), Report::Empty);
    }

    #[test]
    fn ks_trend_counts_decreases() {
        let rows: Vec<Value> = [(1024, 0.5), (4096, 0.4), (16384, 0.45)]
            .iter()
            .map(|&(n, ks)| json!({"kind": "law_comparison", "n": n, "ks": ks}))
            .collect();
        let Report::Table { summary, .. } = report(&rows, None).unwrap() else {
            panic!()
        };
        assert_eq!(summary[0], "KS decreased in 1 of 2 steps");
    }
}
