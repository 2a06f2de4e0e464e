//! Experiment configuration: a flat TOML document with one parameter table
//! per experiment kind. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::disorder::{beta_schedule, Law};
use crate::error::{RclError, Result};
use crate::lattice::check_dim;

/// Environment variable that overrides the configured master seed.
pub const SEED_ENV: &str = "RCL_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Simulate,
    Kpoint,
    Chaos,
    LawComparison,
    Range1d,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Kpoint => "kpoint",
            Kind::Chaos => "chaos",
            Kind::LawComparison => "law_comparison",
            Kind::Range1d => "range1d",
        }
    }

    pub fn parse(s: &str) -> Result<Kind> {
        match s {
            "simulate" => Ok(Kind::Simulate),
            "kpoint" | "onept_limit" => Ok(Kind::Kpoint),
            "chaos" => Ok(Kind::Chaos),
            "law_comparison" => Ok(Kind::LawComparison),
            "range1d" => Ok(Kind::Range1d),
            _ => Err(RclError::Config(format!("unknown experiment kind `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Quenched,
    Annealed,
    Intermediate,
    P2p,
}

/// Lattice polymer runs. `n` is a step count, except in `intermediate`
/// mode where it is the scale N and the walk runs round(N t) steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub mode: SimMode,
    pub d: usize,
    pub n: u64,
    /// Continuum time in units of N (intermediate mode).
    #[serde(default = "one")]
    pub t: f64,
    /// β̂; β = β̂ a_N unless `beta` is given.
    #[serde(default)]
    pub beta_hat: f64,
    pub beta: Option<f64>,
    /// Site field h; defaults to -λ(β).
    pub h: Option<f64>,
    #[serde(default)]
    pub law: Law,
    pub walkers: u64,
    /// Disorder replicas, one row each (quenched, intermediate, p2p).
    #[serde(default = "one_usize")]
    pub replicas: usize,
    /// Endpoint for point-to-point runs (lattice units).
    pub end: Option<Vec<i64>>,
}

/// k-point hitting probabilities against the continuum kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpointParams {
    pub d: usize,
    pub t: f64,
    /// Continuum points, each of length d.
    pub points: Vec<Vec<f64>>,
    pub n_list: Vec<u64>,
    /// Walks per N; 0 selects the exact renewal route.
    #[serde(default)]
    pub samples: u64,
}

/// Truncated chaos replicas on a white-noise grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosParams {
    pub d: usize,
    pub t: f64,
    pub beta_hat: f64,
    pub order: usize,
    /// Fine cell side, continuum length units.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_coarse2")]
    pub coarse2: usize,
    #[serde(default = "default_coarse3")]
    pub coarse3: usize,
    pub replicas: usize,
}

/// Lattice replicas against chaos replicas over a list of N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawParams {
    pub d: usize,
    pub t: f64,
    pub beta_hat: f64,
    pub order: usize,
    pub n_list: Vec<u64>,
    #[serde(default)]
    pub law: Law,
    pub replicas: usize,
    pub walkers: u64,
    pub overlap_pairs: u64,
    pub chaos_replicas: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Range1dMethod {
    /// Exact extremes law on a cell grid.
    Cell,
    /// Path reweighting with simulated extremes.
    Mc,
}

/// Continuum one-dimensional range polymer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range1dParams {
    pub beta: f64,
    pub t_list: Vec<f64>,
    pub replicas: usize,
    #[serde(default = "default_method")]
    pub method: Range1dMethod,
    /// Paths per environment (mc method).
    #[serde(default = "default_paths")]
    pub paths: u64,
    /// Time step, continuum time units (mc method).
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Environment resolution, continuum length units (mc method).
    #[serde(default = "default_dx")]
    pub dx: f64,
    #[serde(default = "default_cells")]
    pub cells_per_unit: usize,
    #[serde(default = "default_sub")]
    pub sub: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    /// Worker threads; 0 uses the default pool.
    #[serde(default)]
    pub width: usize,
    pub out: PathBuf,
    pub simulate: Option<SimulateParams>,
    pub kpoint: Option<KpointParams>,
    pub chaos: Option<ChaosParams>,
    pub law_comparison: Option<LawParams>,
    pub range1d: Option<Range1dParams>,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_delta() -> f64 {
    0.05
}
fn default_coarse2() -> usize {
    5
}
fn default_coarse3() -> usize {
    10
}
fn default_method() -> Range1dMethod {
    Range1dMethod::Cell
}
fn default_paths() -> u64 {
    4096
}
fn default_dt() -> f64 {
    1e-2
}
fn default_dx() -> f64 {
    1e-3
}
fn default_cells() -> usize {
    48
}
fn default_sub() -> usize {
    64
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RclError::invalid(field, "must be finite and > 0"))
    }
}

fn nonzero(field: &str, v: u64) -> Result<()> {
    if v == 0 {
        Err(RclError::invalid(field, "must be >= 1"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| RclError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| RclError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Applies `RCL_SEED` when set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| RclError::Config(format!("{SEED_ENV}=`{s}` is not an unsigned integer")))?;
        }
        Ok(self)
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let tables = [
            (Kind::Simulate, self.simulate.is_some()),
            (Kind::Kpoint, self.kpoint.is_some()),
            (Kind::Chaos, self.chaos.is_some()),
            (Kind::LawComparison, self.law_comparison.is_some()),
            (Kind::Range1d, self.range1d.is_some()),
        ];
        for (k, present) in tables {
            if present != (k == self.kind) {
                let msg = if present { "table given for a different kind" } else { "missing parameter table" };
                return Err(RclError::invalid(k.as_str(), msg));
            }
        }
        match self.kind {
            Kind::Simulate => self.simulate.as_ref().expect("checked").validate(),
            Kind::Kpoint => self.kpoint.as_ref().expect("checked").validate(),
            Kind::Chaos => self.chaos.as_ref().expect("checked").validate(),
            Kind::LawComparison => self.law_comparison.as_ref().expect("checked").validate(),
            Kind::Range1d => self.range1d.as_ref().expect("checked").validate(),
        }
    }
}

impl SimulateParams {
    pub fn validate(&self) -> Result<()> {
        check_dim(self.d)?;
        nonzero("walkers", self.walkers)?;
        nonzero("n", self.n)?;
        nonzero("replicas", self.replicas as u64)?;
        positive("t", self.t)?;
        if self.beta.is_none() || self.mode == SimMode::Intermediate {
            beta_schedule(self.d, self.beta_hat)?;
        }
        if let Some(b) = self.beta {
            if !b.is_finite() {
                return Err(RclError::invalid("beta", "must be finite"));
            }
        }
        if self.mode == SimMode::P2p {
            if let Some(e) = &self.end {
                if e.len() != self.d {
                    return Err(RclError::invalid("end", "needs d coordinates"));
                }
            }
        }
        Ok(())
    }
}

impl KpointParams {
    pub fn validate(&self) -> Result<()> {
        check_dim(self.d)?;
        if self.d > 3 {
            return Err(RclError::UnsupportedDimension {
                d: self.d,
                reason: "continuum kernels exist for d <= 3",
            });
        }
        positive("t", self.t)?;
        if self.points.is_empty() || self.points.iter().any(|p| p.len() != self.d) {
            return Err(RclError::invalid("points", "need at least one point with d coordinates"));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(RclError::invalid("n_list", "need positive N values"));
        }
        Ok(())
    }
}

impl ChaosParams {
    pub fn validate(&self) -> Result<()> {
        beta_schedule(self.d, self.beta_hat)?;
        positive("t", self.t)?;
        positive("delta", self.delta)?;
        if !(1..=3).contains(&self.order) {
            return Err(RclError::invalid("order", "must be 1, 2 or 3"));
        }
        nonzero("replicas", self.replicas as u64)
    }
}

impl LawParams {
    pub fn validate(&self) -> Result<()> {
        beta_schedule(self.d, self.beta_hat)?;
        positive("t", self.t)?;
        positive("delta", self.delta)?;
        if !(1..=3).contains(&self.order) {
            return Err(RclError::invalid("order", "must be 1, 2 or 3"));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(RclError::invalid("n_list", "need positive N values"));
        }
        nonzero("replicas", self.replicas as u64)?;
        nonzero("walkers", self.walkers)?;
        nonzero("overlap_pairs", self.overlap_pairs)?;
        nonzero("chaos_replicas", self.chaos_replicas as u64)
    }
}

impl Range1dParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(RclError::invalid("beta", "must be finite and >= 0"));
        }
        if self.t_list.len() < 2 {
            return Err(RclError::invalid("t_list", "need at least two times"));
        }
        for &t in &self.t_list {
            positive("t_list", t)?;
        }
        nonzero("replicas", self.replicas as u64)?;
        if self.method == Range1dMethod::Mc {
            nonzero("paths", self.paths)?;
            positive("dt", self.dt)?;
            positive("dx", self.dx)?;
        }
        Ok(())
    }
}

/// Parses "2^12,4096,1e3"-style lists of positive integers.
pub fn parse_n_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if let Some((b, e)) = tok.split_once('^') {
                let b: u64 = b.trim().parse().map_err(|_| RclError::invalid("n_list", format!("bad base in `{tok}`")))?;
                let e: u32 = e.trim().parse().map_err(|_| RclError::invalid("n_list", format!("bad exponent in `{tok}`")))?;
                b.checked_pow(e).ok_or_else(|| RclError::invalid("n_list", format!("`{tok}` overflows")))
            } else {
                let v: f64 = tok.parse().map_err(|_| RclError::invalid("n_list", format!("bad entry `{tok}`")))?;
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(RclError::invalid("n_list", format!("`{tok}` is not a positive integer")));
                }
                Ok(v as u64)
            }
        })
        .collect()
}

/// Parses "2^6,2^7,100.5"-style lists of positive reals.
pub fn parse_f64_list(field: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            let tok = tok.trim();
            let v = if let Some((b, e)) = tok.split_once('^') {
                let b: f64 = b.trim().parse().map_err(|_| RclError::invalid(field, format!("bad entry `{tok}`")))?;
                let e: f64 = e.trim().parse().map_err(|_| RclError::invalid(field, format!("bad entry `{tok}`")))?;
                b.powf(e)
            } else {
                tok.parse().map_err(|_| RclError::invalid(field, format!("bad entry `{tok}`")))?
            };
            Ok(v)
        })
        .collect()
}

/// Parses "x1;x2" with comma-separated coordinates, e.g. "1,0;0,1".
pub fn parse_points(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|p| {
            p.split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|_| RclError::invalid("points", format!("bad coordinate `{c}`"))))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            kind: Kind::Kpoint,
            seed: 7,
            width: 2,
            out: "table.jsonl".into(),
            simulate: None,
            kpoint: Some(KpointParams {
                d: 2,
                t: 1.0,
                points: vec![vec![1.0, 0.0]],
                n_list: vec![4096, 32768],
                samples: 0,
            }),
            chaos: None,
            law_comparison: None,
            range1d: None,
        }
    }

    #[test]
    fn toml_round_trip() {
        let c = sample();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = sample().to_toml().replace("seed = 7", "seed = 7\nsede = 8");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(RclError::Config(_))));
        let text = sample().to_toml().replace("samples = 0", "samples = 0\nsampels = 3");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn critical_dimension_rejected() {
        let c = ExperimentConfig {
            kind: Kind::Simulate,
            kpoint: None,
            simulate: Some(SimulateParams {
                mode: SimMode::Intermediate,
                d: 4,
                n: 1024,
                t: 1.0,
                beta_hat: 0.5,
                beta: None,
                h: None,
                law: Law::Gaussian,
                walkers: 10,
                replicas: 1,
                end: None,
            }),
            ..sample()
        };
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("critical dimension, out of scope"), "{e}");
    }

    #[test]
    fn wrong_table_rejected() {
        let mut c = sample();
        c.kind = Kind::Chaos;
        assert!(c.validate().is_err());
    }

    #[test]
    fn list_parsers() {
        assert_eq!(parse_n_list("2^12, 4096,10").unwrap(), vec![4096, 4096, 10]);
        assert!(parse_n_list("2^x").is_err());
        assert_eq!(parse_f64_list("t", "2^2,0.5").unwrap(), vec![4.0, 0.5]);
        assert_eq!(parse_points("1,0;0.5,-1").unwrap(), vec![vec![1.0, 0.0], vec![0.5, -1.0]]);
    }
}
