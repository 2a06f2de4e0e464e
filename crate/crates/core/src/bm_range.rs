//! One-dimensional Brownian polymer rewarded by the environment increment
//! over its range: H_t = W(M_t) - W(m_t), Z_t = E exp(β H_t).

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RclError, Result};
use crate::par::{chunks, map_tasks};
use crate::polymer::PartitionEstimate;
use crate::quad::{integrate, integrate_to_inf};
use crate::rng::{derive_seed, keyed_gaussian, label, normal, stream, uniform_pos, StreamRng};
use crate::special::{normal_pdf, normal_sf};
use crate::stats::{median, ols, KahanSum, LogMeanExp, Welford};

/// Euler path on a uniform time grid with running extremes.
#[derive(Clone, Debug)]
pub struct BrownianPath {
    pub t: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub max: f64,
    pub min: f64,
}

impl BrownianPath {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn end(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }
}

fn check_dt(t: f64, dt: f64) -> Result<usize> {
    if !(t > 0.0) {
        return Err(RclError::invalid("t", "must be positive"));
    }
    if !(dt > 0.0) || dt > t / 100.0 + 1e-15 {
        return Err(RclError::invalid("dt", "need 0 < dt <= t/100"));
    }
    Ok((t / dt).round() as usize)
}

pub fn simulate_bm(t: f64, dt: f64, seed: u64, index: u64) -> Result<BrownianPath> {
    let steps = check_dt(t, dt)?;
    let h = t / steps as f64;
    let sd = h.sqrt();
    let mut rng = stream(seed, label::PATH, index);
    let mut values = Vec::with_capacity(steps + 1);
    let (mut x, mut max, mut min) = (0.0f64, 0.0f64, 0.0f64);
    values.push(0.0);
    for _ in 0..steps {
        x += sd * normal(&mut rng);
        max = max.max(x);
        min = min.min(x);
        values.push(x);
    }
    Ok(BrownianPath {
        t,
        dt: h,
        values,
        max,
        min,
    })
}

/// How extremes are produced: Euler grid maxima (biased low by O(√dt)),
/// or grid endpoints plus exactly sampled Brownian-bridge extremes per step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathScheme {
    Euler,
    #[default]
    Bridge,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSummary {
    pub min: f64,
    pub max: f64,
    pub end: f64,
}

/// (m_t, M_t, B_t) of one path. The bridge scheme draws the maximum and the
/// minimum of each step independently given its endpoints.
pub fn sample_extremes<R: Rng + ?Sized>(t: f64, dt: f64, scheme: PathScheme, rng: &mut R) -> PathSummary {
    let steps = (t / dt).round().max(1.0) as usize;
    let h = t / steps as f64;
    let sd = h.sqrt();
    let (mut x, mut max, mut min) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..steps {
        let y = x + sd * normal(rng);
        match scheme {
            PathScheme::Euler => {
                max = max.max(y);
                min = min.min(y);
            }
            PathScheme::Bridge => {
                let d2 = (y - x) * (y - x);
                let hi = 0.5 * (x + y + (d2 - 2.0 * h * uniform_pos(rng).ln()).sqrt());
                let lo = 0.5 * (x + y - (d2 - 2.0 * h * uniform_pos(rng).ln()).sqrt());
                max = max.max(hi);
                min = min.min(lo);
            }
        }
        x = y;
    }
    PathSummary { min, max, end: x }
}

/// Two-sided Brownian motion W on the grid dx·Z with W(0) = 0. Increments
/// are keyed by node index, so the realisation does not depend on the
/// order in which the window is extended.
#[derive(Clone, Debug)]
pub struct TwoSidedEnvironment {
    pub dx: f64,
    pub seed: u64,
    right: Vec<f64>,
    left: Vec<f64>,
}

impl TwoSidedEnvironment {
    pub fn new(dx: f64, seed: u64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(RclError::invalid("dx", "must be positive"));
        }
        Ok(TwoSidedEnvironment {
            dx,
            seed,
            right: vec![0.0],
            left: vec![0.0],
        })
    }

    /// Current window [-L, L].
    pub fn window(&self) -> (f64, f64) {
        (
            -((self.left.len() - 1) as f64) * self.dx,
            (self.right.len() - 1) as f64 * self.dx,
        )
    }

    fn grow(side: &mut Vec<f64>, seed: u64, salt: u64, upto: usize, sd: f64) {
        while side.len() <= upto {
            let i = side.len() as u64;
            let last = *side.last().unwrap();
            side.push(last + sd * keyed_gaussian(seed, (i << 1) | salt));
        }
    }

    pub fn extend_to(&mut self, x: f64) {
        let idx = (x.abs() / self.dx).ceil() as usize + 1;
        let sd = self.dx.sqrt();
        if x >= 0.0 {
            Self::grow(&mut self.right, self.seed, 0, idx, sd);
        } else {
            Self::grow(&mut self.left, self.seed, 1, idx, sd);
        }
    }

    /// W(x) with linear interpolation, or `None` outside the window.
    pub fn get(&self, x: f64) -> Option<f64> {
        let (side, u) = if x >= 0.0 { (&self.right, x / self.dx) } else { (&self.left, -x / self.dx) };
        let i = u.floor() as usize;
        if i + 1 >= side.len() {
            return None;
        }
        let f = u - i as f64;
        Some(side[i] * (1.0 - f) + side[i + 1] * f)
    }

    /// W(x), extending the window on demand.
    pub fn value(&mut self, x: f64) -> f64 {
        if let Some(v) = self.get(x) {
            return v;
        }
        self.extend_to(x);
        self.get(x).expect("window extended")
    }
}

pub fn hamiltonian(path: &BrownianPath, env: &mut TwoSidedEnvironment) -> f64 {
    hamiltonian_extremes(path.min, path.max, env)
}

pub fn hamiltonian_extremes(min: f64, max: f64, env: &mut TwoSidedEnvironment) -> f64 {
    env.value(max) - env.value(min)
}

const PATH_CHUNK: u64 = 256;

/// Path summaries for `paths` replicas, chunked on fixed streams.
pub fn sample_summaries(t: f64, dt: f64, scheme: PathScheme, paths: u64, seed: u64) -> Result<Vec<PathSummary>> {
    check_dt(t, dt)?;
    let tasks = chunks(paths, PATH_CHUNK);
    let parts = map_tasks(tasks.len(), |i| {
        let (start, len) = tasks[i];
        let mut rng: StreamRng = stream(seed, label::PATH, start / PATH_CHUNK);
        (0..len).map(|_| sample_extremes(t, dt, scheme, &mut rng)).collect::<Vec<_>>()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Monte Carlo Z_t = E exp(β H_t) for a fixed environment.
pub fn quenched_z1d(
    env: &mut TwoSidedEnvironment,
    t: f64,
    beta: f64,
    paths: u64,
    dt: f64,
    scheme: PathScheme,
    seed: u64,
) -> Result<PartitionEstimate> {
    if paths == 0 {
        return Err(RclError::invalid("paths", "need at least one path"));
    }
    let sums = sample_summaries(t, dt, scheme, paths, seed)?;
    let lo = sums.iter().map(|s| s.min).fold(0.0, f64::min);
    let hi = sums.iter().map(|s| s.max).fold(0.0, f64::max);
    env.extend_to(lo);
    env.extend_to(hi);
    let mut acc = LogMeanExp::default();
    for s in &sums {
        acc.push(if beta == 0.0 { 0.0 } else { beta * hamiltonian_extremes(s.min, s.max, env) });
    }
    Ok(PartitionEstimate::from_acc(&acc))
}

/// Monte Carlo E exp(β² R_t / 2).
pub fn annealed_z1d(t: f64, beta: f64, paths: u64, dt: f64, scheme: PathScheme, seed: u64) -> Result<PartitionEstimate> {
    let sums = sample_summaries(t, dt, scheme, paths, seed)?;
    let mut acc = LogMeanExp::default();
    for s in &sums {
        acc.push(0.5 * beta * beta * (s.max - s.min));
    }
    Ok(PartitionEstimate::from_acc(&acc))
}

/// Environment-averaged quenched Z over `envs` independent environments.
#[allow(clippy::too_many_arguments)]
pub fn env_averaged_z1d(
    t: f64,
    beta: f64,
    envs: usize,
    paths: u64,
    dt: f64,
    dx: f64,
    scheme: PathScheme,
    seed: u64,
) -> Result<Welford> {
    let vals = map_tasks(envs, |e| -> Result<f64> {
        let eseed = derive_seed(seed, e as u64);
        let mut env = TwoSidedEnvironment::new(dx, derive_seed(eseed, label::ENV))?;
        // paths for one environment run sequentially inside the replica task
        let sums = {
            let tasks = chunks(paths, PATH_CHUNK);
            let mut out = Vec::with_capacity(paths as usize);
            for (start, len) in tasks {
                let mut rng = stream(eseed, label::PATH, start / PATH_CHUNK);
                for _ in 0..len {
                    out.push(sample_extremes(t, dt, scheme, &mut rng));
                }
            }
            out
        };
        let mut acc = LogMeanExp::default();
        for s in &sums {
            acc.push(beta * hamiltonian_extremes(s.min, s.max, &mut env));
        }
        Ok(acc.mean())
    });
    let mut w = Welford::default();
    for v in vals {
        w.push(v?);
    }
    Ok(w)
}

/// Density of R_1 from Feller's series: tail form 8 Σ (-1)^{k-1} k² φ(kr)
/// for r >= 1, theta-transformed form 8 Σ_{n odd} e^{-c_n/r²}(2c_n/r⁵ - 1/r³),
/// c_n = π² n² / 2, for r < 1.
fn range_density_unit(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let mut s = KahanSum::default();
    if r >= 1.0 {
        for k in 1..200 {
            let kf = k as f64;
            let term = kf * kf * normal_pdf(kf * r);
            s.add(if k % 2 == 1 { term } else { -term });
            if term < 1e-18 {
                break;
            }
        }
        8.0 * s.value()
    } else {
        for n in (1..400).step_by(2) {
            let c = PI * PI * (n * n) as f64 / 2.0;
            let e = (-c / (r * r)).exp();
            s.add(e * (2.0 * c / r.powi(5) - 1.0 / r.powi(3)));
            if e < 1e-300 || e * c / r.powi(5) < 1e-18 * s.value().abs().max(1e-300) {
                break;
            }
        }
        8.0 * s.value()
    }
}

/// P(R_1 <= r): 1 - 8 Σ (-1)^{k-1} k Φ̄(kr) for r >= 1, and
/// 8 Σ_{n odd} e^{-V_n}(V_n + 1/2)/c_n with V_n = c_n / r² for r < 1.
fn range_cdf_unit(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let mut s = KahanSum::default();
    if r >= 1.0 {
        for k in 1..200 {
            let kf = k as f64;
            let term = kf * normal_sf(kf * r);
            s.add(if k % 2 == 1 { term } else { -term });
            if term < 1e-18 {
                break;
            }
        }
        (1.0 - 8.0 * s.value()).clamp(0.0, 1.0)
    } else {
        for n in (1..400).step_by(2) {
            let c = PI * PI * (n * n) as f64 / 2.0;
            let v = c / (r * r);
            let term = (-v).exp() * (v + 0.5) / c;
            s.add(term);
            if term < 1e-18 {
                break;
            }
        }
        (8.0 * s.value()).clamp(0.0, 1.0)
    }
}

pub fn range_density(r: f64, t: f64) -> f64 {
    range_density_unit(r / t.sqrt()) / t.sqrt()
}

pub fn range_cdf(r: f64, t: f64) -> f64 {
    range_cdf_unit(r / t.sqrt())
}

/// E R_t by integrating the tail of the series CDF.
pub fn range_mean(t: f64) -> f64 {
    let q = integrate_to_inf(|r| 1.0 - range_cdf_unit(r), 0.0, 1e-14, 1e-12, 400);
    q.value * t.sqrt()
}

pub fn range_quantile(p: f64, t: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if range_cdf_unit(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) * t.sqrt()
}

pub fn range_median(t: f64) -> f64 {
    range_quantile(0.5, t)
}

/// E exp(β² R_t / 2) by quadrature against the range density.
pub fn annealed_z1d_exact(t: f64, beta: f64) -> f64 {
    let c = 0.5 * beta * beta * t.sqrt();
    let q = integrate_to_inf(
        |r| {
            let f = range_density_unit(r);
            if f == 0.0 {
                0.0
            } else {
                (c * r).exp() * f
            }
        },
        0.0,
        1e-14,
        1e-12,
        400,
    );
    q.value
}

/// Joint density of (m_1, M_1) at (a, b) and E[|B_1|; m_1 ∈ da, M_1 ∈ db]/da db,
/// as mixed derivatives of the method-of-images series for the killed
/// density Σ_k [φ(z + 2kw) - φ(z - 2a + 2kw)], w = b - a.
pub fn range_joint_density(a: f64, b: f64) -> (f64, f64) {
    let w = b - a;
    if a > 0.0 || b < 0.0 || w < 0.35 {
        // below w = 0.35 the density is under e^{-40}
        return (0.0, 0.0);
    }
    // ∫(u² - 1)φ(u) du = -u φ(u); with z = u - c,
    // ∫ z (u² - 1) φ(u) dz = -(u² + 1) φ(u) + c u φ(u)
    let p_prim = |u: f64| -u * normal_pdf(u);
    let z_prim = |u: f64, c: f64| (-(u * u + 1.0) + c * u) * normal_pdf(u);
    let kmax = ((12.0 + 2.0 * w.max(a.abs()).max(b)) / (2.0 * w)).ceil() as i64 + 1;
    let mut p = KahanSum::default();
    let mut e = KahanSum::default();
    for k in -kmax..=kmax {
        let kf = k as f64;
        for (coef, c) in [(4.0 * kf * kf, 2.0 * kf * w), (-4.0 * kf * (kf + 1.0), 2.0 * kf * w - 2.0 * a)] {
            if coef == 0.0 {
                continue;
            }
            p.add(coef * (p_prim(b + c) - p_prim(a + c)));
            e.add(coef * (z_prim(a + c, c) + z_prim(b + c, c) - 2.0 * z_prim(c, c)));
        }
    }
    (p.value().max(0.0), e.value().max(0.0))
}

/// Cell model of the unit-time polymer: (m, M) on cells of width h over
/// [-L, 0] × [0, L], environment sampled `sub` times finer.
///
/// By Brownian scaling Z_t(β) has the law of Z_1(β t^{1/4}), and the
/// endpoint E|B_t| that of √t E|B_1| at β t^{1/4}.
#[derive(Clone, Debug)]
pub struct CellModel {
    pub l: f64,
    pub h: f64,
    pub cells: usize,
    pub sub: usize,
    /// mass[i * cells + j] ≈ P(m ∈ cell i, M ∈ cell j); cell i = [-(i+1)h, -ih].
    pub mass: Vec<f64>,
    pub abs_end: Vec<f64>,
    pub total_mass: f64,
}

impl CellModel {
    pub fn new(l: f64, cells_per_unit: usize, sub: usize) -> Result<Self> {
        if !(l > 0.0) || cells_per_unit == 0 || sub == 0 {
            return Err(RclError::invalid("cell model", "need L > 0, cells and sub-steps >= 1"));
        }
        let cells = (l * cells_per_unit as f64).round() as usize;
        let h = l / cells as f64;
        let rows = map_tasks(cells, |i| {
            let a = -(i as f64 + 0.5) * h;
            (0..cells)
                .map(|j| {
                    let (p, e) = range_joint_density(a, (j as f64 + 0.5) * h);
                    (p * h * h, e * h * h)
                })
                .collect::<Vec<_>>()
        });
        let mut mass = Vec::with_capacity(cells * cells);
        let mut abs_end = Vec::with_capacity(cells * cells);
        for row in rows {
            for (p, e) in row {
                mass.push(p);
                abs_end.push(e);
            }
        }
        let total_mass = mass.iter().copied().collect::<KahanSum>().value();
        Ok(CellModel {
            l,
            h,
            cells,
            sub,
            mass,
            abs_end,
            total_mass,
        })
    }

    /// Window half-width adequate for effective inverse temperature β'.
    pub fn window_for(beta_eff: f64) -> f64 {
        (5.0 + 3.0 * beta_eff.powf(2.0 / 3.0)).ceil()
    }

    /// Cell averages of exp(sign β' W) with W linear between fine nodes;
    /// returned as (log offset, values relative to it).
    fn cell_weights(&self, beta_eff: f64, sign: f64, rng: &mut StreamRng) -> (f64, Vec<f64>) {
        let s = self.h / self.sub as f64;
        let sd = s.sqrt();
        let mut w = 0.0;
        let mut logs = Vec::with_capacity(self.cells);
        for _ in 0..self.cells {
            let mut lme = LogMeanExp::default();
            for _ in 0..self.sub {
                let next = w + sd * normal(rng);
                let x0 = sign * beta_eff * w;
                let dlt = sign * beta_eff * (next - w);
                // log of (e^{dlt} - 1)/dlt, stable near 0
                let rel = if dlt.abs() < 1e-12 {
                    0.5 * dlt
                } else if dlt > 0.0 {
                    dlt + (-(-dlt).exp_m1() / dlt).ln()
                } else {
                    (dlt.exp_m1() / dlt).ln()
                };
                lme.push(x0 + rel);
                w = next;
            }
            logs.push(lme.log_mean());
        }
        let off = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (off, logs.iter().map(|l| (l - off).exp()).collect())
    }

    /// One environment: log Z_1(β'), E_polymer |B_1| and the perplexity
    /// exp(entropy) of the polymer measure over cells.
    pub fn evaluate(&self, beta_eff: f64, seed: u64, index: u64) -> EnvEval {
        let mut rng = stream(seed, label::ENV, index);
        // m side walks W(-x), M side walks W(x); independent halves
        let (oa, a) = self.cell_weights(beta_eff, -1.0, &mut rng);
        let (ob, b) = self.cell_weights(beta_eff, 1.0, &mut rng);
        let n = self.cells;
        let mut z = KahanSum::default();
        let mut e = KahanSum::default();
        let mut ent = KahanSum::default();
        for i in 0..n {
            let row = &self.mass[i * n..(i + 1) * n];
            let erow = &self.abs_end[i * n..(i + 1) * n];
            let (mut zi, mut ei) = (0.0, 0.0);
            for j in 0..n {
                let wgt = row[j] * b[j];
                zi += wgt;
                ei += erow[j] * b[j];
            }
            z.add(a[i] * zi);
            e.add(a[i] * ei);
        }
        let zv = z.value();
        for i in 0..n {
            for j in 0..n {
                let p = self.mass[i * n + j] * a[i] * b[j] / zv;
                if p > 0.0 {
                    ent.add(-p * p.ln());
                }
            }
        }
        EnvEval {
            log_z: oa + ob + zv.ln() - self.total_mass.ln(),
            mean_abs_end: e.value() / zv,
            perplexity: ent.value().exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnvEval {
    pub log_z: f64,
    pub mean_abs_end: f64,
    pub perplexity: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingRow {
    pub t: f64,
    pub median_rescaled_log_z: f64,
    pub mean_log_z: f64,
    pub mean_log_z_stderr: f64,
    pub mean_abs_end: f64,
    pub mean_abs_end_stderr: f64,
    /// Median perplexity of the polymer measure over cells.
    pub ess: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub beta: f64,
    pub rows: Vec<ScalingRow>,
    /// Slope of log E[log Z_t] against log t; `None` when β = 0.
    pub slope: Option<(f64, f64)>,
    /// Slope of log E|B_t| against log t with its standard error.
    pub chi: (f64, f64),
}

/// Grid resolution for the scaling study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellOptions {
    pub cells_per_unit: usize,
    pub sub: usize,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            cells_per_unit: 48,
            sub: 64,
        }
    }
}

/// Per-t environment replicas of log Z_t and E_polymer|B_t| via the cell model.
pub fn scaling_study(t_list: &[f64], beta: f64, replicas: usize, opts: &CellOptions, seed: u64) -> Result<ScalingReport> {
    if t_list.len() < 2 || t_list.iter().any(|&t| !(t > 0.0)) {
        return Err(RclError::invalid("t_list", "need at least two positive times"));
    }
    if replicas == 0 {
        return Err(RclError::invalid("replicas", "need at least one"));
    }
    let beta_max = t_list.iter().map(|t| beta.abs() * t.powf(0.25)).fold(0.0, f64::max);
    let model = CellModel::new(CellModel::window_for(beta_max), opts.cells_per_unit, opts.sub)?;
    let mut rows = Vec::new();
    for (ti, &t) in t_list.iter().enumerate() {
        let beta_eff = beta * t.powf(0.25);
        let tseed = derive_seed(seed, ti as u64);
        let evals = map_tasks(replicas, |r| model.evaluate(beta_eff, tseed, r as u64));
        let logz: Vec<f64> = evals.iter().map(|e| e.log_z).collect();
        let ends: Vec<f64> = evals.iter().map(|e| t.sqrt() * e.mean_abs_end).collect();
        let perp: Vec<f64> = evals.iter().map(|e| e.perplexity).collect();
        let lw = Welford::from_slice(&logz);
        let ew = Welford::from_slice(&ends);
        let resc: Vec<f64> = logz.iter().map(|l| l / t.cbrt()).collect();
        rows.push(ScalingRow {
            t,
            median_rescaled_log_z: median(&resc),
            mean_log_z: lw.mean,
            mean_log_z_stderr: lw.stderr(),
            mean_abs_end: ew.mean,
            mean_abs_end_stderr: ew.stderr(),
            ess: median(&perp),
        });
    }
    let lt: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
    let slope = if beta == 0.0 || rows.iter().any(|r| r.mean_log_z <= 0.0) {
        None
    } else {
        let y: Vec<f64> = rows.iter().map(|r| r.mean_log_z.ln()).collect();
        let (s, _, se) = ols(&lt, &y);
        Some((s, se))
    };
    let ye: Vec<f64> = rows.iter().map(|r| r.mean_abs_end.ln()).collect();
    let (chi, _, chi_se) = ols(&lt, &ye);
    Ok(ScalingReport {
        beta,
        rows,
        slope,
        chi: (chi, chi_se),
    })
}

pub fn free_energy_scaling(t_list: &[f64], beta: f64, replicas: usize, seed: u64) -> Result<ScalingReport> {
    scaling_study(t_list, beta, replicas, &CellOptions::default(), seed)
}

pub fn endpoint_scale(t_list: &[f64], beta: f64, replicas: usize, seed: u64) -> Result<(f64, f64)> {
    Ok(scaling_study(t_list, beta, replicas, &CellOptions::default(), seed)?.chi)
}

/// Endpoint under the polymer measure by path reweighting in each environment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EndpointMc {
    pub t: f64,
    pub mean_abs_end: f64,
    pub stderr: f64,
    /// Smallest Kish ESS across environments.
    pub min_ess: f64,
    pub collapsed: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn endpoint_mc(
    t: f64,
    beta: f64,
    envs: usize,
    paths: u64,
    dt: f64,
    dx: f64,
    scheme: PathScheme,
    seed: u64,
) -> Result<EndpointMc> {
    let out = map_tasks(envs, |e| -> Result<(f64, f64)> {
        let eseed = derive_seed(seed, e as u64);
        let mut env = TwoSidedEnvironment::new(dx, derive_seed(eseed, label::ENV))?;
        let mut rng = stream(eseed, label::PATH, 0);
        let sums: Vec<PathSummary> = (0..paths).map(|_| sample_extremes(t, dt, scheme, &mut rng)).collect();
        let logw: Vec<f64> = sums.iter().map(|s| beta * hamiltonian_extremes(s.min, s.max, &mut env)).collect();
        let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
        let tot: f64 = w.iter().sum();
        let mut m = 0.0;
        let mut s2 = 0.0;
        for (wi, s) in w.iter().zip(&sums) {
            let p = wi / tot;
            m += p * s.end.abs();
            s2 += p * p;
        }
        Ok((m, 1.0 / s2))
    });
    let mut w = Welford::default();
    let mut min_ess = f64::INFINITY;
    for o in out {
        let (m, ess) = o?;
        w.push(m);
        min_ess = min_ess.min(ess);
    }
    Ok(EndpointMc {
        t,
        mean_abs_end: w.mean,
        stderr: w.stderr(),
        min_ess,
        collapsed: min_ess < 0.01 * paths as f64,
    })
}

/// Quadrature of the joint density over the window, a consistency check on
/// the image series.
pub fn joint_mass(l: f64) -> f64 {
    integrate(
        |a| integrate(|b| range_joint_density(a, b).0, 0.0, l, 1e-13, 1e-10, 200).value,
        -l,
        0.0,
        1e-12,
        1e-9,
        200,
    )
    .value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpoint::strip_survival;

    #[test]
    fn euler_path_invariants() {
        let p = simulate_bm(1.0, 1e-3, 1, 0).unwrap();
        assert_eq!(p.values.len(), 1001);
        assert!(p.min <= 0.0 && p.max >= 0.0);
        assert!(simulate_bm(1.0, 0.1, 1, 0).is_err());
    }

    #[test]
    fn range_series_switch_is_continuous() {
        let a = range_cdf_unit(1.0 - 1e-12);
        let b = range_cdf_unit(1.0);
        assert!((a - b).abs() < 1e-12);
        let a = range_density_unit(1.0 - 1e-12);
        let b = range_density_unit(1.0);
        assert!((a - b).abs() < 1e-10);
        assert!(range_cdf_unit(1e-3) < 1e-300 + 1e-12);
        assert!((range_cdf_unit(40.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn range_mean_and_density_normalise() {
        assert!((range_mean(1.0) - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-8);
        let mass = integrate_to_inf(range_density_unit, 0.0, 1e-14, 1e-12, 400).value;
        assert!((mass - 1.0).abs() < 1e-10);
        let q = integrate(range_density_unit, 0.0, 1.7, 1e-14, 1e-12, 200).value;
        assert!((q - range_cdf_unit(1.7)).abs() < 1e-10);
    }

    #[test]
    fn joint_density_against_strip_derivative() {
        let (a, b) = (-0.7, 0.9);
        let hh = 1e-3;
        let f = |x: f64, y: f64| strip_survival(x, y, 1.0);
        let fd = -(f(a + hh, b + hh) - f(a + hh, b - hh) - f(a - hh, b + hh) + f(a - hh, b - hh)) / (4.0 * hh * hh);
        let (p, _) = range_joint_density(a, b);
        assert!((p - fd).abs() < 1e-5, "{p} vs {fd}");
        // the range density is the anti-diagonal integral of the joint density
        let r = 1.6;
        let line = integrate(|a| range_joint_density(a, a + r).0, -r, 0.0, 1e-13, 1e-11, 200).value;
        assert!((line - range_density_unit(r)).abs() < 1e-8);
    }

    #[test]
    fn joint_density_moments() {
        let m = joint_mass(9.0);
        assert!((m - 1.0).abs() < 1e-7, "{m}");
        let e = integrate(
            |a| integrate(|b| range_joint_density(a, b).1, 0.0, 9.0, 1e-13, 1e-10, 200).value,
            -9.0,
            0.0,
            1e-12,
            1e-9,
            200,
        )
        .value;
        assert!((e - (2.0 / PI).sqrt()).abs() < 1e-6, "{e}");
    }

    #[test]
    fn cell_model_free_case() {
        let model = CellModel::new(6.0, 24, 4).unwrap();
        assert!((model.total_mass - 1.0).abs() < 2e-3);
        let ev = model.evaluate(0.0, 1, 0);
        assert!(ev.log_z.abs() < 1e-12);
        assert!((ev.mean_abs_end - (2.0 / PI).sqrt()).abs() < 2e-3);
    }

    #[test]
    fn environment_is_order_independent() {
        let mut a = TwoSidedEnvironment::new(1e-2, 9).unwrap();
        let mut b = TwoSidedEnvironment::new(1e-2, 9).unwrap();
        a.extend_to(3.0);
        a.extend_to(-2.0);
        let v1 = b.value(-1.234);
        let v2 = b.value(2.5);
        assert_eq!(v1, a.get(-1.234).unwrap());
        assert_eq!(v2, a.get(2.5).unwrap());
        assert_eq!(a.value(0.0), 0.0);
    }

    #[test]
    fn h_depends_only_on_extremes() {
        let mut env = TwoSidedEnvironment::new(1e-3, 4).unwrap();
        let mut p = simulate_bm(1.0, 1e-3, 2, 0).unwrap();
        let h1 = hamiltonian(&p, &mut env);
        // reverse the interior; extremes unchanged
        let n = p.values.len();
        p.values[1..n - 1].reverse();
        assert_eq!(h1, hamiltonian(&p, &mut env));
        let zero = BrownianPath {
            t: 1.0,
            dt: 0.01,
            values: vec![0.0; 101],
            max: 0.0,
            min: 0.0,
        };
        assert_eq!(hamiltonian(&zero, &mut env), 0.0);
    }

    #[test]
    fn beta_zero_partition_is_one() {
        let mut env = TwoSidedEnvironment::new(1e-3, 1).unwrap();
        let z = quenched_z1d(&mut env, 1.0, 0.0, 100, 1e-2, PathScheme::Bridge, 3).unwrap();
        assert_eq!(z.value, 1.0);
        let a = annealed_z1d(1.0, 0.0, 100, 1e-2, PathScheme::Euler, 3).unwrap();
        assert_eq!(a.value, 1.0);
    }

    #[test]
    fn annealed_exact_vs_mc() {
        let exact = annealed_z1d_exact(1.0, 1.0);
        let mc = annealed_z1d(1.0, 1.0, 200_000, 1e-2, PathScheme::Bridge, 8).unwrap();
        assert!((mc.value - exact).abs() < 4.0 * mc.stderr, "{} ± {} vs {exact}", mc.value, mc.stderr);
        // scaling: Z(t, β) = Z(1, β t^{1/4})
        assert!((annealed_z1d_exact(4.0, 0.5) - annealed_z1d_exact(1.0, 0.5 * 4f64.powf(0.25))).abs() < 1e-10);
    }
}
