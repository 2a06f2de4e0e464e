//! Discretised white noise and the truncated Wiener chaos series
//! Z^W_t = 1 + Σ_k β̂^k / k! ∫ ψ_t W^{⊗k}, plus numerical checks of the
//! convergence conditions (moment bounds, kernel L² gaps, tail bound).

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::disorder::{beta_schedule, eta_fourth_moment, eta_variance, Law};
use crate::error::{RclError, Result};
use crate::kpoint::{
    cpoint, embed, escape_rate_3d, hit_scale, psi_kernel, psi_kernel_tol, CPoint, D1Reading, PsiTol,
};
use crate::lattice::{OnePointRenewal, MAX_DIM};
use crate::par::{chunks, map_tasks};
use crate::polymer::{overlap_samples, quenched_intermediate, variance_from_overlaps};
use crate::quad::integrate_to_inf;
use crate::rng::{derive_seed, label, normal, stream};
use crate::stats::{ks_statistic, quantile_sorted, sorted, KahanSum, VarianceAcc, Welford};

/// Cap on cells times replicas held at once, and on distinct ψ evaluations.
pub const NOISE_CELL_CAP: u128 = 1 << 26;
pub const PSI_EVAL_CAP: u128 = 1 << 21;

/// Exact ∫ψ_t(x)² dx for k = 1.
pub fn psi1_l2_exact(d: usize, t: f64) -> Result<f64> {
    match d {
        // π t ∫_0^∞ E_1(u)² du = π t · 2 ln 2
        2 => Ok(PI * t * 2.0 * LN_2),
        // 4π A² ∫ erfc(c r)² dr with A = 3γ/2π, c = sqrt(3/2t)
        3 => {
            let g = escape_rate_3d();
            Ok(9.0 * g * g / PI * (2.0 * t / 3.0).sqrt() * (2.0 - 2f64.sqrt()) / PI.sqrt())
        }
        // 2 ∫_0^∞ (2Φ̄(x/√t))² dx = 2√2 (2-√2) √t / √π
        1 => Ok(t.sqrt() * 2.0 * 2f64.sqrt() * (2.0 - 2f64.sqrt()) / PI.sqrt()),
        _ => Err(RclError::UnsupportedDimension {
            d,
            reason: "chaos kernels are defined for d = 1, 2, 3",
        }),
    }
}

/// Radial profile of ψ_t for k = 1.
pub fn psi1_radial(d: usize, t: f64, r: f64) -> f64 {
    psi_kernel(d, t, &[cpoint(&[r])], D1Reading::Ordered)
        .map(|e| e.value)
        .unwrap_or(f64::INFINITY)
}

fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// Smallest radius (a multiple of √t / 4) outside which the k = 1 kernel
/// carries less than `frac` of its L² mass.
pub fn auto_radius(d: usize, t: f64, frac: f64) -> Result<f64> {
    let total = psi1_l2_exact(d, t)?;
    let step = 0.25 * t.sqrt();
    let mut r = step;
    loop {
        let tail = integrate_to_inf(
            |s| sphere_area(d) * s.powi(d as i32 - 1) * psi1_radial(d, t, s).powi(2),
            r,
            1e-16,
            1e-8,
            200,
        )
        .value;
        if tail < frac * total {
            return Ok(r);
        }
        r += step;
    }
}

/// Centred Gaussian cell values with variance δ^d on a cube of `side`^d
/// cells centred at the origin.
#[derive(Clone, Debug)]
pub struct WhiteNoiseGrid {
    pub d: usize,
    pub delta: f64,
    pub side: usize,
    pub values: Vec<f64>,
}

impl WhiteNoiseGrid {
    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.side as f64 * self.delta
    }

    /// Centre of cell `idx` (row-major, axis 0 fastest).
    pub fn center(&self, idx: usize) -> CPoint {
        cell_center(self.d, self.side, self.delta, idx)
    }

    /// Sum the noise over blocks of `f`^d cells.
    pub fn aggregate(&self, f: usize) -> Result<WhiteNoiseGrid> {
        if f == 0 || !self.side.is_multiple_of(f) {
            return Err(RclError::invalid("coarse", "factor must divide the grid side"));
        }
        let side = self.side / f;
        let mut values = vec![0.0; side.pow(self.d as u32)];
        for (idx, &w) in self.values.iter().enumerate() {
            let c = unravel(self.d, self.side, idx);
            let mut j = 0;
            for a in (0..self.d).rev() {
                j = j * side + c[a] / f;
            }
            values[j] += w;
        }
        Ok(WhiteNoiseGrid {
            d: self.d,
            delta: self.delta * f as f64,
            side,
            values,
        })
    }
}

fn unravel(d: usize, side: usize, mut idx: usize) -> [usize; MAX_DIM] {
    let mut c = [0; MAX_DIM];
    for a in c.iter_mut().take(d) {
        *a = idx % side;
        idx /= side;
    }
    c
}

fn cell_center(d: usize, side: usize, delta: f64, idx: usize) -> CPoint {
    let c = unravel(d, side, idx);
    let mut p = [0.0; MAX_DIM];
    for a in 0..d {
        p[a] = (c[a] as f64 + 0.5 - 0.5 * side as f64) * delta;
    }
    p
}

/// Cell centre in units of δ/2 (odd integers since the side is even).
fn half_units(d: usize, side: usize, idx: usize) -> [i64; MAX_DIM] {
    let c = unravel(d, side, idx);
    let mut p = [0i64; MAX_DIM];
    for a in 0..d {
        p[a] = 2 * c[a] as i64 + 1 - side as i64;
    }
    p
}

pub fn sample_noise(d: usize, delta: f64, side: usize, seed: u64, index: u64) -> Result<WhiteNoiseGrid> {
    if !(delta > 0.0) {
        return Err(RclError::invalid("delta", "must be positive"));
    }
    if side == 0 || side % 2 == 1 {
        return Err(RclError::invalid("side", "must be even and positive"));
    }
    let cells = (side as u128).pow(d as u32);
    if cells > NOISE_CELL_CAP {
        return Err(RclError::BudgetExceeded {
            what: "noise cells",
            requested: cells,
            cap: NOISE_CELL_CAP,
        });
    }
    let sd = delta.powf(d as f64 / 2.0);
    let mut rng = stream(seed, label::NOISE, index);
    let values = (0..cells as usize).map(|_| sd * normal(&mut rng)).collect();
    Ok(WhiteNoiseGrid { d, delta, side, values })
}

/// Discretisation of the chaos series: cell-averaged ψ_1 on the fine grid,
/// centre values of ψ_2, ψ_3 on grids coarsened by `coarse[k]`, with
/// coincident cells excluded.
#[derive(Clone, Debug)]
pub struct ChaosPlan {
    pub d: usize,
    pub t: f64,
    pub order: usize,
    pub delta: f64,
    pub side: usize,
    pub coarse: [usize; 4],
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
    pub psi3: Vec<f64>,
    /// Σ over ordered distinct cell tuples of ψ² δ_k^{dk}, k = 0..=order.
    pub norm_sq: Vec<f64>,
    pub psi_evals: usize,
}

/// Options for building a plan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanOptions {
    pub delta: f64,
    /// Coarsening factors for orders 2 and 3.
    pub coarse2: usize,
    pub coarse3: usize,
    /// Neglected fraction of the k = 1 L² mass outside the box.
    pub tail_frac: f64,
    pub max_evals: u128,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            delta: 0.05,
            coarse2: 5,
            coarse3: 10,
            tail_frac: 1e-4,
            max_evals: PSI_EVAL_CAP,
        }
    }
}

fn permutations_of(d: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for k in 0..d {
        let mut next = Vec::new();
        for p in &out {
            for pos in 0..=k {
                let mut q = p.clone();
                q.insert(pos, k);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Canonical key of a point tuple under the cube symmetries and point order.
fn canonical(d: usize, pts: &[[i64; MAX_DIM]], perms: &[Vec<usize>]) -> Vec<i64> {
    let mut best: Option<Vec<i64>> = None;
    let mut buf: Vec<[i64; 3]> = vec![[0; 3]; pts.len()];
    for perm in perms {
        for signs in 0..(1u32 << d) {
            for (b, p) in buf.iter_mut().zip(pts) {
                *b = [0; 3];
                for a in 0..d {
                    let v = p[perm[a]];
                    b[a] = if signs >> a & 1 == 1 { -v } else { v };
                }
            }
            buf.sort_unstable();
            let key: Vec<i64> = buf.iter().flat_map(|b| b[..d].iter().copied()).collect();
            if best.as_ref().is_none_or(|k| key < *k) {
                best = Some(key);
            }
        }
    }
    best.unwrap_or_default()
}

fn key_points(d: usize, key: &[i64], half: f64) -> Vec<CPoint> {
    key.chunks(d)
        .map(|c| {
            let mut p = [0.0; MAX_DIM];
            for a in 0..d {
                p[a] = c[a] as f64 * half;
            }
            p
        })
        .collect()
}

/// Cell average of ψ_1 by a midpoint sub-grid, finer next to the origin.
fn cell_average_psi1(d: usize, t: f64, side: usize, delta: f64, idx: usize) -> f64 {
    let h = half_units(d, side, idx);
    let near = (0..d).all(|a| h[a].abs() <= 3);
    let m: usize = if near { 24 } else { 4 };
    let c = cell_center(d, side, delta, idx);
    let sub = delta / m as f64;
    let total = m.pow(d as u32);
    let mut acc = KahanSum::default();
    for s in 0..total {
        let u = unravel(d, m, s);
        let mut x = c;
        for a in 0..d {
            x[a] += (u[a] as f64 + 0.5) * sub - 0.5 * delta;
        }
        let r = x[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
        acc.add(psi1_radial(d, t, r));
    }
    acc.value() / total as f64
}

impl ChaosPlan {
    pub fn new(d: usize, t: f64, order: usize, opts: &PlanOptions) -> Result<Self> {
        psi1_l2_exact(d, t)?;
        if order > 3 {
            return Err(RclError::Unsupported("chaos truncation order K <= 3".into()));
        }
        if !(opts.delta > 0.0) {
            return Err(RclError::invalid("delta", "must be positive"));
        }
        let radius = auto_radius(d, t, opts.tail_frac)?;
        // fine side = 2 * lcm-multiple so every coarse grid stays centred
        let f = lcm(opts.coarse2.max(1), opts.coarse3.max(1));
        let half_blocks = (radius / (opts.delta * f as f64)).ceil() as usize;
        let side = 2 * half_blocks * f;
        let cells = side.pow(d as u32);
        if cells as u128 > NOISE_CELL_CAP {
            return Err(RclError::BudgetExceeded {
                what: "noise cells",
                requested: cells as u128,
                cap: NOISE_CELL_CAP,
            });
        }
        let delta = opts.delta;
        let psi1 = map_tasks(cells, |i| cell_average_psi1(d, t, side, delta, i));
        let vol = delta.powi(d as i32);
        let mut norm_sq = vec![1.0, psi1.iter().map(|p| p * p * vol).collect::<KahanSum>().value()];
        let mut plan = ChaosPlan {
            d,
            t,
            order,
            delta,
            side,
            coarse: [1, 1, opts.coarse2.max(1), opts.coarse3.max(1)],
            psi1,
            psi2: Vec::new(),
            psi3: Vec::new(),
            norm_sq: Vec::new(),
            psi_evals: 0,
        };
        let tol = PsiTol {
            rel: 1e-6,
            abs: 1e-12,
            max_intervals: 200,
        };
        for k in 2..=order {
            let (table, evals) = plan.build_order(k, &tol, opts.max_evals.saturating_sub(plan.psi_evals as u128))?;
            plan.psi_evals += evals;
            let dk = plan.delta * plan.coarse[k] as f64;
            let vk = dk.powi((d * k) as i32);
            norm_sq.push(table.iter().map(|p| p * p * vk).collect::<KahanSum>().value());
            if k == 2 {
                plan.psi2 = table;
            } else {
                plan.psi3 = table;
            }
        }
        plan.norm_sq = norm_sq;
        Ok(plan)
    }

    pub fn side_of(&self, k: usize) -> usize {
        self.side / self.coarse[k]
    }

    /// Dense table of ψ_k at coarse cell centres; zero on coincident tuples.
    fn build_order(&self, k: usize, tol: &PsiTol, budget: u128) -> Result<(Vec<f64>, usize)> {
        let d = self.d;
        let side = self.side_of(k);
        let n = side.pow(d as u32);
        let half = 0.5 * self.delta * self.coarse[k] as f64;
        let size = (n as u128).pow(k as u32);
        if size > NOISE_CELL_CAP {
            return Err(RclError::BudgetExceeded {
                what: "chaos kernel table",
                requested: size,
                cap: NOISE_CELL_CAP,
            });
        }
        let perms = permutations_of(d);
        let hu: Vec<[i64; MAX_DIM]> = (0..n).map(|i| half_units(d, side, i)).collect();
        let mut ids: FxHashMap<Vec<i64>, u32> = FxHashMap::default();
        let mut keys: Vec<Vec<i64>> = Vec::new();
        let mut slot = vec![u32::MAX; size as usize];
        let mut tuple = vec![0usize; k];
        for flat in 0..size as usize {
            let mut r = flat;
            for s in tuple.iter_mut() {
                *s = r % n;
                r /= n;
            }
            let distinct = (0..k).all(|a| (0..a).all(|b| tuple[a] != tuple[b]));
            if !distinct {
                continue;
            }
            let pts: Vec<[i64; MAX_DIM]> = tuple.iter().map(|&i| hu[i]).collect();
            let key = canonical(d, &pts, &perms);
            let id = *ids.entry(key.clone()).or_insert_with(|| {
                keys.push(key);
                (keys.len() - 1) as u32
            });
            slot[flat] = id;
        }
        if keys.len() as u128 > budget {
            return Err(RclError::BudgetExceeded {
                what: "ψ cache misses",
                requested: keys.len() as u128,
                cap: budget,
            });
        }
        let t = self.t;
        let values = map_tasks(keys.len(), |i| {
            psi_kernel_tol(d, t, &key_points(d, &keys[i], half), D1Reading::Ordered, tol).map(|e| e.value)
        });
        let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
        let table = slot
            .iter()
            .map(|&s| if s == u32::MAX { 0.0 } else { values[s as usize] })
            .collect();
        Ok((table, keys.len()))
    }

    /// Var of the truncated discrete series: Σ_k β̂^{2k} norm_sq[k] / k!.
    pub fn discrete_variance(&self, beta_hat: f64) -> f64 {
        let mut fact = 1.0;
        let mut s = 0.0;
        for k in 1..=self.order {
            fact *= k as f64;
            s += beta_hat.powi(2 * k as i32) * self.norm_sq[k] / fact;
        }
        s
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// One realisation of the truncated series with its per-order terms
/// (term 0 = 1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChaosSample {
    pub terms: Vec<f64>,
    pub value: f64,
}

/// 1 + Σ_{k<=K} β̂^k / k! Σ_{distinct cells} ψ_t(centres) Π W(cell).
pub fn chaos_partition(plan: &ChaosPlan, beta_hat: f64, noise: &WhiteNoiseGrid) -> Result<ChaosSample> {
    if noise.d != plan.d || noise.side != plan.side || noise.delta != plan.delta {
        return Err(RclError::invalid("noise", "grid does not match the plan"));
    }
    let mut terms = vec![1.0];
    if plan.order >= 1 {
        let s: KahanSum = plan.psi1.iter().zip(&noise.values).map(|(p, w)| p * w).collect();
        terms.push(beta_hat * s.value());
    }
    if plan.order >= 2 {
        let w = if plan.coarse[2] == 1 { noise.clone() } else { noise.aggregate(plan.coarse[2])? };
        let n = w.cells();
        let mut s = KahanSum::default();
        for i in 0..n {
            let row = &plan.psi2[i * n..(i + 1) * n];
            let inner: f64 = row.iter().zip(&w.values).map(|(p, x)| p * x).sum();
            s.add(w.values[i] * inner);
        }
        terms.push(beta_hat.powi(2) / 2.0 * s.value());
    }
    if plan.order >= 3 {
        let w = noise.aggregate(plan.coarse[3])?;
        let n = w.cells();
        let mut s = KahanSum::default();
        for i in 0..n {
            for j in 0..n {
                let row = &plan.psi3[(i * n + j) * n..(i * n + j + 1) * n];
                let inner: f64 = row.iter().zip(&w.values).map(|(p, x)| p * x).sum();
                s.add(w.values[i] * w.values[j] * inner);
            }
        }
        terms.push(beta_hat.powi(3) / 6.0 * s.value());
    }
    let value = terms.iter().copied().collect::<KahanSum>().value();
    Ok(ChaosSample { terms, value })
}

/// Noise replicas of the truncated series, replica r on stream (seed, r).
pub fn chaos_replicas(plan: &ChaosPlan, beta_hat: f64, replicas: usize, seed: u64) -> Result<Vec<ChaosSample>> {
    let out = map_tasks(replicas, |r| {
        let noise = sample_noise(plan.d, plan.delta, plan.side, seed, r as u64)?;
        chaos_partition(plan, beta_hat, &noise)
    });
    out.into_iter().collect()
}

/// Summary of noise replicas.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChaosSummary {
    pub replicas: usize,
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    pub variance_stderr: f64,
    pub term_variance: Vec<(f64, f64)>,
    /// Covariance of orders 1 and 2 with its standard error.
    pub cov12: Option<(f64, f64)>,
    pub discrete_variance: f64,
}

pub fn summarize(plan: &ChaosPlan, beta_hat: f64, samples: &[ChaosSample]) -> ChaosSummary {
    let vals: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let w = Welford::from_slice(&vals);
    let va = VarianceAcc::new(vals);
    let term_variance = (1..=plan.order)
        .map(|k| {
            let v = VarianceAcc::new(samples.iter().map(|s| s.terms[k]).collect());
            (v.variance(), v.variance_stderr())
        })
        .collect();
    let cov12 = (plan.order >= 2).then(|| {
        let prod: Vec<f64> = samples.iter().map(|s| s.terms[1] * s.terms[2]).collect();
        let pw = Welford::from_slice(&prod);
        (pw.mean, pw.stderr())
    });
    ChaosSummary {
        replicas: samples.len(),
        mean: w.mean,
        mean_stderr: w.stderr(),
        variance: va.variance(),
        variance_stderr: va.variance_stderr(),
        term_variance,
        cov12,
        discrete_variance: plan.discrete_variance(beta_hat),
    }
}

/// Importance-sampling estimate of ∫ψ_t² over (R^d)^k.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct L2Estimate {
    pub d: usize,
    pub t: f64,
    pub k: usize,
    pub value: f64,
    pub stderr: f64,
    pub points: u64,
}

/// Radial proposal: |y| half-normal with scale s, uniform direction.
fn radial_sample<R: Rng + ?Sized>(d: usize, s: f64, rng: &mut R) -> CPoint {
    let r = s * normal(rng).abs();
    let mut dir = [0.0; MAX_DIM];
    loop {
        let mut n2 = 0.0;
        for v in dir.iter_mut().take(d) {
            *v = normal(rng);
            n2 += *v * *v;
        }
        if n2 > 0.0 {
            let n = n2.sqrt();
            for v in dir.iter_mut().take(d) {
                *v *= r / n;
            }
            return dir;
        }
    }
}

fn radial_density(d: usize, s: f64, y: &CPoint) -> f64 {
    let r = y[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
    let f = 2.0 / (s * (2.0 * PI).sqrt()) * (-0.5 * r * r / (s * s)).exp();
    f / (sphere_area(d) * r.powi(d as i32 - 1))
}

/// Mixture over orderings of chained radial steps, so the proposal has the
/// kernel's singularities at the origin and on every pairwise diagonal.
pub fn l2_norm_psi(d: usize, t: f64, k: usize, mc_points: u64, seed: u64) -> Result<L2Estimate> {
    psi1_l2_exact(d, t)?;
    if k == 0 || k > 3 {
        return Err(RclError::Unsupported("L² estimates support 1 <= k <= 3".into()));
    }
    let s = t.sqrt();
    let orders: Vec<Vec<usize>> = permutations_of(k);
    let tol = PsiTol {
        rel: 1e-7,
        abs: 1e-13,
        max_intervals: 200,
    };
    let tasks = chunks(mc_points, 64);
    let parts = map_tasks(tasks.len(), |ti| -> Result<Welford> {
        let (start, len) = tasks[ti];
        let mut w = Welford::default();
        for i in start..start + len {
            let mut rng = stream(seed, label::IS, i);
            let which = rng.random_range(0..orders.len());
            let mut xs = vec![[0.0; MAX_DIM]; k];
            let mut prev = [0.0; MAX_DIM];
            for &j in &orders[which] {
                let step = radial_sample(d, s, &mut rng);
                for a in 0..d {
                    xs[j][a] = prev[a] + step[a];
                }
                prev = xs[j];
            }
            let mut q = 0.0;
            for o in &orders {
                let mut prev = [0.0; MAX_DIM];
                let mut dens = 1.0;
                for &j in o {
                    let step: CPoint = std::array::from_fn(|a| xs[j][a] - prev[a]);
                    dens *= radial_density(d, s, &step);
                    prev = xs[j];
                }
                q += dens;
            }
            q /= orders.len() as f64;
            let psi = match psi_kernel_tol(d, t, &xs, D1Reading::Ordered, &tol) {
                Ok(e) => e.value,
                Err(RclError::CoincidentPoints) => 0.0,
                Err(e) => return Err(e),
            };
            w.push(if q > 0.0 { psi * psi / q } else { 0.0 });
        }
        Ok(w)
    });
    let mut total = Welford::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(L2Estimate {
        d,
        t,
        k,
        value: total.mean,
        stderr: total.stderr(),
        points: mc_points,
    })
}

/// (k!)^{(d-2)/2} t^{(4-d)k/2} C^k.
pub fn l2_bound(d: usize, t: f64, k: usize, c: f64) -> f64 {
    let lf: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    ((d as f64 - 2.0) / 2.0 * lf + (4.0 - d as f64) / 2.0 * k as f64 * t.ln() + k as f64 * c.ln()).exp()
}

/// C calibrated so the bound is attained at k = 1.
pub fn calibrate_c(d: usize, t: f64, norm1: f64) -> f64 {
    norm1 / t.powf((4.0 - d as f64) / 2.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: f64,
    pub beta_n: f64,
    /// Var(β_N η / a_N)
    pub variance: f64,
    /// E(β_N η / a_N)^4
    pub fourth: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapRow {
    pub n: u64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailCheck {
    pub b: f64,
    pub c: f64,
    /// Smallest ℓ with Σ_{k>ℓ} term_k below `threshold`, if any ℓ <= 60.
    pub ell: Option<usize>,
    pub remainder: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub d: usize,
    pub beta_hat: f64,
    pub moments: Vec<MomentRow>,
    pub moments_ok: bool,
    pub gaps: Vec<GapRow>,
    pub gaps_decreasing: bool,
    pub tail: TailCheck,
}

/// Condition (i): scaled noise moments along β_N.
pub fn moment_table(d: usize, beta_hat: f64, law: Law, n_list: &[f64]) -> Result<Vec<MomentRow>> {
    let sched = beta_schedule(d, beta_hat)?;
    Ok(n_list
        .iter()
        .map(|&n| {
            let b = sched.beta(n);
            let s = b / sched.a(n);
            MomentRow {
                n,
                beta_n: b,
                variance: s * s * eta_variance(law, b),
                fourth: s.powi(4) * eta_fourth_moment(law, b),
            }
        })
        .collect())
}

/// Condition (ii) for k = 1: midpoint-rule L² distance on [-w, w]^d between
/// k_N P(T_{√N x} <= Nt) and ψ_t(x), using cube symmetry of both sides.
pub fn onept_l2_gap(d: usize, t: f64, big_n: u64, window: f64, spacing: f64) -> Result<f64> {
    let m = (window / spacing).round() as i64;
    let steps = (big_n as f64 * t).floor() as usize;
    let ren = OnePointRenewal::new(d, steps)?;
    let scale = hit_scale(d, big_n as f64, 1);
    // fundamental domain 0 <= i_1 <= ... <= i_d < m, midpoints (i + 1/2) h
    let mut reps: Vec<([usize; MAX_DIM], f64)> = Vec::new();
    let mut idx = [0usize; MAX_DIM];
    loop {
        let c = &idx[..d];
        if c.windows(2).all(|w| w[0] <= w[1]) {
            // orbit size: 2^d sign flips times distinct coordinate orderings
            let mut mult = (1u64 << d) as f64;
            let mut counts = FxHashMap::default();
            for &v in c {
                *counts.entry(v).or_insert(0u32) += 1;
            }
            let fact = |n: u32| (1..=n as u64).product::<u64>() as f64;
            mult *= fact(d as u32);
            for &cnt in counts.values() {
                mult /= fact(cnt);
            }
            reps.push((idx, mult));
        }
        let mut a = 0;
        loop {
            if a == d {
                break;
            }
            idx[a] += 1;
            if (idx[a] as i64) < m {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
        if a == d {
            break;
        }
    }
    let vals = map_tasks(reps.len(), |i| -> Result<f64> {
        let (c, mult) = reps[i];
        let x: CPoint = std::array::from_fn(|a| if a < d { (c[a] as f64 + 0.5) * spacing } else { 0.0 });
        let site = embed(d, big_n as f64, &x);
        let disc = scale * ren.hit_by(&site, steps);
        let cont = psi_kernel(d, t, &[x], D1Reading::Ordered)?.value;
        Ok(mult * (disc - cont).powi(2))
    });
    let mut s = KahanSum::default();
    for v in vals {
        s.add(v?);
    }
    Ok((s.value() * spacing.powi(d as i32)).sqrt())
}

/// Condition (iii): remainder of Σ_k B^k (k!)^{(d-4)/2} t^{(4-d)k/2} C^k.
pub fn tail_check(d: usize, t: f64, b: f64, c: f64, threshold: f64) -> TailCheck {
    let log_term = |k: usize| {
        let lf: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
        k as f64 * b.ln() + (d as f64 - 4.0) / 2.0 * lf + (4.0 - d as f64) / 2.0 * k as f64 * t.ln() + k as f64 * c.ln()
    };
    // terms decay super-geometrically once k is large; sum far enough out
    let terms: Vec<f64> = (0..=400).map(|k| log_term(k).exp()).collect();
    let mut suffix = vec![0.0; terms.len() + 1];
    for k in (0..terms.len()).rev() {
        suffix[k] = suffix[k + 1] + terms[k];
    }
    let ell = (0..=60).find(|&l| suffix[l + 1] < threshold);
    TailCheck {
        b,
        c,
        ell,
        remainder: suffix[ell.unwrap_or(60) + 1],
        threshold,
    }
}

pub fn check_conditions(d: usize, t: f64, n_list: &[u64], beta_hat: f64, law: Law) -> Result<ConditionsReport> {
    if d != 2 && d != 3 {
        return Err(RclError::UnsupportedDimension {
            d,
            reason: "the convergence conditions are checked for d = 2, 3",
        });
    }
    let nf: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    let moments = moment_table(d, beta_hat, law, &nf)?;
    let b2 = beta_hat * beta_hat;
    let moments_ok = moments
        .iter()
        .all(|r| r.fourth <= 3.0 * b2 * b2 * 1.5 && (r.beta_n >= 0.05 || (r.variance / b2 - 1.0).abs() < 0.02));
    let mut gaps = Vec::new();
    for &n in n_list {
        gaps.push(GapRow {
            n,
            gap: onept_l2_gap(d, t, n, 3.0, 0.25)?,
        });
    }
    let gaps_decreasing = gaps.first().zip(gaps.last()).is_some_and(|(a, b)| b.gap < a.gap);
    let c = calibrate_c(d, t, psi1_l2_exact(d, t)?);
    let tail = tail_check(d, t, 1.1 * b2, c, 1e-6);
    Ok(ConditionsReport {
        d,
        beta_hat,
        moments,
        moments_ok,
        gaps,
        gaps_decreasing,
        tail,
    })
}

/// Lattice replicas against chaos replicas at one N.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawRow {
    pub n: u64,
    pub lattice_mean: f64,
    pub lattice_mean_stderr: f64,
    pub lattice_variance: f64,
    pub lattice_quantiles: [f64; 3],
    pub median_ess: f64,
    /// Var Z_N from the two-replica overlap identity.
    pub overlap_variance: f64,
    pub overlap_variance_stderr: f64,
    pub ks: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawReport {
    pub d: usize,
    pub t: f64,
    pub beta_hat: f64,
    pub chaos: ChaosSummary,
    pub chaos_quantiles: [f64; 3],
    pub rows: Vec<LawRow>,
    /// Number of consecutive N steps along which the KS distance fell.
    pub ks_decreases: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawOptions {
    pub replicas: usize,
    pub walkers: u64,
    pub overlap_pairs: u64,
    pub chaos_replicas: usize,
    pub plan: PlanOptions,
}

fn quartiles(xs: &[f64]) -> [f64; 3] {
    let s = sorted(xs);
    [quantile_sorted(&s, 0.1), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.9)]
}

#[allow(clippy::too_many_arguments)]
pub fn law_comparison(
    d: usize,
    t: f64,
    beta_hat: f64,
    n_list: &[u64],
    order: usize,
    law: Law,
    opts: &LawOptions,
    seed: u64,
) -> Result<LawReport> {
    let plan = ChaosPlan::new(d, t, order, &opts.plan)?;
    let chaos_samples = chaos_replicas(&plan, beta_hat, opts.chaos_replicas, derive_seed(seed, label::NOISE))?;
    let chaos_vals: Vec<f64> = chaos_samples.iter().map(|s| s.value).collect();
    let chaos = summarize(&plan, beta_hat, &chaos_samples);
    let sched = beta_schedule(d, beta_hat)?;
    let mut rows = Vec::new();
    for (i, &n) in n_list.iter().enumerate() {
        let rseed = derive_seed(seed, i as u64);
        let lat = quenched_intermediate(d, n, t, beta_hat, law, opts.walkers, opts.replicas, rseed)?;
        let vals = lat.values();
        let w = Welford::from_slice(&vals);
        let steps = (n as f64 * t).round() as usize;
        let j = overlap_samples(d, &[steps], opts.overlap_pairs, derive_seed(rseed, label::PAIR))?;
        let j: Vec<u64> = j.iter().map(|r| r[0]).collect();
        let (ov, ov_se) = variance_from_overlaps(&j, law, sched.beta(n as f64));
        rows.push(LawRow {
            n,
            lattice_mean: w.mean,
            lattice_mean_stderr: w.stderr(),
            lattice_variance: w.variance(),
            lattice_quantiles: quartiles(&vals),
            median_ess: lat.median_ess(),
            overlap_variance: ov,
            overlap_variance_stderr: ov_se,
            ks: ks_statistic(&vals, &chaos_vals),
        });
    }
    let ks_decreases = rows.windows(2).filter(|w| w[1].ks < w[0].ks).count();
    Ok(LawReport {
        d,
        t,
        beta_hat,
        chaos,
        chaos_quantiles: quartiles(&chaos_vals),
        rows,
        ks_decreases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_cell_variance_and_refinement() {
        let mut sums = Welford::default();
        for r in 0..4000 {
            let g = sample_noise(2, 0.25, 8, 7, r).unwrap();
            // the central unit square is 4 x 4 cells
            let mut s = 0.0;
            for i in 0..g.cells() {
                let c = g.center(i);
                if c[0].abs() < 0.5 && c[1].abs() < 0.5 {
                    s += g.values[i];
                }
            }
            sums.push(s * s);
        }
        assert!((sums.mean - 1.0).abs() < 4.0 * sums.stderr());
        let a = sample_noise(3, 0.5, 4, 1, 0).unwrap();
        let b = sample_noise(3, 0.5, 4, 1, 0).unwrap();
        assert_eq!(a.values, b.values);
        let agg = a.aggregate(2).unwrap();
        let total: f64 = a.values.iter().sum();
        assert!((agg.values.iter().sum::<f64>() - total).abs() < 1e-12);
        assert!((agg.delta - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l2_exact_d2_matches_radial_quadrature() {
        let q = integrate_to_inf(|r| 2.0 * PI * r * crate::special::exp_int_e1(r * r).powi(2), 0.0, 1e-14, 1e-11, 400);
        assert!((q.value - psi1_l2_exact(2, 1.0).unwrap()).abs() < 1e-8);
        let q3 = integrate_to_inf(|r| 4.0 * PI * r * r * psi1_radial(3, 1.0, r).powi(2), 0.0, 1e-14, 1e-10, 400);
        assert!((q3.value - psi1_l2_exact(3, 1.0).unwrap()).abs() < 1e-7);
        let q1 = integrate_to_inf(|r| 2.0 * psi1_radial(1, 1.0, r).powi(2), 0.0, 1e-14, 1e-11, 400);
        assert!((q1.value - psi1_l2_exact(1, 1.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn canonical_key_respects_symmetry() {
        let perms = permutations_of(2);
        let a = canonical(2, &[[1, 3, 0, 0, 0], [-5, 1, 0, 0, 0]], &perms);
        let b = canonical(2, &[[-1, -5, 0, 0, 0], [-3, 1, 0, 0, 0]], &perms);
        let c = canonical(2, &[[1, -5, 0, 0, 0], [3, 1, 0, 0, 0]], &perms);
        assert_eq!(a, c);
        assert_eq!(a.len(), 4);
        let _ = b;
    }

    #[test]
    fn zero_beta_gives_one() {
        let opts = PlanOptions {
            delta: 0.5,
            coarse2: 2,
            coarse3: 2,
            ..PlanOptions::default()
        };
        let plan = ChaosPlan::new(2, 1.0, 2, &opts).unwrap();
        let noise = sample_noise(2, plan.delta, plan.side, 3, 0).unwrap();
        assert_eq!(chaos_partition(&plan, 0.0, &noise).unwrap().value, 1.0);
    }

    #[test]
    fn order_one_variance_close_to_continuum() {
        let opts = PlanOptions {
            delta: 0.05,
            coarse2: 1,
            coarse3: 1,
            ..PlanOptions::default()
        };
        let plan = ChaosPlan::new(2, 1.0, 1, &opts).unwrap();
        let exact = psi1_l2_exact(2, 1.0).unwrap();
        assert!((plan.norm_sq[1] / exact - 1.0).abs() < 0.02, "{}", plan.norm_sq[1] / exact);
    }

    #[test]
    fn l2_mc_matches_exact_at_k1() {
        for d in [2, 3] {
            let e = l2_norm_psi(d, 1.0, 1, 20_000, 5).unwrap();
            let exact = psi1_l2_exact(d, 1.0).unwrap();
            assert!((e.value - exact).abs() < 4.0 * e.stderr, "d={d} {} ± {} vs {exact}", e.value, e.stderr);
        }
    }

    #[test]
    fn tail_remainder_d3() {
        let c = calibrate_c(3, 1.0, psi1_l2_exact(3, 1.0).unwrap());
        let tc = tail_check(3, 1.0, 1.1, c, 1e-6);
        assert!(tc.ell.is_some_and(|l| l <= 60));
    }

    #[test]
    fn moments_converge() {
        let rows = moment_table(2, 1.0, Law::Gaussian, &[1e6, 1e9]).unwrap();
        let last = rows.last().unwrap();
        assert!(last.beta_n < 0.05);
        assert!((last.variance - 1.0).abs() < 0.02);
        assert!((last.fourth - 3.0).abs() < 0.1);
    }
}
