//! Monte Carlo estimators for the range polymer: quenched and annealed
//! partition functions, expansion terms, range intersections and
//! point-to-point partition functions.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::disorder::{beta_schedule, eta, eta_variance, lambda, Environment, Law, SiteField};
use crate::error::{RclError, Result};
use crate::lattice::{
    check_dim, hit_prob_exact, l1, passage::DP_STATE_CAP, sample_bridge, Packing, Point,
    RangeWalker, TransitionKernel, MAX_DIM,
};
use crate::par::{chunks, map_tasks};
use crate::rng::{derive_seed, label, stream};
use crate::stats::{quantile_sorted, sorted, KahanSum, LogMeanExp, Welford};

/// Walkers per parallel task; fixed so results do not depend on pool width.
pub const WALKER_CHUNK: u64 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub value: f64,
    pub stderr: f64,
    pub log_value: f64,
    pub samples: u64,
    /// Kish effective sample size of the walker weights.
    pub ess: f64,
}

impl PartitionEstimate {
    pub fn from_acc(acc: &LogMeanExp) -> Self {
        PartitionEstimate {
            value: acc.mean(),
            stderr: acc.stderr(),
            log_value: acc.log_mean(),
            samples: acc.n,
            ess: acc.ess(),
        }
    }
}

/// Runs `walkers` walks in fixed chunks and folds the log-weights in order.
fn weighted_walks<F>(d: usize, n: usize, walkers: u64, seed: u64, stream_label: u64, log_weight: F) -> Result<LogMeanExp>
where
    F: Fn(&RangeWalker) -> Result<f64> + Sync,
{
    check_dim(d)?;
    if walkers == 0 {
        return Err(RclError::invalid("walkers", "must be >= 1"));
    }
    let tasks = chunks(walkers, WALKER_CHUNK);
    let parts = map_tasks(tasks.len(), |t| -> Result<LogMeanExp> {
        let (start, len) = tasks[t];
        let mut rng = stream(seed, stream_label, start / WALKER_CHUNK);
        let mut walker = RangeWalker::new(d, n);
        let mut acc = LogMeanExp::default();
        for _ in 0..len {
            walker.run(n, &mut rng)?;
            acc.push(log_weight(&walker)?);
        }
        Ok(acc)
    });
    let mut total = LogMeanExp::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Quenched Z_n = E[exp(Σ_{x ∈ R_n} (βω_x + h))] for a fixed environment.
pub fn quenched_partition(
    env: &dyn Environment,
    d: usize,
    n: usize,
    beta: f64,
    h: f64,
    walkers: u64,
    seed: u64,
) -> Result<PartitionEstimate> {
    let packing = Packing::new(d);
    let acc = weighted_walks(d, n, walkers, seed, label::WALK, |w| {
        if beta == 0.0 {
            return Ok(h * w.visited.len() as f64);
        }
        let mut s = KahanSum::default();
        for &key in &w.visited {
            s.add(beta * env.omega(&packing, key)? + h);
        }
        Ok(s.value())
    })?;
    Ok(PartitionEstimate::from_acc(&acc))
}

/// Annealed E Z_n = E[exp((λ(β) + h) R_n)].
pub fn annealed_partition(d: usize, n: usize, law: Law, beta: f64, h: f64, walkers: u64, seed: u64) -> Result<PartitionEstimate> {
    let c = lambda(law, beta) + h;
    let acc = weighted_walks(d, n, walkers, seed, label::WALK, |w| Ok(c * w.visited.len() as f64))?;
    Ok(PartitionEstimate::from_acc(&acc))
}

/// Disorder replicas of Z_{Nt}(β_N) at h = -λ(β_N).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntermediateSample {
    pub d: usize,
    pub n: usize,
    pub beta: f64,
    pub h: f64,
    pub replicas: Vec<PartitionEstimate>,
}

impl IntermediateSample {
    pub fn values(&self) -> Vec<f64> {
        self.replicas.iter().map(|r| r.value).collect()
    }

    pub fn mean(&self) -> Welford {
        Welford::from_slice(&self.values())
    }

    pub fn median_ess(&self) -> f64 {
        let e: Vec<f64> = self.replicas.iter().map(|r| r.ess).collect();
        quantile_sorted(&sorted(&e), 0.5)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn quenched_intermediate(
    d: usize,
    big_n: u64,
    t: f64,
    beta_hat: f64,
    law: Law,
    walkers: u64,
    replicas: usize,
    seed: u64,
) -> Result<IntermediateSample> {
    let sched = beta_schedule(d, beta_hat)?;
    let nf = big_n as f64;
    let beta = sched.beta(nf);
    let h = -lambda(law, beta);
    let n = (nf * t).round() as usize;
    let reps = map_tasks(replicas, |r| {
        let rseed = derive_seed(seed, r as u64);
        let field = SiteField {
            law,
            seed: derive_seed(rseed, label::ENV),
        };
        quenched_partition_sequential(&field, d, n, beta, h, walkers, rseed)
    });
    Ok(IntermediateSample {
        d,
        n,
        beta,
        h,
        replicas: reps.into_iter().collect::<Result<_>>()?,
    })
}

/// Same estimator as [`quenched_partition`] without nested parallelism, so
/// replica-level parallel loops stay deterministic and cheap.
fn quenched_partition_sequential(
    env: &dyn Environment,
    d: usize,
    n: usize,
    beta: f64,
    h: f64,
    walkers: u64,
    seed: u64,
) -> Result<PartitionEstimate> {
    let packing = Packing::new(d);
    let mut total = LogMeanExp::default();
    for (start, len) in chunks(walkers, WALKER_CHUNK) {
        let mut rng = stream(seed, label::WALK, start / WALKER_CHUNK);
        let mut walker = RangeWalker::new(d, n);
        let mut acc = LogMeanExp::default();
        for _ in 0..len {
            walker.run(n, &mut rng)?;
            let mut s = KahanSum::default();
            if beta == 0.0 {
                s.add(h * walker.visited.len() as f64);
            } else {
                for &key in &walker.visited {
                    s.add(beta * env.omega(&packing, key)? + h);
                }
            }
            acc.push(s.value());
        }
        total.merge(&acc);
    }
    Ok(PartitionEstimate::from_acc(&total))
}

/// Empirical hit counts of `walkers` walks: site -> number of walks visiting it.
pub fn hit_counts(d: usize, n: usize, walkers: u64, seed: u64) -> Result<FxHashMap<u64, u32>> {
    check_dim(d)?;
    let tasks = chunks(walkers, WALKER_CHUNK);
    let parts = map_tasks(tasks.len(), |t| -> Result<FxHashMap<u64, u32>> {
        let (start, len) = tasks[t];
        let mut rng = stream(seed, label::WALK, start / WALKER_CHUNK);
        let mut walker = RangeWalker::new(d, n);
        let mut counts = FxHashMap::default();
        for _ in 0..len {
            walker.run(n, &mut rng)?;
            for &k in &walker.visited {
                *counts.entry(k).or_insert(0u32) += 1;
            }
        }
        Ok(counts)
    });
    let mut total: FxHashMap<u64, u32> = FxHashMap::default();
    for p in parts {
        for (k, c) in p? {
            *total.entry(k).or_insert(0) += c;
        }
    }
    Ok(total)
}

/// Walk sample reused across disorder replicas by the expansion-term estimators.
pub struct WalkEnsemble {
    pub d: usize,
    pub n: usize,
    pub walkers: u64,
    pub packing: Packing,
    /// Visited sites with their visit counts, in a fixed (sorted) order.
    pub counts: Vec<(u64, u32)>,
    /// Per-walk ranges, only kept when order-2 terms are needed.
    pub ranges: Vec<Vec<u64>>,
}

impl WalkEnsemble {
    pub fn sample(d: usize, n: usize, walkers: u64, keep_ranges: bool, seed: u64) -> Result<Self> {
        check_dim(d)?;
        let tasks = chunks(walkers, WALKER_CHUNK);
        let parts = map_tasks(tasks.len(), |t| -> Result<Vec<Vec<u64>>> {
            let (start, len) = tasks[t];
            let mut rng = stream(seed, label::WALK, start / WALKER_CHUNK);
            let mut walker = RangeWalker::new(d, n);
            let mut out = Vec::with_capacity(len as usize);
            for _ in 0..len {
                walker.run(n, &mut rng)?;
                let mut v: Vec<u64> = walker.visited.iter().copied().collect();
                v.sort_unstable();
                out.push(v);
            }
            Ok(out)
        });
        let mut counts: FxHashMap<u64, u32> = FxHashMap::default();
        let mut ranges = Vec::new();
        for p in parts {
            for r in p? {
                for &k in &r {
                    *counts.entry(k).or_insert(0) += 1;
                }
                if keep_ranges {
                    ranges.push(r);
                }
            }
        }
        let mut counts: Vec<(u64, u32)> = counts.into_iter().collect();
        counts.sort_unstable();
        Ok(WalkEnsemble {
            d,
            n,
            walkers,
            packing: Packing::new(d),
            counts,
            ranges,
        })
    }

    /// k = 1 term: β Σ_x η_x Ê(1_{x ∈ R_n}).
    pub fn term1(&self, env: &dyn Environment, beta: f64) -> Result<f64> {
        let law = env.law();
        let mut s = KahanSum::default();
        for &(key, c) in &self.counts {
            let w = env.omega(&self.packing, key)?;
            s.add(eta(law, beta, w) * c as f64);
        }
        Ok(beta * s.value() / self.walkers as f64)
    }

    /// k = 2 term: (β²/2) Σ_{x ≠ y} η_x η_y Ê(1_x 1_y), from per-walk sums.
    pub fn term2(&self, env: &dyn Environment, beta: f64) -> Result<f64> {
        if self.ranges.is_empty() {
            return Err(RclError::Unsupported("ensemble sampled without ranges".into()));
        }
        let law = env.law();
        let mut eta_of: FxHashMap<u64, f64> = FxHashMap::default();
        for &(key, _) in &self.counts {
            eta_of.insert(key, eta(law, beta, env.omega(&self.packing, key)?));
        }
        let mut total = KahanSum::default();
        for r in &self.ranges {
            let (mut a, mut b) = (KahanSum::default(), KahanSum::default());
            for k in r {
                let e = eta_of[k];
                a.add(e);
                b.add(e * e);
            }
            total.add(a.value() * a.value() - b.value());
        }
        Ok(0.5 * beta * beta * total.value() / self.walkers as f64)
    }

    /// Σ_x Ê_x², the conditional disorder variance of `term1` over β² Var η.
    pub fn sum_sq_hit_freq(&self) -> f64 {
        let w = self.walkers as f64;
        self.counts.iter().map(|&(_, c)| (c as f64 / w).powi(2)).collect::<KahanSum>().value()
    }
}

/// MC expansion term of order k ∈ {1, 2}.
pub fn expansion_term(env: &dyn Environment, d: usize, n: usize, beta: f64, k: usize, walkers: u64, seed: u64) -> Result<f64> {
    match k {
        0 => Ok(1.0),
        1 => WalkEnsemble::sample(d, n, walkers, false, seed)?.term1(env, beta),
        2 => WalkEnsemble::sample(d, n, walkers, true, seed)?.term2(env, beta),
        _ => Err(RclError::Unsupported(
            "MC expansion terms support k <= 2; use expansion_term_exact for small n".into(),
        )),
    }
}

/// Exact expansion term (β^k/k!) Σ_{distinct x_1..x_k} Π η_{x_i} P(all hit)
/// via the hit-probability DP; for small n only.
pub fn expansion_term_exact(env: &dyn Environment, d: usize, n: usize, beta: f64, k: usize) -> Result<f64> {
    check_dim(d)?;
    if k == 0 {
        return Ok(1.0);
    }
    if k > 3 || n > 14 {
        return Err(RclError::Unsupported("exact expansion terms need k <= 3 and n <= 14".into()));
    }
    let packing = Packing::new(d);
    let law = env.law();
    let sites: Vec<Point> = ball_sites(d, n as i64);
    let etas: Vec<f64> = sites
        .iter()
        .map(|p| env.omega(&packing, packing.pack(p)).map(|w| eta(law, beta, w)))
        .collect::<Result<_>>()?;
    let mut s = KahanSum::default();
    // Unordered sets times k! cancels the 1/k!.
    let m = sites.len();
    match k {
        1 => {
            for i in 0..m {
                s.add(etas[i] * hit_prob_exact(d, n, &[sites[i]], DP_STATE_CAP)?);
            }
        }
        2 => {
            for i in 0..m {
                for j in i + 1..m {
                    if l1(&sites[i]) + l1(&sites[j]) > 2 * n as i64 {
                        continue;
                    }
                    let p = hit_prob_exact(d, n, &[sites[i], sites[j]], DP_STATE_CAP)?;
                    s.add(etas[i] * etas[j] * p);
                }
            }
        }
        _ => {
            for i in 0..m {
                for j in i + 1..m {
                    for l in j + 1..m {
                        let p = hit_prob_exact(d, n, &[sites[i], sites[j], sites[l]], DP_STATE_CAP)?;
                        s.add(etas[i] * etas[j] * etas[l] * p);
                    }
                }
            }
        }
    }
    Ok(beta.powi(k as i32) * s.value())
}

/// Cap on distinct (endpoint, range) states in [`range_states`].
pub const RANGE_STATE_CAP: usize = 1 << 22;

/// Exact law of the range: (sorted visited keys, probability) pairs, built
/// by a forward DP that merges prefixes with equal endpoint and range.
pub fn range_states(d: usize, n: usize) -> Result<Vec<(Vec<u64>, f64)>> {
    check_dim(d)?;
    let packing = Packing::new(d);
    if !packing.always_fits(n as u64) {
        return Err(RclError::Unsupported("range DP needs n below the packing limit".into()));
    }
    let step = 1.0 / (2 * d) as f64;
    let mut cur: FxHashMap<(u64, Vec<u64>), f64> = FxHashMap::default();
    cur.insert((packing.origin(), Vec::new()), 1.0);
    for _ in 0..n {
        let mut next: FxHashMap<(u64, Vec<u64>), f64> = FxHashMap::default();
        for ((key, visited), p) in &cur {
            for axis in 0..d {
                let u = packing.unit(axis);
                for k in [key.wrapping_add(u), key.wrapping_sub(u)] {
                    let mut v = visited.clone();
                    if let Err(pos) = v.binary_search(&k) {
                        v.insert(pos, k);
                    }
                    *next.entry((k, v)).or_insert(0.0) += p * step;
                }
            }
        }
        if next.len() > RANGE_STATE_CAP {
            return Err(RclError::BudgetExceeded {
                what: "range DP states",
                requested: next.len() as u128,
                cap: RANGE_STATE_CAP as u128,
            });
        }
        cur = next;
    }
    let mut by_range: FxHashMap<Vec<u64>, f64> = FxHashMap::default();
    for ((_, v), p) in cur {
        *by_range.entry(v).or_insert(0.0) += p;
    }
    let mut out: Vec<(Vec<u64>, f64)> = by_range.into_iter().collect();
    out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Exact quenched Z_n from the range law; small n only.
pub fn quenched_partition_exact(env: &dyn Environment, d: usize, n: usize, beta: f64, h: f64) -> Result<f64> {
    let packing = Packing::new(d);
    let mut z = KahanSum::default();
    for (range, p) in range_states(d, n)? {
        let mut e = KahanSum::default();
        for &k in &range {
            e.add(beta * env.omega(&packing, k)? + h);
        }
        z.add(p * e.value().exp());
    }
    Ok(z.value())
}

/// Exact annealed E Z_n = E[exp((λ(β) + h) R_n)] from the range law.
pub fn annealed_partition_exact(d: usize, n: usize, law: Law, beta: f64, h: f64) -> Result<f64> {
    let c = lambda(law, beta) + h;
    let mut z = KahanSum::default();
    for (range, p) in range_states(d, n)? {
        z.add(p * (c * range.len() as f64).exp());
    }
    Ok(z.value())
}

/// k = 1 term as a mean of per-walk sums β Σ_{x ∈ R} η_x, with its stderr.
pub fn expansion_term1_mc(env: &dyn Environment, d: usize, n: usize, beta: f64, walkers: u64, seed: u64) -> Result<(f64, f64)> {
    check_dim(d)?;
    let packing = Packing::new(d);
    let law = env.law();
    let tasks = chunks(walkers, WALKER_CHUNK);
    let parts = map_tasks(tasks.len(), |t| -> Result<Welford> {
        let (start, len) = tasks[t];
        let mut rng = stream(seed, label::WALK, start / WALKER_CHUNK);
        let mut walker = RangeWalker::new(d, n);
        let mut acc = Welford::default();
        for _ in 0..len {
            walker.run(n, &mut rng)?;
            let mut keys: Vec<u64> = walker.visited.iter().copied().collect();
            keys.sort_unstable();
            let mut s = KahanSum::default();
            for k in keys {
                s.add(eta(law, beta, env.omega(&packing, k)?));
            }
            acc.push(beta * s.value());
        }
        Ok(acc)
    });
    let mut total = Welford::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok((total.mean, total.stderr()))
}

/// Sites with |x|_1 <= r (the reachable set of an r-step walk), sorted.
pub fn ball_sites(d: usize, r: i64) -> Vec<Point> {
    let mut out = Vec::new();
    let side = 2 * r + 1;
    let total = side.pow(d as u32);
    for mut idx in 0..total {
        let mut p = [0i64; MAX_DIM];
        for c in p.iter_mut().take(d) {
            *c = idx % side - r;
            idx /= side;
        }
        if l1(&p) <= r {
            out.push(p);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntersectionSample {
    pub p: usize,
    pub n: usize,
    pub j: u64,
}

/// J_n^{(p)} for each n in `n_list` (increasing) from one set of p walks.
pub fn intersection_profile<R: rand::RngCore + ?Sized>(p: usize, d: usize, n_list: &[usize], rng: &mut R) -> Result<Vec<u64>> {
    check_dim(d)?;
    if p < 2 {
        return Err(RclError::invalid("p", "need at least two walks"));
    }
    if n_list.is_empty() {
        return Ok(Vec::new());
    }
    let n_max = *n_list.last().expect("non-empty");
    if d == 1 {
        return Ok(intersection_profile_1d(p, n_list, rng));
    }
    // site -> (walks that have seen it so far, latest first-hit time)
    let mut seen: FxHashMap<u64, (u32, u32)> = FxHashMap::default();
    let mut walker = RangeWalker::new(d, n_max);
    for i in 0..p {
        let i32_ = i as u32;
        walker.run_first_visits(n_max, rng, |key, step| {
            if i == 0 {
                seen.insert(key, (1, step as u32));
            } else if let Some(e) = seen.get_mut(&key) {
                if e.0 == i32_ {
                    e.0 += 1;
                    e.1 = e.1.max(step as u32);
                }
            }
        })?;
    }
    let mut times: Vec<u32> = seen.values().filter(|e| e.0 == p as u32).map(|e| e.1).collect();
    times.sort_unstable();
    Ok(n_list
        .iter()
        .map(|&n| times.partition_point(|&t| t as usize <= n) as u64)
        .collect())
}

fn intersection_profile_1d<R: rand::RngCore + ?Sized>(p: usize, n_list: &[usize], rng: &mut R) -> Vec<u64> {
    // One-dimensional ranges are the intervals [min, max] over steps 1..n.
    let mut lo = vec![i64::MIN; n_list.len()];
    let mut hi = vec![i64::MAX; n_list.len()];
    let n_max = *n_list.last().expect("non-empty");
    for _ in 0..p {
        let (mut x, mut mn, mut mx) = (0i64, i64::MAX, i64::MIN);
        let mut slot = 0;
        while slot < n_list.len() && n_list[slot] == 0 {
            lo[slot] = i64::MAX;
            slot += 1;
        }
        let mut step = 0usize;
        while step < n_max {
            let word = rng.next_u64();
            let take = (n_max - step).min(64);
            for b in 0..take {
                x += if (word >> b) & 1 == 0 { 1 } else { -1 };
                mn = mn.min(x);
                mx = mx.max(x);
                step += 1;
                while slot < n_list.len() && n_list[slot] == step {
                    lo[slot] = lo[slot].max(mn);
                    hi[slot] = hi[slot].min(mx);
                    slot += 1;
                }
            }
        }
    }
    lo.iter()
        .zip(&hi)
        .map(|(&a, &b)| if b >= a { (b - a + 1) as u64 } else { 0 })
        .collect()
}

/// One intersection sample J_n^{(p)}.
pub fn intersection_count(p: usize, d: usize, n: usize, seed: u64, index: u64) -> Result<IntersectionSample> {
    let mut rng = stream(seed, label::PAIR, index);
    let j = intersection_profile(p, d, &[n], &mut rng)?[0];
    Ok(IntersectionSample { p, n, j })
}

/// Rescaling of J_n that has a non-degenerate limit (d <= 4); 1 for d >= 5.
pub fn overlap_scale(d: usize, n: f64) -> f64 {
    match d {
        1 | 3 => n.powf(-0.5),
        2 => n.ln().powi(2) / n,
        4 => 1.0 / n.ln(),
        _ => 1.0,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OverlapRow {
    pub n: usize,
    pub mean_raw: f64,
    pub mean: f64,
    pub stderr: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    /// mean / previous row's mean, with a paired-sample standard error.
    pub ratio: Option<f64>,
    pub ratio_stderr: Option<f64>,
}

/// Raw J_n samples (pairs × n_list) drawn with fixed task streams.
pub fn overlap_samples(d: usize, n_list: &[usize], samples: u64, seed: u64) -> Result<Vec<Vec<u64>>> {
    let parts = map_tasks(samples as usize, |i| {
        let mut rng = stream(seed, label::PAIR, i as u64);
        intersection_profile(2, d, n_list, &mut rng)
    });
    parts.into_iter().collect()
}

pub fn overlap_scaling(d: usize, n_list: &[usize], samples: u64, seed: u64) -> Result<Vec<OverlapRow>> {
    if !n_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(RclError::invalid("n_list", "must be strictly increasing"));
    }
    let raw = overlap_samples(d, n_list, samples, seed)?;
    Ok(overlap_table(d, n_list, &raw))
}

pub fn overlap_table(d: usize, n_list: &[usize], raw: &[Vec<u64>]) -> Vec<OverlapRow> {
    let mut rows: Vec<OverlapRow> = Vec::with_capacity(n_list.len());
    for (c, &n) in n_list.iter().enumerate() {
        let scale = overlap_scale(d, n as f64);
        let xs: Vec<f64> = raw.iter().map(|r| r[c] as f64 * scale).collect();
        let w = Welford::from_slice(&xs);
        let s = sorted(&xs);
        let (ratio, ratio_stderr) = if c > 0 {
            let prev_scale = overlap_scale(d, n_list[c - 1] as f64);
            let ys: Vec<f64> = raw.iter().map(|r| r[c - 1] as f64 * prev_scale).collect();
            let (r, se) = ratio_of_means(&xs, &ys);
            (Some(r), Some(se))
        } else {
            (None, None)
        };
        rows.push(OverlapRow {
            n,
            mean_raw: raw.iter().map(|r| r[c] as f64).sum::<f64>() / raw.len() as f64,
            mean: w.mean,
            stderr: w.stderr(),
            q10: quantile_sorted(&s, 0.1),
            q50: quantile_sorted(&s, 0.5),
            q90: quantile_sorted(&s, 0.9),
            ratio,
            ratio_stderr,
        });
    }
    rows
}

/// mean(x)/mean(y) for paired samples with a delta-method standard error.
pub fn ratio_of_means(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let r = mx / my;
    let resid: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - r * b).collect();
    let w = Welford::from_slice(&resid);
    (r, (w.variance() / n).sqrt() / my)
}

/// Var Z_n from two-replica overlaps: E[(1 + β² Var η)^J] - 1 with J the
/// intersection of two independent ranges. Returns (value, stderr).
pub fn variance_from_overlaps(j: &[u64], law: Law, beta: f64) -> (f64, f64) {
    let c = (beta * beta * eta_variance(law, beta)).ln_1p();
    let xs: Vec<f64> = j.iter().map(|&v| (c * v as f64).exp_m1()).collect();
    let w = Welford::from_slice(&xs);
    (w.mean, w.stderr())
}

/// Point-to-point Z_n(z) = E[exp(Σ_{x∈R_n}(βω_x + h)) | S_n = z] over bridges.
#[allow(clippy::too_many_arguments)]
pub fn point_to_point_partition<K: TransitionKernel + Sync>(
    env: &dyn Environment,
    d: usize,
    n: usize,
    z: &Point,
    beta: f64,
    h: f64,
    walkers: u64,
    kernel: &K,
    seed: u64,
) -> Result<PartitionEstimate> {
    check_dim(d)?;
    if walkers == 0 {
        return Err(RclError::invalid("walkers", "must be >= 1"));
    }
    let packing = Packing::new(d);
    let tasks = chunks(walkers, WALKER_CHUNK);
    let parts = map_tasks(tasks.len(), |t| -> Result<LogMeanExp> {
        let (start, len) = tasks[t];
        let mut rng = stream(seed, label::BRIDGE, start / WALKER_CHUNK);
        let mut acc = LogMeanExp::default();
        let mut seen = rustc_hash::FxHashSet::default();
        for _ in 0..len {
            let path = sample_bridge(n, z, kernel, &mut rng)?;
            seen.clear();
            let mut s = KahanSum::default();
            for p in &path.positions[1..] {
                let key = packing.pack(p);
                if seen.insert(key) {
                    let w = if beta == 0.0 { 0.0 } else { beta * env.omega(&packing, key)? };
                    s.add(w + h);
                }
            }
            acc.push(s.value());
        }
        Ok(acc)
    });
    let mut total = LogMeanExp::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(PartitionEstimate::from_acc(&total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{all_paths, range_of};

    fn field(seed: u64) -> SiteField {
        SiteField { law: Law::Gaussian, seed }
    }

    #[test]
    fn range_law_is_a_distribution() {
        for (d, n) in [(1, 6), (2, 5), (3, 3)] {
            let s: f64 = range_states(d, n).unwrap().iter().map(|x| x.1).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn range_dp_matches_path_enumeration() {
        let env = field(5);
        let (d, n, beta, h) = (2, 5, 0.7, -0.1);
        let packing = Packing::new(d);
        let mut z = 0.0;
        let total = (2 * d as u64).pow(n as u32) as f64;
        for path in all_paths(d, n) {
            let e: f64 = range_of(&path)
                .visited()
                .iter()
                .map(|p| beta * env.omega_key(packing.pack(p)) + h)
                .sum();
            z += e.exp() / total;
        }
        let exact = quenched_partition_exact(&env, d, n, beta, h).unwrap();
        assert!((z - exact).abs() < 1e-12 * z);
    }

    #[test]
    fn normalised_annealed_value_is_one() {
        let law = Law::Rademacher;
        let z = annealed_partition_exact(2, 6, law, 0.8, -lambda(law, 0.8)).unwrap();
        assert!((z - 1.0).abs() < 1e-13);
    }

    #[test]
    fn term1_estimators_agree() {
        let env = field(9);
        let exact = expansion_term_exact(&env, 2, 6, 0.5, 1).unwrap();
        let (mc, se) = expansion_term1_mc(&env, 2, 6, 0.5, 200_000, 3).unwrap();
        assert!((mc - exact).abs() < 5.0 * se, "{mc} {exact} {se}");
        let ens = expansion_term(&env, 2, 6, 0.5, 1, 200_000, 3).unwrap();
        assert!((ens - mc).abs() < 1e-10);
    }

    #[test]
    fn quenched_mc_within_error() {
        let env = field(11);
        let exact = quenched_partition_exact(&env, 1, 8, 0.6, 0.0).unwrap();
        let est = quenched_partition(&env, 1, 8, 0.6, 0.0, 100_000, 1).unwrap();
        assert!((est.value - exact).abs() < 5.0 * est.stderr);
    }

    #[test]
    fn overlap_variance_identity_at_zero_beta() {
        let (v, _) = variance_from_overlaps(&[3, 0, 7], Law::Gaussian, 0.0);
        assert_eq!(v, 0.0);
    }
}
