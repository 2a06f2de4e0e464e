//! k-point hitting probabilities: lattice oracles, the first-passage
//! sandwich inequalities, and their continuum limits g_t, ψ_t and ψ^c.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{RclError, Result};
use crate::lattice::{
    check_dim, passage::DP_STATE_CAP, pmf::renewal_green_prefix, renewal_green, return_probs, ClosedForm,
    FirstPassage, OnePointRenewal, Point, RangeWalker, MAX_DIM,
};
use crate::par::{chunks, map_tasks};
use crate::quad::integrate;
use crate::rng::{label, stream};
use crate::special::{erfc, exp_int_e1, normal_cdf, normal_sf};
use crate::stats::KahanSum;

/// A continuum point in R^d (unused coordinates zero).
pub type CPoint = [f64; MAX_DIM];

pub fn cpoint(c: &[f64]) -> CPoint {
    let mut p = [0.0; MAX_DIM];
    p[..c.len()].copy_from_slice(c);
    p
}

fn norm2(x: &CPoint) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn sub(a: &CPoint, b: &CPoint) -> CPoint {
    std::array::from_fn(|i| a[i] - b[i])
}

/// γ = 1 / Σ_{m>=0} p_m(0) for d = 3.
///
/// The partial sums converge like c / sqrt(n), so two of them at n and 4n
/// combine as G_∞ ≈ 2 G(4n) - G(n).
pub fn escape_rate(d: usize) -> Result<f64> {
    if d != 3 {
        return Err(RclError::UnsupportedDimension {
            d,
            reason: "escape rate is zero for recurrent walks (d <= 2); only d = 3 is tabulated",
        });
    }
    static GAMMA: OnceLock<f64> = OnceLock::new();
    Ok(*GAMMA.get_or_init(|| {
        let n = 1usize << 18;
        let g = renewal_green_prefix(3, 4 * n).expect("d = 3 is supported");
        1.0 / (2.0 * g[4 * n] - g[n])
    }))
}

pub fn escape_rate_3d() -> f64 {
    escape_rate(3).expect("d = 3")
}

/// g_t(x): π p̄_t(x) for d = 2, γ p̄_t(x) for d = 3.
pub fn g_kernel(d: usize, t: f64, x: &CPoint) -> Result<f64> {
    let r2 = norm2(x);
    match d {
        2 => Ok((-r2 / t).exp() / t),
        3 => Ok(escape_rate_3d() * (3.0 / (2.0 * PI * t)).powf(1.5) * (-1.5 * r2 / t).exp()),
        _ => Err(RclError::UnsupportedDimension {
            d,
            reason: "g_t is defined for d = 2, 3",
        }),
    }
}

/// ∫_0^u g_s(x) ds in closed form; infinite at x = 0.
pub fn g_time_integral(d: usize, r2: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    match d {
        2 => exp_int_e1(r2 / u),
        _ => {
            let r = r2.sqrt();
            escape_rate_3d() * 3.0 / (2.0 * PI * r) * erfc(r * (1.5 / u).sqrt())
        }
    }
}

#[inline]
fn g_raw(d: usize, gamma: f64, s: f64, r2: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if d == 2 {
        (-r2 / s).exp() / s
    } else {
        gamma * (3.0 / (2.0 * PI * s)).powf(1.5) * (-1.5 * r2 / s).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEval {
    pub d: usize,
    pub t: f64,
    pub value: f64,
    pub err: f64,
}

/// Reading of the one-dimensional kernel: the sorted-event probability, or
/// that probability times k! (one term per permutation).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum D1Reading {
    #[default]
    Ordered,
    Permuted,
}

/// Quadrature tolerances for the simplex integrals.
#[derive(Clone, Copy, Debug)]
pub struct PsiTol {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for PsiTol {
    fn default() -> Self {
        PsiTol {
            rel: 1e-8,
            abs: 1e-13,
            max_intervals: 400,
        }
    }
}

/// Integral over increments s_1 + ... + s_k <= u of Π g_{s_m}(y_m), with the
/// last increment done in closed form; or, when `terminal` is given, with
/// the extra factor g_{u - Σ s}(terminal).
fn simplex(d: usize, gamma: f64, ys: &[f64], terminal: Option<f64>, u: f64, tol: &PsiTol) -> (f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0);
    }
    if ys.is_empty() {
        return match terminal {
            Some(r2) => (g_raw(d, gamma, u, r2), 0.0),
            None => (1.0, 0.0),
        };
    }
    if ys.len() == 1 && terminal.is_none() {
        return (g_time_integral(d, ys[0], u), 0.0);
    }
    // s = u * v^p concentrates nodes near s = 0 where g_s peaks for small |y|.
    let p = 1.0 / (1.0 - d as f64 / 4.0);
    let inner_tol = PsiTol {
        rel: tol.rel * 0.1,
        abs: tol.abs * 0.1,
        max_intervals: tol.max_intervals,
    };
    let mut inner_err = 0.0;
    let q = integrate(
        |v| {
            if v <= 0.0 {
                return 0.0;
            }
            let s = u * v.powf(p);
            let jac = u * p * v.powf(p - 1.0);
            let g = g_raw(d, gamma, s, ys[0]);
            if g == 0.0 {
                return 0.0;
            }
            let (rest, e) = simplex(d, gamma, &ys[1..], terminal, u - s, &inner_tol);
            inner_err += e * g * jac;
            g * rest * jac
        },
        0.0,
        1.0,
        tol.abs,
        tol.rel,
        tol.max_intervals,
    );
    (q.value, q.err + inner_err)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(k - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

fn check_points(d: usize, xs: &[CPoint], allow_origin: bool) -> Result<()> {
    for (i, a) in xs.iter().enumerate() {
        if (!allow_origin && norm2(a) == 0.0) || xs[..i].iter().any(|b| norm2(&sub(a, b)) == 0.0) {
            return Err(RclError::CoincidentPoints);
        }
        if a[d..].iter().any(|&c| c != 0.0) {
            return Err(RclError::invalid("points", "coordinates beyond the dimension"));
        }
    }
    Ok(())
}

/// ψ_t(x_1..x_k): Σ over orderings of the time-ordered integral of Π g (d = 2, 3),
/// or the Brownian range probability (d = 1).
pub fn psi_kernel(d: usize, t: f64, xs: &[CPoint], reading: D1Reading) -> Result<KernelEval> {
    psi_kernel_tol(d, t, xs, reading, &PsiTol::default())
}

pub fn psi_kernel_tol(d: usize, t: f64, xs: &[CPoint], reading: D1Reading, tol: &PsiTol) -> Result<KernelEval> {
    if !(t > 0.0) {
        return Err(RclError::invalid("t", "must be positive"));
    }
    let k = xs.len();
    if k > 4 {
        return Err(RclError::Unsupported("exact ψ supports k <= 4".into()));
    }
    if d == 1 {
        check_points(1, xs, true)?;
        if k == 0 {
            return Ok(KernelEval { d, t, value: 1.0, err: 0.0 });
        }
        let lo = xs.iter().map(|p| p[0]).fold(0.0, f64::min);
        let hi = xs.iter().map(|p| p[0]).fold(0.0, f64::max);
        let mut v = d1_hit_interval(lo, hi, t);
        if reading == D1Reading::Permuted {
            v *= (1..=k).product::<usize>() as f64;
        }
        return Ok(KernelEval { d, t, value: v, err: 1e-12 });
    }
    if d != 2 && d != 3 {
        return Err(RclError::UnsupportedDimension {
            d,
            reason: "ψ_t is defined for d = 1, 2, 3",
        });
    }
    check_points(d, xs, false)?;
    if k == 0 {
        return Ok(KernelEval { d, t, value: 1.0, err: 0.0 });
    }
    let gamma = if d == 3 { escape_rate_3d() } else { 1.0 };
    let (mut v, mut e) = (KahanSum::default(), 0.0);
    for perm in permutations(k) {
        let mut prev = [0.0; MAX_DIM];
        let ys: Vec<f64> = perm
            .iter()
            .map(|&i| {
                let r2 = norm2(&sub(&xs[i], &prev));
                prev = xs[i];
                r2
            })
            .collect();
        let (val, err) = simplex(d, gamma, &ys, None, t, tol);
        v.add(val);
        e += err;
    }
    Ok(KernelEval { d, t, value: v.value(), err: e })
}

/// ψ^c_{t,x}(x_1..x_k): the constrained kernel with terminal factor
/// g_{t - t_k}(x - x_{σ(k)}) and normalisation 1 / g_t(x).
pub fn psi_constrained(d: usize, t: f64, x_end: &CPoint, xs: &[CPoint]) -> Result<KernelEval> {
    if d != 2 && d != 3 {
        return Err(RclError::UnsupportedDimension {
            d,
            reason: "ψ^c is defined for d = 2, 3",
        });
    }
    check_points(d, xs, false)?;
    if xs.iter().any(|p| norm2(&sub(p, x_end)) == 0.0) {
        return Err(RclError::CoincidentPoints);
    }
    if xs.is_empty() {
        return Ok(KernelEval { d, t, value: 1.0, err: 0.0 });
    }
    let gamma = if d == 3 { escape_rate_3d() } else { 1.0 };
    let norm = g_raw(d, gamma, t, norm2(x_end));
    let tol = PsiTol::default();
    let (mut v, mut e) = (KahanSum::default(), 0.0);
    for perm in permutations(xs.len()) {
        let mut prev = [0.0; MAX_DIM];
        let ys: Vec<f64> = perm
            .iter()
            .map(|&i| {
                let r2 = norm2(&sub(&xs[i], &prev));
                prev = xs[i];
                r2
            })
            .collect();
        let term = norm2(&sub(x_end, &prev));
        let (val, err) = simplex(d, gamma, &ys, Some(term), t, &tol);
        v.add(val);
        e += err;
    }
    Ok(KernelEval {
        d,
        t,
        value: v.value() / norm,
        err: e / norm,
    })
}

/// P(a < m_t, M_t < b) for Brownian motion from 0 with a <= 0 <= b.
///
/// Uses the method-of-images series when the strip is wide compared with
/// sqrt(t) and the sine (eigenfunction) series otherwise; both are truncated
/// once terms fall below 1e-16.
pub fn strip_survival(a: f64, b: f64, t: f64) -> f64 {
    let w = b - a;
    if w <= 0.0 || a >= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let st = t.sqrt();
    if w * w >= t {
        let cdf = |z: f64| normal_cdf(z / st);
        let mut s = KahanSum::default();
        let term = |k: i64| {
            let sh = 2.0 * k as f64 * w;
            cdf(b + sh) - cdf(a + sh) - cdf(b - 2.0 * a + sh) + cdf(-a + sh)
        };
        s.add(term(0));
        for k in 1..200 {
            let tp = term(k);
            let tm = term(-k);
            s.add(tp);
            s.add(tm);
            if tp.abs() + tm.abs() < 1e-17 && k > 2 {
                break;
            }
        }
        s.value().clamp(0.0, 1.0)
    } else {
        let mut s = KahanSum::default();
        let c = PI * PI * t / (2.0 * w * w);
        let mut n = 1;
        loop {
            let nf = n as f64;
            let decay = (-nf * nf * c).exp();
            s.add(4.0 / (nf * PI) * (nf * PI * (-a) / w).sin() * decay);
            if decay < 1e-17 || n > 10_000 {
                break;
            }
            n += 2;
        }
        s.value().clamp(0.0, 1.0)
    }
}

/// P(m_t <= a, M_t >= b) with a <= 0 <= b.
pub fn d1_hit_interval(a: f64, b: f64, t: f64) -> f64 {
    assert!(a <= 0.0 && b >= 0.0, "need a <= 0 <= b");
    let st = t.sqrt();
    // P(M < b) = 1 - 2 Φ̄(b / √t), P(m > a) = 1 - 2 Φ̄(-a / √t)
    let tail_b = 2.0 * normal_sf(b / st);
    let tail_a = 2.0 * normal_sf(-a / st);
    let both = strip_survival(a, b, t);
    // 1 - P(M < b) - P(m > a) + P(a < m, M < b)
    (tail_a + tail_b - 1.0 + both).clamp(0.0, 1.0)
}

/// Lower/upper first-passage bounds around P(T_x <= n).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OneptBounds {
    pub d: usize,
    pub n: usize,
    pub x: Vec<i64>,
    pub eps: f64,
    pub lower: f64,
    pub exact: f64,
    pub upper: f64,
    pub lower_slack: f64,
    pub upper_slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lemma23Report {
    pub d: usize,
    pub n: usize,
    pub x: Vec<i64>,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Rounding allowance for comparing two sums of probabilities.
const SLACK_TOL: f64 = 1e-12;

/// Exact inputs for the bounds at one site, for all n <= n_max.
pub struct SiteProfile {
    pub d: usize,
    pub x: Point,
    /// P(T_x = j), j = 0..=n_max
    pub hit: Vec<f64>,
    /// P(T_x = j, T_0 > j)
    pub hit_avoid: Vec<f64>,
    /// p_k(x), k = 0..=ceil(1.5 n_max)
    pub pk: Vec<f64>,
    /// Σ_{m=0}^k p_m(0)
    pub green: Vec<f64>,
}

impl SiteProfile {
    pub fn new(d: usize, n_max: usize, x: &Point) -> Result<Self> {
        let hit = FirstPassage::profile(d, n_max, x, false, DP_STATE_CAP)?;
        let hit_avoid = FirstPassage::profile(d, n_max, x, true, DP_STATE_CAP)?;
        let horizon = 2 * n_max;
        let cf = ClosedForm::new(d, horizon)?;
        let pk = cf.series(x, horizon);
        let green = renewal_green_prefix(d, horizon)?;
        Ok(SiteProfile {
            d,
            x: *x,
            hit,
            hit_avoid,
            pk,
            green,
        })
    }

    fn prefix(v: &[f64], upto: usize) -> f64 {
        v[..=upto].iter().copied().collect::<KahanSum>().value()
    }

    /// G'_n^{-1} Σ_{k<=n} p_k(x) <= P(T_x <= n) <= G'_{⌊εn⌋}^{-1} Σ_{k<=n+⌊εn⌋} p_k(x)
    pub fn onept_bounds(&self, n: usize, eps: f64) -> OneptBounds {
        let exact = Self::prefix(&self.hit, n);
        let lower = Self::prefix(&self.pk, n) / self.green[n];
        let en = (eps * n as f64).floor() as usize;
        let upper = Self::prefix(&self.pk, n + en) / self.green[en];
        let lower_slack = exact - lower;
        let upper_slack = upper - exact;
        OneptBounds {
            d: self.d,
            n,
            x: self.x[..self.d].to_vec(),
            eps,
            lower,
            exact,
            upper,
            lower_slack,
            upper_slack,
            pass: lower_slack >= -SLACK_TOL && upper_slack >= -SLACK_TOL,
        }
    }

    /// Σ_{k<=n} P(T_x = k) <= G'_n Σ_{j<=n} P(T_x = j, T_0 > j)
    pub fn lemma23(&self, n: usize) -> Lemma23Report {
        let lhs = Self::prefix(&self.hit, n);
        let rhs = self.green[n] * Self::prefix(&self.hit_avoid, n);
        Lemma23Report {
            d: self.d,
            n,
            x: self.x[..self.d].to_vec(),
            lhs,
            rhs,
            slack: rhs - lhs,
            pass: rhs - lhs >= -SLACK_TOL,
        }
    }
}

pub fn check_onept_bounds(d: usize, n: usize, x: &Point, eps: f64) -> Result<OneptBounds> {
    Ok(SiteProfile::new(d, n, x)?.onept_bounds(n, eps))
}

pub fn check_lemma23(d: usize, n: usize, x: &Point) -> Result<Lemma23Report> {
    if n < 2 {
        return Err(RclError::invalid("n", "n = 1 is degenerate (no return possible); use n >= 2"));
    }
    Ok(SiteProfile::new(d, n, x)?.lemma23(n))
}

/// Nearest lattice site to sqrt(N) x.
pub fn embed(d: usize, big_n: f64, x: &CPoint) -> Point {
    let s = big_n.sqrt();
    let mut p = [0i64; MAX_DIM];
    for i in 0..d {
        p[i] = (s * x[i]).round() as i64;
    }
    p
}

/// One row of a convergence table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvRow {
    pub n: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub limit: f64,
    pub ratio: f64,
}

/// Rescaling k_N^k for k hit points (1 in d = 1).
pub fn hit_scale(d: usize, big_n: f64, k: usize) -> f64 {
    let kn = match d {
        1 => 1.0,
        2 => big_n.ln(),
        _ => big_n.sqrt(),
    };
    kn.powi(k as i32)
}

/// ∫_0^t g_s(x) ds (d = 2, 3) or P(T_x <= t) (d = 1).
pub fn onept_continuum(d: usize, x: &CPoint, t: f64) -> Result<f64> {
    Ok(psi_kernel(d, t, &[*x], D1Reading::Ordered)?.value)
}

/// k_N^k P(T_{√N x_1} <= Nt, ...) against ψ_t, exact through the renewal
/// equations (standard error zero).
pub fn kpt_limit_exact(d: usize, t: f64, xs: &[CPoint], n_list: &[u64]) -> Result<Vec<ConvRow>> {
    check_dim(d)?;
    let limit = psi_kernel(d, t, xs, D1Reading::Ordered)?.value;
    let mut rows = Vec::new();
    for &big_n in n_list {
        let steps = (big_n as f64 * t).floor() as usize;
        let sites: Vec<Point> = xs.iter().map(|x| embed(d, big_n as f64, x)).collect();
        let ren = OnePointRenewal::new(d, steps)?;
        let p = if sites.len() == 1 {
            ren.hit_by(&sites[0], steps)
        } else {
            ren.hit_all_by(&sites, steps)?
        };
        let est = hit_scale(d, big_n as f64, xs.len()) * p;
        rows.push(ConvRow {
            n: big_n,
            estimate: est,
            stderr: 0.0,
            limit,
            ratio: est / limit,
        });
    }
    Ok(rows)
}

/// Monte Carlo P(T_{x_1} <= n, ..., T_{x_k} <= n) with its standard error.
pub fn hit_prob_mc(d: usize, n: usize, xs: &[Point], samples: u64, seed: u64) -> Result<(f64, f64)> {
    check_dim(d)?;
    let tasks = chunks(samples, 1024);
    let counts = map_tasks(tasks.len(), |ti| -> Result<u64> {
        let (start, len) = tasks[ti];
        let mut rng = stream(seed, label::WALK, start / 1024);
        let mut hits = 0u64;
        if d == 1 && xs.len() == 1 {
            for _ in 0..len {
                if hits_1d(xs[0][0], n, &mut rng) {
                    hits += 1;
                }
            }
            return Ok(hits);
        }
        let mut walker = RangeWalker::new(d, n);
        let keys: Vec<u64> = xs.iter().map(|x| walker.packing.pack(x)).collect();
        for _ in 0..len {
            walker.run(n, &mut rng)?;
            if keys.iter().all(|k| walker.visited.contains(k)) {
                hits += 1;
            }
        }
        Ok(hits)
    });
    let mut total = 0u64;
    for c in counts {
        total += c?;
    }
    let p = total as f64 / samples as f64;
    Ok((p, (p * (1.0 - p) / samples as f64).sqrt()))
}

/// Does a 1D walk reach `target` within n steps? Stops at the first hit.
pub fn hits_1d<R: rand::RngCore + ?Sized>(target: i64, n: usize, rng: &mut R) -> bool {
    let mut x = 0i64;
    let mut done = 0;
    while done < n {
        let word = rng.next_u64();
        let take = (n - done).min(64);
        for b in 0..take {
            x += if (word >> b) & 1 == 0 { 1 } else { -1 };
            if x == target {
                return true;
            }
        }
        done += take;
    }
    false
}

/// Convergence table by Monte Carlo.
pub fn kpt_limit_mc(d: usize, t: f64, xs: &[CPoint], n_list: &[u64], samples: u64, seed: u64) -> Result<Vec<ConvRow>> {
    let limit = psi_kernel(d, t, xs, D1Reading::Ordered)?.value;
    let mut rows = Vec::new();
    for (i, &big_n) in n_list.iter().enumerate() {
        let steps = (big_n as f64 * t).floor() as usize;
        let sites: Vec<Point> = xs.iter().map(|x| embed(d, big_n as f64, x)).collect();
        let (p, se) = hit_prob_mc(d, steps, &sites, samples, crate::rng::derive_seed(seed, i as u64))?;
        let sc = hit_scale(d, big_n as f64, xs.len());
        rows.push(ConvRow {
            n: big_n,
            estimate: sc * p,
            stderr: sc * se,
            limit,
            ratio: sc * p / limit,
        });
    }
    Ok(rows)
}

/// 1 + G_n with the m = 0 visit, exposed for the escape-rate consistency check.
pub fn renewal_green_at(d: usize, n: usize) -> Result<f64> {
    renewal_green(d, n)
}

/// Return probability series, re-exported for reports.
pub fn return_probabilities(d: usize, n: usize) -> Result<Vec<f64>> {
    return_probs(d, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::point;

    #[test]
    fn escape_rate_value() {
        let g = escape_rate_3d();
        assert!(g > 0.65 && g < 0.67);
        assert!((g - 0.659_462_670).abs() < 2e-6, "{g}");
        let c = g * renewal_green(3, 1 << 20).unwrap();
        assert!((c - 1.0).abs() < 0.01);
        assert!(escape_rate(2).is_err());
    }

    #[test]
    fn g_kernel_values() {
        let v = g_kernel(2, 1.0, &cpoint(&[1.0, 0.0])).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        let q = integrate(|s| g_kernel(2, s, &cpoint(&[1.0, 0.0])).unwrap(), 0.0, 1.0, 1e-14, 1e-13, 200);
        assert!((q.value - 0.219_383_934_395_520_3).abs() < 1e-10);
        for d in [2, 3] {
            let x = cpoint(&[0.3, -0.4, 0.2][..d]);
            let c: f64 = 2.0;
            let cx = cpoint(&[0.6, -0.8, 0.4][..d]);
            let lhs = g_kernel(d, c * c * 0.7, &cx).unwrap();
            let rhs = c.powi(-(d as i32)) * g_kernel(d, 0.7, &x).unwrap();
            assert!((lhs - rhs).abs() < 1e-14 * rhs);
        }
    }

    #[test]
    fn time_integral_closed_form_d3() {
        let x = cpoint(&[1.0, 0.0, 0.0]);
        let q = integrate(|s| g_kernel(3, s, &x).unwrap(), 0.0, 1.0, 1e-14, 1e-12, 200);
        assert!((q.value - g_time_integral(3, 1.0, 1.0)).abs() < 1e-10);
    }

    #[test]
    fn psi_one_point_reductions() {
        let v = psi_kernel(2, 1.0, &[cpoint(&[1.0, 0.0])], D1Reading::Ordered).unwrap();
        assert!((v.value - 0.219_383_934_395_520_3).abs() < 1e-12);
        let v = psi_kernel(1, 1.0, &[cpoint(&[1.0])], D1Reading::Ordered).unwrap();
        assert!((v.value - 0.317_310_507_862_914_1).abs() < 1e-10);
        for c in [0.5, 2.0] {
            let a = psi_kernel(2, c * c, &[cpoint(&[0.7 * c, 0.2 * c])], D1Reading::Ordered).unwrap();
            let b = psi_kernel(2, 1.0, &[cpoint(&[0.7, 0.2])], D1Reading::Ordered).unwrap();
            assert!((a.value - b.value).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_two_point_symmetry_and_monotonicity() {
        for d in [2, 3] {
            let a = cpoint(&[1.0, 0.0, 0.0][..d]);
            let b = cpoint(&[0.0, 1.0, 0.0][..d]);
            let ab = psi_kernel(d, 1.0, &[a, b], D1Reading::Ordered).unwrap();
            let ba = psi_kernel(d, 1.0, &[b, a], D1Reading::Ordered).unwrap();
            assert!((ab.value - ba.value).abs() < 1e-10);
            assert!(ab.value > 0.0);
            let later = psi_kernel(d, 1.5, &[a, b], D1Reading::Ordered).unwrap();
            assert!(later.value > ab.value);
        }
    }

    #[test]
    fn psi_two_point_against_direct_double_integral() {
        // Independent route: nested quadrature over (t1, t2) of the raw kernel.
        let d = 2;
        let a = cpoint(&[0.6, 0.1]);
        let b = cpoint(&[-0.2, 0.5]);
        let direct = |p: &CPoint, q: &CPoint| {
            let pq = sub(q, p);
            integrate(
                |t1| {
                    let inner = integrate(
                        |t2| g_kernel(d, t2 - t1, &pq).unwrap_or(0.0),
                        t1,
                        1.0,
                        1e-13,
                        1e-10,
                        200,
                    );
                    g_kernel(d, t1, p).unwrap() * inner.value
                },
                0.0,
                1.0,
                1e-12,
                1e-9,
                200,
            )
            .value
        };
        let want = direct(&a, &b) + direct(&b, &a);
        let got = psi_kernel(d, 1.0, &[a, b], D1Reading::Ordered).unwrap().value;
        assert!((want - got).abs() < 1e-7 * want, "{want} vs {got}");
    }

    #[test]
    fn strip_series_agree_at_switch() {
        // Both expansions at w^2 = t must agree.
        let (a, b, t) = (-0.4, 0.6, 1.0);
        let images = {
            let st = f64::sqrt(t);
            let w: f64 = b - a;
            let cdf = |z: f64| normal_cdf(z / st);
            (-50..=50)
                .map(|k| {
                    let sh = 2.0 * k as f64 * w;
                    cdf(b + sh) - cdf(a + sh) - cdf(b - 2.0 * a + sh) + cdf(-a + sh)
                })
                .sum::<f64>()
        };
        assert!((strip_survival(a, b, t) - images).abs() < 1e-13);
        let eig = strip_survival(a, b, 1.0001);
        assert!((eig - images).abs() < 1e-4);
    }

    #[test]
    fn d1_interval_limits() {
        assert!((d1_hit_interval(0.0, 0.0, 1.0) - 1.0).abs() < 1e-15);
        let one_sided = d1_hit_interval(0.0, 1.0, 1.0);
        assert!((one_sided - 2.0 * normal_sf(1.0)).abs() < 1e-12);
        assert!(d1_hit_interval(-40.0, 1.0, 1.0) < 1e-300);
        let a = d1_hit_interval(-0.3, 0.7, 2.0);
        let b = d1_hit_interval(-0.7, 0.3, 2.0);
        assert!((a - b).abs() < 1e-14);
        assert!(d1_hit_interval(-0.3, 0.8, 2.0) < a);
    }

    #[test]
    fn d1_reading_flag() {
        let xs = [cpoint(&[-0.3]), cpoint(&[0.5])];
        let o = psi_kernel(1, 1.0, &xs, D1Reading::Ordered).unwrap().value;
        let p = psi_kernel(1, 1.0, &xs, D1Reading::Permuted).unwrap().value;
        assert!((p - 2.0 * o).abs() < 1e-15);
    }

    #[test]
    fn constrained_kernel_basics() {
        let x = cpoint(&[1.0, 0.5]);
        assert_eq!(psi_constrained(2, 1.0, &x, &[]).unwrap().value, 1.0);
        let a = cpoint(&[0.3, 0.0]);
        let b = cpoint(&[0.0, 0.4]);
        let ab = psi_constrained(2, 1.0, &x, &[a, b]).unwrap().value;
        let ba = psi_constrained(2, 1.0, &x, &[b, a]).unwrap().value;
        assert!((ab - ba).abs() < 1e-9 * ab);
    }

    #[test]
    fn lemma_small_cases() {
        let b = check_onept_bounds(1, 2, &point(&[1]), 0.5).unwrap();
        assert!(b.pass);
        assert!((b.exact - 0.5).abs() < 1e-15);
        assert!(b.lower <= 0.5);
        let b = check_onept_bounds(2, 10, &point(&[1, 0]), 0.5).unwrap();
        assert!(b.pass, "{b:?}");
        let l = check_lemma23(1, 4, &point(&[1])).unwrap();
        assert!(l.pass);
        let l = check_lemma23(2, 10, &point(&[1, 1])).unwrap();
        assert!(l.pass);
    }

    #[test]
    fn bounds_hold_across_eps() {
        let p = SiteProfile::new(3, 40, &point(&[1, 1, 0])).unwrap();
        for eps in [0.1, 0.25, 0.5, 1.0] {
            for n in [10, 25, 40] {
                let b = p.onept_bounds(n, eps);
                assert!(b.pass, "{b:?}");
            }
        }
    }

    #[test]
    fn exact_tables_match_mc() {
        let rows = kpt_limit_exact(2, 1.0, &[cpoint(&[1.0, 0.0])], &[256]).unwrap();
        let site = embed(2, 256.0, &cpoint(&[1.0, 0.0]));
        let (p, se) = hit_prob_mc(2, 256, &[site], 40_000, 1).unwrap();
        let exact = rows[0].estimate / hit_scale(2, 256.0, 1);
        assert!((p - exact).abs() < 4.0 * se);
    }
}
