//! Hitting probabilities: exact DP oracles for small n and renewal (last
//! exit) formulas for large n.

use crate::error::{RclError, Result};
use crate::lattice::{check_dim, l1, linf, ClosedForm, Point, MAX_DIM};
use crate::series;
use crate::stats::KahanSum;

/// Dense indexing of the box |x|_inf <= radius.
#[derive(Clone, Debug)]
struct BoxIndex {
    d: usize,
    radius: i64,
    side: usize,
    strides: [usize; MAX_DIM],
}

impl BoxIndex {
    fn new(d: usize, radius: i64) -> Self {
        let side = (2 * radius + 1) as usize;
        let mut strides = [0; MAX_DIM];
        let mut s = 1;
        for st in strides.iter_mut().take(d) {
            *st = s;
            s *= side;
        }
        BoxIndex {
            d,
            radius,
            side,
            strides,
        }
    }

    fn sites(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    fn index(&self, x: &Point) -> usize {
        (0..self.d)
            .map(|i| (x[i] + self.radius) as usize * self.strides[i])
            .sum()
    }

    fn point(&self, mut idx: usize) -> Point {
        let mut p = [0; MAX_DIM];
        for c in p.iter_mut().take(self.d) {
            *c = (idx % self.side) as i64 - self.radius;
            idx /= self.side;
        }
        p
    }

    /// Neighbour indices; callers guarantee the walk cannot leave the box.
    #[inline]
    fn neighbours(&self, idx: usize, x: &Point, out: &mut [usize; 2 * MAX_DIM]) -> usize {
        let mut m = 0;
        for a in 0..self.d {
            if x[a] < self.radius {
                out[m] = idx + self.strides[a];
                m += 1;
            }
            if x[a] > -self.radius {
                out[m] = idx - self.strides[a];
                m += 1;
            }
        }
        m
    }
}

/// Default cap on DP states for the exact oracles.
pub const DP_STATE_CAP: u128 = 1 << 27;

/// P(T_{x_1} <= n, ..., T_{x_k} <= n) by DP over (position, hit-subset mask).
pub fn hit_prob_exact(d: usize, n: usize, xs: &[Point], cap: u128) -> Result<f64> {
    check_dim(d)?;
    let k = xs.len();
    if k == 0 {
        return Ok(1.0);
    }
    if k > 4 {
        return Err(RclError::Unsupported(format!("hit_prob_exact supports k <= 4, got {k}")));
    }
    for (i, a) in xs.iter().enumerate() {
        if xs[..i].contains(a) {
            return Err(RclError::CoincidentPoints);
        }
    }
    if xs.iter().any(|x| l1(x) as usize > n) {
        return Ok(0.0);
    }
    let bx = BoxIndex::new(d, n as i64);
    let sites = bx.sites();
    let masks = 1usize << k;
    let requested = sites as u128 * masks as u128;
    if requested > cap {
        return Err(RclError::BudgetExceeded {
            what: "hit-probability DP",
            requested,
            cap,
        });
    }
    let target_bit: Vec<(usize, usize)> = xs.iter().enumerate().map(|(b, x)| (bx.index(x), 1 << b)).collect();
    let full = masks - 1;
    let w = 1.0 / (2 * d) as f64;
    let mut cur = vec![0.0; sites * masks];
    let mut next = vec![0.0; sites * masks];
    cur[bx.index(&[0; MAX_DIM]) * masks] = 1.0;
    let mut done = KahanSum::default();
    let mut nb = [0usize; 2 * MAX_DIM];
    // Sites reachable at step j have |y|_1 <= j; scan the box but skip zeros.
    for _step in 1..=n {
        next.iter_mut().for_each(|v| *v = 0.0);
        for idx in 0..sites {
            let base = idx * masks;
            if cur[base..base + masks].iter().all(|&v| v == 0.0) {
                continue;
            }
            let x = bx.point(idx);
            let m = bx.neighbours(idx, &x, &mut nb);
            for &j in &nb[..m] {
                let bit = target_bit.iter().find(|(t, _)| *t == j).map_or(0, |t| t.1);
                for mask in 0..full {
                    let v = cur[base + mask];
                    if v == 0.0 {
                        continue;
                    }
                    let nm = mask | bit;
                    if nm == full {
                        done.add(v * w);
                    } else {
                        next[j * masks + nm] += v * w;
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(done.value())
}

/// First-passage DP over the L1 ball: the walk is absorbed at the target (and
/// optionally at the origin).
pub struct FirstPassage;

impl FirstPassage {
    /// Returns `f[j]` for j = 0..=n: P(T_x = j), or P(T_x = j, T_0 > j) when
    /// `avoid_origin` is set.
    pub fn profile(d: usize, n: usize, x: &Point, avoid_origin: bool, cap: u128) -> Result<Vec<f64>> {
        check_dim(d)?;
        if *x == [0; MAX_DIM] {
            return Err(RclError::CoincidentPoints);
        }
        let bx = BoxIndex::new(d, n as i64);
        let sites = bx.sites() as u128;
        if 2 * sites > cap {
            return Err(RclError::BudgetExceeded {
                what: "first-passage DP",
                requested: 2 * sites,
                cap,
            });
        }
        // Ball sites bucketed by L1 norm.
        let mut shells: Vec<Vec<(usize, Point)>> = vec![Vec::new(); n + 1];
        for idx in 0..bx.sites() {
            let p = bx.point(idx);
            let r = l1(&p) as usize;
            if r <= n {
                shells[r].push((idx, p));
            }
        }
        let target = if linf(x) as usize <= n { Some(bx.index(x)) } else { None };
        let origin = bx.index(&[0; MAX_DIM]);
        let w = 1.0 / (2 * d) as f64;
        let mut cur = vec![0.0; bx.sites()];
        let mut next = vec![0.0; bx.sites()];
        cur[origin] = 1.0;
        let mut f = vec![0.0; n + 1];
        let mut nb = [0usize; 2 * MAX_DIM];
        for (j, fj) in f.iter_mut().enumerate().skip(1) {
            for shell in shells.iter().take(j + 1).skip(j % 2).step_by(2) {
                for &(idx, ref p) in shell {
                    let m = bx.neighbours(idx, p, &mut nb);
                    let mut acc = 0.0;
                    for &q in &nb[..m] {
                        acc += cur[q];
                    }
                    next[idx] = acc * w;
                }
            }
            if let Some(t) = target {
                *fj = next[t];
                next[t] = 0.0;
            }
            if avoid_origin {
                next[origin] = 0.0;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(f)
    }
}

/// P(T_x <= n) for large n through the last-exit decomposition
/// P(T_x <= n) = Σ_{k=1}^n p_k(x) P(T_0 > n - k),
/// where P(T_0 > m) are the partial sums of 1 / Σ_m p_m(0) s^m.
#[derive(Clone, Debug)]
pub struct OnePointRenewal {
    pub d: usize,
    pub n: usize,
    pub cf: ClosedForm,
    /// `survive[m]` = P(T_0 > m).
    pub survive: Vec<f64>,
    /// Return generating-function coefficients p_m(0).
    pub returns: Vec<f64>,
}

impl OnePointRenewal {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        let returns = super::return_probs(d, n)?;
        let q = series::inverse(&returns, n + 1);
        let mut acc = KahanSum::default();
        let survive = q
            .iter()
            .map(|&v| {
                acc.add(v);
                acc.value()
            })
            .collect();
        Ok(OnePointRenewal {
            d,
            n,
            cf: ClosedForm::new(d, n)?,
            survive,
            returns,
        })
    }

    /// P(T_x <= m) for m <= n.
    pub fn hit_by(&self, x: &Point, m: usize) -> f64 {
        assert!(m <= self.n);
        let p = self.cf.series(x, m);
        let mut acc = KahanSum::default();
        for k in 1..=m {
            if p[k] != 0.0 {
                acc.add(p[k] * self.survive[m - k]);
            }
        }
        acc.value()
    }

    /// Generating-function coefficients of the first visit to a set B at
    /// times j >= 1: `H_b[j]` = P(first visit to B at time j, at b).
    /// Solves U = H M with U_b = Σ_{j>=1} p_j(b) s^j and M_{ab} = Σ_j p_j(b - a) s^j.
    pub fn first_visit_series(&self, set: &[Point], len: usize) -> Result<Vec<Vec<f64>>> {
        let k = set.len();
        for (i, a) in set.iter().enumerate() {
            if set[..i].contains(a) {
                return Err(RclError::CoincidentPoints);
            }
        }
        let len = len.min(self.n + 1);
        let diff = |a: &Point, b: &Point| -> Point { std::array::from_fn(|i| b[i] - a[i]) };
        let m: series::SeriesMatrix = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        if i == j {
                            self.returns[..len].to_vec()
                        } else {
                            self.cf.series(&diff(&set[i], &set[j]), len - 1)
                        }
                    })
                    .collect()
            })
            .collect();
        let minv = series::mat_inverse_unit(&m, len);
        let u: Vec<Vec<f64>> = set
            .iter()
            .map(|b| {
                let mut s = self.cf.series(b, len - 1);
                s[0] = 0.0;
                s
            })
            .collect();
        let mut h = vec![vec![0.0; len]; k];
        for (bp, hb) in h.iter_mut().enumerate() {
            for (b, ub) in u.iter().enumerate() {
                let prod = series::mul(ub, &minv[b][bp], len);
                for (o, v) in hb.iter_mut().zip(&prod) {
                    *o += v;
                }
            }
        }
        Ok(h)
    }

    /// P(T_B <= m): the walk visits at least one point of B in steps 1..m.
    pub fn hit_any_by(&self, set: &[Point], m: usize) -> Result<f64> {
        let h = self.first_visit_series(set, m + 1)?;
        Ok(h.iter().flat_map(|s| s[1..=m].iter().copied()).collect::<KahanSum>().value())
    }

    /// P(T_{x_1} <= m, ..., T_{x_k} <= m) by inclusion-exclusion over subsets.
    pub fn hit_all_by(&self, xs: &[Point], m: usize) -> Result<f64> {
        let k = xs.len();
        if k > 4 {
            return Err(RclError::Unsupported("k-point renewal supports k <= 4".into()));
        }
        let mut acc = KahanSum::default();
        for mask in 1u32..(1 << k) {
            let sub: Vec<Point> = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| xs[i]).collect();
            let p = if sub.len() == 1 { self.hit_by(&sub[0], m) } else { self.hit_any_by(&sub, m)? };
            if sub.len() % 2 == 1 {
                acc.add(p);
            } else {
                acc.add(-p);
            }
        }
        Ok(acc.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{all_paths, point, range_of};

    fn enumerate_hit(d: usize, n: usize, xs: &[Point]) -> f64 {
        let total = (2 * d).pow(n as u32) as f64;
        let c = all_paths(d, n)
            .filter(|p| {
                let r = range_of(p);
                xs.iter().all(|x| r.contains(x))
            })
            .count();
        c as f64 / total
    }

    #[test]
    fn small_exact_values() {
        let v = hit_prob_exact(1, 2, &[point(&[1])], DP_STATE_CAP).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let v = hit_prob_exact(1, 2, &[point(&[1]), point(&[-1])], DP_STATE_CAP).unwrap();
        assert_eq!(v, 0.0);
        // (1, 0) is odd, so it can only be hit at step 1: 4 of 16 paths.
        let v = hit_prob_exact(2, 2, &[point(&[1, 0])], DP_STATE_CAP).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dp_matches_enumeration() {
        for (d, n) in [(1usize, 6usize), (2, 5)] {
            let pts = [point(&[1]), point(&[-1, 1]), point(&[2, 0]), point(&[0])];
            for a in &pts {
                for b in &pts {
                    let xs: Vec<Point> = if a == b { vec![*a] } else { vec![*a, *b] };
                    if xs.iter().any(|x| x[d..].iter().any(|&c| c != 0)) {
                        continue;
                    }
                    let dp = hit_prob_exact(d, n, &xs, DP_STATE_CAP).unwrap();
                    let en = enumerate_hit(d, n, &xs);
                    assert!((dp - en).abs() < 1e-14, "d={d} xs={xs:?}");
                }
            }
        }
    }

    #[test]
    fn first_passage_profile_sums_to_hit_probability() {
        for d in 1..=3 {
            let n = 10;
            let x = point(&[1, 1, 0][..d]);
            let f = FirstPassage::profile(d, n, &x, false, DP_STATE_CAP).unwrap();
            let dp = hit_prob_exact(d, n, &[x], DP_STATE_CAP).unwrap();
            assert!((f.iter().sum::<f64>() - dp).abs() < 1e-14);
            let g = FirstPassage::profile(d, n, &x, true, DP_STATE_CAP).unwrap();
            assert!(g.iter().zip(&f).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn renewal_matches_dp() {
        for d in 1..=3 {
            let n = 40;
            let r = OnePointRenewal::new(d, n).unwrap();
            assert!(r.survive.windows(2).all(|w| w[1] <= w[0] + 1e-15));
            for x in [point(&[1]), point(&[2, 1]), point(&[1, 1, 1])] {
                if x[d..].iter().any(|&c| c != 0) {
                    continue;
                }
                let f = FirstPassage::profile(d, n, &x, false, DP_STATE_CAP).unwrap();
                for m in [5usize, 17, 40] {
                    let dp: f64 = f[..=m].iter().sum();
                    assert!((r.hit_by(&x, m) - dp).abs() < 1e-13, "d={d} x={x:?} m={m}");
                }
            }
        }
    }

    #[test]
    fn matrix_renewal_matches_dp() {
        let d = 2;
        let n = 12;
        let r = OnePointRenewal::new(d, n).unwrap();
        let xs = [point(&[1, 0]), point(&[0, 2])];
        let dp = hit_prob_exact(d, n, &xs, DP_STATE_CAP).unwrap();
        let ren = r.hit_all_by(&xs, n).unwrap();
        assert!((dp - ren).abs() < 1e-13, "{dp} vs {ren}");
        // Hitting x before returning to 0 is the first visit to {0, x} at x.
        let x = point(&[2, 1]);
        let g = FirstPassage::profile(d, n, &x, true, DP_STATE_CAP).unwrap();
        let h = r.first_visit_series(&[point(&[0, 0]), x], n + 1).unwrap();
        for j in 0..=n {
            assert!((g[j] - h[1][j]).abs() < 1e-14, "j={j}");
        }
    }
}
