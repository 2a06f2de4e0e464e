//! Transition probabilities p_k(x) = P(S_k = x): an exact DP table, closed
//! forms for large k, return probabilities and the Green function.

use std::sync::Arc;

use crate::error::{RclError, Result};
use crate::lattice::{check_dim, l1, linf, Point, MAX_DIM};
use crate::special::LogFactorial;
use crate::stats::KahanSum;

/// Default cap on stored table entries (f64s).
pub const PMF_ENTRY_CAP: u128 = 1 << 26;

/// Exact p_k(x) for 0 <= k <= n on the box |x|_inf <= L.
///
/// Only parity-allowed entries are stored: with the box index
/// `idx = Σ (x_i + L) side^i`, the allowed entries at step k are exactly those
/// with `idx ≡ k + dL (mod 2)`, so `idx >> 1` addresses them without gaps.
#[derive(Clone, Debug)]
pub struct PmfTable {
    pub d: usize,
    pub n: usize,
    pub radius: i64,
    side: usize,
    rows: Vec<Vec<f64>>,
}

impl PmfTable {
    #[inline]
    fn index(&self, x: &Point) -> usize {
        let l = self.radius;
        let mut idx = 0usize;
        let mut stride = 1usize;
        for &c in x.iter().take(self.d) {
            idx += (c + l) as usize * stride;
            stride *= self.side;
        }
        idx
    }

    /// p_k(x); zero outside the box or off parity.
    pub fn get(&self, k: usize, x: &Point) -> f64 {
        if k > self.n || linf(x) > self.radius || x[self.d..].iter().any(|&c| c != 0) {
            return 0.0;
        }
        if (l1(x) as usize + k) % 2 == 1 {
            return 0.0;
        }
        self.rows[k][self.index(x) >> 1]
    }

    /// Total mass of row k (1 when L >= k).
    pub fn row_sum(&self, k: usize) -> f64 {
        self.rows[k].iter().copied().collect::<KahanSum>().value()
    }

    pub fn box_sites(&self) -> usize {
        self.side.pow(self.d as u32)
    }
}

/// Builds the table by exact convolution; errors when it would exceed `cap` entries.
pub fn pmf_table(d: usize, n: usize, radius: i64, cap: u128) -> Result<PmfTable> {
    check_dim(d)?;
    if radius < 0 {
        return Err(RclError::invalid("radius", "must be non-negative"));
    }
    let side = (2 * radius + 1) as usize;
    let sites = (side as u128).pow(d as u32);
    let half = sites.div_ceil(2);
    let requested = half * (n as u128 + 1);
    if requested > cap {
        return Err(RclError::BudgetExceeded {
            what: "pmf table",
            requested,
            cap,
        });
    }
    let sites = sites as usize;
    let half = half as usize;
    let dl = d * radius as usize;
    let mut strides = [0usize; MAX_DIM];
    let mut s = 1;
    for st in strides.iter_mut().take(d) {
        *st = s;
        s *= side;
    }
    let w = 1.0 / (2 * d) as f64;
    let mut rows = Vec::with_capacity(n + 1);
    let mut row0 = vec![0.0; half];
    let origin: usize = (0..d).map(|i| radius as usize * strides[i]).sum();
    row0[origin >> 1] = 1.0;
    rows.push(row0);
    for k in 1..=n {
        let prev = &rows[k - 1];
        let mut next = vec![0.0; half];
        let mut coords = [0usize; MAX_DIM];
        for idx in 0..sites {
            if idx > 0 {
                // odometer increment of coords
                let mut a = 0;
                loop {
                    coords[a] += 1;
                    if coords[a] < side {
                        break;
                    }
                    coords[a] = 0;
                    a += 1;
                }
            }
            if (idx + k + dl) % 2 == 1 {
                continue;
            }
            let mut acc = 0.0;
            for a in 0..d {
                if coords[a] > 0 {
                    acc += prev[(idx - strides[a]) >> 1];
                }
                if coords[a] + 1 < side {
                    acc += prev[(idx + strides[a]) >> 1];
                }
            }
            next[idx >> 1] = acc * w;
        }
        rows.push(next);
    }
    Ok(PmfTable {
        d,
        n,
        radius,
        side,
        rows,
    })
}

/// Closed-form p_k(x) via one-dimensional binomials, for large k.
///
/// d = 2 uses the rotation u = x1 + x2, v = x1 - x2 into two independent
/// one-dimensional walks; d >= 3 splits the steps between coordinate blocks
/// with a binomial and sums over the split.
#[derive(Clone, Debug)]
pub struct ClosedForm {
    pub d: usize,
    lf: Arc<LogFactorial>,
}

const LN2: f64 = std::f64::consts::LN_2;

impl ClosedForm {
    pub fn new(d: usize, max_steps: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(ClosedForm {
            d,
            lf: Arc::new(LogFactorial::new(max_steps + 1)),
        })
    }

    pub fn max_steps(&self) -> usize {
        self.lf.len() - 2
    }

    #[inline]
    fn ln_q1(&self, k: usize, y: i64) -> f64 {
        let ay = y.unsigned_abs() as usize;
        if ay > k || (k + ay) % 2 == 1 {
            return f64::NEG_INFINITY;
        }
        self.lf.ln_choose(k, (k + ay) / 2) - k as f64 * LN2
    }

    #[inline]
    fn ln_p2(&self, k: usize, a: i64, b: i64) -> f64 {
        self.ln_q1(k, a + b) + self.ln_q1(k, a - b)
    }

    /// Range of split sizes worth summing for Binomial(k, q).
    fn window(k: usize, q: f64) -> (usize, usize) {
        if k <= 400 {
            return (0, k);
        }
        let sd = (k as f64 * q * (1.0 - q)).sqrt();
        let c = k as f64 * q;
        let lo = (c - 14.0 * sd - 2.0).floor().max(0.0) as usize;
        let hi = ((c + 14.0 * sd + 2.0).ceil() as usize).min(k);
        (lo, hi)
    }

    fn p3(&self, k: usize, x: &[i64]) -> f64 {
        let need = x[0].unsigned_abs() as usize;
        let rest = (x[1].abs() + x[2].abs()) as usize;
        if need + rest > k || (k + need + rest) % 2 == 1 {
            return 0.0;
        }
        let (lo, hi) = Self::window(k, 1.0 / 3.0);
        let (l3, l23) = ((1.0f64 / 3.0).ln(), (2.0f64 / 3.0).ln());
        let mut acc = KahanSum::default();
        let start = lo.max(need);
        let start = if (start + need) % 2 == 1 { start + 1 } else { start };
        let mut a = start;
        while a <= hi && a + rest <= k {
            let lw = self.lf.ln_choose(k, a) + a as f64 * l3 + (k - a) as f64 * l23;
            let t = lw + self.ln_q1(a, x[0]) + self.ln_p2(k - a, x[1], x[2]);
            if t > -745.0 {
                acc.add(t.exp());
            }
            a += 2;
        }
        acc.value()
    }

    fn p4(&self, k: usize, x: &[i64]) -> f64 {
        let s12 = (x[0].abs() + x[1].abs()) as usize;
        let s34 = (x[2].abs() + x[3].abs()) as usize;
        if s12 + s34 > k || (k + s12 + s34) % 2 == 1 {
            return 0.0;
        }
        let (lo, hi) = Self::window(k, 0.5);
        let mut acc = KahanSum::default();
        let start = lo.max(s12);
        let start = if (start + s12) % 2 == 1 { start + 1 } else { start };
        let mut a = start;
        while a <= hi && a + s34 <= k {
            let t = self.lf.ln_choose(k, a) - k as f64 * LN2
                + self.ln_p2(a, x[0], x[1])
                + self.ln_p2(k - a, x[2], x[3]);
            if t > -745.0 {
                acc.add(t.exp());
            }
            a += 2;
        }
        acc.value()
    }

    fn p5(&self, k: usize, x: &[i64]) -> f64 {
        let s12 = (x[0].abs() + x[1].abs()) as usize;
        let s345 = (x[2].abs() + x[3].abs() + x[4].abs()) as usize;
        if s12 + s345 > k || (k + s12 + s345) % 2 == 1 {
            return 0.0;
        }
        let (lo, hi) = Self::window(k, 0.4);
        let (l25, l35) = (0.4f64.ln(), 0.6f64.ln());
        let mut acc = KahanSum::default();
        let start = lo.max(s12);
        let start = if (start + s12) % 2 == 1 { start + 1 } else { start };
        let mut a = start;
        while a <= hi && a + s345 <= k {
            let lw = self.lf.ln_choose(k, a) + a as f64 * l25 + (k - a) as f64 * l35;
            let inner = self.p3(k - a, &x[2..5]);
            if inner > 0.0 {
                let t = lw + self.ln_p2(a, x[0], x[1]) + inner.ln();
                if t > -745.0 {
                    acc.add(t.exp());
                }
            }
            a += 2;
        }
        acc.value()
    }

    /// p_k(x).
    pub fn prob(&self, k: usize, x: &Point) -> f64 {
        assert!(k <= self.max_steps(), "closed form built for fewer steps");
        match self.d {
            1 => self.ln_q1(k, x[0]).exp(),
            2 => self.ln_p2(k, x[0], x[1]).exp(),
            3 => self.p3(k, &x[..3]),
            4 => self.p4(k, &x[..4]),
            _ => self.p5(k, &x[..5]),
        }
    }

    /// p_k(x) for k = 0..=n.
    pub fn series(&self, x: &Point, n: usize) -> Vec<f64> {
        let r = l1(x) as usize;
        (0..=n)
            .map(|k| if k < r || (k + r) % 2 == 1 { 0.0 } else { self.prob(k, x) })
            .collect()
    }
}

/// Return probabilities p_m(0) for m = 0..=n.
pub fn return_probs(d: usize, n: usize) -> Result<Vec<f64>> {
    check_dim(d)?;
    let mut out = vec![0.0; n + 1];
    out[0] = 1.0;
    match d {
        1..=3 => {
            // r_j = C(2j, j) / 4^j; for d = 3 also u_j = a_j / 9^j where
            // n^2 a_n = (10n^2 - 10n + 3) a_{n-1} - 9 (n-1)^2 a_{n-2}.
            let mut r = 1.0;
            let (mut u_prev2, mut u_prev) = (0.0, 1.0);
            for j in 1..=n / 2 {
                let jf = j as f64;
                r *= (2.0 * jf - 1.0) / (2.0 * jf);
                let u = if j == 1 {
                    1.0 / 3.0
                } else {
                    ((10.0 * jf * jf - 10.0 * jf + 3.0) / 9.0 * u_prev
                        - (jf - 1.0) * (jf - 1.0) / 9.0 * u_prev2)
                        / (jf * jf)
                };
                out[2 * j] = match d {
                    1 => r,
                    2 => r * r,
                    _ => r * u,
                };
                u_prev2 = u_prev;
                u_prev = u;
            }
        }
        _ => {
            let cf = ClosedForm::new(d, n)?;
            for m in (2..=n).step_by(2) {
                out[m] = cf.prob(m, &[0; MAX_DIM]);
            }
        }
    }
    Ok(out)
}

/// G_n = Σ_{m=1}^n p_m(0): expected returns to the origin in steps 1..n.
pub fn green_function(d: usize, n: usize) -> Result<f64> {
    let p = return_probs(d, n)?;
    Ok(p[1..].iter().copied().collect::<KahanSum>().value())
}

/// Σ_{m=0}^n p_m(0) = 1 + G_n: the normalisation in the first-passage
/// (renewal) decomposition, which counts the visit at time 0.
pub fn renewal_green(d: usize, n: usize) -> Result<f64> {
    Ok(1.0 + green_function(d, n)?)
}

/// Cumulative sums Σ_{m=0}^k p_m(0) for k = 0..=n.
pub fn renewal_green_prefix(d: usize, n: usize) -> Result<Vec<f64>> {
    let p = return_probs(d, n)?;
    let mut acc = KahanSum::default();
    Ok(p.iter()
        .map(|&v| {
            acc.add(v);
            acc.value()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::point;
    use proptest::prelude::*;

    #[test]
    fn small_values() {
        let t1 = pmf_table(1, 4, 4, PMF_ENTRY_CAP).unwrap();
        assert_eq!(t1.get(1, &point(&[0])), 0.0);
        assert_eq!(t1.get(2, &point(&[0])), 0.5);
        let t2 = pmf_table(2, 2, 2, PMF_ENTRY_CAP).unwrap();
        assert_eq!(t2.get(2, &point(&[0, 0])), 0.25);
        assert!((green_function(1, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((green_function(2, 2).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rows_sum_to_one() {
        for d in 1..=3 {
            let t = pmf_table(d, 8, 8, PMF_ENTRY_CAP).unwrap();
            for k in 0..=8 {
                assert!((t.row_sum(k) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let e = pmf_table(3, 100, 100, 1 << 20).unwrap_err();
        assert!(matches!(e, RclError::BudgetExceeded { .. }));
    }

    #[test]
    fn closed_form_matches_table() {
        for d in 1..=5 {
            let n = if d <= 3 { 10 } else { 6 };
            let t = pmf_table(d, n, n as i64, PMF_ENTRY_CAP).unwrap();
            let cf = ClosedForm::new(d, n).unwrap();
            let probe: Vec<Point> = vec![
                point(&[0]),
                point(&[1]),
                point(&[2, 0]),
                point(&[1, 1]),
                point(&[1, -1, 0]),
                point(&[2, 1, 1]),
                point(&[1, 1, 1, 1]),
                point(&[0, 1, 0, 0, 1]),
            ];
            for x in &probe {
                if x[d..].iter().any(|&c| c != 0) {
                    continue;
                }
                for k in 0..=n {
                    let a = t.get(k, x);
                    let b = cf.prob(k, x);
                    assert!((a - b).abs() < 1e-13, "d={d} k={k} x={x:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn return_recursions_match_table() {
        for d in 1..=4 {
            let n = 12;
            let t = pmf_table(d, n, n as i64, PMF_ENTRY_CAP).unwrap();
            let r = return_probs(d, n).unwrap();
            for (m, v) in r.iter().enumerate() {
                assert!((t.get(m, &[0; MAX_DIM]) - v).abs() < 1e-14, "d={d} m={m}");
            }
        }
    }

    #[test]
    fn two_dim_green_grows_like_log_over_pi() {
        let a = green_function(2, 1 << 16).unwrap() / ((1u64 << 16) as f64).ln() * std::f64::consts::PI;
        let b = green_function(2, 1 << 20).unwrap() / ((1u64 << 20) as f64).ln() * std::f64::consts::PI;
        assert!((a - b).abs() / b < 0.05);
        assert!(b > a);
    }

    #[test]
    fn green_is_monotone() {
        for d in 1..=3 {
            let p = renewal_green_prefix(d, 2000).unwrap();
            assert!(p.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    proptest! {
        #[test]
        fn table_symmetry_and_parity(d in 1usize..=3, k in 0usize..7, raw in prop::collection::vec(-6i64..=6, 3)) {
            let t = pmf_table(d, 6, 6, PMF_ENTRY_CAP).unwrap();
            let mut x = [0i64; MAX_DIM];
            x[..d].copy_from_slice(&raw[..d]);
            let v = t.get(k, &x);
            let neg: Point = std::array::from_fn(|i| -x[i]);
            prop_assert!((v - t.get(k, &neg)).abs() < 1e-15);
            let mut rev = x;
            rev[..d].reverse();
            prop_assert!((v - t.get(k, &rev)).abs() < 1e-15);
            if (k as i64 + l1(&x)) % 2 == 1 {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
