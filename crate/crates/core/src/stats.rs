//! Streaming estimators and small statistical helpers.

use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    pub fn scale(&mut self, f: f64) {
        self.sum *= f;
        self.comp *= f;
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Welford mean/variance accumulator with an exact merge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Welford) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64;
        self.n = n;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn from_slice(xs: &[f64]) -> Welford {
        let mut w = Welford::default();
        for &x in xs {
            w.push(x);
        }
        w
    }
}

/// Accumulates the first four central moments so the variance gets an error bar.
#[derive(Clone, Debug, Default)]
pub struct VarianceAcc {
    xs: Vec<f64>,
}

impl VarianceAcc {
    pub fn new(xs: Vec<f64>) -> Self {
        VarianceAcc { xs }
    }

    pub fn mean(&self) -> f64 {
        Welford::from_slice(&self.xs).mean
    }

    pub fn variance(&self) -> f64 {
        Welford::from_slice(&self.xs).variance()
    }

    /// Standard error of the sample variance, sqrt((m4 - s^4)/n).
    pub fn variance_stderr(&self) -> f64 {
        let n = self.xs.len() as f64;
        if n < 4.0 {
            return f64::INFINITY;
        }
        let mu = self.mean();
        let (mut m2, mut m4) = (KahanSum::default(), KahanSum::default());
        for &x in &self.xs {
            let d = (x - mu) * (x - mu);
            m2.add(d);
            m4.add(d * d);
        }
        let s2 = m2.value() / n;
        let k4 = m4.value() / n;
        ((k4 - s2 * s2).max(0.0) / n).sqrt()
    }
}

/// Streaming mean of `exp(x)` for log-weights `x`, robust to overflow.
///
/// Holds the running maximum and compensated sums of `exp(x - max)` and
/// `exp(2(x - max))`; merging rescales to the larger maximum.
#[derive(Clone, Copy, Debug)]
pub struct LogMeanExp {
    pub n: u64,
    max: f64,
    s1: KahanSum,
    s2: KahanSum,
}

impl Default for LogMeanExp {
    fn default() -> Self {
        LogMeanExp {
            n: 0,
            max: f64::NEG_INFINITY,
            s1: KahanSum::default(),
            s2: KahanSum::default(),
        }
    }
}

impl LogMeanExp {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            let f = (self.max - x).exp();
            self.s1.scale(f);
            self.s2.scale(f * f);
            self.max = x;
        }
        let e = (x - self.max).exp();
        self.s1.add(e);
        self.s2.add(e * e);
    }

    pub fn merge(&mut self, o: &LogMeanExp) {
        self.n += o.n;
        if o.max == f64::NEG_INFINITY {
            return;
        }
        let mut other = *o;
        if o.max > self.max {
            let f = (self.max - o.max).exp();
            self.s1.scale(f);
            self.s2.scale(f * f);
            self.max = o.max;
        } else {
            let f = (o.max - self.max).exp();
            other.s1.scale(f);
            other.s2.scale(f * f);
        }
        self.s1.add(other.s1.value());
        self.s2.add(other.s2.value());
    }

    /// log of the sample mean of exp(x).
    pub fn log_mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.max + (self.s1.value() / self.n as f64).ln()
    }

    pub fn mean(&self) -> f64 {
        self.log_mean().exp()
    }

    /// Standard error of the sample mean of exp(x).
    pub fn stderr(&self) -> f64 {
        if self.n < 2 || self.max == f64::NEG_INFINITY {
            return 0.0;
        }
        let n = self.n as f64;
        let m1 = self.s1.value() / n;
        let m2 = self.s2.value() / n;
        let var = (m2 - m1 * m1).max(0.0) * n / (n - 1.0);
        (var / n).sqrt() * self.max.exp()
    }

    /// Kish effective sample size of the weights exp(x).
    pub fn ess(&self) -> f64 {
        let s2 = self.s2.value();
        if s2 <= 0.0 {
            return 0.0;
        }
        let s1 = self.s1.value();
        s1 * s1 / s2
    }
}

/// Linear-interpolated quantile of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted(xs), 0.5)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let a = sorted(a);
    let b = sorted(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of the two-sample KS statistic.
pub fn ks_pvalue(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lam = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lam < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lam * lam).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Ordinary least squares fit `y = a + b x`; returns `(b, a, stderr of b)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    let se = if n > 2.0 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (b, a, se)
}

/// Weighted least squares with weights `w` (inverse variances).
pub fn wls(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(v, wi)| wi * (v - mx) * (v - mx)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, b), wi)| wi * (a - mx) * (b - my))
        .sum();
    let b = sxy / sxx;
    (b, my - b * mx, (1.0 / sxx).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn log_mean_exp_matches_direct() {
        let xs = [0.1, -2.0, 3.5, 0.0, 1.25];
        let mut acc = LogMeanExp::default();
        for &x in &xs {
            acc.push(x);
        }
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>() / xs.len() as f64;
        assert!((acc.mean() - direct).abs() < 1e-12 * direct);
        let w = Welford::from_slice(&xs.iter().map(|x| x.exp()).collect::<Vec<_>>());
        assert!((acc.stderr() - w.stderr()).abs() < 1e-10);
    }

    #[test]
    fn log_mean_exp_survives_huge_values() {
        let mut acc = LogMeanExp::default();
        acc.push(1000.0);
        acc.push(1000.0);
        assert!((acc.log_mean() - 1000.0).abs() < 1e-12);
        assert!((acc.ess() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ks_of_identical_samples_is_zero() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
    }

    #[test]
    fn ols_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.5 * v).collect();
        let (b, a, _) = ols(&x, &y);
        assert!((b - 0.5).abs() < 1e-12 && (a - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn welford_merge_is_split_invariant(xs in prop::collection::vec(-1e3f64..1e3, 2..64), cut in 0usize..64) {
            let cut = cut.min(xs.len());
            let mut a = Welford::from_slice(&xs[..cut]);
            a.merge(&Welford::from_slice(&xs[cut..]));
            let whole = Welford::from_slice(&xs);
            prop_assert!((a.mean - whole.mean).abs() < 1e-9);
            prop_assert!((a.variance() - whole.variance()).abs() < 1e-6 * (1.0 + whole.variance()));
        }

        #[test]
        fn log_mean_exp_merge_is_split_invariant(xs in prop::collection::vec(-50f64..50.0, 1..64), cut in 0usize..64) {
            let cut = cut.min(xs.len());
            let mut a = LogMeanExp::default();
            let mut b = LogMeanExp::default();
            let mut whole = LogMeanExp::default();
            for &x in &xs[..cut] { a.push(x); }
            for &x in &xs[cut..] { b.push(x); }
            for &x in &xs { whole.push(x); }
            a.merge(&b);
            prop_assert!((a.log_mean() - whole.log_mean()).abs() < 1e-12);
        }
    }
}
