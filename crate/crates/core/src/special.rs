//! Special functions used by the kernels and transition probabilities.

use std::f64::consts::{PI, SQRT_2};

use crate::stats::KahanSum;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal survival function 1 - Φ(x), accurate in the upper tail.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Exponential integral E_1(x) for x > 0.
pub fn exp_int_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E_1 needs x > 0");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..100 {
            term *= -x / k as f64;
            let t = term / k as f64;
            sum += t;
            if t.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // Modified Lentz continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Table of ln k! for 0 <= k <= n, summed with compensation.
#[derive(Clone, Debug)]
pub struct LogFactorial {
    table: Vec<f64>,
}

impl LogFactorial {
    pub fn new(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        let mut acc = KahanSum::default();
        table.push(0.0);
        for k in 1..=n {
            acc.add((k as f64).ln());
            table.push(acc.value());
        }
        LogFactorial { table }
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.table[k]
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// ln C(n, k).
    #[inline]
    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e1_reference_values() {
        // Abramowitz & Stegun table 5.1.
        assert!((exp_int_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
        assert!((exp_int_e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((exp_int_e1(2.0) - 0.048_900_510_708_061_12).abs() < 1e-15);
        assert!((exp_int_e1(10.0) - 4.156_968_929_685_324e-6).abs() < 1e-18);
    }

    #[test]
    fn e1_is_continuous_at_switch() {
        let a = exp_int_e1(1.0 - 1e-12);
        let b = exp_int_e1(1.0 + 1e-12);
        assert!((a - b).abs() < 1e-11);
    }

    #[test]
    fn normal_tails() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((2.0 * normal_sf(1.0) - 0.317_310_507_862_914_1).abs() < 1e-15);
        assert!(normal_sf(30.0) > 0.0);
    }

    #[test]
    fn log_factorial_exact_small() {
        let lf = LogFactorial::new(20);
        assert!((lf.get(10) - 3_628_800f64.ln()).abs() < 1e-13);
        assert!((lf.ln_choose(10, 3) - 120f64.ln()).abs() < 1e-13);
    }
}
