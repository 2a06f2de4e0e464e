//! Random environment: site disorder ω_x, its cumulant λ(β), the tilted
//! variables η_x(β) and the intermediate-disorder schedules β_N.

use serde::{Deserialize, Serialize};

use crate::error::{RclError, Result};
use crate::lattice::{check_dim, linf, Packing, Point};
use crate::rng::{keyed_gaussian, keyed_sign};

/// Law of a single ω_x; both are centred with unit variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Law {
    #[default]
    Gaussian,
    Rademacher,
}

impl std::str::FromStr for Law {
    type Err = RclError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Law::Gaussian),
            "rademacher" => Ok(Law::Rademacher),
            other => Err(RclError::invalid("disorder.law", format!("unknown law `{other}`"))),
        }
    }
}

/// λ(β) = log E e^{βω}.
pub fn lambda(law: Law, beta: f64) -> f64 {
    match law {
        Law::Gaussian => 0.5 * beta * beta,
        // log cosh β, stable for large |β|
        Law::Rademacher => {
            let a = beta.abs();
            a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
        }
    }
}

/// η = (e^{βω - λ(β)} - 1) / β, continued by η = ω at β = 0.
pub fn eta(law: Law, beta: f64, omega: f64) -> f64 {
    if beta == 0.0 {
        return omega;
    }
    (beta * omega - lambda(law, beta)).exp_m1() / beta
}

/// Var η(β).
pub fn eta_variance(law: Law, beta: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    match law {
        Law::Gaussian => (beta * beta).exp_m1() / (beta * beta),
        Law::Rademacher => {
            let t = beta.tanh();
            t * t / (beta * beta)
        }
    }
}

/// E η(β)^4 from E e^{j(βω - λ)} = e^{λ(jβ) - jλ(β)}.
pub fn eta_fourth_moment(law: Law, beta: f64) -> f64 {
    if beta == 0.0 {
        return 3.0;
    }
    let l = lambda(law, beta);
    let coef = [1.0, -4.0, 6.0, -4.0, 1.0];
    let mut s = 0.0;
    for (j, c) in coef.iter().enumerate() {
        let jf = j as f64;
        // (-1)^{4-j} C(4, j) with j counting powers of the exponential
        s += c * (lambda(law, jf * beta) - jf * l).exp();
    }
    s / beta.powi(4)
}

/// β_N = β̂ a_N with the dimension-dependent rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub d: usize,
    pub beta_hat: f64,
}

pub fn beta_schedule(d: usize, beta_hat: f64) -> Result<BetaSchedule> {
    match d {
        1..=3 => {}
        4 => {
            return Err(RclError::UnsupportedDimension {
                d,
                reason: "critical dimension, out of scope",
            })
        }
        _ => {
            return Err(RclError::UnsupportedDimension {
                d,
                reason: "disorder is irrelevant for d >= 5",
            })
        }
    }
    if !(beta_hat >= 0.0 && beta_hat.is_finite()) {
        return Err(RclError::invalid("beta_hat", "must be finite and >= 0"));
    }
    Ok(BetaSchedule { d, beta_hat })
}

impl BetaSchedule {
    /// a_N = β_N / β̂.
    pub fn a(&self, n: f64) -> f64 {
        match self.d {
            2 => n.ln() / n.sqrt(),
            _ => n.powf(-0.25),
        }
    }

    pub fn beta(&self, n: f64) -> f64 {
        self.beta_hat * self.a(n)
    }

    /// v_N = N^{-d/2}.
    pub fn v(&self, n: f64) -> f64 {
        n.powf(-(self.d as f64) / 2.0)
    }

    /// k_N = a_N / sqrt(v_N): log N for d = 2, sqrt N for d = 3, 1 for d = 1.
    pub fn k(&self, n: f64) -> f64 {
        match self.d {
            1 => 1.0,
            2 => n.ln(),
            _ => n.sqrt(),
        }
    }
}

/// Anything that yields ω at a packed lattice site.
pub trait Environment: Sync {
    fn law(&self) -> Law;
    fn omega(&self, packing: &Packing, key: u64) -> Result<f64>;
}

/// Lazily derived field: ω_x is a pure hash of (seed, site).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteField {
    pub law: Law,
    pub seed: u64,
}

impl SiteField {
    #[inline]
    pub fn omega_key(&self, key: u64) -> f64 {
        match self.law {
            Law::Gaussian => keyed_gaussian(self.seed, key),
            Law::Rademacher => keyed_sign(self.seed, key),
        }
    }

    pub fn omega_at(&self, d: usize, x: &Point) -> f64 {
        self.omega_key(Packing::new(d).pack(x))
    }
}

impl Environment for SiteField {
    fn law(&self) -> Law {
        self.law
    }
    #[inline]
    fn omega(&self, _packing: &Packing, key: u64) -> Result<f64> {
        Ok(self.omega_key(key))
    }
}

/// Default cap on materialised field entries.
pub const FIELD_SITE_CAP: u128 = 1 << 27;

/// A field materialised on the box |x|_inf <= radius; its values coincide
/// with the lazy [`SiteField`] of the same seed.
#[derive(Clone, Debug)]
pub struct DisorderField {
    pub law: Law,
    pub seed: u64,
    pub d: usize,
    pub radius: i64,
    values: Vec<f64>,
}

impl DisorderField {
    fn index(&self, x: &Point) -> usize {
        let side = (2 * self.radius + 1) as usize;
        let mut idx = 0;
        let mut stride = 1;
        for &c in x.iter().take(self.d) {
            idx += (c + self.radius) as usize * stride;
            stride *= side;
        }
        idx
    }

    pub fn get(&self, x: &Point) -> Result<f64> {
        if linf(x) > self.radius {
            return Err(RclError::FieldCoverage {
                site: x[..self.d].to_vec(),
                radius: self.radius,
            });
        }
        Ok(self.values[self.index(x)])
    }

    /// Replaces ω at one site (for hand-built oracle fields).
    pub fn set(&mut self, x: &Point, v: f64) -> Result<()> {
        self.get(x)?;
        let i = self.index(x);
        self.values[i] = v;
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Environment for DisorderField {
    fn law(&self) -> Law {
        self.law
    }
    fn omega(&self, packing: &Packing, key: u64) -> Result<f64> {
        self.get(&packing.unpack(key))
    }
}

pub fn sample_field(law: Law, d: usize, radius: i64, seed: u64, cap: u128) -> Result<DisorderField> {
    check_dim(d)?;
    let side = (2 * radius + 1) as u128;
    let sites = side.pow(d as u32);
    if sites > cap {
        return Err(RclError::BudgetExceeded {
            what: "disorder window",
            requested: sites,
            cap,
        });
    }
    let lazy = SiteField { law, seed };
    let packing = Packing::new(d);
    let side = side as usize;
    let values = (0..sites as usize)
        .map(|mut idx| {
            let mut p = [0i64; crate::lattice::MAX_DIM];
            for c in p.iter_mut().take(d) {
                *c = (idx % side) as i64 - radius;
                idx /= side;
            }
            lazy.omega_key(packing.pack(&p))
        })
        .collect();
    Ok(DisorderField {
        law,
        seed,
        d,
        radius,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::point;
    use crate::stats::Welford;
    use proptest::prelude::*;

    #[test]
    fn lambda_values() {
        assert_eq!(lambda(Law::Gaussian, 0.0), 0.0);
        assert_eq!(lambda(Law::Gaussian, 0.5), 0.125);
        assert!((lambda(Law::Rademacher, 1.0) - 1f64.cosh().ln()).abs() < 1e-15);
        assert!((lambda(Law::Rademacher, 1.0) - 0.433_781).abs() < 1e-6);
        assert!(lambda(Law::Rademacher, 800.0).is_finite());
    }

    #[test]
    fn eta_limits_and_moments() {
        assert_eq!(eta(Law::Gaussian, 0.0, 0.7), 0.7);
        assert!((eta(Law::Gaussian, 1e-9, 0.7) - 0.7).abs() < 1e-8);
        let f = sample_field(Law::Gaussian, 1, 500_000, 42, FIELD_SITE_CAP).unwrap();
        let mut w = Welford::default();
        for &o in f.values() {
            w.push(eta(Law::Gaussian, 0.1, o));
        }
        assert!(w.mean.abs() < 4.0 * w.stderr());
        let v = eta_variance(Law::Gaussian, 0.1);
        assert!(w.variance() >= 0.99 * v && w.variance() <= 1.03 * v);
    }

    #[test]
    fn field_moments_and_determinism() {
        let f = sample_field(Law::Gaussian, 1, 500_000, 7, FIELD_SITE_CAP).unwrap();
        let w = Welford::from_slice(f.values());
        assert!(w.mean.abs() < 4e-3);
        assert!((w.variance() - 1.0).abs() < 6e-3);
        let g = sample_field(Law::Gaussian, 1, 500_000, 7, FIELD_SITE_CAP).unwrap();
        assert_eq!(f.values(), g.values());
        let lazy = SiteField { law: Law::Gaussian, seed: 7 };
        assert_eq!(f.get(&point(&[123])).unwrap(), lazy.omega_at(1, &point(&[123])));
        assert!(matches!(f.get(&point(&[500_001])), Err(RclError::FieldCoverage { .. })));
    }

    #[test]
    fn normalised_exponential_has_unit_mean() {
        for law in [Law::Gaussian, Law::Rademacher] {
            let f = SiteField { law, seed: 3 };
            for beta in [0.1, 0.5, 1.0] {
                let n = 1_000_000u64;
                let mut w = Welford::default();
                for k in 0..n {
                    w.push((beta * f.omega_key(k) - lambda(law, beta)).exp());
                }
                assert!((w.mean - 1.0).abs() < 1e-3 + 4.0 * w.stderr(), "{law:?} {beta}");
            }
        }
    }

    #[test]
    fn fourth_moment_matches_gaussian_limit() {
        assert!((eta_fourth_moment(Law::Gaussian, 1e-3) - 3.0).abs() < 1e-2);
        assert!((eta_fourth_moment(Law::Rademacher, 1e-3) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn schedules() {
        let s = beta_schedule(2, 1.0).unwrap();
        let n = 4f64.exp();
        assert!((s.beta(n) - 4.0 / 2f64.exp()).abs() < 1e-12);
        let s3 = beta_schedule(3, 2.0).unwrap();
        assert!((s3.beta(16.0) - 1.0).abs() < 1e-15);
        for n in [1e2, 1e4] {
            assert!((s.a(n) / s.v(n).sqrt() - s.k(n)).abs() < 1e-9 * s.k(n));
        }
        let e = beta_schedule(4, 1.0).unwrap_err();
        assert!(e.to_string().contains("critical dimension, out of scope"));
        assert!(beta_schedule(5, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn eta_identity(beta in 1e-3f64..2.0, omega in -6.0f64..6.0) {
            for law in [Law::Gaussian, Law::Rademacher] {
                let lhs = beta * eta(law, beta, omega) + 1.0;
                let rhs = (beta * omega - lambda(law, beta)).exp();
                prop_assert!((lhs - rhs).abs() <= 1e-13 * rhs.max(1.0));
            }
        }

        #[test]
        fn schedules_decrease(d in 1usize..=3, bh in 0.1f64..3.0, n in 8.0f64..1e7) {
            let s = beta_schedule(d, bh).unwrap();
            prop_assert!(s.beta(n * 1.01) < s.beta(n));
        }
    }
}
