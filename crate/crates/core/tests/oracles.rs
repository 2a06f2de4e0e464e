//! Frozen brute-force values and property checks over the public API.
//!
//! The fractions below come from a separate enumeration of all (2d)^n paths.

use proptest::prelude::*;

use rcl::bm_range::range_cdf;
use rcl::disorder::Law;
use rcl::kpoint::{cpoint, psi_kernel, D1Reading};
use rcl::lattice::passage::{hit_prob_exact, DP_STATE_CAP};
use rcl::lattice::pmf::green_function;
use rcl::lattice::{linf, point, Point};
use rcl::polymer::{annealed_partition_exact, intersection_count, range_states};

fn hit(d: usize, n: usize, xs: &[&[i64]]) -> f64 {
    let pts: Vec<Point> = xs.iter().map(|c| point(c)).collect();
    hit_prob_exact(d, n, &pts, DP_STATE_CAP).unwrap()
}

#[test]
fn frozen_hitting_probabilities() {
    assert_eq!(hit(1, 5, &[&[1]]), 11.0 / 16.0);
    assert_eq!(hit(1, 6, &[&[0]]), 11.0 / 16.0);
    assert_eq!(hit(2, 4, &[&[1, 0]]), 21.0 / 64.0);
    assert_eq!(hit(2, 5, &[&[2, 1]]), 43.0 / 512.0);
    assert_eq!(hit(2, 6, &[&[1, 0], &[0, 1]]), 27.0 / 256.0);
}

#[test]
fn frozen_range_mean_and_annealed_values() {
    let states = range_states(2, 6).unwrap();
    let mean: f64 = states.iter().map(|(r, p)| r.len() as f64 * p).sum();
    assert!((mean - 155.0 / 32.0).abs() < 1e-12, "{mean}");
    let a = annealed_partition_exact(1, 6, Law::Gaussian, 0.5, 0.0).unwrap();
    assert!((a - 1.609_987_091_254_677_4).abs() < 1e-12, "{a}");
    let a = annealed_partition_exact(2, 5, Law::Gaussian, 0.8, 0.0).unwrap();
    assert!((a - 3.915_238_781_797_855).abs() < 1e-12, "{a}");
}

#[test]
fn frozen_green_values() {
    assert!((green_function(2, 8).unwrap() - 9225.0 / 16384.0).abs() < 1e-14);
    assert!((green_function(1, 10).unwrap() - 437.0 / 256.0).abs() < 1e-14);
}

fn small_point(d: usize) -> impl Strategy<Value = Point> {
    prop::collection::vec(-3i64..=3, d).prop_map(|c| point(&c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hitting_is_monotone_in_time(d in 1usize..=2, n in 1usize..8, x in small_point(2)) {
        let x = point(&x[..d]);
        let a = hit_prob_exact(d, n, &[x], DP_STATE_CAP).unwrap();
        let b = hit_prob_exact(d, n + 1, &[x], DP_STATE_CAP).unwrap();
        prop_assert!(a <= b + 1e-15);
        if linf(&x) as usize > n {
            prop_assert_eq!(a, 0.0);
        }
    }

    #[test]
    fn joint_hit_below_each_marginal(n in 2usize..8, x in small_point(2), y in small_point(2)) {
        prop_assume!(x != y);
        let both = hit_prob_exact(2, n, &[x, y], DP_STATE_CAP).unwrap();
        let px = hit_prob_exact(2, n, &[x], DP_STATE_CAP).unwrap();
        let py = hit_prob_exact(2, n, &[y], DP_STATE_CAP).unwrap();
        prop_assert!(both <= px.min(py) + 1e-15);
    }

    #[test]
    fn intersection_bounded_by_length(p in 2usize..=3, d in 1usize..=5, n in 0usize..400, seed: u64) {
        let s = intersection_count(p, d, n, seed, 0).unwrap();
        prop_assert!(s.j as usize <= n);
    }

    #[test]
    fn range_cdf_is_a_cdf(t in 0.1f64..10.0, a in 0.0f64..8.0, b in 0.0f64..8.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (fl, fh) = (range_cdf(lo * t.sqrt(), t), range_cdf(hi * t.sqrt(), t));
        prop_assert!((0.0..=1.0).contains(&fl) && (0.0..=1.0).contains(&fh));
        prop_assert!(fl <= fh + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn psi_symmetric_and_monotone(a in (-1.5f64..1.5, -1.5f64..1.5), b in (-1.5f64..1.5, -1.5f64..1.5)) {
        prop_assume!((a.0 - b.0).hypot(a.1 - b.1) > 0.2 && a.0.hypot(a.1) > 0.1 && b.0.hypot(b.1) > 0.1);
        let (x, y) = (cpoint(&[a.0, a.1]), cpoint(&[b.0, b.1]));
        let p = psi_kernel(2, 1.0, &[x, y], D1Reading::Ordered).unwrap();
        let q = psi_kernel(2, 1.0, &[y, x], D1Reading::Ordered).unwrap();
        prop_assert!(p.value > 0.0);
        prop_assert!((p.value - q.value).abs() <= 1e-8 + 4.0 * (p.err + q.err));
        let later = psi_kernel(2, 1.5, &[x, y], D1Reading::Ordered).unwrap();
        prop_assert!(later.value >= p.value - 4.0 * (p.err + later.err) - 1e-10);
    }
}
