//! Exact sampling of walks conditioned on their endpoint.

use rand::Rng;

use crate::error::{RclError, Result};
use crate::lattice::{pick_weighted, ClosedForm, PmfTable, Point, WalkPath, MAX_DIM};

/// Source of transition probabilities p_k(x).
pub trait TransitionKernel {
    fn dim(&self) -> usize;
    fn prob(&self, k: usize, x: &Point) -> f64;
}

impl TransitionKernel for PmfTable {
    fn dim(&self) -> usize {
        self.d
    }
    fn prob(&self, k: usize, x: &Point) -> f64 {
        self.get(k, x)
    }
}

impl TransitionKernel for ClosedForm {
    fn dim(&self) -> usize {
        self.d
    }
    fn prob(&self, k: usize, x: &Point) -> f64 {
        ClosedForm::prob(self, k, x)
    }
}

/// Samples S_0..S_n from P(· | S_n = z): from y at time j the walk moves to
/// the neighbour y' with probability proportional to p_{n-j-1}(z - y').
pub fn sample_bridge<K: TransitionKernel + ?Sized, R: Rng + ?Sized>(
    n: usize,
    z: &Point,
    kernel: &K,
    rng: &mut R,
) -> Result<WalkPath> {
    let d = kernel.dim();
    if kernel.prob(n, z) <= 0.0 {
        return Err(RclError::UnreachableEndpoint {
            endpoint: z[..d].to_vec(),
            steps: n,
        });
    }
    let mut positions = Vec::with_capacity(n + 1);
    let mut cur = [0i64; MAX_DIM];
    positions.push(cur);
    let mut weights = vec![0.0; 2 * d];
    for j in 0..n {
        let left = n - j - 1;
        for (dir, w) in weights.iter_mut().enumerate() {
            let mut rem = *z;
            for i in 0..MAX_DIM {
                rem[i] -= cur[i];
            }
            rem[dir >> 1] -= if dir & 1 == 0 { 1 } else { -1 };
            *w = kernel.prob(left, &rem);
        }
        let dir = pick_weighted(&weights, rng);
        cur[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
        positions.push(cur);
    }
    debug_assert_eq!(&cur, z);
    Ok(WalkPath { d, positions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{point, pmf::PMF_ENTRY_CAP, pmf_table};
    use crate::rng::{label, stream};
    use proptest::prelude::*;

    #[test]
    fn two_step_bridge_to_origin_is_balanced() {
        let t = pmf_table(1, 2, 2, PMF_ENTRY_CAP).unwrap();
        let mut rng = stream(5, label::BRIDGE, 0);
        let mut up_first = 0;
        let reps = 40_000;
        for _ in 0..reps {
            let w = sample_bridge(2, &point(&[0]), &t, &mut rng).unwrap();
            if w.positions[1][0] == 1 {
                up_first += 1;
            }
        }
        let f = up_first as f64 / reps as f64;
        assert!((f - 0.5).abs() < 4.0 * (0.25 / reps as f64).sqrt());
    }

    #[test]
    fn forced_bridge_and_parity_error() {
        let t = pmf_table(1, 3, 3, PMF_ENTRY_CAP).unwrap();
        let mut rng = stream(5, label::BRIDGE, 1);
        let w = sample_bridge(2, &point(&[2]), &t, &mut rng).unwrap();
        assert_eq!(w.positions[1][0], 1);
        assert!(matches!(
            sample_bridge(3, &point(&[0]), &t, &mut rng),
            Err(RclError::UnreachableEndpoint { .. })
        ));
    }

    proptest! {
        #[test]
        fn bridges_end_at_target(d in 1usize..=3, seed: u64, raw in prop::collection::vec(-3i64..=3, 3)) {
            let n = 9usize;
            let mut z = [0i64; MAX_DIM];
            z[..d].copy_from_slice(&raw[..d]);
            let t = pmf_table(d, n, n as i64, PMF_ENTRY_CAP).unwrap();
            let mut rng = stream(seed, label::BRIDGE, 0);
            match sample_bridge(n, &z, &t, &mut rng) {
                Ok(w) => {
                    prop_assert_eq!(w.end(), z);
                    prop_assert!(w.is_nearest_neighbour());
                }
                Err(_) => prop_assert_eq!(t.get(n, &z), 0.0),
            }
        }
    }
}
