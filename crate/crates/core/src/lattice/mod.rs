//! Simple symmetric random walks on Z^d: paths, ranges, transition
//! probabilities, Green functions, first passage and bridges.

pub mod bridge;
pub mod passage;
pub mod pmf;

use rand::{Rng, RngCore};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{RclError, Result};

pub use bridge::{sample_bridge, TransitionKernel};
pub use passage::{hit_prob_exact, FirstPassage, OnePointRenewal};
pub use pmf::{green_function, pmf_table, renewal_green, return_probs, ClosedForm, PmfTable};

pub const MAX_DIM: usize = 5;

/// A lattice point; coordinates past the dimension are zero.
pub type Point = [i64; MAX_DIM];

pub fn point(coords: &[i64]) -> Point {
    assert!(coords.len() <= MAX_DIM);
    let mut p = [0; MAX_DIM];
    p[..coords.len()].copy_from_slice(coords);
    p
}

#[inline]
pub fn l1(p: &Point) -> i64 {
    p.iter().map(|c| c.abs()).sum()
}

#[inline]
pub fn linf(p: &Point) -> i64 {
    p.iter().map(|c| c.abs()).max().unwrap_or(0)
}

pub fn check_dim(d: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(RclError::UnsupportedDimension {
            d,
            reason: "walks are implemented for 1 <= d <= 5",
        })
    }
}

/// Offset encoding of a point into one u64: `64 / d` bits per coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Packing {
    pub d: usize,
    bits: u32,
    offset: i64,
}

impl Packing {
    pub fn new(d: usize) -> Self {
        let bits = (64 / d as u32).min(32);
        Packing {
            d,
            bits,
            offset: 1i64 << (bits - 1),
        }
    }

    /// Coordinates must satisfy |x_i| < limit.
    pub fn limit(&self) -> i64 {
        self.offset
    }

    /// True when an n-step walk can never overflow.
    pub fn always_fits(&self, n: u64) -> bool {
        n < self.offset as u64
    }

    #[inline]
    pub fn unit(&self, axis: usize) -> u64 {
        1u64 << (axis as u32 * self.bits)
    }

    #[inline]
    pub fn pack(&self, p: &Point) -> u64 {
        let mut key = 0u64;
        for (i, &c) in p.iter().enumerate().take(self.d) {
            key |= ((c + self.offset) as u64) << (i as u32 * self.bits);
        }
        key
    }

    #[inline]
    pub fn origin(&self) -> u64 {
        self.pack(&[0; MAX_DIM])
    }

    pub fn unpack(&self, key: u64) -> Point {
        let mask = if self.bits == 64 { u64::MAX } else { (1u64 << self.bits) - 1 };
        let mut p = [0; MAX_DIM];
        for (i, c) in p.iter_mut().enumerate().take(self.d) {
            *c = ((key >> (i as u32 * self.bits)) & mask) as i64 - self.offset;
        }
        p
    }
}

/// Draws uniform directions in `0..2d` exactly, using every bit of each
/// random word when `2d` is a power of two.
pub struct StepSource {
    two_d: u32,
    bits: u32,
    buf: u64,
    left: u32,
}

impl StepSource {
    pub fn new(d: usize) -> Self {
        let two_d = 2 * d as u32;
        let bits = if two_d.is_power_of_two() { two_d.trailing_zeros() } else { 0 };
        StepSource {
            two_d,
            bits,
            buf: 0,
            left: 0,
        }
    }

    /// Returns `(axis, +1 | -1)`.
    #[inline]
    pub fn next<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> (usize, i64) {
        let dir = if self.bits > 0 {
            if self.left < self.bits {
                self.buf = rng.next_u64();
                self.left = 64 - 64 % self.bits;
            }
            let v = (self.buf & ((1 << self.bits) - 1)) as u32;
            self.buf >>= self.bits;
            self.left -= self.bits;
            v
        } else {
            rng.random_range(0..self.two_d)
        };
        ((dir >> 1) as usize, if dir & 1 == 0 { 1 } else { -1 })
    }
}

/// One n-step trajectory S_0 = 0, ..., S_n.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkPath {
    pub d: usize,
    pub positions: Vec<Point>,
}

impl WalkPath {
    pub fn steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn end(&self) -> Point {
        *self.positions.last().expect("path has S_0")
    }

    /// Every consecutive pair differs by one unit step.
    pub fn is_nearest_neighbour(&self) -> bool {
        self.positions[0] == [0; MAX_DIM]
            && self.positions.windows(2).all(|w| {
                let mut diff = [0; MAX_DIM];
                for i in 0..MAX_DIM {
                    diff[i] = w[1][i] - w[0][i];
                }
                l1(&diff) == 1
            })
    }

    /// Builds a path from direction indices in `0..2d` (even = +, odd = -).
    pub fn from_dirs(d: usize, dirs: &[u32]) -> WalkPath {
        let mut positions = Vec::with_capacity(dirs.len() + 1);
        let mut cur = [0; MAX_DIM];
        positions.push(cur);
        for &dir in dirs {
            let axis = (dir >> 1) as usize;
            assert!(axis < d);
            cur[axis] += if dir & 1 == 0 { 1 } else { -1 };
            positions.push(cur);
        }
        WalkPath { d, positions }
    }
}

pub fn sample_walk<R: RngCore + ?Sized>(d: usize, n: usize, rng: &mut R) -> WalkPath {
    let mut steps = StepSource::new(d);
    let mut positions = Vec::with_capacity(n + 1);
    let mut cur = [0; MAX_DIM];
    positions.push(cur);
    for _ in 0..n {
        let (axis, s) = steps.next(rng);
        cur[axis] += s;
        positions.push(cur);
    }
    WalkPath { d, positions }
}

/// Visited sites over steps 1..n with their first hitting times.
#[derive(Clone, Debug)]
pub struct RangeRecord {
    pub packing: Packing,
    pub hits: FxHashMap<u64, u32>,
}

impl RangeRecord {
    pub fn cardinality(&self) -> usize {
        self.hits.len()
    }

    pub fn hit_time(&self, p: &Point) -> Option<u32> {
        self.hits.get(&self.packing.pack(p)).copied()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.hits.contains_key(&self.packing.pack(p))
    }

    pub fn visited(&self) -> Vec<Point> {
        let mut v: Vec<Point> = self.hits.keys().map(|&k| self.packing.unpack(k)).collect();
        v.sort_unstable();
        v
    }
}

pub fn range_of(path: &WalkPath) -> RangeRecord {
    let packing = Packing::new(path.d);
    let mut hits = FxHashMap::default();
    for (i, p) in path.positions.iter().enumerate().skip(1) {
        hits.entry(packing.pack(p)).or_insert(i as u32);
    }
    RangeRecord { packing, hits }
}

/// Reusable sampler that streams a walk straight into a packed visited set.
pub struct RangeWalker {
    pub packing: Packing,
    pub d: usize,
    steps: StepSource,
    checked: bool,
    pub visited: FxHashSet<u64>,
    pub end: Point,
}

impl RangeWalker {
    pub fn new(d: usize, n: usize) -> Self {
        let packing = Packing::new(d);
        RangeWalker {
            packing,
            d,
            steps: StepSource::new(d),
            checked: !packing.always_fits(n as u64),
            visited: FxHashSet::default(),
            end: [0; MAX_DIM],
        }
    }

    /// Samples an n-step walk; `visited` then holds its range.
    pub fn run<R: RngCore + ?Sized>(&mut self, n: usize, rng: &mut R) -> Result<usize> {
        self.visited.clear();
        let mut key = self.packing.origin();
        let mut cur = [0i64; MAX_DIM];
        let limit = self.packing.limit();
        for _ in 0..n {
            let (axis, s) = self.steps.next(rng);
            cur[axis] += s;
            if self.checked && cur[axis].abs() >= limit {
                return Err(RclError::CoordinateOverflow { limit });
            }
            let u = self.packing.unit(axis);
            key = if s > 0 { key.wrapping_add(u) } else { key.wrapping_sub(u) };
            self.visited.insert(key);
        }
        self.end = cur;
        Ok(self.visited.len())
    }

    /// Samples a walk and calls `visit(key, step)` at each first visit.
    pub fn run_first_visits<R: RngCore + ?Sized>(
        &mut self,
        n: usize,
        rng: &mut R,
        mut visit: impl FnMut(u64, usize),
    ) -> Result<usize> {
        self.visited.clear();
        let mut key = self.packing.origin();
        let mut cur = [0i64; MAX_DIM];
        let limit = self.packing.limit();
        for step in 1..=n {
            let (axis, s) = self.steps.next(rng);
            cur[axis] += s;
            if self.checked && cur[axis].abs() >= limit {
                return Err(RclError::CoordinateOverflow { limit });
            }
            let u = self.packing.unit(axis);
            key = if s > 0 { key.wrapping_add(u) } else { key.wrapping_sub(u) };
            if self.visited.insert(key) {
                visit(key, step);
            }
        }
        self.end = cur;
        Ok(self.visited.len())
    }
}

/// Runs a 1D walk and returns `(min, max, first time reaching target)`, all
/// over steps 1..=n; the time is `None` when the target is not reached.
pub fn walk_extremes_1d<R: RngCore + ?Sized>(
    n: usize,
    target: i64,
    rng: &mut R,
) -> (i64, i64, Option<usize>) {
    let mut x = 0i64;
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    let mut hit = None;
    let mut done = 0;
    while done < n {
        let word = rng.next_u64();
        let take = (n - done).min(64);
        for b in 0..take {
            x += if (word >> b) & 1 == 0 { 1 } else { -1 };
            lo = lo.min(x);
            hi = hi.max(x);
            if hit.is_none() && x == target {
                hit = Some(done + b + 1);
            }
        }
        done += take;
    }
    (lo, hi, hit)
}

/// Fixed enumeration of all `(2d)^n` direction sequences, for oracles.
pub fn all_paths(d: usize, n: usize) -> impl Iterator<Item = WalkPath> {
    let two_d = 2 * d as u64;
    let total = two_d.pow(n as u32);
    (0..total).map(move |mut code| {
        let mut dirs = Vec::with_capacity(n);
        for _ in 0..n {
            dirs.push((code % two_d) as u32);
            code /= two_d;
        }
        WalkPath::from_dirs(d, &dirs)
    })
}

/// Helper for uniform choice among `k` weights (used by bridges).
pub(crate) fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{label, stream};
    use proptest::prelude::*;

    #[test]
    fn empty_walk() {
        let w = sample_walk(1, 0, &mut stream(1, label::WALK, 0));
        assert_eq!(w.positions, vec![[0; MAX_DIM]]);
        assert_eq!(range_of(&w).cardinality(), 0);
    }

    #[test]
    fn range_of_plus_minus() {
        let w = WalkPath::from_dirs(1, &[0, 1]);
        let r = range_of(&w);
        assert_eq!(r.cardinality(), 2);
        assert_eq!(r.hit_time(&point(&[1])), Some(1));
        assert_eq!(r.hit_time(&point(&[0])), Some(2));
    }

    #[test]
    fn enumerated_two_step_facts() {
        let paths: Vec<_> = all_paths(1, 2).collect();
        assert_eq!(paths.len(), 4);
        let ret = paths.iter().filter(|p| p.end() == [0; MAX_DIM]).count();
        assert_eq!(ret, 2);
        assert!(paths.iter().all(|p| range_of(p).cardinality() == 2));
        let hit1 = paths.iter().filter(|p| range_of(p).contains(&point(&[1]))).count();
        assert_eq!(hit1, 2);
    }

    #[test]
    fn packing_roundtrip_extremes() {
        for d in 1..=MAX_DIM {
            let pk = Packing::new(d);
            let lim = pk.limit() - 1;
            let p = point(&vec![lim; d]);
            let q = point(&vec![-lim; d]);
            assert_eq!(pk.unpack(pk.pack(&p)), p);
            assert_eq!(pk.unpack(pk.pack(&q)), q);
        }
    }

    #[test]
    fn step_source_is_uniform() {
        for d in 1..=MAX_DIM {
            let mut src = StepSource::new(d);
            let mut rng = stream(3, label::WALK, d as u64);
            let mut counts = vec![0usize; 2 * d];
            let n = 120_000;
            for _ in 0..n {
                let (axis, s) = src.next(&mut rng);
                counts[2 * axis + usize::from(s < 0)] += 1;
            }
            let expect = n as f64 / (2 * d) as f64;
            for c in counts {
                assert!((c as f64 - expect).abs() < 5.0 * expect.sqrt(), "d={d}");
            }
        }
    }

    #[test]
    fn mean_square_displacement_is_n() {
        let n = 50;
        let reps = 20_000;
        let mut acc = 0.0;
        let mut rng = stream(9, label::WALK, 0);
        for _ in 0..reps {
            let w = sample_walk(3, n, &mut rng);
            let e = w.end();
            acc += e.iter().map(|c| (c * c) as f64).sum::<f64>();
        }
        let mean = acc / reps as f64;
        // Var |S_n|^2 <= 3 n^2 roughly; generous 5-sigma band.
        assert!((mean - n as f64).abs() < 5.0 * (2.0 * (n * n) as f64 / reps as f64).sqrt());
    }

    #[test]
    fn overflow_is_reported() {
        // d = 5 leaves 12 bits per coordinate; force a long walk with a
        // deterministic source that always steps +x.
        struct Up;
        impl RngCore for Up {
            fn next_u32(&mut self) -> u32 {
                0
            }
            fn next_u64(&mut self) -> u64 {
                0
            }
            fn fill_bytes(&mut self, dst: &mut [u8]) {
                dst.fill(0)
            }
        }
        let mut w = RangeWalker::new(5, 5000);
        assert!(matches!(w.run(5000, &mut Up), Err(RclError::CoordinateOverflow { .. })));
    }

    proptest! {
        #[test]
        fn sampled_paths_are_nearest_neighbour(d in 1usize..=5, n in 0usize..200, seed: u64) {
            let w = sample_walk(d, n, &mut stream(seed, label::WALK, 0));
            prop_assert_eq!(w.positions.len(), n + 1);
            prop_assert!(w.is_nearest_neighbour());
            let r = range_of(&w);
            prop_assert!(r.cardinality() <= n);
            let returns = w.positions[1..].contains(&[0; MAX_DIM]);
            prop_assert_eq!(r.contains(&[0; MAX_DIM]), returns);
        }

        #[test]
        fn streaming_range_matches_path_range(d in 1usize..=5, n in 0usize..300, seed: u64) {
            let w = sample_walk(d, n, &mut stream(seed, label::WALK, 1));
            let mut rw = RangeWalker::new(d, n);
            let card = rw.run(n, &mut stream(seed, label::WALK, 1)).unwrap();
            prop_assert_eq!(card, range_of(&w).cardinality());
            prop_assert_eq!(rw.end, w.end());
        }
    }
}
