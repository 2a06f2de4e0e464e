//! Brute-force reference values from the full list of (2d)^n paths.

use rustc_hash::FxHashMap;

use crate::disorder::{eta, lambda, Environment, Law};
use crate::lattice::{all_paths, range_of, Packing};
use crate::stats::KahanSum;

/// Every n-step path reduced to its sorted range.
pub struct Enumeration {
    pub d: usize,
    pub n: usize,
    pub packing: Packing,
    pub ranges: Vec<Vec<u64>>,
}

impl Enumeration {
    pub fn new(d: usize, n: usize) -> Self {
        let packing = Packing::new(d);
        let ranges = all_paths(d, n)
            .map(|p| {
                let mut keys: Vec<u64> = range_of(&p).visited().iter().map(|x| packing.pack(x)).collect();
                keys.sort_unstable();
                keys
            })
            .collect();
        Enumeration { d, n, packing, ranges }
    }

    fn total(&self) -> f64 {
        self.ranges.len() as f64
    }

    /// Path counts per site and per unordered site pair.
    pub fn hit_counts(&self) -> (FxHashMap<u64, u64>, FxHashMap<(u64, u64), u64>) {
        let mut single = FxHashMap::default();
        let mut pair = FxHashMap::default();
        for r in &self.ranges {
            for (i, &a) in r.iter().enumerate() {
                *single.entry(a).or_insert(0) += 1;
                for &b in &r[i + 1..] {
                    *pair.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
        (single, pair)
    }

    pub fn prob(&self, count: u64) -> f64 {
        count as f64 / self.total()
    }

    pub fn quenched(&self, env: &dyn Environment, beta: f64, h: f64) -> f64 {
        let mut z = KahanSum::default();
        for r in &self.ranges {
            let e: f64 = r.iter().map(|&k| beta * env.omega(&self.packing, k).expect("keyed field") + h).sum();
            z.add(e.exp());
        }
        z.value() / self.total()
    }

    pub fn annealed(&self, law: Law, beta: f64, h: f64) -> f64 {
        let c = lambda(law, beta) + h;
        let mut z = KahanSum::default();
        for r in &self.ranges {
            z.add((c * r.len() as f64).exp());
        }
        z.value() / self.total()
    }

    /// k = 1 and k = 2 expansion terms averaged over all paths.
    pub fn terms(&self, env: &dyn Environment, beta: f64) -> (f64, f64) {
        let law = env.law();
        let (mut t1, mut t2) = (KahanSum::default(), KahanSum::default());
        for r in &self.ranges {
            let etas: Vec<f64> = r
                .iter()
                .map(|&k| eta(law, beta, env.omega(&self.packing, k).expect("keyed field")))
                .collect();
            let s: f64 = etas.iter().sum();
            let s2: f64 = etas.iter().map(|e| e * e).sum();
            t1.add(s);
            t2.add(0.5 * (s * s - s2));
        }
        (beta * t1.value() / self.total(), beta * beta * t2.value() / self.total())
    }
}
