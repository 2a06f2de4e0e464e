//! Acceptance criteria 1-10, each reduced to one pass/fail line plus the
//! numbers it was decided on.

pub mod oracle;

use std::fmt;
use std::time::Instant;

use crate::bm_range::{annealed_z1d_exact, env_averaged_z1d, range_median, sample_summaries, scaling_study, CellOptions, PathScheme};
use crate::chaos::{
    calibrate_c, chaos_replicas, l2_bound, l2_norm_psi, law_comparison, psi1_l2_exact, summarize, ChaosPlan, LawOptions,
    PlanOptions,
};
use crate::disorder::{beta_schedule, lambda, Law, SiteField};
use crate::error::Result;
use crate::kpoint::{cpoint, kpt_limit_exact, kpt_limit_mc, SiteProfile};
use crate::lattice::{hit_prob_exact, linf, passage::DP_STATE_CAP, point, Packing, Point};
use crate::par::with_width;
use crate::polymer::{
    annealed_partition, annealed_partition_exact, ball_sites, expansion_term1_mc, expansion_term_exact, overlap_samples,
    overlap_scaling, quenched_intermediate, quenched_partition, quenched_partition_exact, WalkEnsemble,
};
use crate::rng::{derive_seed, label};
use crate::special::{exp_int_e1, normal_sf};
use crate::stats::{median, VarianceAcc};

use oracle::Enumeration;

/// Full-size runs for the suite, reduced runs for the determinism replays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    fn pick<T>(self, full: T, quick: T) -> T {
        match self {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: Vec<String>,
    /// Every number the verdict depends on, for the determinism replay.
    pub numbers: Vec<f64>,
    pub seconds: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] C{:<2} {} ({:.1}s): {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail.join("; ")
        )
    }
}

pub const NAMES: [&str; 10] = [
    "exact-oracle suite",
    "normalization",
    "lemma inequalities",
    "one-point limits",
    "variance matching",
    "overlap scaling",
    "chaos internal consistency",
    "weak-convergence trend",
    "one-dimensional suite",
    "determinism",
];

/// Exact identities, proven inequalities and determinism: a failure here
/// stops the build. The other criteria are statistical and reported.
pub const HARD: [u8; 3] = [1, 3, 10];

struct Acc {
    pass: bool,
    detail: Vec<String>,
    numbers: Vec<f64>,
}

impl Acc {
    fn new() -> Self {
        Acc {
            pass: true,
            detail: Vec::new(),
            numbers: Vec::new(),
        }
    }
    fn check(&mut self, ok: bool, msg: String) {
        self.pass &= ok;
        self.detail.push(if ok { msg } else { format!("FAILED {msg}") });
    }
    fn note(&mut self, msg: String) {
        self.detail.push(msg);
    }
    fn nums(&mut self, xs: &[f64]) {
        self.numbers.extend_from_slice(xs);
    }
}

fn within_sigma(x: f64, target: f64, se: f64, k: f64) -> bool {
    (x - target).abs() <= k * se
}

pub fn run_criterion(id: u8, scale: Scale, seed: u64) -> CriterionOutcome {
    let start = Instant::now();
    let s = derive_seed(seed, id as u64);
    let res = match id {
        1 => c1_exact_oracles(scale, s),
        2 => c2_normalization(scale, s),
        3 => c3_lemmas(scale),
        4 => c4_onept(scale, s),
        5 => c5_variance(scale, s),
        6 => c6_overlaps(scale, s),
        7 => c7_chaos(scale, s),
        8 => c8_law(scale, s),
        9 => c9_brownian(scale, s),
        10 => c10_determinism(seed),
        _ => panic!("criteria are numbered 1..=10"),
    };
    let acc = res.unwrap_or_else(|e| Acc {
        pass: false,
        detail: vec![format!("error: {e}")],
        numbers: vec![],
    });
    CriterionOutcome {
        id,
        name: NAMES[id as usize - 1],
        pass: acc.pass,
        detail: acc.detail,
        numbers: acc.numbers,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs criteria 1..=10 and hands each outcome to `sink` as it completes.
pub fn run_all(scale: Scale, seed: u64, mut sink: impl FnMut(&CriterionOutcome)) -> Vec<CriterionOutcome> {
    (1..=10u8)
        .map(|id| {
            let o = run_criterion(id, scale, seed);
            sink(&o);
            o
        })
        .collect()
}

pub const DEFAULT_SEED: u64 = 20_240_531;

fn c1_exact_oracles(scale: Scale, seed: u64) -> Result<Acc> {
    let mut acc = Acc::new();
    let n_max = scale.pick(8, 5);
    let law = Law::Gaussian;
    let (mut dp, mut dz, mut dt) = (0.0f64, 0.0f64, 0.0f64);
    let mut cases = 0usize;
    for d in [1usize, 2] {
        let env = SiteField {
            law,
            seed: derive_seed(seed, d as u64),
        };
        for n in 1..=n_max {
            let en = Enumeration::new(d, n);
            let (single, pair) = en.hit_counts();
            let sites = ball_sites(d, n as i64);
            let packing = Packing::new(d);
            let keys: Vec<u64> = sites.iter().map(|p| packing.pack(p)).collect();
            for (i, x) in sites.iter().enumerate() {
                let p = hit_prob_exact(d, n, &[*x], DP_STATE_CAP)?;
                dp = dp.max((p - en.prob(*single.get(&keys[i]).unwrap_or(&0))).abs());
                cases += 1;
                for (j, y) in sites.iter().enumerate().skip(i + 1) {
                    let key = if keys[i] < keys[j] { (keys[i], keys[j]) } else { (keys[j], keys[i]) };
                    let p = hit_prob_exact(d, n, &[*x, *y], DP_STATE_CAP)?;
                    dp = dp.max((p - en.prob(*pair.get(&key).unwrap_or(&0))).abs());
                    cases += 1;
                }
            }
            for (beta, h) in [(0.8, -lambda(law, 0.8)), (0.3, 0.1)] {
                let zq = quenched_partition_exact(&env, d, n, beta, h)?;
                let oq = en.quenched(&env, beta, h);
                let za = annealed_partition_exact(d, n, law, beta, h)?;
                let oa = en.annealed(law, beta, h);
                dz = dz.max(((zq - oq) / oq).abs()).max(((za - oa) / oa).abs());
                let (t1, t2) = en.terms(&env, beta);
                dt = dt.max((expansion_term_exact(&env, d, n, beta, 1)? - t1).abs());
                dt = dt.max((expansion_term_exact(&env, d, n, beta, 2)? - t2).abs());
            }
        }
    }
    acc.nums(&[dp, dz, dt]);
    acc.check(dp <= 1e-12, format!("hit_prob_exact max|Δ|={dp:.1e} over {cases} sets"));
    acc.check(dz <= 1e-12, format!("partition max rel Δ={dz:.1e}"));
    acc.check(dt <= 1e-12, format!("expansion k=1,2 max|Δ|={dt:.1e}"));

    let samples = scale.pick(1_000_000u64, 20_000);
    let mut worst: f64 = 0.0;
    for d in [1usize, 2] {
        let n = n_max;
        let env = SiteField {
            law,
            seed: derive_seed(seed, 10 + d as u64),
        };
        let x: Point = point(&[1, 0][..d]);
        let y: Point = if d == 1 { point(&[-1]) } else { point(&[0, 1]) };
        let mut z = Vec::new();
        let ex = hit_prob_exact(d, n, &[x], DP_STATE_CAP)?;
        let (p, se) = crate::kpoint::hit_prob_mc(d, n, &[x], samples, derive_seed(seed, 21))?;
        z.push((p - ex) / se);
        let ex = hit_prob_exact(d, n, &[x, y], DP_STATE_CAP)?;
        let (p, se) = crate::kpoint::hit_prob_mc(d, n, &[x, y], samples, derive_seed(seed, 22))?;
        z.push((p - ex) / se);
        let beta = 0.8;
        let h = -lambda(law, beta);
        let ex = quenched_partition_exact(&env, d, n, beta, h)?;
        let q = quenched_partition(&env, d, n, beta, h, samples, derive_seed(seed, 23))?;
        z.push((q.value - ex) / q.stderr);
        let ex = annealed_partition_exact(d, n, law, beta, 0.0)?;
        let a = annealed_partition(d, n, law, beta, 0.0, samples, derive_seed(seed, 24))?;
        z.push((a.value - ex) / a.stderr);
        let ex = expansion_term_exact(&env, d, n, beta, 1)?;
        let (t, se) = expansion_term1_mc(&env, d, n, beta, samples, derive_seed(seed, 25))?;
        z.push((t - ex) / se);
        acc.nums(&z);
        worst = z.iter().fold(worst, |m, v| m.max(v.abs()));
    }
    acc.check(worst <= 4.0, format!("MC at {samples} samples: max |z|={worst:.2}"));
    Ok(acc)
}

fn c2_normalization(scale: Scale, seed: u64) -> Result<Acc> {
    let mut acc = Acc::new();
    let ns: [u64; 2] = scale.pick([1 << 10, 1 << 14], [1 << 6, 1 << 8]);
    let mut worst = (0.0f64, String::new());
    let mut fails = Vec::new();
    for d in 1..=3usize {
        for (ni, &big_n) in ns.iter().enumerate() {
            let (walkers, replicas) = if ni == 0 { scale.pick((256u64, 256usize), (16, 16)) } else { scale.pick((64, 256), (16, 16)) };
            for beta_hat in [0.5, 1.0] {
                let s = derive_seed(seed, (d * 100 + ni * 10) as u64 + (beta_hat * 2.0) as u64);
                let lat = quenched_intermediate(d, big_n, 1.0, beta_hat, Law::Gaussian, walkers, replicas, s)?;
                let w = lat.mean();
                let z = (w.mean - 1.0) / w.stderr();
                acc.nums(&[w.mean, w.stderr(), lat.median_ess()]);
                let tag = format!("d={d} N=2^{} β̂={beta_hat}", big_n.trailing_zeros());
                if z.abs() > 4.0 {
                    fails.push(format!("{tag}: {:.3}±{:.3} (ESS {:.1})", w.mean, w.stderr(), lat.median_ess()));
                }
                if z.abs() >= worst.0 {
                    worst = (z.abs(), tag);
                }
            }
        }
    }
    acc.check(fails.is_empty(), format!("{} of 12 cells off, worst |z|={:.2} at {}", fails.len(), worst.0, worst.1));
    for f in fails {
        acc.note(format!("off: {f}"));
    }
    Ok(acc)
}

/// Lattice points with |x|_∞ <= r, x != 0.
fn lemma_sites(d: usize, r: i64) -> Vec<Point> {
    let side = 2 * r + 1;
    let mut out = Vec::new();
    for code in 0..side.pow(d as u32) {
        let mut c = code;
        let mut x = [0i64; crate::lattice::MAX_DIM];
        for v in x.iter_mut().take(d) {
            *v = c % side - r;
            c /= side;
        }
        if linf(&x) == 0 {
            continue;
        }
        out.push(x);
    }
    out
}

fn c3_lemmas(scale: Scale) -> Result<Acc> {
    let mut acc = Acc::new();
    let n_max = scale.pick(64usize, 12);
    let r = scale.pick(3, 1);
    let mut tuples = 0usize;
    let mut violations = Vec::new();
    let (mut min_lo, mut min_up, mut min_l23) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for d in 1..=3usize {
        for x in lemma_sites(d, r) {
            let prof = SiteProfile::new(d, n_max, &x)?;
            for n in 4..=n_max {
                for eps in [0.25, 0.5] {
                    let b = prof.onept_bounds(n, eps);
                    tuples += 1;
                    min_lo = min_lo.min(b.lower_slack);
                    min_up = min_up.min(b.upper_slack);
                    if !b.pass {
                        violations.push(format!("sandwich d={d} n={n} x={:?} ε={eps}", &x[..d]));
                    }
                }
                let l = prof.lemma23(n);
                min_l23 = min_l23.min(l.slack);
                if !l.pass {
                    violations.push(format!("second lemma d={d} n={n} x={:?}", &x[..d]));
                }
            }
        }
    }
    acc.nums(&[min_lo, min_up, min_l23, tuples as f64]);
    acc.check(
        violations.is_empty(),
        format!(
            "{tuples} sandwich tuples, min slack lower {min_lo:.3e} upper {min_up:.3e}; second lemma min slack {min_l23:.3e}; {} violations",
            violations.len()
        ),
    );
    for v in violations.iter().take(5) {
        acc.note(v.clone());
    }
    Ok(acc)
}

fn c4_onept(scale: Scale, seed: u64) -> Result<Acc> {
    let mut acc = Acc::new();
    let n2: Vec<u64> = scale.pick(vec![1 << 12, 1 << 15, 1 << 18], vec![1 << 8, 1 << 10, 1 << 12]);
    let rows = kpt_limit_exact(2, 1.0, &[cpoint(&[1.0, 0.0])], &n2)?;
    let e1 = exp_int_e1(1.0);
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    acc.nums(&ratios);
    let last = rows.last().expect("rows");
    let monotone = ratios.windows(2).all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs());
    acc.check(
        (last.estimate / e1 - 1.0).abs() <= 0.15,
        format!(
            "d=2 (log N)P at N=2^{}: {:.5} vs E1(1)={e1:.5} (ratio {:.4})",
            last.n.trailing_zeros(),
            last.estimate,
            last.ratio
        ),
    );
    acc.check(monotone, format!("d=2 ratios {:?} monotone={monotone}", ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>()));

    let n3: Vec<u64> = scale.pick(vec![1 << 10, 1 << 13, 1 << 16], vec![1 << 6, 1 << 8, 1 << 10]);
    let rows = kpt_limit_exact(3, 1.0, &[cpoint(&[1.0, 0.0, 0.0])], &n3)?;
    let last = rows.last().expect("rows");
    acc.nums(&rows.iter().map(|r| r.ratio).collect::<Vec<_>>());
    acc.check(
        (last.ratio - 1.0).abs() <= 0.10,
        format!("d=3 √N·P at N=2^{}: {:.5} vs {:.5} (ratio {:.4})", last.n.trailing_zeros(), last.estimate, last.limit, last.ratio),
    );

    let n1: u64 = scale.pick(1 << 16, 1 << 10);
    let samples = scale.pick(100_000u64, 4_000);
    let x = 0.5;
    let target = 2.0 * normal_sf(x);
    let mc = kpt_limit_mc(1, 1.0, &[cpoint(&[x])], &[n1], samples, seed)?;
    let ex = kpt_limit_exact(1, 1.0, &[cpoint(&[x])], &[n1])?;
    acc.nums(&[mc[0].estimate, mc[0].stderr, ex[0].estimate]);
    acc.check(
        (mc[0].estimate / target - 1.0).abs() <= 0.02,
        format!(
            "d=1 P̂ at N=2^{}: {:.5}±{:.5} (renewal {:.5}) vs 2Φ̄(0.5)={target:.5}",
            n1.trailing_zeros(),
            mc[0].estimate,
            mc[0].stderr,
            ex[0].estimate
        ),
    );
    Ok(acc)
}

fn c5_variance(scale: Scale, seed: u64) -> Result<Acc> {
    let mut acc = Acc::new();
    let big_n: u64 = scale.pick(1 << 12, 1 << 8);
    let walkers = scale.pick(8192u64, 1024);
    let replicas = scale.pick(1500usize, 100);
    let pairs = scale.pick(4000u64, 200);
    let beta_hat = 1.0;
    for d in [2usize, 3] {
        let beta = beta_schedule(d, beta_hat)?.beta(big_n as f64);
        let ens = WalkEnsemble::sample(d, big_n as usize, walkers, false, derive_seed(seed, d as u64))?;
        let terms = crate::par::map_tasks(replicas, |r| {
            let env = SiteField {
                law: Law::Gaussian,
                seed: derive_seed(derive_seed(seed, 100 + d as u64), r as u64),
            };
            ens.term1(&env, beta)
        });
        let terms: Vec<f64> = terms.into_iter().collect::<Result<_>>()?;
        let va = VarianceAcc::new(terms);
        let j = overlap_samples(d, &[big_n as usize], pairs, derive_seed(seed, 200 + d as u64))?;
        let jw = crate::stats::Welford::from_slice(&j.iter().map(|r| r[0] as f64).collect::<Vec<_>>());
        let target = beta * beta * jw.mean;
        let cond = beta * beta * crate::disorder::eta_variance(Law::Gaussian, beta) * ens.sum_sq_hit_freq();
        let ratio = va.variance() / target;
        acc.nums(&[va.variance(), va.variance_stderr(), jw.mean, jw.stderr(), cond]);
        acc.check(
            (ratio - 1.0).abs() <= 0.10,
            format!(
                "d={d}: Var term1 {:.4}±{:.4} vs β²ÊJ {:.4} (ÊJ={:.2}±{:.2}) ratio {ratio:.3}; conditional {:.4}",
                va.variance(),
                va.variance_stderr(),
                target,
                jw.mean,
                jw.stderr(),
                cond
            ),
        );
    }
    Ok(acc)
}

fn c6_overlaps(scale: Scale, seed: u64) -> Result<Acc> {
    let mut acc = Acc::new();
    let n_list: Vec<usize> = scale.pick(vec![1 << 13, 1 << 14, 1 << 15, 1 << 16], vec![1 << 7, 1 << 8, 1 << 9]);
    for d in 1..=4usize {
        let pairs = scale.pick(if d == 1 { 20_000u64 } else { 2000 }, 100);
        let rows = overlap_scaling(d, &n_list, pairs, derive_seed(seed, d as u64))?;
        let last = rows.last().expect("rows");
        let r = last.ratio.expect("ratio");
        acc.nums(&rows.iter().map(|r| r.mean).collect::<Vec<_>>());
        acc.check(
            (0.85..=1.18).contains(&r),
            format!(
                "d={d}: rescaled means {:?}, last ratio {r:.3}±{:.3}",
                rows.iter().map(|r| format!("{:.3}", r.mean)).collect::<Vec<_>>(),
                last.ratio_stderr.unwrap_or(0.0)
            ),
        );
    }
    let n5: Vec<usize> = scale.pick(vec![1 << 12, 1 << 16], vec![1 << 6, 1 << 10]);
    let pairs = scale.pick(4000u64, 100);
    let raw = overlap_samples(5, &n5, pairs, derive_seed(seed, 5))?;
    let m0 = raw.iter().map(|r| r[0] as f64).sum::<f64>() / pairs as f64;
    let m1 = raw.iter().map(|r| r[1] as f64).sum::<f64>() / pairs as f64;
    let ratio = m1 / m0;
    acc.nums(&[m0, m1]);
    acc.check(ratio < 1.2, format!("d=5: EJ {m0:.4} -> {m1:.4} over a factor 16 in n, ratio {ratio:.3}"));
    Ok(acc)
}

fn c7_chaos(scale: Scale, seed: u64) -> Result<Acc> {
    let mut acc = Acc::new();
    let t = 1.0;
    let exact2 = psi1_l2_exact(2, t)?;

    // d = 2, K = 1: variance against β̂² ∫ψ².
    let plan = ChaosPlan::new(2, t, 1, &PlanOptions::default())?;
    let reps = scale.pick(20_000usize, 300);
    let samples = chaos_replicas(&plan, 1.0, reps, derive_seed(seed, 1))?;
    let s1 = summarize(&plan, 1.0, &samples);
    acc.nums(&[s1.mean, s1.mean_stderr, s1.variance, s1.variance_stderr]);
    acc.check(within_sigma(s1.mean, 1.0, s1.mean_stderr, 4.0), format!("d=2 K=1 mean {:.4}±{:.4}", s1.mean, s1.mean_stderr));
    let rel = s1.variance / exact2 - 1.0;
    acc.check(
        rel.abs() <= 0.05,
        format!("d=2 K=1 variance {:.4}±{:.4} vs 2π ln2={exact2:.4} ({:+.2}%)", s1.variance, s1.variance_stderr, 100.0 * rel),
    );

    // K = 2 in d = 2 and d = 3: mean, orthogonality, additivity.
    for (d, beta_hat, delta) in [(2usize, 1.0, 0.05), (3, 0.5, 0.1)] {
        let opts = PlanOptions {
            delta,
            coarse2: 5,
            coarse3: 5,
            ..PlanOptions::default()
        };
        let plan = ChaosPlan::new(d, t, 2, &opts)?;
        let reps = scale.pick(8000usize, 200);
        let samples = chaos_replicas(&plan, beta_hat, reps, derive_seed(seed, 10 + d as u64))?;
        let s = summarize(&plan, beta_hat, &samples);
        let (cov, cov_se) = s.cov12.expect("order 2");
        let add: f64 = s.term_variance.iter().map(|v| v.0).sum();
        acc.nums(&[s.mean, s.mean_stderr, cov, cov_se, s.variance, add]);
        acc.check(
            within_sigma(s.mean, 1.0, s.mean_stderr, 4.0),
            format!("d={d} K=2 β̂={beta_hat} mean {:.4}±{:.4}", s.mean, s.mean_stderr),
        );
        acc.check(within_sigma(cov, 0.0, cov_se, 4.0), format!("d={d} cov(term1,term2) {cov:.2e}±{cov_se:.1e}"));
        acc.check(
            within_sigma(s.variance, add, s.variance_stderr, 4.0),
            format!("d={d} Var {:.4} vs Σ term variances {add:.4}", s.variance),
        );
    }

    // L² shape: C fixed by k = 1, exponent in t, then k = 2, 3 against the bound.
    let pts2 = scale.pick(20_000u64, 400);
    let pts3 = scale.pick(400u64, 20);
    for d in [2usize, 3] {
        let c = calibrate_c(d, t, psi1_l2_exact(d, t)?);
        let a = l2_norm_psi(d, 1.0, 2, pts2, derive_seed(seed, 40 + d as u64))?;
        let b = l2_norm_psi(d, 2.0, 2, pts2, derive_seed(seed, 40 + d as u64))?;
        let expo = 2f64.powf((4.0 - d as f64) / 2.0 * 2.0);
        let ratio = b.value / a.value;
        let ratio_se = ratio * ((a.stderr / a.value).powi(2) + (b.stderr / b.value).powi(2)).sqrt();
        acc.nums(&[a.value, a.stderr, b.value, b.stderr]);
        acc.check(
            ratio <= expo + 4.0 * ratio_se && a.stderr < 0.1 * a.value,
            format!("d={d} k=2 norm(t=2)/norm(t=1) {ratio:.3}±{ratio_se:.3} vs 2^{{(4-d)k/2}}={expo:.3}"),
        );
        for (k, e) in [(2usize, a), (3, l2_norm_psi(d, t, 3, pts3, derive_seed(seed, 50 + d as u64))?)] {
            let bound = l2_bound(d, t, k, c);
            acc.nums(&[e.value, e.stderr, bound]);
            acc.check(
                e.value - 4.0 * e.stderr <= bound,
                format!("d={d} k={k} ‖ψ‖² {:.4}±{:.4} vs bound {:.4} with C={c:.4} from k=1", e.value, e.stderr, bound),
            );
        }
    }
    Ok(acc)
}

fn c8_law(scale: Scale, seed: u64) -> Result<Acc> {
    let mut acc = Acc::new();
    let (d, t, beta_hat, order) = (3usize, 1.0, 0.5, 2usize);
    let n_list: Vec<u64> = scale.pick(vec![1 << 10, 1 << 12, 1 << 14, 1 << 16], vec![1 << 6, 1 << 7, 1 << 8]);
    let opts = LawOptions {
        replicas: scale.pick(200, 20),
        walkers: scale.pick(64, 8),
        overlap_pairs: scale.pick(2000, 100),
        chaos_replicas: scale.pick(4000, 100),
        plan: PlanOptions {
            delta: scale.pick(0.1, 0.25),
            coarse2: 5,
            coarse3: 5,
            ..PlanOptions::default()
        },
    };
    let rep = law_comparison(d, t, beta_hat, &n_list, order, Law::Gaussian, &opts, seed)?;
    // Var of the K = 2 truncated chaos from the kernel norms.
    let n2 = l2_norm_psi(d, t, 2, scale.pick(20_000, 200), derive_seed(seed, label::IS))?;
    let n1 = psi1_l2_exact(d, t)?;
    let var_chaos = beta_hat.powi(2) * n1 + beta_hat.powi(4) * n2.value / 2.0;
    let last = rep.rows.last().expect("rows");
    let rel = (last.overlap_variance - var_chaos) / var_chaos;
    for r in &rep.rows {
        acc.nums(&[r.ks, r.lattice_mean, r.lattice_variance, r.overlap_variance, r.median_ess]);
    }
    acc.nums(&[var_chaos, rep.chaos.variance, rep.chaos.mean]);
    acc.check(
        rel.abs() < 0.25,
        format!(
            "Var Z_N at N=2^{}: {:.4}±{:.4} (overlap identity) vs K=2 chaos {:.4} ({:+.1}%); naive replica variance {:.4}, grid chaos {:.4}",
            last.n.trailing_zeros(),
            last.overlap_variance,
            last.overlap_variance_stderr,
            var_chaos,
            100.0 * rel,
            last.lattice_variance,
            rep.chaos.variance
        ),
    );
    let ks: Vec<String> = rep.rows.iter().map(|r| format!("2^{}:{:.3}", r.n.trailing_zeros(), r.ks)).collect();
    let steps = rep.rows.len() - 1;
    acc.check(
        rep.ks_decreases >= 2,
        format!(
            "KS {} decreased in {}/{steps} steps; median ESS at largest N {:.1}",
            ks.join(" "),
            rep.ks_decreases,
            last.median_ess
        ),
    );
    Ok(acc)
}

fn c9_brownian(scale: Scale, seed: u64) -> Result<Acc> {
    let mut acc = Acc::new();
    let envs = scale.pick(400usize, 20);
    let paths = scale.pick(2000u64, 100);
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for (i, &(t, beta)) in [(1.0, 0.5), (1.0, 1.0), (4.0, 0.5), (4.0, 1.0)].iter().enumerate() {
        let w = env_averaged_z1d(t, beta, envs, paths, t / 100.0, 1e-3, PathScheme::Bridge, derive_seed(seed, i as u64))?;
        let exact = annealed_z1d_exact(t, beta);
        let z = (w.mean - exact) / w.stderr();
        worst = worst.max(z.abs());
        acc.nums(&[w.mean, w.stderr(), exact]);
        cells.push(format!("(t={t},β={beta}) {:.4}±{:.4} vs {exact:.4}", w.mean, w.stderr()));
    }
    acc.check(worst <= 4.0, format!("annealed identity max |z|={worst:.2}: {}", cells.join(", ")));

    let n_ranges = scale.pick(1_000_000u64, 10_000);
    let sums = sample_summaries(1.0, 1e-2, PathScheme::Bridge, n_ranges, derive_seed(seed, 10))?;
    let ranges: Vec<f64> = sums.iter().map(|s| s.max - s.min).collect();
    let mc_med = median(&ranges);
    let ex_med = range_median(1.0);
    acc.nums(&[mc_med, ex_med]);
    acc.check((mc_med - ex_med).abs() <= 0.01, format!("range median MC {mc_med:.4} vs CDF {ex_med:.4}"));

    let t_list: Vec<f64> = scale.pick((6..=12).map(|e| 2f64.powi(e)).collect(), vec![4.0, 8.0, 16.0]);
    let replicas = scale.pick(256usize, 8);
    let opts = scale.pick(CellOptions::default(), CellOptions { cells_per_unit: 16, sub: 8 });
    let hot = scaling_study(&t_list, 1.0, replicas, &opts, derive_seed(seed, 11))?;
    let cold = scaling_study(&t_list, 0.0, replicas, &opts, derive_seed(seed, 12))?;
    let (slope, slope_se) = hot.slope.unwrap_or((f64::NAN, f64::NAN));
    acc.nums(&[slope, slope_se, hot.chi.0, hot.chi.1, cold.chi.0, cold.chi.1]);
    acc.check((0.25..=0.42).contains(&slope), format!("free-energy slope {slope:.3}±{slope_se:.3}"));
    acc.check(
        hot.chi.0 > cold.chi.0 + 0.05 && (0.47..=0.53).contains(&cold.chi.0),
        format!("χ̂(β=1)={:.3}±{:.3}, χ̂(β=0)={:.3}±{:.3}", hot.chi.0, hot.chi.1, cold.chi.0, cold.chi.1),
    );
    Ok(acc)
}

fn c10_determinism(seed: u64) -> Result<Acc> {
    let mut acc = Acc::new();
    let mut mismatched = Vec::new();
    let mut count = 0usize;
    for id in 1..=9u8 {
        let a = with_width(1, || run_criterion(id, Scale::Quick, seed));
        let b = with_width(1, || run_criterion(id, Scale::Quick, seed));
        let c = with_width(8, || run_criterion(id, Scale::Quick, seed));
        let bits = |o: &CriterionOutcome| o.numbers.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
        count += a.numbers.len();
        if a.numbers.is_empty() || bits(&a) != bits(&b) || bits(&a) != bits(&c) {
            mismatched.push(id);
        }
    }
    acc.nums(&[count as f64]);
    acc.check(
        mismatched.is_empty(),
        format!("criteria 1-9 at reduced size, {count} numbers bitwise equal across reruns and widths 1/8; mismatches {mismatched:?}"),
    );
    Ok(acc)
}
