//! One line per acceptance criterion. Exits non-zero when a hard criterion
//! fails, or any criterion fails with RCL_STRICT=1. RCL_ONLY=1,3 restricts
//! the run; RCL_SEED overrides the seed.

use rcl::acceptance::{run_criterion, Scale, DEFAULT_SEED, HARD};

fn main() {
    let seed = std::env::var("RCL_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_SEED);
    let only: Option<Vec<u8>> = std::env::var("RCL_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("RCL_STRICT").is_ok_and(|v| v == "1");
    let ids: Vec<u8> = only.unwrap_or_else(|| (1..=10).collect());
    println!("acceptance suite, seed {seed}");
    let mut failed = Vec::new();
    for id in ids {
        let o = run_criterion(id, Scale::Full, seed);
        println!("{o}");
        if !o.pass {
            failed.push(id);
        }
    }
    let hard: Vec<u8> = failed.iter().copied().filter(|id| HARD.contains(id)).collect();
    println!("failed: {failed:?} (hard: {hard:?})");
    if !hard.is_empty() || (strict && !failed.is_empty()) {
        std::process::exit(1);
    }
}
