use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rcl::acceptance::{run_criterion, Scale, DEFAULT_SEED};
use rcl::disorder::Law;
use rcl::harness::config::{
    parse_f64_list, parse_n_list, parse_points, ChaosParams, KpointParams, LawParams, Range1dMethod, Range1dParams, SimulateParams,
};
use rcl::harness::{read_records, report, run, write_outputs, ExperimentConfig, Kind, Report, SimMode, EMPTY_MARKER};
use rcl::RclError;

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_EMPTY: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "rcl", version, about = "Range polymer laboratory: lattice Monte Carlo, continuum kernels, chaos series")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    width: usize,
    /// Print the equivalent TOML config and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lattice partition functions.
    Simulate {
        #[arg(long, value_enum)]
        mode: SimMode,
        #[arg(long)]
        d: usize,
        /// Steps, or the scale N in intermediate mode.
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0.0)]
        beta_hat: f64,
        /// Explicit β, overriding the β̂ schedule.
        #[arg(long)]
        beta: Option<f64>,
        /// Site field h (default -λ(β)).
        #[arg(long, allow_hyphen_values = true)]
        h: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value = "gaussian")]
        law: Law,
        #[arg(long)]
        walkers: u64,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        /// Endpoint for p2p mode, e.g. "2,0".
        #[arg(long, allow_hyphen_values = true)]
        end: Option<String>,
        #[arg(long, default_value = "results.jsonl")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// k-point hitting probabilities against the continuum kernel.
    Kpoint {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Points separated by ';', coordinates by ',', e.g. "1,0;0,1".
        #[arg(long, allow_hyphen_values = true)]
        points: String,
        /// e.g. 2^12,2^15,2^18
        #[arg(long)]
        n_list: String,
        /// Walks per N; 0 uses the exact renewal route.
        #[arg(long, default_value_t = 0)]
        samples: u64,
        #[arg(long, default_value = "table.csv")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Truncated chaos replicas, or a lattice comparison with --n-list.
    Chaos {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long)]
        beta_hat: f64,
        #[arg(long = "K", alias = "order", default_value_t = 1)]
        order: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
        /// Compare with lattice replicas at these N.
        #[arg(long)]
        n_list: Option<String>,
        #[arg(long, default_value_t = 64)]
        walkers: u64,
        #[arg(long, default_value_t = 100)]
        lattice_replicas: usize,
        #[arg(long, default_value_t = 2000)]
        overlap_pairs: u64,
        #[arg(long, default_value = "chaos.jsonl")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// One-dimensional continuum range polymer: free energy and endpoint.
    Range1d {
        #[arg(long)]
        beta: f64,
        /// e.g. 2^6,2^7,2^8
        #[arg(long)]
        t_list: String,
        #[arg(long, default_value_t = 64)]
        replicas: usize,
        #[arg(long, value_enum, default_value = "cell")]
        method: Range1dMethod,
        #[arg(long, default_value_t = 4096)]
        paths: u64,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[arg(long, default_value = "fe.csv")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Runs a TOML experiment config.
    Run {
        config: PathBuf,
    },
    /// Tables and CSV from a JSONL file of one kind.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Expected kind (simulate, kpoint, chaos, law_comparison, range1d).
        #[arg(long)]
        kind: Option<String>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the acceptance suite.
    Selftest {
        /// Reduced sample sizes (smoke run, verdicts not meaningful).
        #[arg(long)]
        quick: bool,
        /// Comma-separated criterion ids.
        #[arg(long)]
        only: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

fn config_error(e: RclError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn base(kind: Kind, common: &Common, out: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        kind,
        seed: common.seed,
        width: common.width,
        out,
        simulate: None,
        kpoint: None,
        chaos: None,
        law_comparison: None,
        range1d: None,
    }
}

fn build(cmd: Cmd) -> Result<(ExperimentConfig, bool), RclError> {
    Ok(match cmd {
        Cmd::Simulate {
            mode,
            d,
            n,
            beta_hat,
            beta,
            h,
            t,
            law,
            walkers,
            replicas,
            end,
            out,
            common,
        } => {
            let end = match end {
                Some(s) => Some(
                    s.split(',')
                        .map(|c| c.trim().parse::<i64>().map_err(|_| RclError::invalid("end", format!("bad coordinate `{c}`"))))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                None => None,
            };
            let mut c = base(Kind::Simulate, &common, out);
            c.simulate = Some(SimulateParams {
                mode,
                d,
                n,
                t,
                beta_hat,
                beta,
                h,
                law,
                walkers,
                replicas,
                end,
            });
            (c, common.dump_config)
        }
        Cmd::Kpoint {
            d,
            t,
            points,
            n_list,
            samples,
            out,
            common,
        } => {
            let mut c = base(Kind::Kpoint, &common, out);
            c.kpoint = Some(KpointParams {
                d,
                t,
                points: parse_points(&points)?,
                n_list: parse_n_list(&n_list)?,
                samples,
            });
            (c, common.dump_config)
        }
        Cmd::Chaos {
            d,
            t,
            beta_hat,
            order,
            delta,
            replicas,
            n_list,
            walkers,
            lattice_replicas,
            overlap_pairs,
            out,
            common,
        } => match n_list {
            None => {
                let mut c = base(Kind::Chaos, &common, out);
                c.chaos = Some(ChaosParams {
                    d,
                    t,
                    beta_hat,
                    order,
                    delta,
                    coarse2: 5,
                    coarse3: 10,
                    replicas,
                });
                (c, common.dump_config)
            }
            Some(list) => {
                let mut c = base(Kind::LawComparison, &common, out);
                c.law_comparison = Some(LawParams {
                    d,
                    t,
                    beta_hat,
                    order,
                    n_list: parse_n_list(&list)?,
                    law: Law::Gaussian,
                    replicas: lattice_replicas,
                    walkers,
                    overlap_pairs,
                    chaos_replicas: replicas,
                    delta,
                });
                (c, common.dump_config)
            }
        },
        Cmd::Range1d {
            beta,
            t_list,
            replicas,
            method,
            paths,
            dt,
            out,
            common,
        } => {
            let mut c = base(Kind::Range1d, &common, out);
            c.range1d = Some(Range1dParams {
                beta,
                t_list: parse_f64_list("t_list", &t_list)?,
                replicas,
                method,
                paths,
                dt,
                dx: 1e-3,
                cells_per_unit: 48,
                sub: 64,
            });
            (c, common.dump_config)
        }
        Cmd::Run { config } => (ExperimentConfig::load(&config)?, false),
        Cmd::Report { .. } | Cmd::Selftest { .. } => unreachable!("handled separately"),
    })
}

fn experiment(cmd: Cmd) -> ExitCode {
    let (config, dump) = match build(cmd).and_then(|(c, d)| Ok((c.with_env_seed()?, d))) {
        Ok(x) => x,
        Err(e) => return config_error(e),
    };
    if let Err(e) = config.validate() {
        return config_error(e);
    }
    if dump {
        print!("{}", config.to_toml());
        return ExitCode::SUCCESS;
    }
    let output = match run(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match write_outputs(&output) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            if output.record.flagged > 0 {
                eprintln!("{} of {} rows flagged", output.record.flagged, output.record.rows);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn report_cmd(input: PathBuf, kind: Option<String>, out: Option<PathBuf>) -> ExitCode {
    let kind = match kind.as_deref().map(Kind::parse).transpose() {
        Ok(k) => k,
        Err(e) => return config_error(e),
    };
    let rows = match read_records(&input) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match report(&rows, kind) {
        Ok(Report::Empty) => {
            println!("{EMPTY_MARKER}");
            ExitCode::from(EXIT_EMPTY)
        }
        Ok(Report::Table { csv, summary, .. }) => {
            match out {
                Some(p) => {
                    if let Err(e) = rcl::harness::run::write_text(&p, &csv) {
                        eprintln!("error: {e}");
                        return ExitCode::from(EXIT_RUNTIME);
                    }
                    println!("wrote {}", p.display());
                }
                None => print!("{csv}"),
            }
            for s in summary {
                eprintln!("{s}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn selftest(quick: bool, only: Option<String>, seed: u64) -> ExitCode {
    let seed = std::env::var(rcl::harness::config::SEED_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(seed);
    let ids: Vec<u8> = match only {
        Some(s) => match s.split(',').map(|t| t.trim().parse::<u8>()).collect::<Result<Vec<_>, _>>() {
            Ok(v) if v.iter().all(|id| (1..=10).contains(id)) => v,
            _ => return config_error(RclError::invalid("only", "expected ids in 1..=10")),
        },
        None => (1..=10).collect(),
    };
    let scale = if quick { Scale::Quick } else { Scale::Full };
    let mut ok = true;
    for id in ids {
        let o = run_criterion(id, scale, seed);
        println!("{o}");
        ok &= o.pass;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Report { input, kind, out } => report_cmd(input, kind, out),
        Cmd::Selftest { quick, only, seed } => selftest(quick, only, seed),
        cmd => experiment(cmd),
    }
}
