use std::path::PathBuf;
use std::process::ExitCode;

use cdit_cli::config::ExperimentConfig;
use cdit_cli::runner::{run_bounds, run_exploitability, run_policy_marginal, run_solve, RunOptions};
use cdit_cli::suite::oracle_suite;
use cdit_cli::CliError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cdit", version, about = "Particle CDIT + ESCFR experiments for zero-sum POSGs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML with [model], [solve], [exploit], [bounds], [output]).
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to output.dir, then $CDIT_OUT, then ./cdit-out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every seed and write policies, snapshots and reports.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also write each seed's final tree.
        #[arg(long)]
        dump_tree: bool,
        /// Also write per-iteration wall-clock times (not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Estimate exploitability of saved snapshots with POMCP best responses.
    Exploit {
        #[command(flatten)]
        common: Common,
    },
    /// Write action-sequence marginals of a saved policy.
    Marginal {
        #[command(flatten)]
        common: Common,
        /// Policy file; defaults to the first seed's final policy.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Print every bound constant for the configured run.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the tiny-game oracle comparisons and invariants; exit 2 on failure.
    OracleSuite {
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn options(common: &Common, cfg: &ExperimentConfig) -> RunOptions {
    RunOptions {
        out: cfg.resolve_output(common.out.as_deref()),
        jobs: common.jobs,
        seed: common.seed,
        dump_tree: false,
        timing: false,
    }
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Solve { common, dump_tree, timing } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let opts = RunOptions {
                dump_tree,
                timing,
                ..options(&common, &cfg)
            };
            let o = run_solve(&cfg, &opts)?;
            println!("solved seeds {:?}, skipped completed seeds {:?} -> {}", o.solved, o.skipped, opts.out.display());
        }
        Command::Exploit { common } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let opts = options(&common, &cfg);
            let rows = run_exploitability(&cfg, &opts)?;
            println!("snapshot_iter  mean_nashconv  se3_nashconv  n_seeds");
            for r in rows {
                println!("{:>13}  {:>13.6}  {:>12.6}  {:>7}", r.snapshot_iter, r.mean_nashconv, r.se3_nashconv, r.n_seeds);
            }
            println!("(POMCP best responses: values are lower bounds) -> {}", opts.out.display());
        }
        Command::Marginal { common, policy } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let opts = options(&common, &cfg);
            for p in run_policy_marginal(&cfg, &opts, policy.as_deref())? {
                println!("{}", p.display());
            }
        }
        Command::Bounds { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", run_bounds(&cfg)?);
        }
        Command::OracleSuite { jobs } => {
            if let Some(j) = jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(j.max(1))
                    .build_global()
                    .map_err(|e| CliError::Config(e.to_string()))?;
            }
            let scratch = std::env::temp_dir().join(format!("cdit-oracle-suite-{}", std::process::id()));
            let checks = oracle_suite(&scratch);
            let _ = std::fs::remove_dir_all(&scratch);
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are config errors; keep 2 for the oracle suite.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
