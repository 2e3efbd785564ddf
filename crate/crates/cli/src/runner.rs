//! Subcommand implementations. Every seed owns `OUT/seed-N/`; shared files
//! are written in a final single-threaded pass.
//!
//! ```text
//! OUT/seed-N/snapshot-T.txt   average policies after T iterations
//! OUT/seed-N/policy.txt       final average policies
//! OUT/seed-N/report.txt       solve report; its presence marks the seed done
//! OUT/seed-N/tree.txt         CDIT dump (--dump-tree)
//! OUT/seed-N/timing.csv       per-iteration wall clock (--timing)
//! OUT/seed-N/exploit.csv      per-snapshot exploitability of the seed
//! OUT/exploit_raw.csv         all seeds
//! OUT/exploit_aggregate.csv   mean and 3-sigma standard error across seeds
//! OUT/marginal_pI.csv         action-sequence marginals of player I
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cdit::bounds::{bound_report, BoundParams};
use cdit::cfr::{export_policies, import_policies, BehaviorPolicy, EscfrSolver, PolicyHeader, SolveConfig, Snapshot};
use cdit::exploit::exploitability_curve;
use cdit::model::Posg;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Model};
use crate::marginal::policy_marginal;
use crate::output::{header, sig9, write_atomic, Provenance, TOOL_VERSION};
use crate::{io_err, CliError};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Replaces the configured seed list with a single seed.
    pub seed: Option<u64>,
    pub dump_tree: bool,
    pub timing: bool,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            ..Self::default()
        }
    }

    fn seeds(&self, cfg: &ExperimentConfig) -> Vec<u64> {
        match self.seed {
            Some(s) => vec![s],
            None => cfg.seeds.clone(),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(CliError::Config("`--jobs` must be at least 1".into()));
            }
            b = b.num_threads(j);
        }
        b.build().map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

pub fn snapshot_path(out: &Path, seed: u64, iteration: u64) -> PathBuf {
    seed_dir(out, seed).join(format!("snapshot-{iteration}.txt"))
}

pub fn policy_path(out: &Path, seed: u64) -> PathBuf {
    seed_dir(out, seed).join("policy.txt")
}

fn report_path(out: &Path, seed: u64) -> PathBuf {
    seed_dir(out, seed).join("report.txt")
}

fn seed_exploit_path(out: &Path, seed: u64) -> PathBuf {
    seed_dir(out, seed).join("exploit.csv")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveOutcome {
    pub solved: Vec<u64>,
    /// Seeds whose report already existed.
    pub skipped: Vec<u64>,
}

pub fn run_solve(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SolveOutcome, CliError> {
    match cfg.build_model()? {
        Model::Tag(m) => solve_all(&m, cfg, opts),
        Model::Discrete(m) => solve_all(&m, cfg, opts),
    }
}

fn solve_all<M: Posg>(model: &M, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SolveOutcome, CliError> {
    let seeds = opts.seeds(cfg);
    std::fs::create_dir_all(&opts.out).map_err(io_err(&opts.out))?;
    let results: Vec<Result<bool, CliError>> =
        opts.pool()?.install(|| seeds.par_iter().map(|&s| solve_seed(model, cfg, opts, s)).collect());
    let mut outcome = SolveOutcome::default();
    for (&s, r) in seeds.iter().zip(results) {
        if r? {
            outcome.solved.push(s);
        } else {
            outcome.skipped.push(s);
        }
    }
    Ok(outcome)
}

fn policy_header<M: Posg>(model: &M, cfg: &ExperimentConfig, seed: u64, iterations: u64) -> PolicyHeader {
    PolicyHeader {
        model: model.name(),
        particles: cfg.particles,
        horizon: cfg.horizon,
        iterations,
        seed,
        action_counts: model.spec().action_counts.clone(),
        extra: vec![
            ("tool".into(), TOOL_VERSION.into()),
            ("config_sha256".into(), cfg.hash.clone()),
        ],
    }
}

/// Returns `false` when the seed was already complete.
fn solve_seed<M: Posg>(model: &M, cfg: &ExperimentConfig, opts: &RunOptions, seed: u64) -> Result<bool, CliError> {
    let out = &opts.out;
    if report_path(out, seed).exists() {
        return Ok(false);
    }
    let solve_cfg = SolveConfig::new(cfg.particles, cfg.horizon, cfg.iterations, seed)
        .with_storage(cfg.storage)
        .with_snapshots(cfg.snapshots.clone());
    let mut solver = EscfrSolver::new(model, &solve_cfg)?;
    let mut write_error = None;
    let (policies, report) = solver.run(|s: &Snapshot| {
        let text = export_policies(&policy_header(model, cfg, seed, s.iteration), &s.policies);
        if let Err(e) = write_atomic(&snapshot_path(out, seed, s.iteration), &text) {
            write_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    let pol = export_policies(&policy_header(model, cfg, seed, cfg.iterations), &policies);
    write_atomic(&policy_path(out, seed), &pol)?;
    let head = header(&cfg.hash, Provenance::Seed(seed));
    if opts.dump_tree {
        write_atomic(&seed_dir(out, seed).join("tree.txt"), &format!("{head}{}", solver.tree().dump()))?;
    }
    if opts.timing {
        let mut t = format!("{head}iteration,seconds\n");
        for (i, s) in report.iteration_seconds.iter().enumerate() {
            let _ = writeln!(t, "{},{}", i + 1, sig9(*s));
        }
        write_atomic(&seed_dir(out, seed).join("timing.csv"), &t)?;
    }
    // Written last: its presence marks the seed complete.
    write_atomic(&report_path(out, seed), &format!("{head}model = {}\n{}", model.name(), report.summary()))?;
    Ok(true)
}

fn load_policies(path: &Path) -> Result<Vec<BehaviorPolicy>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let (_, policies) = import_policies(&text)?;
    Ok(policies)
}

/// One exploitability row of a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExploitRow {
    pub snapshot_iter: u64,
    pub seed: u64,
    pub e: [f64; 2],
    pub nashconv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub snapshot_iter: u64,
    pub mean_nashconv: f64,
    /// `3·sd/√n` with the sample standard deviation across seeds.
    pub se3_nashconv: f64,
    pub n_seeds: usize,
}

const RAW_COLUMNS: &str = "snapshot_iter,seed,e_pursuer,e_evader,nashconv";
const LOWER_BOUND_NOTE: &str = "# note best responses are POMCP estimates from below; exploitabilities are lower bounds\n";

pub fn run_exploitability(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<AggregateRow>, CliError> {
    match cfg.build_model()? {
        Model::Tag(m) => exploit_all(&m, cfg, opts),
        Model::Discrete(m) => exploit_all(&m, cfg, opts),
    }
}

fn exploit_all<M: Posg>(model: &M, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<AggregateRow>, CliError> {
    let out = &opts.out;
    let seeds = opts.seeds(cfg);
    let iterations = cfg.exploit.snapshots.clone().unwrap_or_else(|| cfg.snapshots.clone());
    let absent: Vec<String> = seeds
        .iter()
        .filter(|&&s| !report_path(out, s).exists() || iterations.iter().any(|&t| !snapshot_path(out, s, t).exists()))
        .map(u64::to_string)
        .collect();
    if !absent.is_empty() {
        return Err(CliError::Missing(format!(
            "no complete solve artifacts in {} for seeds {}",
            out.display(),
            absent.join(", ")
        )));
    }
    let results: Vec<Result<(), CliError>> =
        opts.pool()?.install(|| seeds.par_iter().map(|&s| exploit_seed(model, cfg, out, s, &iterations)).collect());
    results.into_iter().collect::<Result<(), _>>()?;

    let mut rows = Vec::new();
    for &s in &seeds {
        rows.extend(read_exploit_rows(&seed_exploit_path(out, s))?);
    }
    rows.sort_by_key(|r| (r.snapshot_iter, r.seed));
    let mut raw = format!("{}{LOWER_BOUND_NOTE}{RAW_COLUMNS}\n", header(&cfg.hash, Provenance::Seeds(&seeds)));
    for r in &rows {
        let _ = writeln!(raw, "{},{},{},{},{}", r.snapshot_iter, r.seed, sig9(r.e[0]), sig9(r.e[1]), sig9(r.nashconv));
    }
    write_atomic(&out.join("exploit_raw.csv"), &raw)?;
    let agg = aggregate(&rows);
    let mut text = format!(
        "{}{LOWER_BOUND_NOTE}snapshot_iter,mean_nashconv,se3_nashconv,n_seeds\n",
        header(&cfg.hash, Provenance::Seeds(&seeds))
    );
    for a in &agg {
        let _ = writeln!(text, "{},{},{},{}", a.snapshot_iter, sig9(a.mean_nashconv), sig9(a.se3_nashconv), a.n_seeds);
    }
    write_atomic(&out.join("exploit_aggregate.csv"), &text)?;
    Ok(agg)
}

fn exploit_seed<M: Posg>(model: &M, cfg: &ExperimentConfig, out: &Path, seed: u64, iterations: &[u64]) -> Result<(), CliError> {
    let path = seed_exploit_path(out, seed);
    if path.exists() {
        return Ok(());
    }
    let snapshots = iterations
        .iter()
        .map(|&t| {
            Ok(Snapshot {
                iteration: t,
                policies: load_policies(&snapshot_path(out, seed, t))?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let params = cfg.pomcp_params(model);
    let curve = exploitability_curve(model, &snapshots, &params, cfg.horizon, cfg.exploit.episodes, seed)?;
    let mut text = format!(
        "{}{LOWER_BOUND_NOTE}{RAW_COLUMNS},se_pursuer,se_evader,se_nashconv\n",
        header(&cfg.hash, Provenance::Seed(seed))
    );
    for p in &curve {
        let _ = writeln!(
            text,
            "{},{seed},{},{},{},{},{},{}",
            p.iteration,
            sig9(p.exploitability[0].mean),
            sig9(p.exploitability[1].mean),
            sig9(p.nashconv.mean),
            sig9(p.exploitability[0].std_error),
            sig9(p.exploitability[1].std_error),
            sig9(p.nashconv.std_error),
        );
    }
    write_atomic(&path, &text)
}

/// Reads the leading raw columns of an exploitability CSV.
pub fn read_exploit_rows(path: &Path) -> Result<Vec<ExploitRow>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let bad = |m: String| CliError::Missing(format!("{}: {m}", path.display()));
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("row has no column {i}")));
        let num = |i: usize| -> Result<f64, CliError> {
            let f = field(i)?;
            f.parse().map_err(|_| bad(format!("bad number `{f}`")))
        };
        let int = |i: usize| -> Result<u64, CliError> {
            let f = field(i)?;
            f.parse().map_err(|_| bad(format!("bad integer `{f}`")))
        };
        rows.push(ExploitRow {
            snapshot_iter: int(0)?,
            seed: int(1)?,
            e: [num(2)?, num(3)?],
            nashconv: num(4)?,
        });
    }
    Ok(rows)
}

/// Mean and `3·sd/√n` of NashConv per snapshot; rows sorted by snapshot.
pub fn aggregate(rows: &[ExploitRow]) -> Vec<AggregateRow> {
    let mut by_iter: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    for r in rows {
        by_iter.entry(r.snapshot_iter).or_default().push(r.nashconv);
    }
    by_iter
        .into_iter()
        .map(|(t, xs)| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                snapshot_iter: t,
                mean_nashconv: mean,
                se3_nashconv: 3.0 * sd / (n as f64).sqrt(),
                n_seeds: n,
            }
        })
        .collect()
}

/// Writes `marginal_p0.csv` and `marginal_p1.csv`; returns their paths.
pub fn run_policy_marginal(cfg: &ExperimentConfig, opts: &RunOptions, policy: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let default = policy_path(&opts.out, opts.seeds(cfg)[0]);
    let path = policy.unwrap_or(&default);
    if !path.exists() {
        return Err(CliError::Missing(format!("policy file {} does not exist", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let (head, policies) = import_policies(&text)?;
    match cfg.build_model()? {
        Model::Tag(m) => write_marginals(&m, cfg, opts, head.seed, head.horizon, &policies),
        Model::Discrete(m) => write_marginals(&m, cfg, opts, head.seed, head.horizon, &policies),
    }
}

fn write_marginals<M: Posg>(
    model: &M,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    seed: u64,
    horizon: usize,
    policies: &[BehaviorPolicy],
) -> Result<Vec<PathBuf>, CliError> {
    if policies.len() != 2 || policies.iter().zip(&model.spec().action_counts).any(|(p, &n)| p.num_actions() != n) {
        return Err(CliError::Config("policy file does not match the configured model".into()));
    }
    let mut paths = Vec::new();
    for player in 0..2 {
        let m = policy_marginal(model, policies, player, horizon, cfg.exploit.particles, seed)?;
        let mut text = header(&cfg.hash, Provenance::Seed(seed));
        let _ = writeln!(text, "# player {player}");
        let _ = writeln!(text, "# method {}", if m.enumerated { "enumerated" } else { "sampled" });
        text.push_str("sequence,probability,dx,dy\n");
        for r in &m.rows {
            let seq: Vec<String> = r.actions.iter().map(usize::to_string).collect();
            let (dx, dy) = match r.displacement {
                Some([x, y]) => (sig9(x), sig9(y)),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(text, "{},{},{dx},{dy}", seq.join("-"), sig9(r.probability));
        }
        let path = opts.out.join(format!("marginal_p{player}.csv"));
        write_atomic(&path, &text)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Labelled table of every bound constant for the configured run.
pub fn run_bounds(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let spec = match cfg.build_model()? {
        Model::Tag(m) => m.spec().clone(),
        Model::Discrete(m) => m.spec().clone(),
    };
    let params = BoundParams {
        lambda: cfg.bounds.lambda,
        particle_count: cfg.particles,
        horizon: cfg.horizon,
        discount: spec.discount,
        d_inf_max: cfg.bounds.d_inf_max,
        p: cfg.bounds.p,
        reward_range: spec.reward_bounds.iter().map(|(lo, hi)| hi - lo).collect(),
        max_abs_reward: spec.reward_bounds.iter().map(|(lo, hi)| lo.abs().max(hi.abs())).collect(),
        action_counts: spec.action_counts.clone(),
        observation_counts: spec.observation_counts.clone(),
        iterations: cfg.iterations,
    };
    let report = bound_report(&params)?;
    let mut text = header(&cfg.hash, Provenance::Seeds(&cfg.seeds));
    let _ = writeln!(
        text,
        "# lambda {} p {} d_inf_max {} C {} D {} T {}",
        params.lambda, params.p, params.d_inf_max, params.particle_count, params.horizon, params.iterations
    );
    text.push_str(&report.table());
    Ok(text)
}
