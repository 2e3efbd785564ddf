//! Acceptance checks shared by `cdit oracle-suite` and the `acceptance`
//! test target. Each check returns a [`Check`] instead of panicking so a
//! run always reports every criterion.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cdit::analysis::{
    enumerate_pure_policies, estimated_payoff_matrix, exact_nashconv, exact_payoff_matrix, lemma1_check, NormalFormGame,
};
use cdit::belief::{exact_bayes_update, propagate, reweight, total_variation, ExactBelief, ParticleBelief};
use cdit::bounds::*;
use cdit::cdit::{Cdit, InfoSetKey, Storage};
use cdit::cfr::{import_policies, normal_form_regret_matching_traced, solve_escfr, Policy, RegretStart, SolveConfig};
use cdit::model::{games, ContinuousTag, JointAction, Posg};
use cdit::seeding::{derive_all, rng_from};
use ndarray::{array, Array2};
use rand::Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::runner::{policy_path, run_exploitability, run_policy_marginal, run_solve, RunOptions};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {} ({:.1} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            self.detail
        )
    }
}

fn timed(id: u8, title: &'static str, body: impl FnOnce() -> Result<(bool, String), String>) -> Check {
    let start = Instant::now();
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn loglog_slope(ts: &[u64], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ts.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Matrix regret matching on matching pennies and rock-paper-scissors:
/// NashConv ≤ 0.02 at T = 10⁴ and a log-log slope in [−0.7, −0.3].
pub fn regret_matching_convergence() -> Check {
    timed(1, "regret matching on MP and RPS", || {
        let games = [
            ("MP", NormalFormGame::zero_sum(array![[1.0, -1.0], [-1.0, 1.0]])),
            ("RPS", NormalFormGame::zero_sum(array![[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])),
        ];
        let ts = [100u64, 1_000, 10_000, 100_000];
        let mut ok = true;
        let mut notes = vec![];
        for (name, g) in &games {
            let mut rng = rng_from(0);
            let (_, trace) = normal_form_regret_matching_traced(g, 100_000, RegretStart::Pure(0), &ts, &mut rng)
                .map_err(|e| e.to_string())?;
            let ys: Vec<f64> = trace.iter().map(|&(_, v)| v).collect();
            let slope = loglog_slope(&ts, &ys);
            let at_1e4 = ys[2];
            ok &= at_1e4 <= 0.02 && (-0.7..=-0.3).contains(&slope);
            notes.push(format!("{name} NashConv@1e4 {at_1e4:.2e} (<= 0.02) slope {slope:.3} (in [-0.7,-0.3])"));
        }
        Ok((ok, notes.join("; ")))
    })
}

/// ESCFR on the tiny oracle game, C = 800, cached depth 1, T = 10⁵:
/// median exact NashConv over seeds 0..10 ≤ 0.05.
pub fn escfr_oracle_equivalence() -> Check {
    timed(2, "ESCFR exact NashConv on the tiny game", || {
        let g = games::tiny_game();
        let ncs: Vec<f64> = (0..10u64)
            .into_par_iter()
            .map(|seed| {
                let cfg = SolveConfig::new(800, 2, 100_000, seed)
                    .with_storage(Storage::Bounded { max_cached_depth: 1 })
                    .with_snapshots(vec![]);
                let (pols, _) = solve_escfr(&g, &cfg, |_| {})?;
                Ok(exact_nashconv(&g, &pols, 2)?.nashconv)
            })
            .collect::<cdit::Result<_>>()
            .map_err(|e| e.to_string())?;
        let m = median(ncs.clone());
        let all: Vec<String> = ncs.iter().map(|x| format!("{x:.4}")).collect();
        Ok((m <= 0.05, format!("median {m:.4} (<= 0.05) over [{}]", all.join(", "))))
    })
}

/// Particle vs exact posteriors on random 4-state games along trajectories
/// drawn from the game itself: TV ≤ 0.02 on every update at C = 10⁵ and
/// strictly decreasing medians over C ∈ {10², 10³, 10⁴, 10⁵}.
pub fn particle_filter_correctness() -> Check {
    timed(3, "particle posterior vs exact Bayes", || {
        const COUNTS: [usize; 4] = [100, 1_000, 10_000, 100_000];
        const SEEDS: u64 = 50;
        const UPDATES: usize = 2;
        // worst[c][seed]: largest TV over the updates of that seed.
        let mut worst = vec![vec![0.0f64; SEEDS as usize]; COUNTS.len()];
        for seed in 0..SEEDS {
            let mut rng = rng_from(derive_all(0x3, &[seed]));
            let game = games::random_game(4, &[2, 2], &[2, 2], UPDATES, &mut rng);
            let mut state = game.sample_initial_state(&mut rng);
            let mut exact = ExactBelief::initial(&game);
            let mut beliefs: Vec<ParticleBelief<usize>> = COUNTS
                .iter()
                .map(|&c| ParticleBelief::sample_from(&game, c, &mut rng_from(derive_all(0x3, &[seed, c as u64]))))
                .collect::<cdit::Result<_>>()
                .map_err(|e| e.to_string())?;
            for step in 0..UPDATES {
                let a = JointAction::pair(rng.random_range(0..2), rng.random_range(0..2));
                state = game.sample_next_state(&state, &a, &mut rng);
                let obs = game.sample_observation(&a, &state, &mut rng);
                exact = exact_bayes_update(&exact, &a, &obs, &game).map_err(|e| e.to_string())?;
                for (ci, &c) in COUNTS.iter().enumerate() {
                    let mut prng = rng_from(derive_all(0x3, &[seed, c as u64, step as u64 + 1]));
                    let states = propagate(&beliefs[ci], &a, &game, &mut prng);
                    beliefs[ci] = reweight(states, beliefs[ci].weights(), &a, &obs, &game).map_err(|e| e.to_string())?;
                    let tv = total_variation(&beliefs[ci].histogram(4), exact.probs());
                    worst[ci][seed as usize] = worst[ci][seed as usize].max(tv);
                }
            }
        }
        let medians: Vec<f64> = worst.iter().map(|w| median(w.clone())).collect();
        let max_large = worst[3].iter().copied().fold(0.0, f64::max);
        let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
        let m: Vec<String> = medians.iter().map(|x| format!("{x:.2e}")).collect();
        Ok((
            decreasing && max_large <= 0.02,
            format!("max TV at C=1e5 {max_large:.2e} (<= 0.02); medians [{}] strictly decreasing: {decreasing}", m.join(", ")),
        ))
    })
}

fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

fn random_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..=scale))
}

/// 1000 random (A, E, π) trials and 100 particle-estimated trials on the
/// tiny game; every per-player inequality and the NashConv form must hold.
pub fn lemma1_verification() -> Check {
    timed(4, "deviation-incentive error bound", || {
        let mut rng = rng_from(4);
        let mut violations = 0;
        for _ in 0..1000 {
            let a = NormalFormGame::new(random_matrix(4, 4, 1.0, &mut rng), random_matrix(4, 4, 1.0, &mut rng))
                .map_err(|e| e.to_string())?;
            let e = [random_matrix(4, 4, 0.2, &mut rng), random_matrix(4, 4, 0.2, &mut rng)];
            let ahat = NormalFormGame::new(a.payoff(0) - &e[0], a.payoff(1) - &e[1]).map_err(|e| e.to_string())?;
            let pi = vec![random_simplex(4, &mut rng), random_simplex(4, &mut rng)];
            violations += usize::from(!lemma1_check(&a, &ahat, &pi).map_err(|e| e.to_string())?.all_hold);
        }
        let game = games::tiny_game();
        let catalogs = [
            enumerate_pure_policies(game.spec(), 0, 2).map_err(|e| e.to_string())?,
            enumerate_pure_policies(game.spec(), 1, 2).map_err(|e| e.to_string())?,
        ];
        let exact = exact_payoff_matrix(&game, &catalogs, 2).map_err(|e| e.to_string())?;
        let mut particle_violations = 0;
        for tree_seed in 0..10u64 {
            let mut tree = Cdit::with_seed(&game, 10, 2, derive_all(4, &[tree_seed]), Storage::Full).map_err(|e| e.to_string())?;
            let est = estimated_payoff_matrix(&mut tree, &game, &catalogs).map_err(|e| e.to_string())?;
            for _ in 0..10 {
                let n = catalogs[0].len();
                let pi = vec![random_simplex(n, &mut rng), random_simplex(catalogs[1].len(), &mut rng)];
                particle_violations += usize::from(!lemma1_check(&exact, &est, &pi).map_err(|e| e.to_string())?.all_hold);
            }
        }
        Ok((
            violations == 0 && particle_violations == 0,
            format!("{violations}/1000 random and {particle_violations}/100 particle-estimate violations (0 allowed)"),
        ))
    })
}

/// Closed-form bound on the exhaustive grid and calculator outputs against
/// 40-digit reference evaluations, relative tolerance 1e-10.
pub fn bound_formulas() -> Check {
    timed(5, "bound calculators and grid inequality", || {
        let mut grid_fail = 0;
        for a in 2..=6 {
            for c in 2..=100 {
                for d in 0..=8 {
                    let lhs = m_i(a, c, d) * info_set_action_count(a, d).sqrt();
                    grid_fail += usize::from(lhs > m_sqrt_a_closed_form(a, c, d) * (1.0 + 1e-12));
                }
            }
        }
        let du = delta_u(1.0, 0.95, 5);
        let k = k_constants(2.0, 10_000, 1.5, 1.2);
        let p1 = theorem_probabilities(2000, 1, &[0.1, 0.12], sigma_size(4, 4, 1), 0.01);
        let escfr = |e: cdit::Result<f64>| e.unwrap_or(f64::NAN);
        let cases: [(&str, f64, f64); 13] = [
            ("epsilon_omega_pi(0.1,0.95,5)", epsilon_omega_pi(0.1, 0.95, 5), 0.959_632_437_499_999_936_83),
            ("epsilon_omega_pi(0.3,0.9,3)", epsilon_omega_pi(0.3, 0.9, 3), 1.763_400_000_000_000_004_4),
            ("delta_u(1,0.95,5)", du, 4.524_381_249_999_999_598_7),
            ("v_max(2,0.8,7)", v_max(2.0, 0.8, 7), 7.902_848_000_000_000_939_9),
            ("k_max", k.k_max, 0.267_777_777_777_777_788_06),
            ("k_acute", k.k_acute, 0.235_702_260_395_515_841_47),
            ("escfr_epsilon small", escfr(escfr_epsilon(0.5, &[1.0, 1.0], &[2, 2], 10, 1, 100)), 12.0),
            ("escfr_epsilon tag", escfr(escfr_epsilon(0.05, &[du, du], &[6, 6], 100, 5, 1000)), 5_280_459_489_440.013_549),
            ("sigma_size(36,16,5)", sigma_size(36, 16, 5), 63_513_647_714_881.0),
            ("theorem1", p1.theorem1.raw, 0.340_430_840_819_661_495_05),
            ("theorem2", p1.theorem2.raw, -10.214_365_827_154_978_22),
            ("final", p1.final_bound.raw, -21.445_351_412_131_509_169),
            ("m_i(6,100,5)", m_i(6, 100, 5), 790_779_661.0),
        ];
        let bad: Vec<&str> = cases
            .iter()
            .filter(|(_, got, want)| !((got - want).abs() <= 1e-10 * want.abs().max(1.0)))
            .map(|(n, _, _)| *n)
            .collect();
        Ok((
            grid_fail == 0 && bad.is_empty(),
            format!(
                "grid violations {grid_fail}/4455; {} of {} reference values off by more than 1e-10 {:?}",
                bad.len(),
                cases.len(),
                bad
            ),
        ))
    })
}

const TINY_CONFIG: &str = "[model]
name = \"tiny\"

[solve]
particles = 8
horizon = 2
iterations = 300
seeds = [0, 1, 2]
snapshots = [10, 100, 300]
cached_depth = 1

[exploit]
episodes = 20
simulations = 50
particles = 100
";

fn files_under(dir: &Path) -> std::io::Result<BTreeMap<PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap_or(&p).to_path_buf();
                out.insert(rel, std::fs::read(&p)?);
            }
        }
    }
    Ok(out)
}

fn run_pipeline(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<(), CliError> {
    let mut opts = RunOptions::new(out);
    opts.jobs = Some(jobs);
    opts.dump_tree = true;
    run_solve(cfg, &opts)?;
    run_exploitability(cfg, &opts)?;
    run_policy_marginal(cfg, &opts, None)?;
    Ok(())
}

/// Zero-sum rewards, normalized exported policies and marginals, and
/// byte-identical pipeline outputs across reruns and thread counts.
/// `scratch` must be an empty or absent directory.
pub fn invariant_suite(scratch: &Path) -> Check {
    timed(8, "zero-sum, normalization and determinism invariants", || {
        let mut notes = vec![];
        let mut ok = true;

        // Rewards along random tag trajectories and over random game tables.
        let tag = ContinuousTag::default();
        let mut rng = rng_from(8);
        let mut worst: f64 = 0.0;
        let mut state = tag.sample_initial_state(&mut rng);
        for _ in 0..10_000 {
            if tag.is_terminal(&state) {
                state = tag.sample_initial_state(&mut rng);
            }
            let a = JointAction::pair(rng.random_range(0..6), rng.random_range(0..6));
            let r = tag.rewards(&state, &a);
            worst = worst.max((r[0] + r[1]).abs());
            state = tag.sample_next_state(&state, &a, &mut rng);
        }
        for _ in 0..20 {
            let g = games::random_game(4, &[2, 3], &[2, 2], 1, &mut rng);
            for s in 0..4 {
                for ja in 0..6 {
                    let r = g.rewards(&s, &g.spec().joint_action_from_index(ja));
                    worst = worst.max((r[0] + r[1]).abs());
                }
            }
        }
        ok &= worst <= 1e-12;
        notes.push(format!("max |r0+r1| {worst:.1e}"));

        let cfg = ExperimentConfig::parse(TINY_CONFIG).map_err(|e| e.to_string())?;
        let (a, b) = (scratch.join("a"), scratch.join("b"));
        run_pipeline(&cfg, &a, 1).map_err(|e| e.to_string())?;
        run_pipeline(&cfg, &b, 2).map_err(|e| e.to_string())?;
        let fa = files_under(&a).map_err(|e| e.to_string())?;
        let fb = files_under(&b).map_err(|e| e.to_string())?;
        let identical = fa == fb;
        // A second solve over complete seeds must skip them all.
        let resumed = run_solve(&cfg, &RunOptions::new(&a)).map_err(|e| e.to_string())?;
        let untouched = files_under(&a).map_err(|e| e.to_string())? == fa;
        ok &= identical && resumed.solved.is_empty() && untouched;
        notes.push(format!(
            "{} files byte-identical across reruns/threads: {identical}; resume skipped {} seeds, files untouched: {untouched}",
            fa.len(),
            resumed.skipped.len()
        ));

        let mut worst_norm: f64 = 0.0;
        let mut negative = false;
        for (path, bytes) in &fa {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("snapshot-") || name == "policy.txt" {
                let (_, pols) = import_policies(&String::from_utf8_lossy(bytes)).map_err(|e| e.to_string())?;
                for p in &pols {
                    for (_, probs) in p.iter() {
                        worst_norm = worst_norm.max((probs.iter().sum::<f64>() - 1.0).abs());
                        negative |= probs.iter().any(|&x| x < 0.0);
                    }
                }
            }
        }
        let mut marginal_err: f64 = 0.0;
        for p in 0..2 {
            let text = String::from_utf8_lossy(&fa[&PathBuf::from(format!("marginal_p{p}.csv"))]).into_owned();
            let total: f64 = text
                .lines()
                .filter(|l| !l.starts_with('#') && !l.starts_with("sequence"))
                .filter_map(|l| l.split(',').nth(1)?.parse::<f64>().ok())
                .sum();
            marginal_err = marginal_err.max((total - 1.0).abs());
        }
        ok &= worst_norm <= 1e-9 && !negative && marginal_err <= 1e-6;
        notes.push(format!(
            "policy rows off simplex by {worst_norm:.1e}, negative entries: {negative}; marginal mass off by {marginal_err:.1e}"
        ));
        Ok((ok, notes.join("; ")))
    })
}

/// The tiny-game and formula checks plus the invariant suite.
pub fn oracle_suite(scratch: &Path) -> Vec<Check> {
    vec![
        regret_matching_convergence(),
        escfr_oracle_equivalence(),
        particle_filter_correctness(),
        lemma1_verification(),
        bound_formulas(),
        invariant_suite(scratch),
    ]
}

/// Config text of the tag experiment: C = 100, D = 5, T = 1000.
pub fn tag_config(seeds: usize, episodes: usize) -> String {
    format!(
        "[model]
name = \"tag\"

[solve]
particles = 100
horizon = 5
iterations = 1000
seeds = {seeds}
snapshots = [10, 100, 1000]
cached_depth = 1

[exploit]
episodes = {episodes}
simulations = 1000
particles = 1000
snapshots = [10, 1000]
"
    )
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Runs the tag experiment into `out` and checks the NashConv drop from
/// snapshot 10 to 1000 against three combined across-seed standard errors,
/// and the root-strategy entropy of the final policies.
pub fn tag_experiment(out: &Path, seeds: usize, jobs: Option<usize>) -> [Check; 2] {
    let start = Instant::now();
    let mut opts = RunOptions::new(out);
    opts.jobs = jobs;
    let run = || -> Result<(ExperimentConfig, Vec<crate::runner::AggregateRow>), String> {
        let cfg = ExperimentConfig::parse(&tag_config(seeds, 200)).map_err(|e| e.to_string())?;
        run_solve(&cfg, &opts).map_err(|e| e.to_string())?;
        let agg = run_exploitability(&cfg, &opts).map_err(|e| e.to_string())?;
        Ok((cfg, agg))
    };
    let result = run();
    let elapsed = start.elapsed().as_secs_f64();
    let drop = timed(6, "tag NashConv falls from snapshot 10 to 1000", || {
        let (_, agg) = result.as_ref().map_err(Clone::clone)?;
        let at = |t: u64| agg.iter().find(|r| r.snapshot_iter == t).ok_or(format!("no aggregate row for snapshot {t}"));
        let (a, b) = (at(10)?, at(1000)?);
        let (se_a, se_b) = (a.se3_nashconv / 3.0, b.se3_nashconv / 3.0);
        let gap = a.mean_nashconv - b.mean_nashconv;
        let need = 3.0 * se_a.hypot(se_b);
        Ok((
            gap >= need,
            format!(
                "mean NashConv {:.4} ± {:.4} at 10, {:.4} ± {:.4} at 1000 (1 SE, {} seeds); drop {gap:.4} vs required {need:.4}",
                a.mean_nashconv, se_a, b.mean_nashconv, se_b, a.n_seeds
            ),
        ))
    });
    let drop = Check {
        seconds: elapsed,
        ..drop
    };
    let mixed = timed(7, "tag root strategies are mixed", || {
        let (cfg, _) = result.as_ref().map_err(Clone::clone)?;
        let mut mixed_seeds = 0;
        let mut notes = vec![];
        for &s in &cfg.seeds {
            let path = policy_path(out, s);
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let (_, pols) = import_policies(&text).map_err(|e| e.to_string())?;
            let h: Vec<f64> = (0..2).map(|p| entropy(&pols[p].distribution(&InfoSetKey::root(p)))).collect();
            mixed_seeds += usize::from(h.iter().any(|&x| x > 0.1));
            notes.push(format!("{:.2}/{:.2}", h[0], h[1]));
        }
        let need = (cfg.seeds.len() * 8).div_ceil(10);
        Ok((
            mixed_seeds >= need,
            format!(
                "{mixed_seeds}/{} seeds with a root entropy > 0.1 nats (need {need}); pursuer/evader entropies [{}]",
                cfg.seeds.len(),
                notes.join(", ")
            ),
        ))
    });
    [drop, mixed]
}
