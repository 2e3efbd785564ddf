use std::path::{Path, PathBuf};
use std::process::Command;

use cdit::model::games;
use cdit_cli::config::ExperimentConfig;
use cdit_cli::runner::*;
use cdit_cli::CliError;
use tempfile::TempDir;

const TINY: &str = "[model]
name = \"tiny\"

[solve]
particles = 6
horizon = 2
iterations = 200
seeds = [4, 9]
snapshots = [10, 200]

[exploit]
episodes = 30
simulations = 40
particles = 100
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdit"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn all_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = vec![];
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_is_deterministic_and_headed() {
    let tmp = TempDir::new().unwrap();
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    for dir in ["a", "b"] {
        let mut opts = RunOptions::new(tmp.path().join(dir));
        opts.dump_tree = true;
        run_solve(&cfg, &opts).unwrap();
        run_exploitability(&cfg, &opts).unwrap();
        run_policy_marginal(&cfg, &opts, None).unwrap();
    }
    let a = all_files(&tmp.path().join("a"));
    let b = all_files(&tmp.path().join("b"));
    assert_eq!(a, b);
    for (path, bytes) in &a {
        let text = String::from_utf8_lossy(bytes);
        assert!(text.starts_with("# tool cdit "), "{}", path.display());
        assert!(text.contains(&format!("# config_sha256 {}", cfg.hash)), "{}", path.display());
        assert!(text.contains("# seed"), "{}", path.display());
    }
    let names: Vec<String> = a.iter().map(|(p, _)| p.display().to_string()).collect();
    for expected in ["exploit_raw.csv", "exploit_aggregate.csv", "marginal_p0.csv", "seed-4/policy.txt", "seed-9/tree.txt", "seed-9/snapshot-10.txt"] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing from {names:?}");
    }
}

#[test]
fn aggregate_columns_follow_definitions() {
    let tmp = TempDir::new().unwrap();
    let cfg = ExperimentConfig::parse(&TINY.replace("seeds = [4, 9]", "seeds = 4")).unwrap();
    let opts = RunOptions::new(tmp.path());
    run_solve(&cfg, &opts).unwrap();
    let agg = run_exploitability(&cfg, &opts).unwrap();
    let raw = read_exploit_rows(&tmp.path().join("exploit_raw.csv")).unwrap();
    assert_eq!(raw.len(), 8);
    for a in &agg {
        let xs: Vec<f64> = raw.iter().filter(|r| r.snapshot_iter == a.snapshot_iter).map(|r| r.nashconv).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert_eq!(a.n_seeds, 4);
        // Raw values are rounded to 9 digits on disk.
        assert!((a.mean_nashconv - mean).abs() <= 1e-7);
        assert!((a.se3_nashconv - 3.0 * sd / n.sqrt()).abs() <= 1e-7);
    }
    let text = std::fs::read_to_string(tmp.path().join("exploit_aggregate.csv")).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "snapshot_iter,mean_nashconv,se3_nashconv,n_seeds");
    assert_eq!(body.len(), 3);
    let raw_text = std::fs::read_to_string(tmp.path().join("exploit_raw.csv")).unwrap();
    assert!(raw_text.lines().any(|l| l == "snapshot_iter,seed,e_pursuer,e_evader,nashconv"));
    // Rows on disk carry the file's values exactly.
    let on_disk = read_exploit_rows(&tmp.path().join("exploit_raw.csv")).unwrap();
    let exact = aggregate(&on_disk);
    for (x, y) in exact.iter().zip(&agg) {
        assert!((x.mean_nashconv - y.mean_nashconv).abs() <= 1e-7);
    }
    let m = aggregate(&[
        ExploitRow { snapshot_iter: 1, seed: 0, e: [0.0; 2], nashconv: 1.0 },
        ExploitRow { snapshot_iter: 1, seed: 1, e: [0.0; 2], nashconv: 3.0 },
    ]);
    assert!((m[0].mean_nashconv - 2.0).abs() <= 1e-12);
    assert!((m[0].se3_nashconv - 3.0 * 2f64.sqrt() / 2f64.sqrt()).abs() <= 1e-12);
}

#[test]
fn resume_skips_completed_seeds() {
    let tmp = TempDir::new().unwrap();
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    let mut opts = RunOptions::new(tmp.path());
    opts.seed = Some(4);
    let first = run_solve(&cfg, &opts).unwrap();
    assert_eq!(first.solved, vec![4]);
    let before = std::fs::read(tmp.path().join("seed-4/policy.txt")).unwrap();
    opts.seed = None;
    let second = run_solve(&cfg, &opts).unwrap();
    assert_eq!(second.solved, vec![9]);
    assert_eq!(second.skipped, vec![4]);
    assert_eq!(std::fs::read(tmp.path().join("seed-4/policy.txt")).unwrap(), before);
}

#[test]
fn missing_artifacts_list_absent_seeds() {
    let tmp = TempDir::new().unwrap();
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    let mut opts = RunOptions::new(tmp.path());
    opts.seed = Some(9);
    run_solve(&cfg, &opts).unwrap();
    opts.seed = None;
    match run_exploitability(&cfg, &opts) {
        Err(CliError::Missing(m)) => {
            assert!(m.ends_with("for seeds 4"), "{m}");
        }
        other => panic!("expected missing artifacts, got {other:?}"),
    }
    assert!(matches!(run_policy_marginal(&cfg, &opts, None), Err(CliError::Missing(_))));
}

#[test]
fn marginals_are_normalized() {
    let tmp = TempDir::new().unwrap();
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    let opts = RunOptions::new(tmp.path());
    run_solve(&cfg, &opts).unwrap();
    let explicit = tmp.path().join("seed-9/snapshot-10.txt");
    for paths in [run_policy_marginal(&cfg, &opts, None).unwrap(), run_policy_marginal(&cfg, &opts, Some(&explicit)).unwrap()] {
        for p in paths {
            let text = std::fs::read_to_string(&p).unwrap();
            assert!(text.contains("# method enumerated"));
            let probs: Vec<f64> = text
                .lines()
                .filter(|l| !l.starts_with('#'))
                .skip(1)
                .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
                .collect();
            assert!(probs.len() <= 8 && !probs.is_empty());
            assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }
}

#[test]
fn file_models_load_relative_to_config() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("game.txt"), games::tiny_game().to_text()).unwrap();
    let text = TINY.replace("name = \"tiny\"", "name = \"file\"\npath = \"game.txt\"");
    let path = write_config(tmp.path(), "file.toml", &text);
    let cfg = ExperimentConfig::load(&path).unwrap();
    let out = tmp.path().join("out");
    let mut opts = RunOptions::new(&out);
    opts.seed = Some(4);
    run_solve(&cfg, &opts).unwrap();
    // Same game, same seed: same policy records as the built-in model.
    let builtin = ExperimentConfig::parse(TINY).unwrap();
    let mut opts2 = RunOptions::new(tmp.path().join("builtin"));
    opts2.seed = Some(4);
    run_solve(&builtin, &opts2).unwrap();
    let records = |p: PathBuf| -> Vec<String> {
        std::fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
    };
    assert_eq!(records(out.join("seed-4/policy.txt")), records(tmp.path().join("builtin/seed-4/policy.txt")));
}

#[test]
fn binary_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let zero = write_config(tmp.path(), "zero.toml", &TINY.replace("seeds = [4, 9]", "seeds = []"));
    let out = bin().args(["solve", "--config"]).arg(&zero).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solve.seeds"));

    let out = bin().args(["solve", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["exploit", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let good = write_config(tmp.path(), "good.toml", TINY);
    let out = bin().args(["exploit", "--config"]).arg(&good).arg("--out").arg(tmp.path().join("empty")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("4, 9"));

    let tag = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tag.toml");
    let out = bin().args(["bounds", "--config"]).arg(&tag).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    for label in ["epsilon_omega_pi", "k_acute[1]", "escfr_epsilon", "final_probability", "m_sqrt_a_bound[0]"] {
        assert!(table.contains(label), "{label}");
    }
}

#[test]
fn binary_uses_output_env_and_seed_flag() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let root = tmp.path().join("env-root");
    let out = bin()
        .args(["solve", "--seed", "9", "--jobs", "1", "--config"])
        .arg(&cfg)
        .env("CDIT_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("seed-9/report.txt").exists());
    assert!(!root.join("seed-4").exists());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let cfg = ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            cfg.build_model().unwrap();
            n += 1;
        }
    }
    assert!(n >= 3);
}
