//! Experiment configuration: a TOML file of flat sections.
//!
//! ```toml
//! [model]
//! name = "tag"            # tag | tiny | matching-pennies | fig1 | file
//!
//! [solve]
//! particles = 100
//! horizon = 5
//! iterations = 1000
//! seeds = 10              # or an explicit list: [0, 3, 7]
//! cached_depth = 1        # omit to keep the whole tree
//!
//! [exploit]
//! episodes = 200
//!
//! [bounds]
//! lambda = 0.1
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use cdit::cdit::Storage;
use cdit::cfr::DEFAULT_SNAPSHOTS;
use cdit::exploit::PomcpParams;
use cdit::model::{games, ContinuousTag, DiscreteOracleGame, Posg, TagParams};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Environment variable naming the output root when neither `--out` nor
/// `output.dir` is given.
pub const OUTPUT_ENV: &str = "CDIT_OUT";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelSection,
    solve: SolveSection,
    #[serde(default)]
    exploit: ExploitSection,
    #[serde(default)]
    bounds: BoundsSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    name: String,
    path: Option<PathBuf>,
    step_length: Option<f64>,
    noise_sigma: Option<f64>,
    capture_radius: Option<f64>,
    discount: Option<f64>,
    initial_half_width: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SeedSpec {
    Count(i64),
    List(Vec<i64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveSection {
    particles: i64,
    horizon: i64,
    iterations: i64,
    seeds: SeedSpec,
    snapshots: Option<Vec<i64>>,
    cached_depth: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExploitSection {
    episodes: Option<i64>,
    simulations: Option<i64>,
    exploration: Option<f64>,
    rollout_depth: Option<i64>,
    particles: Option<i64>,
    snapshots: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    lambda: Option<f64>,
    p: Option<f64>,
    d_inf_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    Tag(TagParams),
    Tiny,
    MatchingPennies,
    Fig1,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploitSettings {
    pub episodes: usize,
    pub simulations: usize,
    /// `None` uses the value range of the model.
    pub exploration: Option<f64>,
    pub rollout_depth: Option<usize>,
    pub particles: usize,
    /// Snapshot iterations to evaluate; `None` evaluates every snapshot on disk.
    pub snapshots: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSettings {
    pub lambda: f64,
    pub p: f64,
    pub d_inf_max: f64,
}

/// Validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelChoice,
    pub particles: usize,
    pub horizon: usize,
    pub iterations: u64,
    pub seeds: Vec<u64>,
    pub snapshots: Vec<u64>,
    pub storage: Storage,
    pub exploit: ExploitSettings,
    pub bounds: BoundSettings,
    pub output_dir: Option<PathBuf>,
    /// Hex SHA-256 of the config text, recorded in every output header.
    pub hash: String,
}

fn err(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {message}"))
}

fn positive(key: &str, v: i64) -> Result<u64, CliError> {
    if v < 1 {
        return Err(err(key, format!("must be at least 1, got {v}")));
    }
    Ok(v as u64)
}

fn non_negative(key: &str, v: i64) -> Result<u64, CliError> {
    if v < 0 {
        return Err(err(key, format!("must be non-negative, got {v}")));
    }
    Ok(v as u64)
}

fn iteration_list(key: &str, list: &[i64]) -> Result<Vec<u64>, CliError> {
    let xs = list.iter().map(|&t| positive(key, t)).collect::<Result<Vec<_>, _>>()?;
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(err(key, "must be strictly increasing"));
    }
    Ok(xs)
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // Model files are looked up next to the config.
        if let ModelChoice::File(p) = &mut cfg.model {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let m = &raw.model;
        let tag_keys = [
            ("model.step_length", m.step_length),
            ("model.noise_sigma", m.noise_sigma),
            ("model.capture_radius", m.capture_radius),
            ("model.discount", m.discount),
            ("model.initial_half_width", m.initial_half_width),
        ];
        let s = &raw.solve;
        let horizon = non_negative("solve.horizon", s.horizon)? as usize;
        let model = match m.name.as_str() {
            "tag" => {
                let d = TagParams::default();
                let params = TagParams {
                    step_length: m.step_length.unwrap_or(d.step_length),
                    noise_sigma: m.noise_sigma.unwrap_or(d.noise_sigma),
                    capture_radius: m.capture_radius.unwrap_or(d.capture_radius),
                    discount: m.discount.unwrap_or(d.discount),
                    horizon,
                    initial_half_width: m.initial_half_width.unwrap_or(d.initial_half_width),
                };
                for (key, v) in &tag_keys {
                    if let Some(v) = v {
                        if !v.is_finite() || *v < 0.0 {
                            return Err(err(key, format!("must be finite and non-negative, got {v}")));
                        }
                    }
                }
                if !(0.0..=1.0).contains(&params.discount) {
                    return Err(err("model.discount", "must lie in [0, 1]"));
                }
                ModelChoice::Tag(params)
            }
            other => {
                if let Some((key, _)) = tag_keys.iter().find(|(_, v)| v.is_some()) {
                    return Err(err(key, format!("only applies to model `tag`, not `{other}`")));
                }
                match other {
                    "tiny" => ModelChoice::Tiny,
                    "matching-pennies" => ModelChoice::MatchingPennies,
                    "fig1" => ModelChoice::Fig1,
                    "file" => ModelChoice::File(
                        m.path.clone().ok_or_else(|| err("model.path", "required when model.name = \"file\""))?,
                    ),
                    _ => {
                        return Err(err(
                            "model.name",
                            format!("unknown model `{other}` (expected tag, tiny, matching-pennies, fig1 or file)"),
                        ))
                    }
                }
            }
        };
        if m.path.is_some() && !matches!(model, ModelChoice::File(_)) {
            return Err(err("model.path", "only applies to model `file`"));
        }

        let particles = positive("solve.particles", s.particles)? as usize;
        let iterations = positive("solve.iterations", s.iterations)?;
        let seeds: Vec<u64> = match &s.seeds {
            SeedSpec::Count(n) => (0..non_negative("solve.seeds", *n)?).collect(),
            SeedSpec::List(xs) => xs
                .iter()
                .map(|&x| non_negative("solve.seeds", x))
                .collect::<Result<_, _>>()?,
        };
        if seeds.is_empty() {
            return Err(err("solve.seeds", "must name at least one seed"));
        }
        let mut seen = HashSet::new();
        if let Some(d) = seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(err("solve.seeds", format!("seed {d} appears more than once")));
        }
        let snapshots = match &s.snapshots {
            Some(list) => iteration_list("solve.snapshots", list)?,
            None => DEFAULT_SNAPSHOTS.iter().copied().filter(|&t| t <= iterations).collect(),
        };
        if let Some(&t) = snapshots.iter().find(|&&t| t > iterations) {
            return Err(err("solve.snapshots", format!("snapshot {t} exceeds solve.iterations = {iterations}")));
        }
        let storage = match s.cached_depth {
            Some(d) => Storage::Bounded {
                max_cached_depth: non_negative("solve.cached_depth", d)? as usize,
            },
            None => Storage::Full,
        };

        let e = &raw.exploit;
        let exploit = ExploitSettings {
            episodes: positive("exploit.episodes", e.episodes.unwrap_or(200))? as usize,
            simulations: positive("exploit.simulations", e.simulations.unwrap_or(1000))? as usize,
            exploration: match e.exploration {
                Some(c) if !(c > 0.0 && c.is_finite()) => {
                    return Err(err("exploit.exploration", format!("must be positive, got {c}")))
                }
                c => c,
            },
            rollout_depth: e
                .rollout_depth
                .map(|d| positive("exploit.rollout_depth", d).map(|d| d as usize))
                .transpose()?,
            particles: positive("exploit.particles", e.particles.unwrap_or(1000))? as usize,
            snapshots: e
                .snapshots
                .as_ref()
                .map(|l| iteration_list("exploit.snapshots", l))
                .transpose()?,
        };

        let b = &raw.bounds;
        let bounds = BoundSettings {
            lambda: b.lambda.unwrap_or(0.1),
            p: b.p.unwrap_or(0.05),
            d_inf_max: b.d_inf_max.unwrap_or(1.0),
        };
        if !(bounds.lambda > 0.0) {
            return Err(err("bounds.lambda", "must be positive"));
        }
        if !(bounds.p > 0.0 && bounds.p < 1.0) {
            return Err(err("bounds.p", "must lie in (0, 1)"));
        }
        if !(bounds.d_inf_max >= 1.0) {
            return Err(err("bounds.d_inf_max", "must be at least 1"));
        }

        Ok(Self {
            model,
            particles,
            horizon,
            iterations,
            seeds,
            snapshots,
            storage,
            exploit,
            bounds,
            output_dir: raw.output.dir,
            hash: config_hash(text),
        })
    }

    /// `--out`, then `output.dir`, then `$CDIT_OUT`, then `./cdit-out`.
    pub fn resolve_output(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        match std::env::var_os(OUTPUT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => PathBuf::from("cdit-out"),
        }
    }

    pub fn build_model(&self) -> Result<Model, CliError> {
        let d = self.horizon;
        Ok(match &self.model {
            ModelChoice::Tag(p) => Model::Tag(ContinuousTag::new(p.clone()).map_err(|e| CliError::Config(format!("`model`: {e}")))?),
            ModelChoice::Tiny => Model::Discrete(games::tiny_game().with_horizon(d)),
            ModelChoice::MatchingPennies => Model::Discrete(games::matching_pennies(d)),
            ModelChoice::Fig1 => Model::Discrete(games::fig1_game().with_horizon(d)),
            ModelChoice::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| err("model.path", format!("cannot read {}: {e}", path.display())))?;
                let g = DiscreteOracleGame::parse(&text).map_err(|e| err("model.path", e))?;
                Model::Discrete(g.with_horizon(d))
            }
        })
    }

    pub fn pomcp_params<M: Posg>(&self, model: &M) -> PomcpParams {
        let mut p = PomcpParams::for_model(model, self.horizon);
        p.simulations = self.exploit.simulations;
        p.particles = self.exploit.particles;
        if let Some(c) = self.exploit.exploration {
            p.exploration = c;
        }
        if let Some(d) = self.exploit.rollout_depth {
            p.rollout_depth = d;
        }
        p
    }
}

/// A configured model. `Posg` is generic over its random source, so
/// callers dispatch on the variant.
pub enum Model {
    Tag(ContinuousTag),
    Discrete(DiscreteOracleGame),
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[model]\nname = \"tiny\"\n[solve]\nparticles = 4\nhorizon = 2\niterations = 50\nseeds = 3\n";

    #[test]
    fn minimal_config() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.snapshots, vec![1, 2, 5, 10, 20, 50]);
        assert_eq!(c.storage, Storage::Full);
        assert_eq!(c.exploit.episodes, 200);
        assert_eq!(c.hash.len(), 64);
    }

    fn error_of(text: &str) -> String {
        match ExperimentConfig::parse(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert!(error_of(&BASE.replace("seeds = 3", "seeds = 0")).contains("solve.seeds"));
        assert!(error_of(&BASE.replace("seeds = 3", "seeds = [1, 2, 1]")).contains("solve.seeds"));
        assert!(error_of(&BASE.replace("particles = 4", "particles = 0")).contains("solve.particles"));
        assert!(error_of(&BASE.replace("iterations = 50", "iterations = -1")).contains("solve.iterations"));
        assert!(error_of(&format!("{BASE}snapshots = [5, 2]\n")).contains("solve.snapshots"));
        assert!(error_of(&format!("{BASE}bogus = 1\n")).contains("bogus"));
        assert!(error_of(&BASE.replace("particles = 4\n", "")).contains("particles"));
        assert!(error_of(&BASE.replace("\"tiny\"", "\"tiny\"\nnoise_sigma = 0.1")).contains("model.noise_sigma"));
        assert!(error_of(&BASE.replace("\"tiny\"", "\"chess\"")).contains("model.name"));
        assert!(error_of(&format!("{BASE}[bounds]\np = 1.5\n")).contains("bounds.p"));
    }

    #[test]
    fn hash_tracks_text() {
        let a = ExperimentConfig::parse(BASE).unwrap();
        let b = ExperimentConfig::parse(&format!("{BASE}\n")).unwrap();
        assert_ne!(a.hash, b.hash);
        assert_eq!(config_hash("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn explicit_output_wins() {
        let c = ExperimentConfig::parse(&format!("{BASE}[output]\ndir = \"from-config\"\n")).unwrap();
        assert_eq!(c.resolve_output(Some(Path::new("flag"))), PathBuf::from("flag"));
        assert_eq!(c.resolve_output(None), PathBuf::from("from-config"));
    }
}
