//! Run configuration: a TOML document with nested sections.
//!
//! Unknown keys are rejected; defaults follow the published
//! hyperparameters (K = 10, α = 1, B = 1024, lr = 3e-4, horizon = 20,
//! |Z| = 6). The fully resolved config is echoed into the output
//! directory so every run directory is self-describing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::EvalMode;
use crate::envs::{make_game_set, EnvKind, GameSet};
use crate::error::{MraError, Result};
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Train,
    Adapt,
    Eval,
    Oracle,
    Plot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSetConfig {
    pub env: EnvKind,
    /// Per-game population lists (one inner list per role).
    pub populations: Vec<Vec<usize>>,
    pub horizon: usize,
    pub landmarks: usize,
    pub sparse: bool,
}

impl Default for GameSetConfig {
    fn default() -> Self {
        GameSetConfig {
            env: EnvKind::Treasure,
            populations: vec![vec![3], vec![6], vec![12], vec![24]],
            horizon: 20,
            landmarks: 20,
            sparse: false,
        }
    }
}

impl GameSetConfig {
    pub fn build(&self) -> Result<GameSet> {
        let mut set = make_game_set(self.env, &self.populations, self.horizon, self.landmarks)?;
        for g in set.games.iter_mut() {
            g.sparse = self.sparse;
        }
        Ok(set)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Episodes per evaluation cell.
    pub runs: usize,
    pub mode: EvalModeConfig,
    /// Run the 2×2 cross-play protocol.
    pub cross: bool,
    /// Adaptation episodes in the target game.
    pub adapt_episodes: usize,
    /// Target population per role; falls back to the first training game.
    pub populations: Option<Vec<usize>>,
    /// Adaptation ablation: update only the graph generator.
    pub freeze_policy: bool,
    /// Write a trajectory dump next to the report.
    pub dump_trajectories: bool,
    /// Extra checkpoints for cross-play, in the order
    /// role0-single, role1-single (the main checkpoint supplies multi).
    pub cross_single_role0: Option<PathBuf>,
    pub cross_single_role1: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalModeConfig {
    Expect,
    Enumerate,
}

impl EvalModeConfig {
    pub fn to_mode(self) -> EvalMode {
        match self {
            EvalModeConfig::Expect => EvalMode::ZeroShotExpect,
            EvalModeConfig::Enumerate => EvalMode::ZeroShotEnumerate,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            runs: 40,
            mode: EvalModeConfig::Expect,
            cross: false,
            adapt_episodes: 200,
            populations: None,
            freeze_policy: false,
            dump_trajectories: false,
            cross_single_role0: None,
            cross_single_role1: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleCheck {
    Nashconv,
    Lemma1,
    Sigma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub game: Option<PathBuf>,
    pub check: OracleCheck,
    /// Policy file (per agent, per state rows of action probabilities);
    /// uniform when absent.
    pub policy: Option<PathBuf>,
    /// Randomized audit cases (0 = single check).
    pub audit: usize,
    /// Probes for the influence estimate.
    pub probes: usize,
    /// Second game set for the sigma distance.
    pub eval_game: Option<PathBuf>,
    pub resolution: f64,
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            game: None,
            check: OracleCheck::Nashconv,
            policy: None,
            audit: 0,
            probes: 200,
            eval_game: None,
            resolution: 0.05,
            tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Checkpoint to adapt or evaluate.
    pub checkpoint: Option<PathBuf>,
    pub game_set: GameSetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Train,
            seed: 0,
            output_dir: PathBuf::from("runs/out"),
            checkpoint: None,
            game_set: GameSetConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.game_set.build()?;
        if self.eval.runs < 1 {
            return Err(MraError::Parameter("eval.runs must be >= 1".into()));
        }
        if !(self.oracle.resolution > 0.0 && self.oracle.resolution <= 0.5) {
            return Err(MraError::Parameter("oracle.resolution must be in (0, 0.5]".into()));
        }
        Ok(())
    }
}

/// Parse and validate a config file. An empty file yields all defaults.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| MraError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Echo the fully resolved config into the output directory.
pub fn save_resolved(config: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = toml::to_string_pretty(config).map_err(|e| MraError::Parse(e.to_string()))?;
    std::fs::write(dir.join("config.resolved.toml"), text)?;
    Ok(())
}

/// The run manifest: seed, versions, wall time. Written next to metrics;
/// the only run artifact allowed to differ between identical reruns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub command: Command,
    pub crate_version: String,
    pub wall_ms: u128,
}

pub fn save_manifest(manifest: &RunManifest, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(manifest).map_err(|e| MraError::Parse(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_paper_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.train.inner_steps, 10);
        assert_eq!(c.train.alpha, 1.0);
        assert_eq!(c.train.batch_size, 1024);
        assert!((c.train.beta - 3e-4).abs() < 1e-12);
        assert_eq!(c.game_set.horizon, 20);
        assert_eq!(c.train.latent_dim, 6);
        assert_eq!(c.eval.runs, 40);
        assert_eq!(c.game_set.populations, vec![vec![3], vec![6], vec![12], vec![24]]);
    }

    #[test]
    fn out_of_range_gamma_rejected() {
        let err = parse_config("[train]\ngamma = 1.5\n").unwrap_err();
        assert!(matches!(err, MraError::Parameter(_)), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let err = parse_config("[train]\nlearning_rate = 0.1\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("learning_rate"), "{msg}");
    }

    #[test]
    fn resolved_round_trip_is_identity() {
        let mut c = parse_config("seed = 9\n[game_set]\nenv = \"pacman\"\npopulations = [[4,2]]\n").unwrap();
        c.command = Command::Eval;
        let dir = tempfile::tempdir().unwrap();
        save_resolved(&c, dir.path()).unwrap();
        let back = load_config(&dir.path().join("config.resolved.toml")).unwrap();
        assert_eq!(c, back);
    }
}
