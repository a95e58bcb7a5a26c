//! `mra` — train, adapt, evaluate, audit, and plot.
//!
//! Every pipeline is driven by a TOML config (all keys optional); CLI
//! flags override the matching config fields. `MRA_SEED` overrides the
//! seed. Exit codes: 0 ok, 1 runtime failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mra_core::adapt::{adapt, cross_play, write_report, zero_shot_eval, EvalMode};
use mra_core::autodiff::RngStream;
use mra_core::config::{
    load_config, save_manifest, save_resolved, Command as RunCommand, OracleCheck, RunConfig, RunManifest,
};
use mra_core::envs::{GameSpec, TabularMG};
use mra_core::metrics::write_jsonl;
use mra_core::oracle;
use mra_core::plot::{emit_plots, PlotKind, TrajectoryRecord};
use mra_core::train::{train, ModelParams};
use mra_core::MraError;

#[derive(Parser)]
#[command(name = "mra", version, about = "Multi-game MARL laboratory")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override (MRA_SEED wins over both config and this flag).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Train in the configured game set.
    Train(Common),
    /// Adapt a checkpoint in a novel game.
    Adapt {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory to start from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Target population per role, e.g. --population 3 or 4,2.
        #[arg(long, value_delimiter = ',')]
        population: Option<Vec<usize>>,
    },
    /// Evaluate a checkpoint (zero-shot or cross-play).
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Run the 2×2 cross-play protocol.
        #[arg(long)]
        cross: bool,
        /// Zero-shot mode.
        #[arg(long, value_enum)]
        zero_shot: Option<ZeroShotArg>,
        #[arg(long, value_delimiter = ',')]
        population: Option<Vec<usize>>,
    },
    /// Exact checks on a tabular game.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Tabular game file.
        #[arg(long)]
        game: Option<PathBuf>,
        /// Which verdict to emit.
        #[arg(long, value_enum)]
        check: Option<CheckArg>,
        /// Policy file (uniform when omitted).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Randomized audit case count (prints per-case CSV).
        #[arg(long)]
        audit: Option<usize>,
        /// Second game for the sigma distance.
        #[arg(long)]
        eval_game: Option<PathBuf>,
    },
    /// Render SVG plots from metrics or trajectory files.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Metrics (or trajectory) JSONL files.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ZeroShotArg {
    Expect,
    Enumerate,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    Nashconv,
    Lemma1,
    Sigma,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Returns,
    Mi,
    AuxLoss,
    Trajectories,
}

fn load_or_default(common: &Common) -> anyhow::Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Ok(s) = std::env::var("MRA_SEED") {
        config.seed = s.parse().map_err(|_| anyhow!("MRA_SEED must be an integer, got '{s}'"))?;
    }
    config.train.seed = config.seed;
    Ok(config)
}

fn usage_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<MraError>(),
            Some(MraError::Parameter(_) | MraError::Parse(_) | MraError::Contract(_))
        ) || c.downcast_ref::<std::io::Error>().is_some()
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = run(cli, started);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if usage_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn finalize(config: &RunConfig, started: Instant) -> anyhow::Result<()> {
    save_resolved(config, &config.output_dir)?;
    save_manifest(
        &RunManifest {
            seed: config.seed,
            command: config.command,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_ms: started.elapsed().as_millis(),
        },
        &config.output_dir,
    )?;
    Ok(())
}

fn target_spec(config: &RunConfig, population: Option<Vec<usize>>, model: &ModelParams) -> anyhow::Result<GameSpec> {
    let pops = population
        .or_else(|| config.eval.populations.clone())
        .unwrap_or_else(|| model.meta.populations[0].clone());
    let mut spec = GameSpec::new(model.meta.env_kind, pops, model.meta.horizon, model.meta.landmarks)?;
    spec.sparse = model.meta.sparse;
    Ok(spec)
}

fn require_checkpoint(path: &Option<PathBuf>) -> anyhow::Result<ModelParams> {
    let path = path
        .as_ref()
        .ok_or_else(|| anyhow!(MraError::Parameter("a checkpoint path is required".into())))?;
    if !path.is_dir() {
        return Err(anyhow!(MraError::Parameter(format!(
            "checkpoint directory {} does not exist",
            path.display()
        ))));
    }
    Ok(ModelParams::load(path)?)
}

fn dump_trajectories(model: &ModelParams, spec: &GameSpec, episodes: usize, seed: u64, path: &Path) -> anyhow::Result<()> {
    use mra_core::agents::{policy_act, ActMode};
    use mra_core::autodiff::{Tape, Tensor};
    use mra_core::relnet::{generate_graph, sample_latent, LatentMode};

    let root = RngStream::root(seed).split("traj");
    let row = model.meta.nearest_game_row(&spec.populations);
    let n = spec.total_agents();
    let mut records = Vec::new();
    for e in 0..episodes {
        let mut env_rng = root.split_index("env", e as u64);
        let (mut world, mut obs) = mra_core::envs::reset(spec, &mut env_rng)?;
        let mut act_rng = root.split_index("act", e as u64);
        let mut z_rng = root.split_index("latent", e as u64);
        let mut scratch = Tape::new();
        let latents: Vec<Tensor> = (0..n)
            .map(|i| {
                let role = spec.role_of(i);
                sample_latent(&mut scratch, &model.roles[role].latent, None, row, &mut z_rng, false, LatentMode::PerGame)
            })
            .collect();
        for step in 0..spec.horizon {
            let mut actions = Vec::with_capacity(n);
            for i in 0..n {
                let role = spec.role_of(i);
                let g = generate_graph(&mut scratch, &obs[i], &latents[i], &model.roles[role].relnet);
                let (a, _) = policy_act(
                    &obs[i],
                    &g.data().to_vec(),
                    &model.roles[role].relnet.value,
                    &model.roles[role].policy,
                    &mut act_rng,
                    ActMode::Sample,
                );
                actions.push(a);
            }
            let positions: Vec<[f32; 2]> = world.state.positions.iter().map(|&(x, y)| [x, y]).collect();
            let landmarks: Vec<[f32; 2]> = world.state.landmark_positions.iter().map(|&(x, y)| [x, y]).collect();
            let (next_obs, rewards) = mra_core::envs::step(&mut world, &actions, &mut env_rng)?;
            obs = next_obs;
            records.push(TrajectoryRecord { episode: e, step, positions, actions, rewards, landmarks });
        }
    }
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli, started: Instant) -> anyhow::Result<()> {
    match cli.command {
        CliCommand::Train(common) => {
            let mut config = load_or_default(&common)?;
            config.command = RunCommand::Train;
            let set = config.game_set.build()?;
            let trainer = train(set, config.train.clone(), Some(config.output_dir.clone()))?;
            std::fs::create_dir_all(&config.output_dir)?;
            trainer.model.save(&config.output_dir.join("checkpoint"))?;
            write_jsonl(&config.output_dir.join("metrics.jsonl"), &trainer.records)?;
            finalize(&config, started)?;
            println!("trained {} episodes; checkpoint + metrics in {}", trainer.records.len(), config.output_dir.display());
            Ok(())
        }
        CliCommand::Adapt { common, checkpoint, population } => {
            let mut config = load_or_default(&common)?;
            config.command = RunCommand::Adapt;
            if checkpoint.is_some() {
                config.checkpoint = checkpoint;
            }
            let model = require_checkpoint(&config.checkpoint)?;
            let spec = target_spec(&config, population, &model)?;
            let (adapted, records) = adapt(
                &model,
                &spec,
                &config.train,
                config.eval.adapt_episodes,
                config.eval.freeze_policy,
                config.seed,
            )?;
            std::fs::create_dir_all(&config.output_dir)?;
            adapted.save(&config.output_dir.join("checkpoint"))?;
            write_jsonl(&config.output_dir.join("metrics.jsonl"), &records)?;
            finalize(&config, started)?;
            println!(
                "adapted {} episodes at population {:?}; outputs in {}",
                records.len(),
                spec.populations,
                config.output_dir.display()
            );
            Ok(())
        }
        CliCommand::Eval { common, checkpoint, cross, zero_shot, population } => {
            let mut config = load_or_default(&common)?;
            config.command = RunCommand::Eval;
            if checkpoint.is_some() {
                config.checkpoint = checkpoint;
            }
            if cross {
                config.eval.cross = true;
            }
            if let Some(mode) = zero_shot {
                config.eval.mode = match mode {
                    ZeroShotArg::Expect => mra_core::config::EvalModeConfig::Expect,
                    ZeroShotArg::Enumerate => mra_core::config::EvalModeConfig::Enumerate,
                };
            }
            let model = require_checkpoint(&config.checkpoint)?;
            let spec = target_spec(&config, population, &model)?;
            std::fs::create_dir_all(&config.output_dir)?;
            if config.eval.cross {
                let single0 = require_checkpoint(&config.eval.cross_single_role0)
                    .context("cross-play needs eval.cross_single_role0")?;
                let single1 = require_checkpoint(&config.eval.cross_single_role1)
                    .context("cross-play needs eval.cross_single_role1")?;
                let report = cross_play(&single0, &model, &single1, &model, &spec, config.eval.runs, config.seed)?;
                write_report(&config.output_dir.join("cross_play.json"), &report)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                let mode = config.eval.mode.to_mode();
                let report = zero_shot_eval(&model, &spec, config.eval.runs, mode, config.seed)?;
                write_report(&config.output_dir.join("eval.json"), &report)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
                if matches!(mode, EvalMode::ZeroShotExpect) {
                    // max-dominance companion: the enumerate report
                    let enumerate =
                        zero_shot_eval(&model, &spec, config.eval.runs, EvalMode::ZeroShotEnumerate, config.seed)?;
                    write_report(&config.output_dir.join("eval_enumerate.json"), &enumerate)?;
                }
            }
            if config.eval.dump_trajectories {
                dump_trajectories(&model, &spec, 1, config.seed, &config.output_dir.join("trajectories.jsonl"))?;
            }
            finalize(&config, started)?;
            Ok(())
        }
        CliCommand::Oracle { common, game, check, policy, audit, eval_game } => {
            let mut config = load_or_default(&common)?;
            config.command = RunCommand::Oracle;
            if game.is_some() {
                config.oracle.game = game;
            }
            if let Some(c) = check {
                config.oracle.check = match c {
                    CheckArg::Nashconv => OracleCheck::Nashconv,
                    CheckArg::Lemma1 => OracleCheck::Lemma1,
                    CheckArg::Sigma => OracleCheck::Sigma,
                };
            }
            if policy.is_some() {
                config.oracle.policy = policy;
            }
            if let Some(a) = audit {
                config.oracle.audit = a;
            }
            if eval_game.is_some() {
                config.oracle.eval_game = eval_game;
            }
            let verdict = run_oracle(&config)?;
            std::fs::create_dir_all(&config.output_dir)?;
            std::fs::write(config.output_dir.join("oracle.json"), format!("{verdict:#}\n"))?;
            println!("{verdict:#}");
            finalize(&config, started)?;
            Ok(())
        }
        CliCommand::Plot { common, kind, files } => {
            let mut config = load_or_default(&common)?;
            config.command = RunCommand::Plot;
            let kind = match kind {
                KindArg::Returns => PlotKind::Returns,
                KindArg::Mi => PlotKind::Mi,
                KindArg::AuxLoss => PlotKind::AuxLoss,
                KindArg::Trajectories => PlotKind::Trajectories,
            };
            let written = emit_plots(&files, kind, &config.output_dir)?;
            for p in &written {
                println!("{}", p.display());
            }
            finalize(&config, started)?;
            Ok(())
        }
    }
}

fn load_policy(path: &Option<PathBuf>, mg: &TabularMG) -> anyhow::Result<oracle::JointPolicy> {
    match path {
        None => Ok(oracle::JointPolicy::uniform(mg)),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let floats: Vec<f64> = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .flat_map(|l| l.split_whitespace())
                .map(|t| t.parse::<f64>().map_err(|_| anyhow!("bad float '{t}' in policy file")))
                .collect::<anyhow::Result<_>>()?;
            let expected: usize = mg.num_actions.iter().map(|&k| k * mg.num_states).sum();
            if floats.len() != expected {
                return Err(anyhow!(MraError::Parse(format!(
                    "policy file holds {} numbers, expected {expected}",
                    floats.len()
                ))));
            }
            let mut it = floats.into_iter();
            let probs = mg
                .num_actions
                .iter()
                .map(|&k| (0..mg.num_states).map(|_| (0..k).map(|_| it.next().unwrap()).collect()).collect())
                .collect();
            let pi = oracle::JointPolicy { probs };
            pi.validate(mg)?;
            Ok(pi)
        }
    }
}

fn run_oracle(config: &RunConfig) -> anyhow::Result<serde_json::Value> {
    let game_path = config
        .oracle
        .game
        .as_ref()
        .ok_or_else(|| anyhow!(MraError::Parameter("oracle needs --game".into())))?;
    let mg = TabularMG::load(game_path)?;
    let mut rng = RngStream::root(config.seed).split("oracle");
    match config.oracle.check {
        OracleCheck::Nashconv => {
            if config.oracle.audit > 0 {
                println!("case,nashconv,brute_force,agree");
                let mut worst: f64 = 0.0;
                for case in 0..config.oracle.audit {
                    let pi = oracle::random_policy(&mg, &mut rng);
                    let fast = oracle::nashconv(&mg, &pi)?;
                    let brute = oracle::brute_force_nashconv(&mg, &pi)?;
                    worst = worst.max((fast - brute).abs());
                    println!("{case},{fast},{brute},{}", (fast - brute).abs() < 1e-6);
                }
                return Ok(serde_json::json!({
                    "check": "nashconv-audit",
                    "cases": config.oracle.audit,
                    "max_disagreement": worst,
                    "ok": worst < 1e-6,
                }));
            }
            let pi = load_policy(&config.oracle.policy, &mg)?;
            let d = oracle::nashconv(&mg, &pi)?;
            Ok(serde_json::json!({ "check": "nashconv", "nashconv": d, "is_equilibrium": d <= 1e-6 }))
        }
        OracleCheck::Lemma1 => {
            let iota = oracle::lipschitz_estimate(&mg, config.oracle.probes, &mut rng)?;
            if config.oracle.audit > 0 {
                println!("case,lhs,rhs,holds");
                let mut violations = 0usize;
                for case in 0..config.oracle.audit {
                    let pi = oracle::random_policy(&mg, &mut rng);
                    let mut iota_case = iota.estimate;
                    for agent in 0..mg.num_agents() {
                        if let Some(ratio) = oracle::influence_ratio(&mg, &pi, agent)? {
                            iota_case = iota_case.max(ratio);
                        }
                    }
                    let rep = oracle::lemma1_check(&mg, &pi, iota_case)?;
                    if !rep.holds {
                        violations += 1;
                    }
                    println!("{case},{},{},{}", rep.lhs, rep.rhs, rep.holds);
                }
                return Ok(serde_json::json!({
                    "check": "lemma1-audit",
                    "cases": config.oracle.audit,
                    "iota_probe_estimate": iota.estimate,
                    "violations": violations,
                    "ok": violations == 0,
                }));
            }
            let pi = load_policy(&config.oracle.policy, &mg)?;
            let rep = oracle::lemma1_check(&mg, &pi, iota.estimate)?;
            Ok(serde_json::json!({
                "check": "lemma1",
                "iota": iota.estimate,
                "probes": iota.probes,
                "lhs": rep.lhs,
                "rhs": rep.rhs,
                "holds": rep.holds,
            }))
        }
        OracleCheck::Sigma => {
            let eval_path = config
                .oracle
                .eval_game
                .as_ref()
                .ok_or_else(|| anyhow!(MraError::Parameter("sigma needs --eval-game".into())))?;
            let eval_mg = TabularMG::load(eval_path)?;
            let rep = oracle::sigma_distance(
                std::slice::from_ref(&mg),
                std::slice::from_ref(&eval_mg),
                config.oracle.resolution,
                config.oracle.tol,
            )?;
            Ok(serde_json::to_value(&rep)?)
        }
    }
}
