//! Multi-game training orchestration.
//!
//! Games are visited round-robin. Each visit runs a batch of parallel
//! episodes in lockstep; every `min_steps_per_update` environment steps
//! (counted across rollouts) one update block runs:
//!
//! K × (critic step, policy step) → outer meta update of the policy side
//! → graph-generator ascent on the I(g;a|o) bound → (ψ, ξ) descent on the
//! game-index cross-entropy → target update.
//!
//! The block sequence is recorded in an update trace so tests can assert
//! the ordering. Everything is seeded through named streams; reruns with
//! the same config and seed are bit-identical.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agents::{ActMode, CriticParams, PolicyParams, ReplayBuffer, TargetSet, Transition};
use crate::autodiff::{AdamOpt, Gradients, RngStream, Tape, Tensor};
use crate::envs::{self, EntityObservation, GameSet};
use crate::error::{MraError, Result};
use crate::metrics::EpisodeRecord;
use crate::relnet::{generate_graph, sample_latent, LatentMode, Variant};

use super::losses::{aux_inference_loss, critic_loss, mi_action_bound, policy_loss, reptile_outer_update};
use super::model::{ModelMeta, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Outer meta step size α.
    pub alpha: f32,
    /// Inner learning rate β.
    pub beta: f32,
    /// Inner steps per update block K.
    pub inner_steps: usize,
    /// Discount γ.
    pub gamma: f32,
    /// Mini-batch size B.
    pub batch_size: usize,
    /// Parallel rollouts P.
    pub rollouts: usize,
    /// Environment steps between update blocks.
    pub min_steps_per_update: usize,
    /// Marginal sample count n for the I(g;a|o) bound.
    pub marginal_samples: usize,
    /// Total episodes across all games.
    pub episodes: usize,
    pub seed: u64,
    /// Replay capacity per game partition.
    pub buffer_capacity: usize,
    /// Polyak coefficient τ.
    pub tau: f32,
    /// Latent dimension |Z|.
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub variant: Variant,
    /// Gumbel-softmax temperature.
    pub temperature: f32,
    /// Sample z uniformly, ignoring the game index (the uni ablation).
    pub uniform_latent: bool,
    /// Entropy bonus on the policy objective (soft actor-critic style).
    pub entropy_coef: f32,
    /// Save an intermediate checkpoint every this many episodes (0 = off).
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            beta: 3e-4,
            inner_steps: 10,
            gamma: 0.95,
            batch_size: 1024,
            rollouts: 12,
            min_steps_per_update: 100,
            marginal_samples: 10,
            episodes: 4000,
            seed: 0,
            buffer_capacity: 100_000,
            tau: 0.01,
            latent_dim: 6,
            embed_dim: 64,
            hidden_dim: 64,
            variant: Variant::Option,
            temperature: 1.0,
            uniform_latent: false,
            entropy_coef: 0.01,
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(MraError::Parameter(format!("alpha must be in (0,1], got {}", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(MraError::Parameter(format!("gamma must be in [0,1), got {}", self.gamma)));
        }
        if self.inner_steps < 1 || self.batch_size < 1 || self.rollouts < 1 || self.marginal_samples < 1 {
            return Err(MraError::Parameter("inner_steps, batch_size, rollouts, marginal_samples must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(MraError::Parameter(format!("tau must be in (0,1], got {}", self.tau)));
        }
        if self.beta <= 0.0 || self.temperature <= 0.0 {
            return Err(MraError::Parameter("beta and temperature must be positive".into()));
        }
        if self.latent_dim < 1 || self.embed_dim < 1 || self.hidden_dim < 1 {
            return Err(MraError::Parameter("network dimensions must be >= 1".into()));
        }
        Ok(())
    }

    pub fn latent_mode(&self) -> LatentMode {
        if self.uniform_latent {
            LatentMode::Uniform
        } else {
            LatentMode::PerGame
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateEvent {
    CriticStep,
    PolicyStep,
    ReptileOuter,
    PhiStep,
    PsiXiStep,
    TargetUpdate,
}

pub struct Trainer {
    pub game_set: GameSet,
    pub config: TrainConfig,
    pub model: ModelParams,
    pub targets: TargetSet,
    pub buffer: ReplayBuffer,
    pub records: Vec<EpisodeRecord>,
    pub trace: Vec<UpdateEvent>,
    episode_counter: usize,
    update_counter: u64,
    steps_done: u64,
    next_update_at: u64,
    last_mi: f64,
    last_aux: f64,
    /// Most recent per-block diagnostics.
    pub last_critic_loss: f64,
    rng: RngStream,
    theta_opt: Vec<AdamOpt>,
    zeta_opt: Vec<AdamOpt>,
    phi_opt: Vec<AdamOpt>,
    psi_xi_opt: Vec<AdamOpt>,
    out_dir: Option<PathBuf>,
}

fn opt_for(groups: Vec<Vec<&Tensor>>, lr: f32) -> Vec<AdamOpt> {
    groups.into_iter().map(|g| AdamOpt::new(&g, lr)).collect()
}

fn collect_grads(tensors: &[&Tensor], grads: &Gradients) -> Vec<Vec<f32>> {
    tensors.iter().map(|t| grads.wrt_or_panic(t).to_vec()).collect()
}

impl Trainer {
    pub fn new(game_set: GameSet, config: TrainConfig, out_dir: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        if game_set.is_empty() {
            return Err(MraError::Parameter("training needs at least one game".into()));
        }
        for g in &game_set.games {
            g.validate()?;
        }
        let meta = ModelMeta::from_game_set(
            &game_set,
            config.variant,
            config.latent_dim,
            config.embed_dim,
            config.hidden_dim,
            config.temperature,
        );
        let rng = RngStream::root(config.seed).split("train");
        let model = ModelParams::init(meta, &mut rng.split("init"));
        let targets = model.targets(config.tau);
        let buffer = ReplayBuffer::new(game_set.len(), config.buffer_capacity);
        let roles = model.role_count();
        let theta_opt = opt_for((0..roles).map(|r| model.theta_tensors(r)).collect(), config.beta);
        let zeta_opt = opt_for((0..roles).map(|r| model.zeta_tensors(r)).collect(), config.beta);
        let phi_opt = opt_for((0..roles).map(|r| model.phi_tensors(r)).collect(), config.beta);
        let psi_xi_opt = opt_for((0..roles).map(|r| model.psi_xi_tensors(r)).collect(), config.beta);
        Ok(Trainer {
            game_set,
            config,
            model,
            targets,
            buffer,
            records: Vec::new(),
            trace: Vec::new(),
            episode_counter: 0,
            update_counter: 0,
            steps_done: 0,
            next_update_at: 0,
            last_mi: 0.0,
            last_aux: 0.0,
            last_critic_loss: 0.0,
            rng,
            theta_opt,
            zeta_opt,
            phi_opt,
            psi_xi_opt,
            out_dir,
        })
    }

    /// Episodes each game receives.
    pub fn per_game_budget(&self) -> usize {
        self.config.episodes / self.game_set.len()
    }

    pub fn run(&mut self) -> Result<()> {
        self.next_update_at = self.config.min_steps_per_update as u64;
        let budget = self.per_game_budget();
        let mut done = vec![0usize; self.game_set.len()];
        while done.iter().any(|&d| d < budget) {
            for m in 0..self.game_set.len() {
                let remaining = budget - done[m];
                if remaining == 0 {
                    continue;
                }
                let count = remaining.min(self.config.rollouts);
                self.run_game_visit(m, count)?;
                done[m] += count;
                if self.config.checkpoint_interval > 0 {
                    let total: usize = done.iter().sum();
                    if total % self.config.checkpoint_interval < count {
                        if let Some(dir) = &self.out_dir {
                            self.model.save(&dir.join(format!("ckpt-{total}")))?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// One visit: `count` episodes of game `m` stepped in lockstep.
    fn run_game_visit(&mut self, m: usize, count: usize) -> Result<()> {
        // fresh inner-loop optimizer state per game visit
        for opt in self.theta_opt.iter_mut().chain(self.zeta_opt.iter_mut()) {
            opt.reset();
        }
        let spec = self.game_set.games[m].clone();
        let n = spec.total_agents();
        let mode = self.config.latent_mode();

        struct Slot {
            world: envs::World,
            obs: Vec<EntityObservation>,
            latents: Vec<Tensor>,
            env_rng: RngStream,
            act_rng: RngStream,
            returns: Vec<f64>,
            episode: usize,
        }

        let mut slots = Vec::with_capacity(count);
        for s in 0..count {
            let episode = self.episode_counter + s;
            let mut env_rng = self.rng.split_index("env", episode as u64);
            let (world, obs) = envs::reset(&spec, &mut env_rng)?;
            let mut z_rng = self.rng.split_index("latent", episode as u64);
            let mut scratch = Tape::new();
            let latents = (0..n)
                .map(|i| {
                    let role = spec.role_of(i);
                    sample_latent(
                        &mut scratch,
                        &self.model.roles[role].latent,
                        None,
                        m,
                        &mut z_rng,
                        false,
                        mode,
                    )
                })
                .collect();
            slots.push(Slot {
                world,
                obs,
                latents,
                env_rng,
                act_rng: self.rng.split_index("act", episode as u64),
                returns: vec![0.0; n],
                episode,
            });
        }
        self.episode_counter += count;

        for _t in 0..spec.horizon {
            for slot in slots.iter_mut() {
                let mut scratch = Tape::new();
                let mut actions = Vec::with_capacity(n);
                let mut graphs = Vec::with_capacity(n);
                for i in 0..n {
                    let role = spec.role_of(i);
                    let g = generate_graph(&mut scratch, &slot.obs[i], &slot.latents[i], &self.model.roles[role].relnet);
                    let g_vec = g.data().to_vec();
                    let (a, _) = crate::agents::policy_act(
                        &slot.obs[i],
                        &g_vec,
                        &self.model.roles[role].relnet.value,
                        &self.model.roles[role].policy,
                        &mut slot.act_rng,
                        ActMode::Sample,
                    );
                    actions.push(a);
                    graphs.push(g_vec);
                }
                let (next_obs, rewards) = envs::step(&mut slot.world, &actions, &mut slot.env_rng)?;
                for (ret, &r) in slot.returns.iter_mut().zip(&rewards) {
                    *ret += r as f64;
                }
                let prev_obs = std::mem::replace(&mut slot.obs, next_obs.clone());
                self.buffer.push(m, Transition { obs: prev_obs, actions, next_obs, graphs, rewards });
            }
            self.steps_done += count as u64;
            while self.steps_done >= self.next_update_at {
                self.update_block(m)?;
                self.next_update_at += self.config.min_steps_per_update as u64;
            }
        }

        for slot in &slots {
            let mut role_returns = Vec::with_capacity(spec.env_kind.role_count());
            let mut start = 0;
            for &pop in &spec.populations {
                let mean = slot.returns[start..start + pop].iter().sum::<f64>() / pop as f64;
                role_returns.push(mean);
                start += pop;
            }
            self.records.push(EpisodeRecord {
                episode: slot.episode,
                game_id: m,
                role_returns,
                mi_bound: self.last_mi,
                aux_loss: self.last_aux,
                wall_ms: 0,
            });
        }
        Ok(())
    }

    fn check_finite(&self, what: &str, v: f64) -> Result<()> {
        if v.is_finite() {
            return Ok(());
        }
        let dump = self
            .out_dir
            .as_ref()
            .map(|d| d.join("diagnostic.json"))
            .unwrap_or_else(|| PathBuf::from("diagnostic.json"));
        let info = serde_json::json!({
            "what": what,
            "value": format!("{v}"),
            "update": self.update_counter,
            "episode": self.episode_counter,
        });
        let _ = std::fs::write(&dump, serde_json::to_string_pretty(&info).unwrap_or_default());
        Err(MraError::NonFinite(what.to_string(), dump.display().to_string()))
    }

    /// One full update block for game `m`. Skipped while the replay
    /// partition cannot fill a batch.
    fn update_block(&mut self, m: usize) -> Result<()> {
        if self.buffer.len(m) < self.config.batch_size {
            return Ok(());
        }
        let u = self.update_counter;
        self.update_counter += 1;
        let spec = self.game_set.games[m].clone();
        let roles = self.model.role_count();
        let urng = self.rng.split_index("update", u);

        let theta_init: Vec<Vec<Tensor>> = (0..roles)
            .map(|r| self.model.theta_tensors(r).into_iter().cloned().collect())
            .collect();

        for k in 0..self.config.inner_steps {
            // critic step
            {
                let mut batch_rng = urng.split_index("critic_batch", k as u64);
                let batch = self.buffer.sample(m, self.config.batch_size, &mut batch_rng)?;
                let mut tape = Tape::new();
                let tracked: Vec<CriticParams> = (0..roles)
                    .map(|r| {
                        let mut c = self.model.roles[r].critic.clone();
                        for t in c.tensors_mut() {
                            *t = tape.leaf(t);
                        }
                        c
                    })
                    .collect();
                let mut act_rng = urng.split_index("critic_actions", k as u64);
                let loss = critic_loss(&mut tape, &batch, &spec, &tracked, &self.targets, self.config.gamma, &mut act_rng);
                self.last_critic_loss = tape.scalar_f64(&loss);
                self.check_finite("critic loss", self.last_critic_loss)?;
                let grads = tape.backward(&loss);
                for r in 0..roles {
                    let g = collect_grads(&tracked[r].tensors(), &grads);
                    let mut params = self.model.zeta_tensors_mut(r);
                    self.zeta_opt[r].step(&mut params, &g);
                }
                self.trace.push(UpdateEvent::CriticStep);
            }
            // policy step
            {
                let mut batch_rng = urng.split_index("policy_batch", k as u64);
                let batch = self.buffer.sample(m, self.config.batch_size, &mut batch_rng)?;
                let mut tape = Tape::new();
                let mut tracked_values = Vec::with_capacity(roles);
                let mut tracked_policies = Vec::with_capacity(roles);
                for r in 0..roles {
                    tracked_values.push(tape.leaf(&self.model.roles[r].relnet.value));
                    let mut p = self.model.roles[r].policy.clone();
                    for t in p.tensors_mut() {
                        *t = tape.leaf(t);
                    }
                    tracked_policies.push(p);
                }
                let online_values: Vec<Tensor> = (0..roles).map(|r| self.model.roles[r].relnet.value.clone()).collect();
                let online_policies: Vec<PolicyParams> = (0..roles).map(|r| self.model.roles[r].policy.clone()).collect();
                let critics: Vec<CriticParams> = (0..roles).map(|r| self.model.roles[r].critic.clone()).collect();
                let mut act_rng = urng.split_index("policy_actions", k as u64);
                let loss = policy_loss(
                    &mut tape,
                    &batch,
                    &spec,
                    &tracked_values,
                    &tracked_policies,
                    &online_values,
                    &online_policies,
                    &critics,
                    self.config.entropy_coef,
                    &mut act_rng,
                );
                self.check_finite("policy loss", tape.scalar_f64(&loss))?;
                let grads = tape.backward(&loss);
                for r in 0..roles {
                    let mut order: Vec<&Tensor> = vec![&tracked_values[r]];
                    order.extend(tracked_policies[r].tensors());
                    let g = collect_grads(&order, &grads);
                    let mut params = self.model.theta_tensors_mut(r);
                    self.theta_opt[r].step(&mut params, &g);
                }
                self.trace.push(UpdateEvent::PolicyStep);
            }
        }

        // outer meta update of the policy side
        for r in 0..roles {
            let current: Vec<Tensor> = self.model.theta_tensors(r).into_iter().cloned().collect();
            let merged = reptile_outer_update(&theta_init[r], &current, self.config.alpha);
            for (dst, src) in self.model.theta_tensors_mut(r).into_iter().zip(merged) {
                *dst = src;
            }
        }
        self.trace.push(UpdateEvent::ReptileOuter);

        // graph-generator ascent on the I(g;a|o) bound
        {
            let mut batch_rng = urng.split("phi_batch");
            let batch = self.buffer.sample(m, self.config.batch_size, &mut batch_rng)?;
            let mut tape = Tape::new();
            let mut bound_values = Vec::with_capacity(roles);
            let mut total: Option<Tensor> = None;
            let mut tracked_relnets = Vec::with_capacity(roles);
            for r in 0..roles {
                let mut rn = self.model.roles[r].relnet.clone();
                for head in rn.heads.iter_mut() {
                    head.query = tape.leaf(&head.query);
                    head.key = tape.leaf(&head.key);
                }
                tracked_relnets.push(rn);
            }
            let mut mi_rng = urng.split("phi_mi");
            for r in 0..roles {
                let obs_refs = role_obs(&batch, &spec, r);
                let role = &self.model.roles[r];
                let bound = mi_action_bound(
                    &mut tape,
                    &obs_refs,
                    &tracked_relnets[r],
                    &role.latent,
                    &self.targets.value[r],
                    &self.targets.policy[r],
                    &role.relnet.value,
                    &role.policy,
                    m,
                    self.config.marginal_samples,
                    self.config.latent_mode(),
                    &mut mi_rng,
                );
                bound_values.push(tape.scalar_f64(&bound));
                total = Some(match total {
                    None => bound,
                    Some(t) => tape.add(&t, &bound),
                });
            }
            let total = total.expect("at least one role");
            self.check_finite("mi bound", tape.scalar_f64(&total))?;
            let loss = tape.neg(&total);
            let grads = tape.backward(&loss);
            for r in 0..roles {
                let order: Vec<&Tensor> = tracked_relnets[r].heads.iter().flat_map(|h| [&h.query, &h.key]).collect();
                let g = collect_grads(&order, &grads);
                let mut params = self.model.phi_tensors_mut(r);
                self.phi_opt[r].step(&mut params, &g);
            }
            self.last_mi = bound_values.iter().sum::<f64>() / roles as f64;
            self.trace.push(UpdateEvent::PhiStep);
        }

        // latent table and inference network
        {
            if self.game_set.len() > 1 {
                let mut batch_rng = urng.split("aux_batch");
                let batch = self.buffer.sample(m, self.config.batch_size, &mut batch_rng)?;
                let mut tape = Tape::new();
                let mut loss_values = Vec::with_capacity(roles);
                let mut total: Option<Tensor> = None;
                let mut tracked_psi = Vec::with_capacity(roles);
                let mut tracked_aux = Vec::with_capacity(roles);
                for r in 0..roles {
                    tracked_psi.push(tape.leaf(&self.model.roles[r].latent.logits));
                    let mut a = self.model.roles[r].aux.clone();
                    for t in a.tensors_mut() {
                        *t = tape.leaf(t);
                    }
                    tracked_aux.push(a);
                }
                let mut aux_rng = urng.split("aux_z");
                for r in 0..roles {
                    let obs_refs = role_obs(&batch, &spec, r);
                    let role = &self.model.roles[r];
                    let loss = aux_inference_loss(
                        &mut tape,
                        &obs_refs,
                        &role.relnet,
                        &role.latent,
                        &tracked_psi[r],
                        &tracked_aux[r],
                        m,
                        self.game_set.len(),
                        &mut aux_rng,
                    );
                    loss_values.push(tape.scalar_f64(&loss));
                    total = Some(match total {
                        None => loss,
                        Some(t) => tape.add(&t, &loss),
                    });
                }
                let total = total.expect("at least one role");
                self.check_finite("aux loss", tape.scalar_f64(&total))?;
                let grads = tape.backward(&total);
                for r in 0..roles {
                    let mut order: Vec<&Tensor> = vec![&tracked_psi[r]];
                    order.extend(tracked_aux[r].tensors());
                    let g = collect_grads(&order, &grads);
                    let mut params = self.model.psi_xi_tensors_mut(r);
                    self.psi_xi_opt[r].step(&mut params, &g);
                }
                self.last_aux = loss_values.iter().sum::<f64>() / roles as f64;
            } else {
                self.last_aux = 0.0;
            }
            self.trace.push(UpdateEvent::PsiXiStep);
        }

        self.model.soft_update_targets(&mut self.targets);
        self.trace.push(UpdateEvent::TargetUpdate);
        Ok(())
    }
}

/// One observation per batch item for a role, cycling through the role's
/// agents (an unbiased stand-in for averaging over all of them).
fn role_obs<'a>(batch: &'a [&Transition], spec: &crate::envs::GameSpec, role: usize) -> Vec<&'a EntityObservation> {
    let start: usize = spec.populations[..role].iter().sum();
    let pop = spec.populations[role];
    batch
        .iter()
        .enumerate()
        .map(|(idx, item)| &item.obs[start + idx % pop])
        .collect()
}

/// Run training to completion.
pub fn train(game_set: GameSet, config: TrainConfig, out_dir: Option<PathBuf>) -> Result<Trainer> {
    let mut t = Trainer::new(game_set, config, out_dir)?;
    t.run()?;
    Ok(t)
}
