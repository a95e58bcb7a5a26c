//! Adaptation in novel games, zero-shot evaluation, and cross-play.
//!
//! Adaptation fine-tunes the policy side and the graph generator jointly
//! to maximize individual rewards in the novel game (the critic keeps its
//! Bellman objective and receives the detached graph); there is no
//! inner/outer split. The latent row for an unseen population is borrowed
//! from the training game with the nearest total population.
//!
//! Zero-shot evaluation plays seeded episodes per latent class on common
//! seeds. `expect` mode reports the ψ-weighted mean over classes — the
//! expectation over the latent computed exactly — and `enumerate` mode
//! reports the best class per role, so enumerate ≥ expect holds exactly.

use std::path::Path;

use serde::Serialize;

use crate::agents::{policy_act, ActMode, CriticParams, ReplayBuffer, Transition};
use crate::autodiff::{AdamOpt, RngStream, Tape, Tensor};
use crate::envs::{self, GameSpec};
use crate::error::{MraError, Result};
use crate::metrics::EpisodeRecord;
use crate::relnet::{embed_with_graph, generate_graph, others_matrix, sample_latent, LatentMode};
use crate::train::{ModelParams, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    ZeroShotExpect,
    ZeroShotEnumerate,
    Adapted,
}

/// Per-role mean episode returns with the normalization applied to them.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub runs: usize,
    pub populations: Vec<usize>,
    pub role_returns: Vec<f64>,
    pub normalization: f64,
    /// Best latent class per role (enumerate mode only).
    pub best_latent: Option<Vec<usize>>,
}

fn check_roles(model: &ModelParams, spec: &GameSpec) -> Result<()> {
    if spec.env_kind != model.meta.env_kind {
        return Err(MraError::Contract(format!(
            "checkpoint was trained on {:?}, requested {:?}",
            model.meta.env_kind, spec.env_kind
        )));
    }
    if spec.populations.len() != model.meta.role_count {
        return Err(MraError::Contract("role count mismatch with checkpoint".into()));
    }
    Ok(())
}

/// Mean per-role episode return of one seeded episode with fixed latent
/// classes per role.
fn play_episode(
    model: &ModelParams,
    spec: &GameSpec,
    latent_class: &[usize],
    episode: u64,
    root: &RngStream,
) -> Result<Vec<f64>> {
    let n = spec.total_agents();
    let mut env_rng = root.split_index("env", episode);
    let (mut world, mut obs) = envs::reset(spec, &mut env_rng)?;
    let mut act_rng = root.split_index("act", episode);
    let mut returns = vec![0.0f64; n];
    let mut scratch = Tape::new();
    for _ in 0..spec.horizon {
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let role = spec.role_of(i);
            let mut z = vec![0.0; model.meta.latent_dim];
            z[latent_class[role]] = 1.0;
            let z = Tensor::from_slice(&z);
            let g = generate_graph(&mut scratch, &obs[i], &z, &model.roles[role].relnet);
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
        let (next_obs, rewards) = envs::step(&mut world, &actions, &mut env_rng)?;
        obs = next_obs;
        for (ret, &r) in returns.iter_mut().zip(&rewards) {
            *ret += r as f64;
        }
    }
    let mut role_returns = Vec::with_capacity(spec.populations.len());
    let mut start = 0;
    for &pop in &spec.populations {
        role_returns.push(returns[start..start + pop].iter().sum::<f64>() / pop as f64);
        start += pop;
    }
    Ok(role_returns)
}

/// Per-role mean return for every latent class over R common-seeded runs:
/// `means[class][role]`.
fn per_class_means(model: &ModelParams, spec: &GameSpec, runs: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let root = RngStream::root(seed).split("eval");
    let z_dim = model.meta.latent_dim;
    let roles = spec.populations.len();
    let mut means = vec![vec![0.0f64; roles]; z_dim];
    for (class, row) in means.iter_mut().enumerate() {
        for e in 0..runs {
            let rr = play_episode(model, spec, &vec![class; roles], e as u64, &root)?;
            for (acc, v) in row.iter_mut().zip(rr) {
                *acc += v;
            }
        }
        for v in row.iter_mut() {
            *v /= runs as f64;
        }
    }
    Ok(means)
}

/// Zero-shot evaluation at a (possibly unseen) population.
pub fn zero_shot_eval(
    model: &ModelParams,
    spec: &GameSpec,
    runs: usize,
    mode: EvalMode,
    seed: u64,
) -> Result<EvalReport> {
    if runs < 1 {
        return Err(MraError::Parameter("runs must be >= 1".into()));
    }
    check_roles(model, spec)?;
    let means = per_class_means(model, spec, runs, seed)?;
    let roles = spec.populations.len();
    let row = model.meta.nearest_game_row(&spec.populations);
    match mode {
        EvalMode::ZeroShotExpect => {
            let mut role_returns = vec![0.0f64; roles];
            for (r, ret) in role_returns.iter_mut().enumerate() {
                let probs = model.roles[r].latent.probs(row);
                *ret = means.iter().zip(&probs).map(|(m, &p)| p * m[r]).sum();
            }
            Ok(EvalReport {
                mode,
                runs,
                populations: spec.populations.clone(),
                role_returns,
                normalization: 1.0,
                best_latent: None,
            })
        }
        EvalMode::ZeroShotEnumerate => {
            let mut role_returns = vec![f64::NEG_INFINITY; roles];
            let mut best = vec![0usize; roles];
            for (class, m) in means.iter().enumerate() {
                for r in 0..roles {
                    if m[r] > role_returns[r] {
                        role_returns[r] = m[r];
                        best[r] = class;
                    }
                }
            }
            Ok(EvalReport {
                mode,
                runs,
                populations: spec.populations.clone(),
                role_returns,
                normalization: 1.0,
                best_latent: Some(best),
            })
        }
        EvalMode::Adapted => Err(MraError::Parameter("adapted reports come from adapt()".into())),
    }
}

/// Fine-tune a trained model in a novel game. Returns the adapted model
/// and per-episode metrics. Zero episodes returns the input unchanged.
pub fn adapt(
    model: &ModelParams,
    spec: &GameSpec,
    config: &TrainConfig,
    episodes: usize,
    freeze_policy: bool,
    seed: u64,
) -> Result<(ModelParams, Vec<EpisodeRecord>)> {
    check_roles(model, spec)?;
    spec.validate()?;
    let mut model = model.clone();
    if episodes == 0 {
        return Ok((model, Vec::new()));
    }
    let row = model.meta.nearest_game_row(&spec.populations);
    let roles = model.meta.role_count;
    let n = spec.total_agents();
    let root = RngStream::root(seed).split("adapt");
    let mut buffer = ReplayBuffer::new(1, config.buffer_capacity);
    let mut targets = model.targets(config.tau);

    // ω = policy side + graph generator, updated jointly
    let mut omega_opt: Vec<AdamOpt> = (0..roles)
        .map(|r| {
            let mut group = model.theta_tensors(r);
            group.extend(model.phi_tensors(r));
            AdamOpt::new(&group, config.beta)
        })
        .collect();
    let mut zeta_opt: Vec<AdamOpt> =
        (0..roles).map(|r| AdamOpt::new(&model.zeta_tensors(r), config.beta)).collect();

    let mut records = Vec::with_capacity(episodes);
    let mut steps: u64 = 0;
    let mut next_update = config.min_steps_per_update as u64;
    let mut update_counter: u64 = 0;

    for episode in 0..episodes {
        let mut env_rng = root.split_index("env", episode as u64);
        let (mut world, mut obs) = envs::reset(spec, &mut env_rng)?;
        let mut act_rng = root.split_index("act", episode as u64);
        let mut z_rng = root.split_index("latent", episode as u64);
        let mut scratch = Tape::new();
        // one latent draw per agent per episode, from the borrowed row
        let latents: Vec<Tensor> = (0..n)
            .map(|i| {
                let role = spec.role_of(i);
                sample_latent(&mut scratch, &model.roles[role].latent, None, row, &mut z_rng, false, config.latent_mode())
            })
            .collect();
        let mut returns = vec![0.0f64; n];
        for _ in 0..spec.horizon {
            let mut actions = Vec::with_capacity(n);
            let mut graphs = Vec::with_capacity(n);
            for i in 0..n {
                let role = spec.role_of(i);
                let g = generate_graph(&mut scratch, &obs[i], &latents[i], &model.roles[role].relnet);
                let g_vec = g.data().to_vec();
                let (a, _) = policy_act(
                    &obs[i],
                    &g_vec,
                    &model.roles[role].relnet.value,
                    &model.roles[role].policy,
                    &mut act_rng,
                    ActMode::Sample,
                );
                actions.push(a);
                graphs.push(g_vec);
            }
            let (next_obs, rewards) = envs::step(&mut world, &actions, &mut env_rng)?;
            for (ret, &r) in returns.iter_mut().zip(&rewards) {
                *ret += r as f64;
            }
            let prev_obs = std::mem::replace(&mut obs, next_obs.clone());
            buffer.push(0, Transition { obs: prev_obs, actions, next_obs, graphs, rewards });
            steps += 1;
            while steps >= next_update {
                if buffer.len(0) >= config.batch_size {
                    let urng = root.split_index("update", update_counter);
                    update_counter += 1;
                    adapt_update(
                        &mut model,
                        &mut targets,
                        &buffer,
                        spec,
                        config,
                        row,
                        freeze_policy,
                        &mut omega_opt,
                        &mut zeta_opt,
                        &urng,
                    )?;
                }
                next_update += config.min_steps_per_update as u64;
            }
        }
        let mut role_returns = Vec::with_capacity(spec.populations.len());
        let mut start = 0;
        for &pop in &spec.populations {
            role_returns.push(returns[start..start + pop].iter().sum::<f64>() / pop as f64);
            start += pop;
        }
        records.push(EpisodeRecord {
            episode,
            game_id: spec.game_id,
            role_returns,
            mi_bound: 0.0,
            aux_loss: 0.0,
            wall_ms: 0,
        });
    }
    Ok((model, records))
}

/// One adaptation update: critic regression plus a joint ascent step on
/// log π(a|o, φ(o,z))·Q with the critic's graph input detached.
#[allow(clippy::too_many_arguments)]
fn adapt_update(
    model: &mut ModelParams,
    targets: &mut crate::agents::TargetSet,
    buffer: &ReplayBuffer,
    spec: &GameSpec,
    config: &TrainConfig,
    latent_row: usize,
    freeze_policy: bool,
    omega_opt: &mut [AdamOpt],
    zeta_opt: &mut [AdamOpt],
    urng: &RngStream,
) -> Result<()> {
    let roles = model.meta.role_count;
    let n = spec.total_agents();

    // critic step (same Bellman objective as training)
    {
        let mut batch_rng = urng.split("critic_batch");
        let batch = buffer.sample(0, config.batch_size, &mut batch_rng)?;
        let mut tape = Tape::new();
        let tracked: Vec<CriticParams> = (0..roles)
            .map(|r| {
                let mut c = model.roles[r].critic.clone();
                for t in c.tensors_mut() {
                    *t = tape.leaf(t);
                }
                c
            })
            .collect();
        let mut act_rng = urng.split("critic_actions");
        let loss = crate::train::critic_loss(&mut tape, &batch, spec, &tracked, targets, config.gamma, &mut act_rng);
        if !tape.scalar_f64(&loss).is_finite() {
            return Err(MraError::NonFinite("adaptation critic loss".into(), "-".into()));
        }
        let grads = tape.backward(&loss);
        for r in 0..roles {
            let g: Vec<Vec<f32>> = tracked[r].tensors().iter().map(|t| grads.wrt_or_panic(t).to_vec()).collect();
            let mut params = model.zeta_tensors_mut(r);
            zeta_opt[r].step(&mut params, &g);
        }
    }

    // joint ω = (θ, φ) step through the live graph
    {
        let mut batch_rng = urng.split("omega_batch");
        let batch = buffer.sample(0, config.batch_size, &mut batch_rng)?;
        let mut tape = Tape::new();
        let mut tracked_values = Vec::with_capacity(roles);
        let mut tracked_policies = Vec::with_capacity(roles);
        let mut tracked_relnets = Vec::with_capacity(roles);
        for r in 0..roles {
            tracked_values.push(tape.leaf(&model.roles[r].relnet.value));
            let mut p = model.roles[r].policy.clone();
            for t in p.tensors_mut() {
                *t = tape.leaf(t);
            }
            tracked_policies.push(p);
            let mut rn = model.roles[r].relnet.clone();
            for head in rn.heads.iter_mut() {
                head.query = tape.leaf(&head.query);
                head.key = tape.leaf(&head.key);
            }
            tracked_relnets.push(rn);
        }

        let mut z_rng = urng.split("omega_z");
        let mut act_rng = urng.split("omega_actions");
        let mut x_rows: Vec<Vec<Tensor>> = vec![Vec::new(); roles];
        let mut actions_per_role: Vec<Vec<usize>> = vec![Vec::new(); roles];
        let mut weights: Vec<Vec<f32>> = vec![Vec::new(); roles];
        let mut scratch = Tape::new();
        for item in &batch {
            // fresh latents for the stored observations
            let zs: Vec<Tensor> = (0..n)
                .map(|i| {
                    let role = spec.role_of(i);
                    sample_latent(&mut scratch, &model.roles[role].latent, None, latent_row, &mut z_rng, false, config.latent_mode())
                })
                .collect();
            // resample joint actions under the current live graphs
            let mut resampled = Vec::with_capacity(n);
            let mut live_graphs: Vec<Vec<f32>> = Vec::with_capacity(n);
            let mut probs_per_agent = Vec::with_capacity(n);
            for i in 0..n {
                let role = spec.role_of(i);
                let g = generate_graph(&mut scratch, &item.obs[i], &zs[i], &model.roles[role].relnet);
                let g_vec = g.data().to_vec();
                let probs = crate::train::losses::action_probs(
                    &item.obs[i],
                    &g_vec,
                    &model.roles[role].relnet.value,
                    &model.roles[role].policy,
                );
                resampled.push(act_rng.categorical(&probs));
                probs_per_agent.push(probs);
                live_graphs.push(g_vec);
            }
            for i in 0..n {
                let role = spec.role_of(i);
                // critic consumes the detached graph; counterfactual
                // advantage over the agent's own actions
                let mut joint = resampled.clone();
                let mut q_own = vec![0.0f64; crate::envs::NUM_ACTIONS];
                for (a, slot) in q_own.iter_mut().enumerate() {
                    joint[i] = a;
                    *slot = crate::agents::critic_eval(&item.obs, &joint, &live_graphs[i], &model.roles[role].critic, i) as f64;
                }
                let baseline: f64 = probs_per_agent[i].iter().zip(&q_own).map(|(p, q)| p * q).sum();
                let q = (q_own[resampled[i]] - baseline) as f32;
                let g_live = generate_graph(&mut tape, &item.obs[i], &zs[i], &tracked_relnets[role]);
                let others = others_matrix(&item.obs[i]);
                let e = embed_with_graph(&mut tape, &others, &g_live, &tracked_values[role]);
                let self_r = Tensor::new(vec![1, item.obs[i].width()], item.obs[i].self_entity.clone());
                let x = tape.concat_cols(&[&self_r, &e]);
                x_rows[role].push(x);
                actions_per_role[role].push(resampled[i]);
                weights[role].push(q);
            }
        }
        let mut total: Option<Tensor> = None;
        for r in 0..roles {
            if x_rows[r].is_empty() {
                continue;
            }
            let refs: Vec<&Tensor> = x_rows[r].iter().collect();
            let x = tape.concat_rows(&refs);
            let logits = tracked_policies[r].forward(&mut tape, &x);
            let logp = tape.log_softmax(&logits, 1);
            let picked = tape.select_per_row(&logp, &actions_per_role[r]);
            let w = Tensor::new(vec![weights[r].len(), 1], weights[r].clone());
            let weighted = tape.mul(&picked, &w);
            let mean = tape.mean(&weighted);
            let mut loss_r = tape.neg(&mean);
            if config.entropy_coef > 0.0 {
                let probs = tape.softmax(&logits, 1);
                let plogp = tape.mul(&probs, &logp);
                let mean_plogp = tape.mean(&plogp);
                let neg_entropy = tape.scale(&mean_plogp, crate::envs::NUM_ACTIONS as f32 * config.entropy_coef);
                loss_r = tape.add(&loss_r, &neg_entropy);
            }
            total = Some(match total {
                None => loss_r,
                Some(t) => tape.add(&t, &loss_r),
            });
        }
        let loss = total.expect("nonempty batch");
        if !tape.scalar_f64(&loss).is_finite() {
            return Err(MraError::NonFinite("adaptation policy loss".into(), "-".into()));
        }
        let grads = tape.backward(&loss);
        for r in 0..roles {
            let mut order: Vec<&Tensor> = vec![&tracked_values[r]];
            order.extend(tracked_policies[r].tensors());
            order.extend(tracked_relnets[r].heads.iter().flat_map(|h| [&h.query, &h.key]));
            let mut g: Vec<Vec<f32>> = order.iter().map(|t| grads.wrt_or_panic(t).to_vec()).collect();
            if freeze_policy {
                // φ-only ablation: zero the θ part of the update
                let theta_len = 1 + tracked_policies[r].tensors().len();
                for gv in g.iter_mut().take(theta_len) {
                    for v in gv.iter_mut() {
                        *v = 0.0;
                    }
                }
            }
            let mut all = model.omega_tensors_mut(r);
            omega_opt[r].step(&mut all, &g);
        }
    }

    model.soft_update_targets(targets);
    Ok(())
}

/// Cross-play between single-game and multi-game checkpoints of the two
/// roles: raw per-role scores of all four pairings, each role's 2×2 table
/// normalized by its own maximum cell.
#[derive(Clone, Debug, Serialize)]
pub struct CrossPlayReport {
    /// Rows: first-role checkpoint source (single, multi); columns:
    /// second-role checkpoint source.
    pub raw: [[Vec<f64>; 2]; 2],
    pub normalized_role0: [[f64; 2]; 2],
    pub normalized_role1: [[f64; 2]; 2],
    pub runs: usize,
}

/// Divide a 2×2 table by its maximum cell.
pub fn normalize_table(raw: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let max = raw.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == 0.0 {
        return raw;
    }
    let mut out = raw;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v /= max;
        }
    }
    out
}

/// Play one pairing: role 0 agents use `model_a`, role 1 agents `model_b`.
fn pairing_scores(model_a: &ModelParams, model_b: &ModelParams, spec: &GameSpec, runs: usize, seed: u64) -> Result<Vec<f64>> {
    check_roles(model_a, spec)?;
    check_roles(model_b, spec)?;
    let root = RngStream::root(seed).split("cross");
    let n = spec.total_agents();
    let roles = spec.populations.len();
    if roles != 2 {
        return Err(MraError::Contract("cross-play needs a two-role game".into()));
    }
    let mut totals = vec![0.0f64; roles];
    let row_a = model_a.meta.nearest_game_row(&spec.populations);
    let row_b = model_b.meta.nearest_game_row(&spec.populations);
    for e in 0..runs {
        let mut env_rng = root.split_index("env", e as u64);
        let (mut world, mut obs) = envs::reset(spec, &mut env_rng)?;
        let mut act_rng = root.split_index("act", e as u64);
        let mut z_rng = root.split_index("latent", e as u64);
        let mut scratch = Tape::new();
        let latents: Vec<Tensor> = (0..n)
            .map(|i| {
                let role = spec.role_of(i);
                let (model, row) = if role == 0 { (model_a, row_a) } else { (model_b, row_b) };
                sample_latent(&mut scratch, &model.roles[role].latent, None, row, &mut z_rng, false, LatentMode::PerGame)
            })
            .collect();
        let mut returns = vec![0.0f64; n];
        for _ in 0..spec.horizon {
            let mut actions = Vec::with_capacity(n);
            for i in 0..n {
                let role = spec.role_of(i);
                let model = if role == 0 { model_a } else { model_b };
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
            let (next_obs, rewards) = envs::step(&mut world, &actions, &mut env_rng)?;
            obs = next_obs;
            for (ret, &r) in returns.iter_mut().zip(&rewards) {
                *ret += r as f64;
            }
        }
        let mut start = 0;
        for (r, &pop) in spec.populations.iter().enumerate() {
            totals[r] += returns[start..start + pop].iter().sum::<f64>() / pop as f64;
            start += pop;
        }
    }
    Ok(totals.into_iter().map(|t| t / runs as f64).collect())
}

/// The 2×2 cross-play protocol: pairings of {single, multi} checkpoints
/// for each role, on common seeds.
pub fn cross_play(
    role0_single: &ModelParams,
    role0_multi: &ModelParams,
    role1_single: &ModelParams,
    role1_multi: &ModelParams,
    spec: &GameSpec,
    runs: usize,
    seed: u64,
) -> Result<CrossPlayReport> {
    let sources0 = [role0_single, role0_multi];
    let sources1 = [role1_single, role1_multi];
    let mut raw: [[Vec<f64>; 2]; 2] = Default::default();
    for (i, a) in sources0.iter().enumerate() {
        for (j, b) in sources1.iter().enumerate() {
            raw[i][j] = pairing_scores(a, b, spec, runs, seed)?;
        }
    }
    let table0 = [[raw[0][0][0], raw[0][1][0]], [raw[1][0][0], raw[1][1][0]]];
    let table1 = [[raw[0][0][1], raw[0][1][1]], [raw[1][0][1], raw[1][1][1]]];
    Ok(CrossPlayReport {
        raw,
        normalized_role0: normalize_table(table0),
        normalized_role1: normalize_table(table1),
        runs,
    })
}

/// Write an evaluation report as pretty JSON.
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let s = serde_json::to_string_pretty(report).map_err(|e| MraError::Parse(e.to_string()))?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_game_set, EnvKind};
    use crate::train::ModelMeta;
    use crate::relnet::Variant;

    fn toy_model() -> ModelParams {
        let set = make_game_set(EnvKind::Treasure, &[vec![2], vec![4]], 20, 2).unwrap();
        let meta = ModelMeta::from_game_set(&set, Variant::Option, 3, 8, 8, 1.0);
        ModelParams::init(meta, &mut RngStream::root(5).split("m"))
    }

    fn toy_spec(pop: usize) -> GameSpec {
        let mut s = GameSpec::new(EnvKind::Treasure, vec![pop], 20, 2).unwrap();
        s.game_id = 0;
        s
    }

    #[test]
    fn enumerate_dominates_expect() {
        let model = toy_model();
        let spec = toy_spec(3);
        let expect = zero_shot_eval(&model, &spec, 5, EvalMode::ZeroShotExpect, 42).unwrap();
        let enumerate = zero_shot_eval(&model, &spec, 5, EvalMode::ZeroShotEnumerate, 42).unwrap();
        for (e, x) in enumerate.role_returns.iter().zip(&expect.role_returns) {
            assert!(e >= x, "enumerate {e} < expect {x}");
        }
    }

    #[test]
    fn single_latent_class_makes_modes_equal() {
        let set = make_game_set(EnvKind::Treasure, &[vec![2]], 20, 2).unwrap();
        let meta = ModelMeta::from_game_set(&set, Variant::Option, 1, 8, 8, 1.0);
        let model = ModelParams::init(meta, &mut RngStream::root(6).split("m"));
        let spec = toy_spec(2);
        let a = zero_shot_eval(&model, &spec, 4, EvalMode::ZeroShotExpect, 7).unwrap();
        let b = zero_shot_eval(&model, &spec, 4, EvalMode::ZeroShotEnumerate, 7).unwrap();
        assert_eq!(a.role_returns, b.role_returns);
    }

    #[test]
    fn eval_is_deterministic() {
        let model = toy_model();
        let spec = toy_spec(2);
        let a = zero_shot_eval(&model, &spec, 6, EvalMode::ZeroShotExpect, 11).unwrap();
        let b = zero_shot_eval(&model, &spec, 6, EvalMode::ZeroShotExpect, 11).unwrap();
        assert_eq!(a.role_returns, b.role_returns);
    }

    #[test]
    fn zero_adaptation_episodes_keep_checkpoint() {
        let model = toy_model();
        let spec = toy_spec(3);
        let config = TrainConfig { batch_size: 8, ..Default::default() };
        let (adapted, records) = adapt(&model, &spec, &config, 0, false, 3).unwrap();
        assert!(records.is_empty());
        for ((n0, t0), (n1, t1)) in model.named_tensors().iter().zip(adapted.named_tensors().iter()) {
            assert_eq!(n0, n1);
            assert_eq!(t0.data(), t1.data());
        }
    }

    #[test]
    fn frozen_policy_ablation_runs() {
        let model = toy_model();
        // population 3: graphs have two entries, so φ has live gradients
        let spec = toy_spec(3);
        let config = TrainConfig {
            batch_size: 8,
            min_steps_per_update: 20,
            episodes: 4,
            ..Default::default()
        };
        let (adapted, records) = adapt(&model, &spec, &config, 4, true, 9).unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.role_returns.iter().all(|v| v.is_finite())));
        // θ untouched, φ moved
        for r in 0..model.role_count() {
            for (a, b) in model.theta_tensors(r).iter().zip(adapted.theta_tensors(r)) {
                assert_eq!(a.data(), b.data());
            }
        }
        let mut phi_changed = false;
        for r in 0..model.role_count() {
            for (a, b) in model.phi_tensors(r).iter().zip(adapted.phi_tensors(r)) {
                if a.data() != b.data() {
                    phi_changed = true;
                }
            }
        }
        assert!(phi_changed);
    }

    #[test]
    fn role_mismatch_rejected() {
        let model = toy_model();
        let spec = GameSpec::new(EnvKind::Pacman, vec![2, 2], 20, 2).unwrap();
        assert!(matches!(
            zero_shot_eval(&model, &spec, 1, EvalMode::ZeroShotExpect, 1),
            Err(MraError::Contract(_))
        ));
    }

    #[test]
    fn normalization_examples() {
        let t = normalize_table([[2.0, 4.0], [1.0, 3.0]]);
        assert_eq!(t, [[0.5, 1.0], [0.25, 0.75]]);
        let equal = normalize_table([[2.0, 2.0], [2.0, 2.0]]);
        assert_eq!(equal, [[1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn normalized_tables_have_unit_max() {
        let a = [[0.3, 1.7], [0.9, 1.1]];
        let n = normalize_table(a);
        let max = n.iter().flatten().fold(f64::NEG_INFINITY, |x, &y| x.max(y));
        assert_eq!(max, 1.0);
        assert_eq!(n.iter().flatten().filter(|&&v| v == 1.0).count(), 1);
        assert!(n.iter().flatten().all(|&v| v <= 1.0));
    }
}
