//! Loss constructions for the iterative objectives.
//!
//! The critic minimizes a mean squared Bellman error whose target uses
//! actions drawn from the delayed policy and is gradient-detached. The
//! policy ascends the score-function estimator log π·Q over stored
//! (observation, graph) pairs with freshly resampled joint actions. The
//! graph generator ascends a variational lower bound on I(g;a|o), and the
//! latent table ψ with the inference network ξ descend the game-index
//! cross-entropy, whose implied mutual information is log|M| − loss.

use crate::agents::{critic_inputs, policy_act, ActMode, CriticParams, PolicyParams, TargetSet, Transition};
use crate::autodiff::{RngStream, Tape, Tensor};
use crate::envs::{EntityObservation, GameSpec, NUM_ACTIONS};
use crate::relnet::{embed_with_graph, generate_graph, others_matrix, sample_latent, LatentMode, LatentSpec, RelNetParams};

use super::model::AuxNetParams;

/// Mean squared Bellman error, summed over roles.
///
/// `tracked_critics` must hold tape leaves; the target
/// y = r + γ·Q̄(o', a'∼π̄, g) is computed eagerly and enters as a constant.
#[allow(clippy::too_many_arguments)]
pub fn critic_loss(
    tape: &mut Tape,
    batch: &[&Transition],
    spec: &GameSpec,
    tracked_critics: &[CriticParams],
    targets: &TargetSet,
    gamma: f32,
    rng: &mut RngStream,
) -> Tensor {
    assert!(!batch.is_empty(), "critic loss over empty batch");
    let n = spec.total_agents();
    let roles = spec.env_kind.role_count();
    let mut q_rows: Vec<Vec<Tensor>> = vec![Vec::new(); roles];
    let mut y_vals: Vec<Vec<f32>> = vec![Vec::new(); roles];

    for item in batch {
        // joint next action from the delayed policy, one draw per item
        let mut next_actions = Vec::with_capacity(n);
        for j in 0..n {
            let r = spec.role_of(j);
            let (a, _) = policy_act(
                &item.next_obs[j],
                &item.graphs[j],
                &targets.value[r],
                &targets.policy[r],
                rng,
                ActMode::Sample,
            );
            next_actions.push(a);
        }
        for i in 0..n {
            let r = spec.role_of(i);
            let q_bar = crate::agents::critic_eval(&item.next_obs, &next_actions, &item.graphs[i], &targets.critic[r], i);
            let y = item.rewards[i] + gamma * q_bar;
            let (self_t, others_t) = critic_inputs(&item.obs, &item.actions, &item.graphs[i], i);
            let q = tracked_critics[r].forward(tape, &self_t, &others_t);
            q_rows[r].push(q);
            y_vals[r].push(y);
        }
    }

    let mut total: Option<Tensor> = None;
    for r in 0..roles {
        if q_rows[r].is_empty() {
            continue;
        }
        let refs: Vec<&Tensor> = q_rows[r].iter().collect();
        let q = tape.concat_rows(&refs);
        let y = Tensor::new(vec![y_vals[r].len(), 1], y_vals[r].clone());
        let d = tape.sub(&q, &y);
        let sq = tape.mul(&d, &d);
        let m = tape.mean(&sq);
        total = Some(match total {
            None => m,
            Some(t) => tape.add(&t, &m),
        });
    }
    total.expect("no agents in batch")
}

/// Negated score-function objective −E[log π(a|o,g)·w], summed over
/// roles, with w the counterfactual advantage
/// w = Q(o, a, g) − Σ_{a'} π(a'|o,g)·Q(o, (a', a₋ᵢ), g): the centralized
/// critic marginalized over the agent's own discrete actions supplies a
/// variance-free baseline. Stored graphs are inputs only; joint actions
/// are resampled from the current policy; w enters detached. A small
/// entropy bonus keeps the categorical policies from saturating.
#[allow(clippy::too_many_arguments)]
pub fn policy_loss(
    tape: &mut Tape,
    batch: &[&Transition],
    spec: &GameSpec,
    tracked_values: &[Tensor],
    tracked_policies: &[PolicyParams],
    online_values: &[Tensor],
    online_policies: &[PolicyParams],
    critics: &[CriticParams],
    entropy_coef: f32,
    rng: &mut RngStream,
) -> Tensor {
    assert!(!batch.is_empty(), "policy loss over empty batch");
    let n = spec.total_agents();
    let roles = spec.env_kind.role_count();
    let mut x_rows: Vec<Vec<Tensor>> = vec![Vec::new(); roles];
    let mut actions: Vec<Vec<usize>> = vec![Vec::new(); roles];
    let mut weights: Vec<Vec<f32>> = vec![Vec::new(); roles];

    for item in batch {
        let mut resampled = Vec::with_capacity(n);
        let mut probs_per_agent = Vec::with_capacity(n);
        for j in 0..n {
            let r = spec.role_of(j);
            let probs = action_probs(&item.obs[j], &item.graphs[j], &online_values[r], &online_policies[r]);
            resampled.push(rng.categorical(&probs));
            probs_per_agent.push(probs);
        }
        for i in 0..n {
            let r = spec.role_of(i);
            let mut joint = resampled.clone();
            let mut q_own = vec![0.0f64; NUM_ACTIONS];
            for (a, slot) in q_own.iter_mut().enumerate() {
                joint[i] = a;
                *slot = crate::agents::critic_eval(&item.obs, &joint, &item.graphs[i], &critics[r], i) as f64;
            }
            let baseline: f64 = probs_per_agent[i].iter().zip(&q_own).map(|(p, q)| p * q).sum();
            let advantage = (q_own[resampled[i]] - baseline) as f32;
            let obs = &item.obs[i];
            let g = Tensor::new(vec![1, item.graphs[i].len()], item.graphs[i].clone());
            let others = others_matrix(obs);
            let e = embed_with_graph(tape, &others, &g, &tracked_values[r]);
            let self_r = Tensor::new(vec![1, obs.width()], obs.self_entity.clone());
            let x = tape.concat_cols(&[&self_r, &e]);
            x_rows[r].push(x);
            actions[r].push(resampled[i]);
            weights[r].push(advantage);
        }
    }

    let mut total: Option<Tensor> = None;
    for r in 0..roles {
        if x_rows[r].is_empty() {
            continue;
        }
        let refs: Vec<&Tensor> = x_rows[r].iter().collect();
        let x = tape.concat_rows(&refs);
        let logits = tracked_policies[r].forward(tape, &x);
        let logp = tape.log_softmax(&logits, 1);
        let picked = tape.select_per_row(&logp, &actions[r]);
        let w = Tensor::new(vec![weights[r].len(), 1], weights[r].clone());
        let weighted = tape.mul(&picked, &w);
        let m = tape.mean(&weighted);
        let mut loss_r = tape.neg(&m);
        if entropy_coef > 0.0 {
            // mean row entropy = −NUM_ACTIONS · mean(p ⊙ log p)
            let probs = tape.softmax(&logits, 1);
            let plogp = tape.mul(&probs, &logp);
            let mean_plogp = tape.mean(&plogp);
            let neg_entropy = tape.scale(&mean_plogp, NUM_ACTIONS as f32 * entropy_coef);
            loss_r = tape.add(&loss_r, &neg_entropy);
        }
        total = Some(match total {
            None => loss_r,
            Some(t) => tape.add(&t, &loss_r),
        });
    }
    total.expect("no agents in batch")
}

/// First-order meta update θ ← θ_init + α(θ_K − θ_init), applied
/// elementwise across a parameter group. α = 1 copies θ_K exactly.
pub fn reptile_outer_update(theta_init: &[Tensor], theta_k: &[Tensor], alpha: f32) -> Vec<Tensor> {
    assert_eq!(theta_init.len(), theta_k.len(), "parameter group mismatch");
    if alpha == 1.0 {
        return theta_k.to_vec();
    }
    theta_init
        .iter()
        .zip(theta_k)
        .map(|(init, after)| {
            assert_eq!(init.shape(), after.shape(), "parameter shape drift");
            let data = init
                .data()
                .iter()
                .zip(after.data())
                .map(|(&a, &b)| a + alpha * (b - a))
                .collect();
            Tensor::new(init.shape().to_vec(), data)
        })
        .collect()
}

/// Variational lower bound on I(g;a|o) for one role's observation batch,
/// maximized w.r.t. the attention heads behind `relnet` (register them as
/// leaves before calling). The delayed policy scores actions; the live
/// policy supplies the sampling distribution.
///
/// With `n_marginal ≥ |Z|` the latent is enumerated and the marginal
/// p(a|o) = Σ_z p_ψ(z)·π̄(a|o,φ(o,z)) is exact, which makes the bound
/// equal the true conditional mutual information when the delayed and
/// live policies coincide. Otherwise both the outer latent and the
/// marginal are Monte-Carlo sampled, one action per item.
#[allow(clippy::too_many_arguments)]
pub fn mi_action_bound(
    tape: &mut Tape,
    obs_batch: &[&EntityObservation],
    relnet: &RelNetParams,
    latent: &LatentSpec,
    target_value: &Tensor,
    target_policy: &PolicyParams,
    online_value: &Tensor,
    online_policy: &PolicyParams,
    game_id: usize,
    n_marginal: usize,
    mode: LatentMode,
    rng: &mut RngStream,
) -> Tensor {
    assert!(!obs_batch.is_empty(), "mi bound over empty batch");
    assert!(n_marginal >= 1, "marginal needs at least one sample");
    let z_dim = relnet.latent_dim;
    let enumerate = n_marginal >= z_dim;

    let weights: Vec<f32> = match mode {
        LatentMode::Uniform => vec![1.0 / z_dim as f32; z_dim],
        LatentMode::PerGame => latent.probs(game_id).iter().map(|&p| p as f32).collect(),
    };

    let mut per_item = Vec::with_capacity(obs_batch.len());
    for obs in obs_batch {
        if enumerate {
            // graphs and policy rows for every latent class
            let mut online_probs = Vec::with_capacity(z_dim);
            let mut target_probs = Vec::with_capacity(z_dim);
            let mut target_logp = Vec::with_capacity(z_dim);
            for z_idx in 0..z_dim {
                let mut one_hot = vec![0.0; z_dim];
                one_hot[z_idx] = 1.0;
                let z = Tensor::from_slice(&one_hot);
                let g = generate_graph(tape, obs, &z, relnet);
                let logits_t = policy_row(tape, obs, &g, target_value, target_policy);
                let logits_o = policy_row(tape, obs, &g, online_value, online_policy);
                let tp = tape.softmax(&logits_t, 1);
                // log through the same probability path as the marginal so
                // the ratio cancels exactly when π ignores g
                target_logp.push(tape.ln(&tp));
                target_probs.push(tp);
                online_probs.push(tape.softmax(&logits_o, 1));
            }
            // marginal p(a|o) = Σ_z w_z π̄(a|o,g_z)
            let mut marginal: Option<Tensor> = None;
            for (z_idx, tp) in target_probs.iter().enumerate() {
                let scaled = tape.scale(tp, weights[z_idx]);
                marginal = Some(match marginal {
                    None => scaled,
                    Some(m) => tape.add(&m, &scaled),
                });
            }
            let log_marginal = {
                let m = marginal.unwrap();
                tape.ln(&m)
            };
            // Σ_z w_z Σ_a π(a|o,g_z)·(log π̄(a|o,g_z) − log p(a|o))
            let mut item: Option<Tensor> = None;
            for z_idx in 0..z_dim {
                let ratio = tape.sub(&target_logp[z_idx], &log_marginal);
                let contrib = tape.mul(&online_probs[z_idx], &ratio);
                let summed = tape.sum(&contrib);
                let scaled = tape.scale(&summed, weights[z_idx]);
                item = Some(match item {
                    None => scaled,
                    Some(t) => tape.add(&t, &scaled),
                });
            }
            per_item.push(item.unwrap());
        } else {
            // one sampled latent, one sampled action, n-sample marginal
            let z = sample_latent(tape, latent, None, game_id, rng, false, mode);
            let g = generate_graph(tape, obs, &z, relnet);
            let logits_o = policy_row(tape, obs, &g, online_value, online_policy);
            let probs: Vec<f64> = {
                let ls = tape.log_softmax(&logits_o, 1);
                ls.data().iter().map(|&lp| (lp as f64).exp()).collect()
            };
            let action = rng.categorical(&probs);
            let logits_t = policy_row(tape, obs, &g, target_value, target_policy);
            let probs_t = tape.softmax(&logits_t, 1);
            let logp_t = tape.ln(&probs_t);
            let numerator = tape.select_per_row(&logp_t, &[action]);

            let mut marginal: Option<Tensor> = None;
            for _ in 0..n_marginal {
                let zp = sample_latent(tape, latent, None, game_id, rng, false, mode);
                let gp = generate_graph(tape, obs, &zp, relnet);
                let logits_p = policy_row(tape, obs, &gp, target_value, target_policy);
                let probs_p = tape.softmax(&logits_p, 1);
                let picked = tape.select_per_row(&probs_p, &[action]);
                marginal = Some(match marginal {
                    None => picked,
                    Some(m) => tape.add(&m, &picked),
                });
            }
            let mean_marginal = tape.scale(&marginal.unwrap(), 1.0 / n_marginal as f32);
            let log_marginal = tape.ln(&mean_marginal);
            let diff = tape.sub(&numerator, &log_marginal);
            per_item.push(tape.reshape(&diff, vec![1]));
        }
    }
    let refs: Vec<&Tensor> = per_item.iter().collect();
    let stacked = tape.concat_rows(&refs);
    tape.mean(&stacked)
}

/// Eager action probabilities of one agent under given parameters.
pub fn action_probs(
    obs: &EntityObservation,
    graph: &[f32],
    value: &Tensor,
    policy: &PolicyParams,
) -> Vec<f64> {
    let mut scratch = Tape::new();
    let g = Tensor::new(vec![1, graph.len()], graph.to_vec());
    let logits = crate::agents::policy_logits(&mut scratch, obs, &g, value, policy);
    let ls = scratch.log_softmax(&logits, 1);
    ls.data().iter().map(|&lp| (lp as f64).exp()).collect()
}

fn policy_row(tape: &mut Tape, obs: &EntityObservation, g: &Tensor, value: &Tensor, policy: &PolicyParams) -> Tensor {
    let others = others_matrix(obs);
    let e = embed_with_graph(tape, &others, g, value);
    let self_r = Tensor::new(vec![1, obs.width()], obs.self_entity.clone());
    let x = tape.concat_cols(&[&self_r, &e]);
    policy.forward(tape, &x)
}

/// Game-index cross-entropy −log p(x̂ = game | o, φ(o,z); ξ) with z drawn
/// differentiably from ψ. Register ψ and the ξ tensors as leaves; the
/// attention heads stay frozen. Returns a constant zero for |M| = 1.
#[allow(clippy::too_many_arguments)]
pub fn aux_inference_loss(
    tape: &mut Tape,
    obs_batch: &[&EntityObservation],
    relnet: &RelNetParams,
    latent: &LatentSpec,
    tracked_psi: &Tensor,
    aux: &AuxNetParams,
    game_id: usize,
    num_games: usize,
    rng: &mut RngStream,
) -> Tensor {
    assert!(!obs_batch.is_empty(), "inference loss over empty batch");
    if num_games == 1 {
        return Tensor::scalar(0.0);
    }
    let mut rows = Vec::with_capacity(obs_batch.len());
    for obs in obs_batch {
        let z = sample_latent(tape, latent, Some(tracked_psi), game_id, rng, true, LatentMode::PerGame);
        let g = generate_graph(tape, obs, &z, relnet);
        rows.push(aux.forward(tape, obs, &g));
    }
    let refs: Vec<&Tensor> = rows.iter().collect();
    let logits = tape.concat_rows(&refs);
    let logp = tape.log_softmax(&logits, 1);
    let picked = tape.select_per_row(&logp, &vec![game_id; obs_batch.len()]);
    let m = tape.mean(&picked);
    tape.neg(&m)
}

/// Implied mutual information of the inference loss: log|M| − loss.
pub fn implied_game_mi(aux_loss: f64, num_games: usize) -> f64 {
    (num_games as f64).ln() - aux_loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference, gradient_rel_err};
    use crate::envs::{EnvKind, GameSpec, NUM_ACTIONS};
    use crate::relnet::Variant;
    use crate::train::model::{ModelMeta, ModelParams};
    use crate::envs::make_game_set;

    fn toy_setup(num_games: usize) -> (GameSpec, ModelParams) {
        let pops: Vec<Vec<usize>> = (0..num_games).map(|i| vec![2 + i]).collect();
        let set = make_game_set(EnvKind::Treasure, &pops, 20, 2).unwrap();
        let meta = ModelMeta::from_game_set(&set, Variant::Option, 2, 6, 6, 1.0);
        let model = ModelParams::init(meta, &mut RngStream::root(7).split("m"));
        (set.games[0].clone(), model)
    }

    fn toy_transition(spec: &GameSpec, seed: u64) -> Transition {
        let mut rng = RngStream::root(seed).split("env");
        let (mut world, obs) = crate::envs::reset(spec, &mut rng).unwrap();
        let actions = vec![1; spec.total_agents()];
        let graphs: Vec<Vec<f32>> = obs
            .iter()
            .map(|o| vec![1.0 / o.num_others().max(1) as f32; o.num_others()])
            .collect();
        let (next_obs, rewards) = crate::envs::step(&mut world, &actions, &mut rng).unwrap();
        Transition { obs, actions, next_obs, graphs, rewards }
    }

    #[test]
    fn bellman_example_hand_check() {
        // r = 1, γ = 0.95, Q̄ = 2, Q = 3 → y = 2.9, loss = (3−2.9)² = 0.01
        let (spec, mut model) = toy_setup(1);
        let mut t = toy_transition(&spec, 3);
        for r in t.rewards.iter_mut() {
            *r = 1.0;
        }
        // constant critics via zeroed output weights and a fixed bias
        for v in model.roles[0].critic.w2.data_mut() {
            *v = 0.0;
        }
        model.roles[0].critic.b2.data_mut()[0] = 3.0;
        let mut targets = model.targets(0.01);
        for v in targets.critic[0].w2.data_mut() {
            *v = 0.0;
        }
        targets.critic[0].b2.data_mut()[0] = 2.0;

        let mut tape = Tape::new();
        let mut tracked = vec![model.roles[0].critic.clone()];
        for tensor in tracked[0].tensors_mut() {
            *tensor = tape.leaf(tensor);
        }
        let mut rng = RngStream::root(5).split("u");
        let batch = vec![&t];
        let loss = critic_loss(&mut tape, &batch, &spec, &tracked, &targets, 0.95, &mut rng);
        assert!((tape.scalar_f64(&loss) - 0.01).abs() < 1e-6, "loss {}", tape.scalar_f64(&loss));
    }

    #[test]
    fn critic_loss_zero_at_fixed_point() {
        // γ = 0 and Q ≡ r pointwise → loss 0
        let (spec, mut model) = toy_setup(1);
        let mut t = toy_transition(&spec, 4);
        for r in t.rewards.iter_mut() {
            *r = 0.75;
        }
        for v in model.roles[0].critic.w2.data_mut() {
            *v = 0.0;
        }
        model.roles[0].critic.b2.data_mut()[0] = 0.75;
        let targets = model.targets(0.01);
        let mut tape = Tape::new();
        let mut tracked = vec![model.roles[0].critic.clone()];
        for tensor in tracked[0].tensors_mut() {
            *tensor = tape.leaf(tensor);
        }
        let mut rng = RngStream::root(6).split("u");
        let batch = vec![&t];
        let loss = critic_loss(&mut tape, &batch, &spec, &tracked, &targets, 0.0, &mut rng);
        assert!(tape.scalar_f64(&loss).abs() < 1e-12);
    }

    #[test]
    fn myopic_target_is_reward() {
        // γ = 0: y = r exactly, independent of the target critic; with the
        // online critic pinned at 0 the loss is mean(r²)
        let (spec, mut model) = toy_setup(1);
        let t = toy_transition(&spec, 8);
        for v in model.roles[0].critic.w2.data_mut() {
            *v = 0.0;
        }
        model.roles[0].critic.b2.data_mut()[0] = 0.0;
        let mut targets = model.targets(0.01);
        targets.critic[0].b2.data_mut()[0] = 123.0;
        let mut tape = Tape::new();
        let mut tracked = vec![model.roles[0].critic.clone()];
        for tensor in tracked[0].tensors_mut() {
            *tensor = tape.leaf(tensor);
        }
        let mut rng = RngStream::root(9).split("u");
        let batch = vec![&t];
        let loss = critic_loss(&mut tape, &batch, &spec, &tracked, &targets, 0.0, &mut rng);
        let expect: f64 = t.rewards.iter().map(|&r| (r as f64) * (r as f64)).sum::<f64>() / t.rewards.len() as f64;
        assert!((tape.scalar_f64(&loss) - expect).abs() < 1e-6);
    }

    #[test]
    fn zero_q_means_zero_policy_gradient() {
        let (spec, mut model) = toy_setup(1);
        let t = toy_transition(&spec, 5);
        // critic that always outputs 0
        for v in model.roles[0].critic.w2.data_mut() {
            *v = 0.0;
        }
        model.roles[0].critic.b2.data_mut()[0] = 0.0;

        let mut tape = Tape::new();
        let tracked_value = vec![tape.leaf(&model.roles[0].relnet.value)];
        let mut tracked_policy = vec![model.roles[0].policy.clone()];
        for tensor in tracked_policy[0].tensors_mut() {
            *tensor = tape.leaf(tensor);
        }
        let mut rng = RngStream::root(10).split("u");
        let batch = vec![&t];
        let loss = policy_loss(
            &mut tape,
            &batch,
            &spec,
            &tracked_value,
            &tracked_policy,
            &[model.roles[0].relnet.value.clone()],
            &[model.roles[0].policy.clone()],
            &[model.roles[0].critic.clone()],
            0.0,
            &mut rng,
        );
        let grads = tape.backward(&loss);
        for t in tracked_policy[0].tensors() {
            assert!(grads.wrt_or_panic(t).iter().all(|&g| g == 0.0));
        }
        assert!(grads.wrt_or_panic(&tracked_value[0]).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        // frozen Q̂: finite differences of E[log π·Q̂] w.r.t. policy weights
        let (spec, model) = toy_setup(1);
        let t = toy_transition(&spec, 11);
        let batch = vec![&t];

        let run = |w1_probe: &Tensor, rng_seed: u64| -> f64 {
            let mut tape = Tape::new();
            let mut p = model.roles[0].policy.clone();
            p.w1 = w1_probe.clone();
            let mut rng = RngStream::root(rng_seed).split("u");
            let loss = policy_loss(
                &mut tape,
                &batch,
                &spec,
                &[model.roles[0].relnet.value.clone()],
                &[p],
                &[model.roles[0].relnet.value.clone()],
                &[model.roles[0].policy.clone()],
                &[model.roles[0].critic.clone()],
                0.0,
                &mut rng,
            );
            tape.scalar_f64(&loss)
        };

        let mut tape = Tape::new();
        let tracked_value = vec![model.roles[0].relnet.value.clone()];
        let mut tracked_policy = vec![model.roles[0].policy.clone()];
        tracked_policy[0].w1 = tape.leaf(&model.roles[0].policy.w1);
        let mut rng = RngStream::root(77).split("u");
        let loss = policy_loss(
            &mut tape,
            &batch,
            &spec,
            &tracked_value,
            &tracked_policy,
            &[model.roles[0].relnet.value.clone()],
            &[model.roles[0].policy.clone()],
            &[model.roles[0].critic.clone()],
            0.0,
            &mut rng,
        );
        let grads = tape.backward(&loss);
        let analytic = grads.wrt_or_panic(&tracked_policy[0].w1);
        // the resampled actions depend only on the untracked online params,
        // so the same rng seed keeps them fixed across probes
        let fd = finite_difference(&model.roles[0].policy.w1, |probe| run(probe, 77), 1e-3);
        assert!(gradient_rel_err(analytic, &fd) < 1e-3);
    }

    #[test]
    fn bandit_probability_of_rewarded_action_rises() {
        // single state, Q(a₀) = 1 and 0 elsewhere: ascent steps must push
        // the probability of a₀ strictly upward
        use crate::autodiff::AdamOpt;
        let spec = GameSpec::new(EnvKind::Treasure, vec![1], 20, 1).unwrap();
        let set = make_game_set(EnvKind::Treasure, &[vec![1]], 20, 1).unwrap();
        let meta = ModelMeta::from_game_set(&set, Variant::Option, 2, 4, 4, 1.0);
        let mut model = ModelParams::init(meta, &mut RngStream::root(30).split("m"));
        // critic: Q = 1 iff the agent's own action one-hot is action 0
        let w = model.meta.entity_width;
        let hidden = model.meta.hidden_dim;
        for t in model.roles[0].critic.tensors_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        model.roles[0].critic.w1.data_mut()[w * hidden] = 1.0; // self one-hot[0] → h0
        model.roles[0].critic.w2.data_mut()[0] = 1.0; // h0 → Q
        // uniform initial policy
        for t in model.roles[0].policy.tensors_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let t = toy_transition(&spec, 31);
        let batch: Vec<&Transition> = std::iter::repeat(&t).take(64).collect();

        let prob0 = |m: &ModelParams| -> f64 {
            let mut tape = Tape::new();
            let g = Tensor::new(vec![1, 0], vec![]);
            let logits = crate::agents::policy_logits(&mut tape, &t.obs[0], &g, &m.roles[0].relnet.value, &m.roles[0].policy);
            let ls = tape.log_softmax(&logits, 1);
            (ls.data()[0] as f64).exp()
        };

        let mut opt = AdamOpt::new(&model.theta_tensors(0), 0.05);
        let mut last = prob0(&model);
        assert!((last - 0.2).abs() < 1e-6);
        for step in 0..100u64 {
            let mut tape = Tape::new();
            let tracked_value = vec![tape.leaf(&model.roles[0].relnet.value)];
            let mut tracked_policy = vec![model.roles[0].policy.clone()];
            for tensor in tracked_policy[0].tensors_mut() {
                *tensor = tape.leaf(tensor);
            }
            let mut rng = RngStream::root(32).split_index("step", step);
            let loss = policy_loss(
                &mut tape,
                &batch,
                &spec,
                &tracked_value,
                &tracked_policy,
                &[model.roles[0].relnet.value.clone()],
                &[model.roles[0].policy.clone()],
                &[model.roles[0].critic.clone()],
                0.0,
                &mut rng,
            );
            let grads = tape.backward(&loss);
            let mut order: Vec<&Tensor> = vec![&tracked_value[0]];
            order.extend(tracked_policy[0].tensors());
            let g: Vec<Vec<f32>> = order.iter().map(|x| grads.wrt_or_panic(x).to_vec()).collect();
            let mut params = model.theta_tensors_mut(0);
            opt.step(&mut params, &g);
            let p = prob0(&model);
            assert!(p > last, "step {step}: {p} <= {last}");
            last = p;
        }
        assert!(last > 0.5, "after 100 steps p(a0) = {last}");
    }

    #[test]
    fn reptile_alpha_one_returns_inner_result_exactly() {
        let init = vec![Tensor::from_slice(&[1.0, 2.0])];
        let after = vec![Tensor::from_slice(&[1.5, -0.5])];
        let out = reptile_outer_update(&init, &after, 1.0);
        assert_eq!(out[0].data(), after[0].data());
        let same = reptile_outer_update(&init, &init, 0.3);
        assert_eq!(same[0].data(), init[0].data());
    }

    #[test]
    fn reptile_interpolates() {
        let init = vec![Tensor::from_slice(&[0.0])];
        let after = vec![Tensor::from_slice(&[1.0])];
        let out = reptile_outer_update(&init, &after, 0.25);
        assert!((out[0].data()[0] - 0.25).abs() < 1e-7);
    }

    fn handcrafted_distinct_action_model() -> (ModelParams, EntityObservation) {
        // |Z| = 2, two other entities; head z picks entity z exclusively;
        // V reads the first feature; the policy routes e through hidden
        // units (relu(e), relu(−e)) into logits (±big), so z = 0 forces
        // action 0 and z = 1 forces action 1.
        let (_, mut model) = toy_setup(2);
        let w = model.meta.entity_width;
        let obs = EntityObservation {
            self_entity: {
                let mut v = vec![0.0; w];
                v[0] = 1.0;
                v
            },
            others: vec![
                {
                    let mut v = vec![0.0; w];
                    v[0] = 1.0;
                    v
                },
                {
                    let mut v = vec![0.0; w];
                    v[0] = -1.0;
                    v
                },
            ],
            other_roles: vec![0, 0],
        };
        let role = &mut model.roles[0];
        // two heads with huge opposite scores on the first feature
        for (h, sign) in [(0usize, 60.0f32), (1usize, -60.0f32)] {
            for v in role.relnet.heads[h].query.data_mut() {
                *v = 0.0;
            }
            for v in role.relnet.heads[h].key.data_mut() {
                *v = 0.0;
            }
            role.relnet.heads[h].query.data_mut()[0] = 1.0;
            role.relnet.heads[h].key.data_mut()[0] = sign;
        }
        // V: e = first feature of the attended entity (embed width 6)
        for v in role.relnet.value.data_mut() {
            *v = 0.0;
        }
        role.relnet.value.data_mut()[0] = 1.0;
        // policy: hidden0 = relu(e), hidden1 = relu(−e)
        for v in role.policy.w1.data_mut() {
            *v = 0.0;
        }
        let hidden = model.meta.hidden_dim;
        role.policy.w1.data_mut()[w * hidden] = 1.0; // e → h0
        role.policy.w1.data_mut()[w * hidden + 1] = -1.0; // −e → h1
        for v in role.policy.b1.data_mut() {
            *v = 0.0;
        }
        for v in role.policy.w2.data_mut() {
            *v = 0.0;
        }
        role.policy.w2.data_mut()[0] = 100.0; // h0 → logit 0
        role.policy.w2.data_mut()[NUM_ACTIONS + 1] = 100.0; // h1 → logit 1
        for v in role.policy.b2.data_mut() {
            *v = 0.0;
        }
        (model, obs)
    }

    #[test]
    fn mi_bound_enumerated_hits_ln2_on_distinct_actions() {
        let (model, obs) = handcrafted_distinct_action_model();
        let role = &model.roles[0];
        let mut tape = Tape::new();
        let mut rng = RngStream::root(13).split("mi");
        let bound = mi_action_bound(
            &mut tape,
            &[&obs],
            &role.relnet,
            &role.latent,
            &role.relnet.value,
            &role.policy,
            &role.relnet.value,
            &role.policy,
            0,
            2,
            LatentMode::PerGame,
            &mut rng,
        );
        assert!((tape.scalar_f64(&bound) - std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn mi_bound_zero_when_policy_ignores_graph() {
        let (_, model) = toy_setup(2);
        let mut model = model;
        // V = 0 → e = 0 for every graph → π independent of g
        for v in model.roles[0].relnet.value.data_mut() {
            *v = 0.0;
        }
        let role = &model.roles[0];
        let mut rng = RngStream::root(14).split("env");
        let spec = GameSpec::new(EnvKind::Treasure, vec![3], 20, 2).unwrap();
        let (_, obs) = crate::envs::reset(&spec, &mut rng).unwrap();
        let obs_refs: Vec<&EntityObservation> = obs.iter().collect();
        let mut tape = Tape::new();
        let mut mi_rng = RngStream::root(15).split("mi");
        let bound = mi_action_bound(
            &mut tape,
            &obs_refs,
            &role.relnet,
            &role.latent,
            &role.relnet.value,
            &role.policy,
            &role.relnet.value,
            &role.policy,
            0,
            2,
            LatentMode::PerGame,
            &mut mi_rng,
        );
        assert_eq!(tape.scalar_f64(&bound), 0.0);
    }

    #[test]
    fn mi_bound_zero_with_degenerate_marginal() {
        // |Z| = 1 forces z' = z, so numerator and marginal coincide
        let (spec, model) = toy_setup(1);
        let mut model = model;
        model.roles[0].relnet.heads.truncate(1);
        model.roles[0].relnet.latent_dim = 1;
        model.roles[0].latent = LatentSpec::new(1, 1, 1.0);
        model.meta.latent_dim = 1;
        let role = &model.roles[0];
        let mut rng = RngStream::root(16).split("env");
        let (_, obs) = crate::envs::reset(&spec, &mut rng).unwrap();
        let obs_refs: Vec<&EntityObservation> = obs.iter().collect();
        let mut tape = Tape::new();
        let mut mi_rng = RngStream::root(17).split("mi");
        // n_marginal = 1 = |Z| would enumerate; force the sampled path by
        // checking the enumerated path too — both are exactly zero here
        let bound = mi_action_bound(
            &mut tape,
            &obs_refs,
            &role.relnet,
            &role.latent,
            &role.relnet.value,
            &role.policy,
            &role.relnet.value,
            &role.policy,
            0,
            1,
            LatentMode::PerGame,
            &mut mi_rng,
        );
        assert_eq!(tape.scalar_f64(&bound), 0.0);
    }

    #[test]
    fn mi_bound_gradient_matches_finite_differences() {
        let (spec, model) = toy_setup(2);
        let mut rng = RngStream::root(18).split("env");
        let (_, obs) = crate::envs::reset(&spec, &mut rng).unwrap();
        let obs_refs: Vec<&EntityObservation> = obs.iter().collect();
        let role = &model.roles[0];

        let eval = |probe: &Tensor| -> f64 {
            let mut tape = Tape::new();
            let mut rn = role.relnet.clone();
            rn.heads[0].key = probe.clone();
            let mut r = RngStream::root(19).split("mi");
            let bound = mi_action_bound(
                &mut tape,
                &obs_refs,
                &rn,
                &role.latent,
                &role.relnet.value,
                &role.policy,
                &role.relnet.value,
                &role.policy,
                0,
                role.relnet.latent_dim,
                LatentMode::PerGame,
                &mut r,
            );
            tape.scalar_f64(&bound)
        };

        let mut tape = Tape::new();
        let mut rn = role.relnet.clone();
        rn.heads[0].key = tape.leaf(&role.relnet.heads[0].key);
        let mut r = RngStream::root(19).split("mi");
        let bound = mi_action_bound(
            &mut tape,
            &obs_refs,
            &rn,
            &role.latent,
            &role.relnet.value,
            &role.policy,
            &role.relnet.value,
            &role.policy,
            0,
            role.relnet.latent_dim,
            LatentMode::PerGame,
            &mut r,
        );
        let grads = tape.backward(&bound);
        let analytic = grads.wrt_or_panic(&rn.heads[0].key);
        let fd = finite_difference(&role.relnet.heads[0].key, eval, 1e-3);
        assert!(gradient_rel_err(analytic, &fd) < 1e-3);
    }

    #[test]
    fn aux_loss_is_ln_m_for_uniform_predictor() {
        // zero-initialized ξ output layer → uniform predictor → loss ln|M|
        let (spec, model) = toy_setup(4);
        let role = &model.roles[0];
        let mut rng = RngStream::root(20).split("env");
        let (_, obs) = crate::envs::reset(&spec, &mut rng).unwrap();
        let obs_refs: Vec<&EntityObservation> = obs.iter().collect();
        let mut tape = Tape::new();
        let psi = tape.leaf(&role.latent.logits);
        let mut aux_rng = RngStream::root(21).split("aux");
        let loss = aux_inference_loss(
            &mut tape,
            &obs_refs,
            &role.relnet,
            &role.latent,
            &psi,
            &role.aux,
            2,
            4,
            &mut aux_rng,
        );
        let v = tape.scalar_f64(&loss);
        assert!((v - 4.0f64.ln()).abs() < 1e-6, "loss {v}");
        assert!(implied_game_mi(v, 4).abs() < 1e-6);
    }

    #[test]
    fn aux_loss_near_zero_for_perfect_predictor() {
        let (spec, mut model) = toy_setup(2);
        // bias the correct game's logit sky-high
        model.roles[0].aux.b2.data_mut()[1] = 60.0;
        let role = &model.roles[0];
        let mut rng = RngStream::root(22).split("env");
        let (_, obs) = crate::envs::reset(&spec, &mut rng).unwrap();
        let obs_refs: Vec<&EntityObservation> = obs.iter().collect();
        let mut tape = Tape::new();
        let psi = tape.leaf(&role.latent.logits);
        let mut aux_rng = RngStream::root(23).split("aux");
        let loss = aux_inference_loss(&mut tape, &obs_refs, &role.relnet, &role.latent, &psi, &role.aux, 1, 2, &mut aux_rng);
        assert!(tape.scalar_f64(&loss) < 1e-6);
    }

    #[test]
    fn aux_loss_skipped_for_single_game() {
        let (spec, model) = toy_setup(1);
        let role = &model.roles[0];
        let mut rng = RngStream::root(24).split("env");
        let (_, obs) = crate::envs::reset(&spec, &mut rng).unwrap();
        let obs_refs: Vec<&EntityObservation> = obs.iter().collect();
        let mut tape = Tape::new();
        let psi = tape.leaf(&role.latent.logits);
        let mut aux_rng = RngStream::root(25).split("aux");
        let loss = aux_inference_loss(&mut tape, &obs_refs, &role.relnet, &role.latent, &psi, &role.aux, 0, 1, &mut aux_rng);
        assert_eq!(loss.value_scalar(), 0.0);
        assert!(!loss.is_tracked());
    }
}
