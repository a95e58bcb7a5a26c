//! The full parameter set of a run and its checkpoint layout.
//!
//! Per role: attention heads (graph side), a shared value transform and
//! policy head (policy side), a centralized critic, a per-game latent
//! table ψ, and the game-index inference network ξ. Tensor names in the
//! checkpoint blob are stable and ordered.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::agents::{CriticParams, PolicyParams, TargetSet};
use crate::autodiff::checkpoint::{read_checkpoint, read_sidecar, write_checkpoint, write_sidecar};
use crate::autodiff::{RngStream, Tape, Tensor};
use crate::envs::{entity_width, EntityObservation, GameSet, GameSpec, NUM_ACTIONS};
use crate::error::{MraError, Result};
use crate::relnet::{linear_init, LatentSpec, RelNetParams, Variant};

pub const MODEL_SIDECAR: &str = "model.json";

/// Game-index inference network ξ: attention pooling over other entities
/// augmented with their graph weight, then a head over game indices. The
/// output layer starts at zero so the initial predictor is uniform.
#[derive(Clone, Debug)]
pub struct AuxNetParams {
    pub att_q: Tensor,
    pub att_k: Tensor,
    pub att_v: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl AuxNetParams {
    pub fn init(entity_width: usize, attn_dim: usize, hidden: usize, num_games: usize, rng: &mut RngStream) -> Self {
        AuxNetParams {
            att_q: linear_init(rng, entity_width, attn_dim),
            att_k: linear_init(rng, entity_width + 1, attn_dim),
            att_v: linear_init(rng, entity_width + 1, attn_dim),
            w1: linear_init(rng, entity_width + attn_dim, hidden),
            b1: Tensor::zeros(vec![hidden]),
            w2: Tensor::zeros(vec![hidden, num_games]),
            b2: Tensor::zeros(vec![num_games]),
        }
    }

    /// Game-index logits from an observation and a (possibly tracked)
    /// relational graph.
    pub fn forward(&self, tape: &mut Tape, obs: &EntityObservation, graph: &Tensor) -> Tensor {
        let w = obs.width();
        let self_row = Tensor::new(vec![1, w], obs.self_entity.clone());
        let n = obs.num_others();
        let pooled = if n == 0 {
            Tensor::zeros(vec![1, self.att_v.cols()])
        } else {
            let others = crate::relnet::others_matrix(obs);
            let gt = tape.transpose(graph);
            let aug = tape.concat_cols(&[&others, &gt]);
            let q = tape.matmul(&self_row, &self.att_q);
            let k = tape.matmul(&aug, &self.att_k);
            let kt = tape.transpose(&k);
            let scores = tape.matmul(&q, &kt);
            let alpha = tape.softmax(&scores, 1);
            let v = tape.matmul(&aug, &self.att_v);
            tape.matmul(&alpha, &v)
        };
        let x = tape.concat_cols(&[&self_row, &pooled]);
        let h = tape.matmul(&x, &self.w1);
        let h = tape.add_row(&h, &self.b1);
        let h = tape.relu(&h);
        let out = tape.matmul(&h, &self.w2);
        tape.add_row(&out, &self.b2)
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.att_q, &self.att_k, &self.att_v, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.att_q,
            &mut self.att_k,
            &mut self.att_v,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// Everything one role owns.
#[derive(Clone, Debug)]
pub struct RoleParams {
    pub relnet: RelNetParams,
    pub policy: PolicyParams,
    pub critic: CriticParams,
    pub latent: LatentSpec,
    pub aux: AuxNetParams,
}

/// Architecture metadata saved alongside the checkpoint blob.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelMeta {
    pub env_kind: crate::envs::EnvKind,
    pub populations: Vec<Vec<usize>>,
    pub horizon: usize,
    pub landmarks: usize,
    pub sparse: bool,
    pub variant: Variant,
    pub latent_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_games: usize,
    pub role_count: usize,
    pub entity_width: usize,
    pub temperature: f32,
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    pub roles: Vec<RoleParams>,
    pub meta: ModelMeta,
}

impl ModelMeta {
    pub fn from_game_set(
        set: &GameSet,
        variant: Variant,
        latent_dim: usize,
        embed_dim: usize,
        hidden_dim: usize,
        temperature: f32,
    ) -> Self {
        let first = &set.games[0];
        ModelMeta {
            env_kind: first.env_kind,
            populations: set.games.iter().map(|g| g.populations.clone()).collect(),
            horizon: first.horizon,
            landmarks: first.landmarks,
            sparse: first.sparse,
            variant,
            latent_dim,
            embed_dim,
            hidden_dim,
            num_games: set.len(),
            role_count: first.env_kind.role_count(),
            entity_width: entity_width(first.env_kind.role_count()),
            temperature,
        }
    }

    pub fn game_set(&self) -> GameSet {
        let games = self
            .populations
            .iter()
            .enumerate()
            .map(|(i, pops)| GameSpec {
                env_kind: self.env_kind,
                populations: pops.clone(),
                horizon: self.horizon,
                landmarks: self.landmarks,
                sparse: self.sparse,
                game_id: i,
            })
            .collect();
        GameSet { games }
    }

    /// Latent-table row for a (possibly unseen) population: the training
    /// game with the nearest total population, ties to the smaller one.
    pub fn nearest_game_row(&self, populations: &[usize]) -> usize {
        let total: usize = populations.iter().sum();
        let mut best = 0usize;
        let mut best_key = (usize::MAX, usize::MAX);
        for (i, pops) in self.populations.iter().enumerate() {
            let t: usize = pops.iter().sum();
            let key = (t.abs_diff(total), t);
            if key < best_key {
                best_key = key;
                best = i;
            }
        }
        best
    }
}

impl ModelParams {
    pub fn init(meta: ModelMeta, rng: &mut RngStream) -> Self {
        let w = meta.entity_width;
        let roles = (0..meta.role_count)
            .map(|r| {
                let rr = rng.split_index("role", r as u64);
                let relnet = RelNetParams::init(
                    meta.variant,
                    w,
                    meta.latent_dim,
                    meta.embed_dim,
                    &mut rr.split("relnet"),
                );
                let policy = PolicyParams::init(w + meta.embed_dim, meta.hidden_dim, &mut rr.split("policy"));
                let critic = CriticParams::init(w, meta.embed_dim, meta.hidden_dim, &mut rr.split("critic"));
                let latent = LatentSpec::new(meta.num_games, meta.latent_dim, meta.temperature);
                let aux = AuxNetParams::init(w, meta.embed_dim, meta.hidden_dim, meta.num_games, &mut rr.split("aux"));
                RoleParams { relnet, policy, critic, latent, aux }
            })
            .collect();
        ModelParams { roles, meta }
    }

    pub fn role_count(&self) -> usize {
        self.roles.len()
    }

    /// Policy-side parameters (shared value transform + policy head) of
    /// one role, the meta-updated group.
    pub fn theta_tensors(&self, role: usize) -> Vec<&Tensor> {
        let r = &self.roles[role];
        let mut out = vec![&r.relnet.value];
        out.extend(r.policy.tensors());
        out
    }

    pub fn theta_tensors_mut(&mut self, role: usize) -> Vec<&mut Tensor> {
        let r = &mut self.roles[role];
        let mut out = vec![&mut r.relnet.value];
        out.extend(r.policy.tensors_mut());
        out
    }

    /// Graph-generator parameters (attention heads) of one role.
    pub fn phi_tensors(&self, role: usize) -> Vec<&Tensor> {
        self.roles[role]
            .relnet
            .heads
            .iter()
            .flat_map(|h| [&h.query, &h.key])
            .collect()
    }

    pub fn phi_tensors_mut(&mut self, role: usize) -> Vec<&mut Tensor> {
        self.roles[role]
            .relnet
            .heads
            .iter_mut()
            .flat_map(|h| [&mut h.query, &mut h.key])
            .collect()
    }

    /// ω = θ ∪ φ of one role, the jointly fine-tuned group.
    pub fn omega_tensors_mut(&mut self, role: usize) -> Vec<&mut Tensor> {
        let r = &mut self.roles[role];
        let mut out = vec![&mut r.relnet.value];
        out.extend(r.policy.tensors_mut());
        out.extend(r.relnet.heads.iter_mut().flat_map(|h| [&mut h.query, &mut h.key]));
        out
    }

    pub fn zeta_tensors(&self, role: usize) -> Vec<&Tensor> {
        self.roles[role].critic.tensors()
    }

    pub fn zeta_tensors_mut(&mut self, role: usize) -> Vec<&mut Tensor> {
        self.roles[role].critic.tensors_mut()
    }

    /// ψ and ξ of one role, updated together by the inference loss.
    pub fn psi_xi_tensors(&self, role: usize) -> Vec<&Tensor> {
        let r = &self.roles[role];
        let mut out = vec![&r.latent.logits];
        out.extend(r.aux.tensors());
        out
    }

    pub fn psi_xi_tensors_mut(&mut self, role: usize) -> Vec<&mut Tensor> {
        let r = &mut self.roles[role];
        let mut out = vec![&mut r.latent.logits];
        out.extend(r.aux.tensors_mut());
        out
    }

    pub fn targets(&self, tau: f32) -> TargetSet {
        TargetSet::from_online(
            &self.roles.iter().map(|r| r.relnet.value.clone()).collect::<Vec<_>>(),
            &self.roles.iter().map(|r| r.policy.clone()).collect::<Vec<_>>(),
            &self.roles.iter().map(|r| r.critic.clone()).collect::<Vec<_>>(),
            tau,
        )
    }

    pub fn soft_update_targets(&self, targets: &mut TargetSet) {
        targets.soft_update(
            &self.roles.iter().map(|r| r.relnet.value.clone()).collect::<Vec<_>>(),
            &self.roles.iter().map(|r| r.policy.clone()).collect::<Vec<_>>(),
            &self.roles.iter().map(|r| r.critic.clone()).collect::<Vec<_>>(),
        );
    }

    /// Stable (name, tensor) listing defining the checkpoint record order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (r, role) in self.roles.iter().enumerate() {
            for (h, head) in role.relnet.heads.iter().enumerate() {
                out.push((format!("relnet/{r}/{h}/q"), head.query.clone()));
                out.push((format!("relnet/{r}/{h}/k"), head.key.clone()));
            }
            out.push((format!("relnet/{r}/v"), role.relnet.value.clone()));
            for (name, t) in ["w1", "b1", "w2", "b2"].iter().zip(role.policy.tensors()) {
                out.push((format!("policy/{r}/{name}"), t.clone()));
            }
            for (name, t) in ["att_q", "att_k", "att_v", "w1", "b1", "w2", "b2"]
                .iter()
                .zip(role.critic.tensors())
            {
                out.push((format!("critic/{r}/{name}"), t.clone()));
            }
            out.push((format!("latent/{r}/psi"), role.latent.logits.clone()));
            for (name, t) in ["att_q", "att_k", "att_v", "w1", "b1", "w2", "b2"]
                .iter()
                .zip(role.aux.tensors())
            {
                out.push((format!("aux/{r}/{name}"), t.clone()));
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_checkpoint(dir, &self.named_tensors())?;
        write_sidecar(dir, MODEL_SIDECAR, &self.meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ModelMeta = read_sidecar(dir, MODEL_SIDECAR)?;
        let tensors = read_checkpoint(dir)?;
        let mut lookup: std::collections::BTreeMap<String, Tensor> = tensors.into_iter().collect();
        let mut take = |name: String| -> Result<Tensor> {
            lookup
                .remove(&name)
                .ok_or_else(|| MraError::Parse(format!("checkpoint missing tensor {name}")))
        };
        let head_count = match meta.variant {
            Variant::Option => meta.latent_dim,
            _ => 1,
        };
        let mut roles = Vec::with_capacity(meta.role_count);
        for r in 0..meta.role_count {
            let heads = (0..head_count)
                .map(|h| {
                    Ok(crate::relnet::HeadParams {
                        query: take(format!("relnet/{r}/{h}/q"))?,
                        key: take(format!("relnet/{r}/{h}/k"))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let relnet = RelNetParams {
                variant: meta.variant,
                heads,
                value: take(format!("relnet/{r}/v"))?,
                entity_width: meta.entity_width,
                latent_dim: meta.latent_dim,
                embed_dim: meta.embed_dim,
            };
            let policy = PolicyParams {
                w1: take(format!("policy/{r}/w1"))?,
                b1: take(format!("policy/{r}/b1"))?,
                w2: take(format!("policy/{r}/w2"))?,
                b2: take(format!("policy/{r}/b2"))?,
            };
            let critic = CriticParams {
                att_q: take(format!("critic/{r}/att_q"))?,
                att_k: take(format!("critic/{r}/att_k"))?,
                att_v: take(format!("critic/{r}/att_v"))?,
                w1: take(format!("critic/{r}/w1"))?,
                b1: take(format!("critic/{r}/b1"))?,
                w2: take(format!("critic/{r}/w2"))?,
                b2: take(format!("critic/{r}/b2"))?,
            };
            let latent = LatentSpec {
                logits: take(format!("latent/{r}/psi"))?,
                latent_dim: meta.latent_dim,
                temperature: meta.temperature,
            };
            let aux = AuxNetParams {
                att_q: take(format!("aux/{r}/att_q"))?,
                att_k: take(format!("aux/{r}/att_k"))?,
                att_v: take(format!("aux/{r}/att_v"))?,
                w1: take(format!("aux/{r}/w1"))?,
                b1: take(format!("aux/{r}/b1"))?,
                w2: take(format!("aux/{r}/w2"))?,
                b2: take(format!("aux/{r}/b2"))?,
            };
            roles.push(RoleParams { relnet, policy, critic, latent, aux });
        }
        Ok(ModelParams { roles, meta })
    }
}

/// Check every parameter of the model is finite.
pub fn model_is_finite(model: &ModelParams) -> bool {
    model.named_tensors().iter().all(|(_, t)| t.is_finite())
}

pub const _ACTION_COUNT_GUARD: usize = NUM_ACTIONS;
