//! Centralized action-value critic with entity attention.
//!
//! The critic of agent i sees its own entity with its action one-hot,
//! and every other agent's entity with that agent's action one-hot and
//! the relational-graph weight agent i assigns to it. Attention pooling
//! keeps the input width fixed for any population and makes the value
//! invariant to permutations of same-role others.

use crate::autodiff::{RngStream, Tape, Tensor};
use crate::envs::{EntityObservation, NUM_ACTIONS};
use crate::relnet::{linear_init, RelationalGraph};

#[derive(Clone, Debug)]
pub struct CriticParams {
    pub att_q: Tensor,
    pub att_k: Tensor,
    pub att_v: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl CriticParams {
    pub fn init(entity_width: usize, attn_dim: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let self_w = entity_width + NUM_ACTIONS;
        let other_w = entity_width + NUM_ACTIONS + 1;
        CriticParams {
            att_q: linear_init(rng, self_w, attn_dim),
            att_k: linear_init(rng, other_w, attn_dim),
            att_v: linear_init(rng, other_w, attn_dim),
            w1: linear_init(rng, self_w + attn_dim, hidden),
            b1: Tensor::zeros(vec![hidden]),
            w2: linear_init(rng, hidden, 1),
            b2: Tensor::zeros(vec![1]),
        }
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

    /// Q value from prepared input rows; returns a [1,1] tensor.
    pub fn forward(&self, tape: &mut Tape, self_row: &Tensor, others: &Tensor) -> Tensor {
        let pooled = if others.rows() == 0 {
            Tensor::zeros(vec![1, self.att_v.cols()])
        } else {
            let q = tape.matmul(self_row, &self.att_q);
            let k = tape.matmul(others, &self.att_k);
            let kt = tape.transpose(&k);
            let scores = tape.matmul(&q, &kt);
            let alpha = tape.softmax(&scores, 1);
            let v = tape.matmul(others, &self.att_v);
            tape.matmul(&alpha, &v)
        };
        let x = tape.concat_cols(&[self_row, &pooled]);
        let h = tape.matmul(&x, &self.w1);
        let h = tape.add_row(&h, &self.b1);
        let h = tape.relu(&h);
        let out = tape.matmul(&h, &self.w2);
        tape.add_row(&out, &self.b2)
    }
}

fn one_hot(action: usize) -> [f32; NUM_ACTIONS] {
    assert!(action < NUM_ACTIONS, "action {action} out of range");
    let mut v = [0.0; NUM_ACTIONS];
    v[action] = 1.0;
    v
}

/// Untracked critic input rows for one agent: its own entity with action,
/// and all other entities with their actions and graph weights.
pub fn critic_inputs(
    joint_obs: &[EntityObservation],
    joint_actions: &[usize],
    graph: &RelationalGraph,
    agent: usize,
) -> (Tensor, Tensor) {
    assert_eq!(
        joint_obs.len(),
        joint_actions.len(),
        "population mismatch: {} observations vs {} actions",
        joint_obs.len(),
        joint_actions.len()
    );
    assert!(agent < joint_obs.len(), "agent {agent} out of population");
    let obs = &joint_obs[agent];
    assert_eq!(graph.len(), obs.num_others(), "graph length does not match entity count");
    let w = obs.width();

    let mut self_row = Vec::with_capacity(w + NUM_ACTIONS);
    self_row.extend_from_slice(&obs.self_entity);
    self_row.extend_from_slice(&one_hot(joint_actions[agent]));
    let self_t = Tensor::new(vec![1, w + NUM_ACTIONS], self_row);

    // entity rows are in canonical order: all agents except `agent`
    let mut other_data = Vec::with_capacity(obs.num_others() * (w + NUM_ACTIONS + 1));
    let mut row_idx = 0;
    for j in 0..joint_obs.len() {
        if j == agent {
            continue;
        }
        other_data.extend_from_slice(&obs.others[row_idx]);
        other_data.extend_from_slice(&one_hot(joint_actions[j]));
        other_data.push(graph[row_idx]);
        row_idx += 1;
    }
    let others_t = Tensor::new(vec![obs.num_others(), w + NUM_ACTIONS + 1], other_data);
    (self_t, others_t)
}

/// Scalar action value Q_ζ(o, a, g^i) of one agent.
pub fn critic_eval(
    joint_obs: &[EntityObservation],
    joint_actions: &[usize],
    graph: &RelationalGraph,
    params: &CriticParams,
    agent: usize,
) -> f32 {
    let (self_t, others_t) = critic_inputs(joint_obs, joint_actions, graph, agent);
    let mut tape = Tape::new();
    params.forward(&mut tape, &self_t, &others_t).value_scalar()
}
