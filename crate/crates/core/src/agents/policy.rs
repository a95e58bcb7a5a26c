//! Decentralized policy heads.
//!
//! One two-layer perceptron per role over [self features ∥ embedding e];
//! homogeneous agents share it. The embedding comes from a relational
//! graph and the shared value transform, so the policy is a function of
//! (observation, graph).

use crate::autodiff::{RngStream, Tape, Tensor};
use crate::envs::{EntityObservation, NUM_ACTIONS};
use crate::relnet::{embed_with_graph, linear_init, others_matrix, RelationalGraph};

#[derive(Clone, Debug)]
pub struct PolicyParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

impl PolicyParams {
    pub fn init(input_width: usize, hidden: usize, rng: &mut RngStream) -> Self {
        PolicyParams {
            w1: linear_init(rng, input_width, hidden),
            b1: Tensor::zeros(vec![hidden]),
            w2: linear_init(rng, hidden, NUM_ACTIONS),
            b2: Tensor::zeros(vec![NUM_ACTIONS]),
        }
    }

    /// Action logits for a batch of [self ∥ e] rows.
    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Tensor {
        let h = tape.matmul(x, &self.w1);
        let h = tape.add_row(&h, &self.b1);
        let h = tape.relu(&h);
        let out = tape.matmul(&h, &self.w2);
        tape.add_row(&out, &self.b2)
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Logits of one agent given its observation and a relational graph.
pub fn policy_logits(
    tape: &mut Tape,
    obs: &EntityObservation,
    graph: &Tensor,
    value: &Tensor,
    policy: &PolicyParams,
) -> Tensor {
    let others = others_matrix(obs);
    let e = embed_with_graph(tape, &others, graph, value);
    let self_r = Tensor::new(vec![1, obs.width()], obs.self_entity.clone());
    let x = tape.concat_cols(&[&self_r, &e]);
    policy.forward(tape, &x)
}

/// Sample or argmax an action; returns the action and its log-probability
/// under the categorical policy.
pub fn policy_act(
    obs: &EntityObservation,
    graph: &RelationalGraph,
    value: &Tensor,
    policy: &PolicyParams,
    rng: &mut RngStream,
    mode: ActMode,
) -> (usize, f32) {
    assert_eq!(graph.len(), obs.num_others(), "graph length does not match entity count");
    let mut tape = Tape::new();
    let g = Tensor::new(vec![1, graph.len()], graph.clone());
    let logits = policy_logits(&mut tape, obs, &g, value, policy);
    let log_probs = tape.log_softmax(&logits, 1);
    let action = match mode {
        ActMode::Greedy => {
            let mut best = 0;
            for (i, &v) in logits.data().iter().enumerate() {
                if v > logits.data()[best] {
                    best = i;
                }
            }
            best
        }
        ActMode::Sample => {
            let probs: Vec<f64> = log_probs.data().iter().map(|&lp| (lp as f64).exp()).collect();
            rng.categorical(&probs)
        }
    };
    (action, log_probs.data()[action])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_obs() -> EntityObservation {
        EntityObservation {
            self_entity: vec![0.1, -0.2, 0.0, 0.3],
            others: vec![vec![0.5, 0.5, 0.0, -0.1], vec![-0.4, 0.2, 0.1, 0.0]],
            other_roles: vec![0, 0],
        }
    }

    fn toy_value() -> Tensor {
        let mut rng = RngStream::root(1).split("v");
        linear_init(&mut rng, 4, 3)
    }

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        // zero weights → zero logits → each action probability 0.2
        let policy = PolicyParams {
            w1: Tensor::zeros(vec![7, 4]),
            b1: Tensor::zeros(vec![4]),
            w2: Tensor::zeros(vec![4, NUM_ACTIONS]),
            b2: Tensor::zeros(vec![NUM_ACTIONS]),
        };
        let obs = toy_obs();
        let g = vec![0.5, 0.5];
        let mut rng = RngStream::root(2).split("act");
        let (_, lp) = policy_act(&obs, &g, &toy_value(), &policy, &mut rng, ActMode::Sample);
        assert!((lp - (0.2f32).ln()).abs() < 1e-6);
    }

    #[test]
    fn greedy_takes_argmax() {
        let mut policy = PolicyParams {
            w1: Tensor::zeros(vec![7, 4]),
            b1: Tensor::zeros(vec![4]),
            w2: Tensor::zeros(vec![4, NUM_ACTIONS]),
            b2: Tensor::zeros(vec![NUM_ACTIONS]),
        };
        policy.b2.data_mut()[0] = 5.0;
        let obs = toy_obs();
        let g = vec![1.0, 0.0];
        let mut rng = RngStream::root(3).split("act");
        let (a, _) = policy_act(&obs, &g, &toy_value(), &policy, &mut rng, ActMode::Greedy);
        assert_eq!(a, 0);
    }

    #[test]
    fn log_prob_matches_log_softmax() {
        let mut rng = RngStream::root(4).split("p");
        let policy = PolicyParams::init(7, 8, &mut rng);
        let obs = toy_obs();
        let g = vec![0.3, 0.7];
        let value = toy_value();
        let mut act_rng = RngStream::root(5).split("act");
        let (a, lp) = policy_act(&obs, &g, &value, &policy, &mut act_rng, ActMode::Sample);

        let mut tape = Tape::new();
        let gt = Tensor::new(vec![1, 2], g.clone());
        let logits = policy_logits(&mut tape, &obs, &gt, &value, &policy);
        let ls = tape.log_softmax(&logits, 1);
        assert!((ls.data()[a] - lp).abs() < 1e-6);
    }

    #[test]
    fn shared_parameters_mean_identical_distributions() {
        let mut rng = RngStream::root(6).split("p");
        let policy = PolicyParams::init(7, 8, &mut rng);
        let value = toy_value();
        let obs = toy_obs();
        let g = vec![0.6, 0.4];
        let mut tape = Tape::new();
        let gt = Tensor::new(vec![1, 2], g);
        let l1 = policy_logits(&mut tape, &obs, &gt, &value, &policy);
        let l2 = policy_logits(&mut tape, &obs, &gt, &value, &policy);
        assert_eq!(l1.data(), l2.data());
    }
}
