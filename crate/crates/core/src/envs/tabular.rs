//! Fully enumerable finite Markov games for the exact oracle.
//!
//! Joint actions are flat-indexed with agent 0 most significant:
//! `joint = ((a_0·|A_1| + a_1)·|A_2| + a_2)…`. Transition rows must be
//! probability distributions within 1e-9.
//!
//! Plain-text format (whitespace separated, `#` comments):
//!
//! ```text
//! S N
//! A_0 ... A_{N-1}
//! role_0 ... role_{N-1}
//! gamma
//! P: S · ΠA · S floats   (s-major, then joint action, then s')
//! for each agent: S · ΠA floats
//! ```

use std::path::Path;

use crate::error::{MraError, Result};

#[derive(Clone, Debug)]
pub struct TabularMG {
    pub num_states: usize,
    pub num_actions: Vec<usize>,
    pub roles: Vec<usize>,
    /// `transition[s][joint][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `rewards[agent][s][joint]`
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
}

impl TabularMG {
    pub fn num_agents(&self) -> usize {
        self.num_actions.len()
    }

    pub fn num_joint_actions(&self) -> usize {
        self.num_actions.iter().product()
    }

    /// Flat index of a joint action.
    pub fn joint_index(&self, actions: &[usize]) -> usize {
        assert_eq!(actions.len(), self.num_agents());
        let mut idx = 0;
        for (a, &k) in actions.iter().zip(&self.num_actions) {
            assert!(*a < k, "action {a} out of range {k}");
            idx = idx * k + a;
        }
        idx
    }

    /// Inverse of [`joint_index`].
    pub fn joint_actions(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.num_agents()];
        for i in (0..self.num_agents()).rev() {
            out[i] = idx % self.num_actions[i];
            idx /= self.num_actions[i];
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.num_states;
        let ja = self.num_joint_actions();
        if self.gamma < 0.0 || self.gamma >= 1.0 {
            return Err(MraError::Parameter(format!("gamma must be in [0,1), got {}", self.gamma)));
        }
        if self.roles.len() != self.num_agents() {
            return Err(MraError::Contract("one role per agent required".into()));
        }
        if self.transition.len() != s || self.rewards.len() != self.num_agents() {
            return Err(MraError::Contract("transition/reward tables sized wrong".into()));
        }
        for row in self.transition.iter().flatten() {
            if row.len() != s {
                return Err(MraError::Contract("transition row width != state count".into()));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                return Err(MraError::Contract(format!("transition row sums to {total}, not 1")));
            }
        }
        for per_agent in &self.rewards {
            if per_agent.len() != s || per_agent.iter().any(|r| r.len() != ja) {
                return Err(MraError::Contract("reward table sized wrong".into()));
            }
        }
        Ok(())
    }

    /// Whether every reward lies in [0,1], the regime of the bound audits.
    pub fn rewards_in_unit_range(&self) -> bool {
        self.rewards
            .iter()
            .flatten()
            .flatten()
            .all(|&r| (0.0..=1.0).contains(&r))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_whitespace())
            .map(String::from)
            .collect::<Vec<_>>()
            .into_iter();
        let mut next_usize = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| MraError::Parse(format!("missing {what}")))?
                .parse()
                .map_err(|_| MraError::Parse(format!("bad {what}")))
        };
        let num_states = next_usize("state count")?;
        let num_agents = next_usize("agent count")?;
        let mut num_actions = Vec::with_capacity(num_agents);
        for i in 0..num_agents {
            num_actions.push(next_usize(&format!("action count of agent {i}"))?);
        }
        let mut roles = Vec::with_capacity(num_agents);
        for i in 0..num_agents {
            roles.push(next_usize(&format!("role of agent {i}"))?);
        }
        // remaining tokens are floats
        let floats: Vec<f64> = tokens
            .map(|t| t.parse::<f64>().map_err(|_| MraError::Parse(format!("bad float '{t}'"))))
            .collect::<Result<_>>()?;
        let ja: usize = num_actions.iter().product();
        let expected = 1 + num_states * ja * num_states + num_agents * num_states * ja;
        if floats.len() != expected {
            return Err(MraError::Parse(format!("expected {expected} numbers after the header, got {}", floats.len())));
        }
        let gamma = floats[0];
        let mut it = floats[1..].iter().copied();
        let transition = (0..num_states)
            .map(|_| (0..ja).map(|_| (0..num_states).map(|_| it.next().unwrap()).collect()).collect())
            .collect();
        let rewards = (0..num_agents)
            .map(|_| (0..num_states).map(|_| (0..ja).map(|_| it.next().unwrap()).collect()).collect())
            .collect();
        let mg = TabularMG { num_states, num_actions, roles, transition, rewards, gamma };
        mg.validate()?;
        Ok(mg)
    }

    /// Matching pennies with payoffs ±1 (agent 0 matches, agent 1
    /// mismatches); single state, discount `gamma`.
    pub fn matching_pennies(gamma: f64) -> Self {
        let payoff = |matcher: bool, a0: usize, a1: usize| -> f64 {
            let same = a0 == a1;
            match (matcher, same) {
                (true, true) | (false, false) => 1.0,
                _ => -1.0,
            }
        };
        let mut r0 = vec![0.0; 4];
        let mut r1 = vec![0.0; 4];
        for a0 in 0..2 {
            for a1 in 0..2 {
                r0[a0 * 2 + a1] = payoff(true, a0, a1);
                r1[a0 * 2 + a1] = payoff(false, a0, a1);
            }
        }
        TabularMG {
            num_states: 1,
            num_actions: vec![2, 2],
            roles: vec![0, 1],
            transition: vec![vec![vec![1.0]; 4]],
            rewards: vec![vec![r0], vec![r1]],
            gamma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_index_round_trip() {
        let mg = TabularMG::matching_pennies(0.0);
        for j in 0..4 {
            assert_eq!(mg.joint_index(&mg.joint_actions(j)), j);
        }
    }

    #[test]
    fn parse_round_trip() {
        let text = "\
# two-state single-agent chain
2 1
2
0
0.9
# transitions: s0/a0 s0/a1 s1/a0 s1/a1
1 0
0 1
0 1
1 0
# rewards agent 0
0 1
1 0
";
        let mg = TabularMG::parse(text).unwrap();
        assert_eq!(mg.num_states, 2);
        assert_eq!(mg.num_actions, vec![2]);
        assert_eq!(mg.transition[0][1], vec![0.0, 1.0]);
        assert_eq!(mg.rewards[0][1], vec![1.0, 0.0]);
    }

    #[test]
    fn bad_transition_rejected() {
        let text = "1 1\n1\n0\n0.5\n0.9\n0.0\n";
        assert!(TabularMG::parse(text).is_err());
    }

    #[test]
    fn pennies_has_signed_rewards() {
        let mg = TabularMG::matching_pennies(0.0);
        mg.validate().unwrap();
        assert!(!mg.rewards_in_unit_range());
    }
}
