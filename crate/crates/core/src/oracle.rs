//! Exact game-theoretic oracle for small tabular Markov games.
//!
//! Best responses and values are computed to solver precision, NashConv
//! and its action-space surrogate κ exactly as defined, transition-operator
//! norms in the induced-L1 sense (max absolute column sum over the finite
//! state space), and the theory quantities (Lipschitz influence ι, game-set
//! distance ς, ε-range membership) as empirically checkable estimates.
//!
//! Everything here is f64 and pure; scope is capped at 6 states, 3 agents,
//! 3 actions per agent.

use serde::Serialize;

use crate::autodiff::RngStream;
use crate::envs::TabularMG;
use crate::error::{MraError, Result};

pub const MAX_STATES: usize = 6;
pub const MAX_AGENTS: usize = 3;
pub const MAX_ACTIONS: usize = 3;

const VALUE_ITER_TOL: f64 = 1e-10;

/// Per-agent, per-state action distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPolicy {
    /// `probs[agent][state][action]`
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl JointPolicy {
    pub fn uniform(mg: &TabularMG) -> Self {
        let probs = mg
            .num_actions
            .iter()
            .map(|&k| vec![vec![1.0 / k as f64; k]; mg.num_states])
            .collect();
        JointPolicy { probs }
    }

    /// Deterministic policy for every agent: `choice[agent][state]`.
    pub fn deterministic(mg: &TabularMG, choice: &[Vec<usize>]) -> Self {
        let probs = choice
            .iter()
            .zip(&mg.num_actions)
            .map(|(per_state, &k)| {
                per_state
                    .iter()
                    .map(|&a| {
                        let mut row = vec![0.0; k];
                        row[a] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        JointPolicy { probs }
    }

    pub fn validate(&self, mg: &TabularMG) -> Result<()> {
        if self.probs.len() != mg.num_agents() {
            return Err(MraError::Contract("policy agent count mismatch".into()));
        }
        for (i, per_state) in self.probs.iter().enumerate() {
            if per_state.len() != mg.num_states {
                return Err(MraError::Contract("policy state count mismatch".into()));
            }
            for row in per_state {
                if row.len() != mg.num_actions[i] {
                    return Err(MraError::Contract("policy action count mismatch".into()));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < -1e-12) {
                    return Err(MraError::Contract(format!("policy row sums to {total}")));
                }
            }
        }
        Ok(())
    }

    /// Replace one agent's policy.
    pub fn with_agent(&self, agent: usize, policy: Vec<Vec<f64>>) -> Self {
        let mut out = self.clone();
        out.probs[agent] = policy;
        out
    }
}

/// Discounted state-visitation measure ρ = (I − γP_π)⁻¹ δ_s per start
/// state; `rho[start][s']`. Total mass of each row is 1/(1−γ).
pub struct StateVisitation {
    pub rho: Vec<Vec<f64>>,
}

/// Lipschitz influence estimate ι̂ with its probe count.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LipschitzEstimate {
    pub estimate: f64,
    pub probes: usize,
}

pub fn check_scope(mg: &TabularMG) -> Result<()> {
    if mg.num_states > MAX_STATES
        || mg.num_agents() > MAX_AGENTS
        || mg.num_actions.iter().any(|&k| k > MAX_ACTIONS)
    {
        return Err(MraError::Scope(format!(
            "oracle accepts at most {MAX_STATES} states, {MAX_AGENTS} agents, {MAX_ACTIONS} actions; got {} states, {} agents, actions {:?}",
            mg.num_states,
            mg.num_agents(),
            mg.num_actions
        )));
    }
    mg.validate()
}

/// Probability of a joint action under a joint policy at a state.
fn joint_prob(mg: &TabularMG, pi: &JointPolicy, s: usize, joint: usize) -> f64 {
    let actions = mg.joint_actions(joint);
    pi.probs
        .iter()
        .zip(&actions)
        .map(|(per_state, &a)| per_state[s][a])
        .product()
}

/// Induced state-transition matrix `t[s][s']` under a joint policy.
pub fn transition_matrix(mg: &TabularMG, pi: &JointPolicy) -> Vec<Vec<f64>> {
    let s_n = mg.num_states;
    let ja = mg.num_joint_actions();
    let mut t = vec![vec![0.0; s_n]; s_n];
    for s in 0..s_n {
        for j in 0..ja {
            let p = joint_prob(mg, pi, s, j);
            if p == 0.0 {
                continue;
            }
            for s2 in 0..s_n {
                t[s][s2] += p * mg.transition[s][j][s2];
            }
        }
    }
    t
}

/// Expected one-step reward of `agent` per state under a joint policy.
fn reward_vector(mg: &TabularMG, pi: &JointPolicy, agent: usize) -> Vec<f64> {
    let mut r = vec![0.0; mg.num_states];
    for s in 0..mg.num_states {
        for j in 0..mg.num_joint_actions() {
            let p = joint_prob(mg, pi, s, j);
            if p != 0.0 {
                r[s] += p * mg.rewards[agent][s][j];
            }
        }
    }
    r
}

/// Solve A·x = b by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 1e-14, "singular linear system");
        for row in col + 1..n {
            let f = a[row][col] / diag;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Value vector of one agent under a joint policy: exact solve of
/// v = r_π + γ·P_π·v.
pub fn policy_value(mg: &TabularMG, pi: &JointPolicy, agent: usize) -> Result<Vec<f64>> {
    check_scope(mg)?;
    pi.validate(mg)?;
    let t = transition_matrix(mg, pi);
    let r = reward_vector(mg, pi, agent);
    let n = mg.num_states;
    let mut a = vec![vec![0.0; n]; n];
    for s in 0..n {
        for s2 in 0..n {
            a[s][s2] = if s == s2 { 1.0 } else { 0.0 } - mg.gamma * t[s][s2];
        }
    }
    Ok(solve_linear(a, r))
}

/// Discounted visitation measure of every start state (Dirac start).
pub fn state_visitation(mg: &TabularMG, pi: &JointPolicy) -> Result<StateVisitation> {
    check_scope(mg)?;
    pi.validate(mg)?;
    let t = transition_matrix(mg, pi);
    let n = mg.num_states;
    // rho_start = δ_start + γ·Pᵀ·rho_start  — solve (I − γPᵀ) rho = δ
    let mut a = vec![vec![0.0; n]; n];
    for s in 0..n {
        for s2 in 0..n {
            a[s][s2] = if s == s2 { 1.0 } else { 0.0 } - mg.gamma * t[s2][s];
        }
    }
    let mut rho = Vec::with_capacity(n);
    for start in 0..n {
        let mut delta = vec![0.0; n];
        delta[start] = 1.0;
        rho.push(solve_linear(a.clone(), delta));
    }
    Ok(StateVisitation { rho })
}

/// Best response of `agent` against the others' fixed policies: value
/// iteration on the induced MDP to 1e-10, deterministic greedy policy.
pub fn best_response(mg: &TabularMG, pi: &JointPolicy, agent: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_scope(mg)?;
    pi.validate(mg)?;
    let s_n = mg.num_states;
    let k = mg.num_actions[agent];
    let ja = mg.num_joint_actions();

    // induced per-(state, own-action) reward and transition
    let mut r_ind = vec![vec![0.0; k]; s_n];
    let mut t_ind = vec![vec![vec![0.0; s_n]; k]; s_n];
    for s in 0..s_n {
        for j in 0..ja {
            let actions = mg.joint_actions(j);
            let mut p_others = 1.0;
            for (other, &a) in actions.iter().enumerate() {
                if other != agent {
                    p_others *= pi.probs[other][s][a];
                }
            }
            if p_others == 0.0 {
                continue;
            }
            let own = actions[agent];
            r_ind[s][own] += p_others * mg.rewards[agent][s][j];
            for s2 in 0..s_n {
                t_ind[s][own][s2] += p_others * mg.transition[s][j][s2];
            }
        }
    }

    let mut v = vec![0.0; s_n];
    loop {
        let mut next = vec![0.0; s_n];
        let mut delta = 0.0f64;
        for s in 0..s_n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..k {
                let mut q = r_ind[s][a];
                for s2 in 0..s_n {
                    q += mg.gamma * t_ind[s][a][s2] * v[s2];
                }
                best = best.max(q);
            }
            next[s] = best;
            delta = delta.max((best - v[s]).abs());
        }
        v = next;
        if delta < VALUE_ITER_TOL {
            break;
        }
        if mg.gamma == 0.0 {
            break;
        }
    }
    // one more sweep for the greedy policy at the fixed point
    let mut br = vec![vec![0.0; k]; s_n];
    for s in 0..s_n {
        let mut best_a = 0;
        let mut best_q = f64::NEG_INFINITY;
        for a in 0..k {
            let mut q = r_ind[s][a];
            for s2 in 0..s_n {
                q += mg.gamma * t_ind[s][a][s2] * v[s2];
            }
            if q > best_q {
                best_q = q;
                best_a = a;
            }
        }
        br[s][best_a] = 1.0;
        v[s] = best_q;
    }
    Ok((br, v))
}

/// NashConv: total gain available to all agents by unilateral deviation,
/// Σ_i sup_s (v*_i(s) − v_i(s)). Zero iff the policy is an equilibrium.
pub fn nashconv(mg: &TabularMG, pi: &JointPolicy) -> Result<f64> {
    let mut total = 0.0;
    for agent in 0..mg.num_agents() {
        let v = policy_value(mg, pi, agent)?;
        let (_, v_star) = best_response(mg, pi, agent)?;
        let gain = v_star
            .iter()
            .zip(&v)
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max);
        // best response dominates; clamp solver dust
        total += gain.max(0.0);
    }
    Ok(total)
}

/// Sup-over-states L1 action-distribution distance between a policy and
/// a reference (typically its best response). Range [0, 2].
pub fn kappa(pi_agent: &[Vec<f64>], pi_star: &[Vec<f64>]) -> f64 {
    assert_eq!(pi_agent.len(), pi_star.len(), "kappa state count mismatch");
    let mut worst = 0.0f64;
    for (a, b) in pi_agent.iter().zip(pi_star) {
        assert_eq!(a.len(), b.len(), "kappa action count mismatch");
        let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
        worst = worst.max(l1);
    }
    worst
}

/// Induced-L1 operator norm of the difference of two transition matrices:
/// max absolute column sum.
pub fn operator_norm_diff(t_a: &[Vec<f64>], t_b: &[Vec<f64>]) -> f64 {
    let n = t_a.len();
    let mut worst = 0.0f64;
    for col in 0..n {
        let mut sum = 0.0;
        for row in 0..n {
            sum += (t_a[row][col] - t_b[row][col]).abs();
        }
        worst = worst.max(sum);
    }
    worst
}

/// Influence ratio of one (policy, agent) pair: ‖P^{π*} − P^{π}‖ / κ,
/// or None when κ is negligible.
pub fn influence_ratio(mg: &TabularMG, pi: &JointPolicy, agent: usize) -> Result<Option<f64>> {
    let (br, _) = best_response(mg, pi, agent)?;
    let k = kappa(&pi.probs[agent], &br);
    if k <= 1e-6 {
        return Ok(None);
    }
    let with_br = pi.with_agent(agent, br);
    let t_star = transition_matrix(mg, &with_br);
    let t_pi = transition_matrix(mg, pi);
    Ok(Some(operator_norm_diff(&t_star, &t_pi) / k))
}

/// Random joint policy, each row drawn from the simplex by normalized
/// uniform weights.
pub fn random_policy(mg: &TabularMG, rng: &mut RngStream) -> JointPolicy {
    let probs = mg
        .num_actions
        .iter()
        .map(|&k| {
            (0..mg.num_states)
                .map(|_| {
                    let raw: Vec<f64> = (0..k).map(|_| rng.uniform_f64(1e-3, 1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    raw.into_iter().map(|w| w / total).collect()
                })
                .collect()
        })
        .collect();
    JointPolicy { probs }
}

/// Estimate the Lipschitz influence ι̂ by maximizing the ratio over
/// sampled (policy, agent) pairs. Monotone nondecreasing in probe count
/// for a fixed stream.
pub fn lipschitz_estimate(mg: &TabularMG, probes: usize, rng: &mut RngStream) -> Result<LipschitzEstimate> {
    check_scope(mg)?;
    let mut estimate = 0.0f64;
    for _ in 0..probes {
        let pi = random_policy(mg, rng);
        for agent in 0..mg.num_agents() {
            if let Some(ratio) = influence_ratio(mg, &pi, agent)? {
                estimate = estimate.max(ratio);
            }
        }
    }
    Ok(LipschitzEstimate { estimate, probes })
}

/// Every deterministic choice map `state -> action` for action count `k`.
fn deterministic_choices(states: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..states {
        let mut next = Vec::with_capacity(out.len() * k);
        for base in &out {
            for a in 0..k {
                let mut c = base.clone();
                c.push(a);
                next.push(c);
            }
        }
        out = next;
    }
    out
}

/// Exhaustive influence estimate over all deterministic joint policies.
pub fn lipschitz_estimate_exhaustive(mg: &TabularMG) -> Result<LipschitzEstimate> {
    check_scope(mg)?;
    let per_agent: Vec<Vec<Vec<usize>>> =
        mg.num_actions.iter().map(|&k| deterministic_choices(mg.num_states, k)).collect();
    let mut index = vec![0usize; mg.num_agents()];
    let mut estimate = 0.0f64;
    let mut probes = 0usize;
    loop {
        let choice: Vec<Vec<usize>> = index.iter().zip(&per_agent).map(|(&i, c)| c[i].clone()).collect();
        let pi = JointPolicy::deterministic(mg, &choice);
        for agent in 0..mg.num_agents() {
            if let Some(ratio) = influence_ratio(mg, &pi, agent)? {
                estimate = estimate.max(ratio);
            }
        }
        probes += 1;
        // odometer over per-agent deterministic policies
        let mut pos = 0;
        loop {
            if pos == index.len() {
                return Ok(LipschitzEstimate { estimate, probes });
            }
            index[pos] += 1;
            if index[pos] < per_agent[pos].len() {
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
    }
}

/// Both sides of the NashConv bound
/// 𝒟 ≤ (γι/(1−γ)² + 1/(1−γ))·Σ_i κ(π_i) and whether it holds.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Lemma1Report {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn lemma1_check(mg: &TabularMG, pi: &JointPolicy, iota: f64) -> Result<Lemma1Report> {
    check_scope(mg)?;
    if !mg.rewards_in_unit_range() {
        return Err(MraError::Contract("bound audit requires rewards in [0,1]".into()));
    }
    let lhs = nashconv(mg, pi)?;
    let mut kappa_sum = 0.0;
    for agent in 0..mg.num_agents() {
        let (br, _) = best_response(mg, pi, agent)?;
        kappa_sum += kappa(&pi.probs[agent], &br);
    }
    let g = mg.gamma;
    let rhs = (g * iota / ((1.0 - g) * (1.0 - g)) + 1.0 / (1.0 - g)) * kappa_sum;
    Ok(Lemma1Report { lhs, rhs, holds: lhs <= rhs + 1e-6 })
}

/// Membership in the ε-range strategy set: NashConv ≤ ε.
pub fn epsilon_range_member(mg: &TabularMG, pi: &JointPolicy, epsilon: f64) -> Result<bool> {
    if epsilon < 0.0 {
        return Err(MraError::Parameter("epsilon must be >= 0".into()));
    }
    Ok(nashconv(mg, pi)? <= epsilon)
}

/// Smallest ε for which every evaluation-game equilibrium is guaranteed
/// inside the ε-range set: ς − min over (ι_m, ι_{m'}) of
/// ςγ(ι_{m'} − ι_m)/(γι_{m'} + 1 − γ).
pub fn epsilon_threshold(sigma: f64, iota_train: &[f64], iota_eval: &[f64], gamma: f64) -> f64 {
    let mut min_term = f64::INFINITY;
    for &im in iota_train {
        for &imp in iota_eval {
            let term = sigma * gamma * (imp - im) / (gamma * imp + 1.0 - gamma);
            min_term = min_term.min(term);
        }
    }
    sigma - min_term
}

// ---- distance between game sets -------------------------------------------

/// All action distributions on a probability grid with the given
/// resolution (entries are multiples of `resolution`, summing to 1).
pub fn grid_distributions(actions: usize, resolution: f64) -> Vec<Vec<f64>> {
    let steps = (1.0 / resolution).round() as usize;
    fn rec(actions: usize, remaining: usize, steps: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if actions == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for take in 0..=remaining {
            prefix.push(take);
            rec(actions - 1, remaining - take, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    rec(actions, steps, steps, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|counts| counts.into_iter().map(|c| c as f64 / steps as f64).collect())
        .collect()
}

/// Enumerate every grid joint policy of a game. Errors when the grid is
/// too large to enumerate.
fn grid_joint_policies(mg: &TabularMG, resolution: f64, cap: usize) -> Result<Vec<JointPolicy>> {
    // per agent, per state: the grid of distributions
    let per_slot: Vec<Vec<Vec<f64>>> = mg
        .num_actions
        .iter()
        .flat_map(|&k| std::iter::repeat_with(move || grid_distributions(k, resolution)).take(mg.num_states))
        .collect();
    let mut total = 1usize;
    for slot in &per_slot {
        total = total.saturating_mul(slot.len());
        if total > cap {
            return Err(MraError::Scope(format!(
                "policy grid exceeds {cap} joint policies; coarsen the resolution or shrink the game"
            )));
        }
    }
    let mut out = Vec::with_capacity(total);
    let mut index = vec![0usize; per_slot.len()];
    loop {
        let mut probs = Vec::with_capacity(mg.num_agents());
        let mut slot = 0;
        for _ in 0..mg.num_agents() {
            let mut per_state = Vec::with_capacity(mg.num_states);
            for _ in 0..mg.num_states {
                per_state.push(per_slot[slot][index[slot]].clone());
                slot += 1;
            }
            probs.push(per_state);
        }
        out.push(JointPolicy { probs });
        let mut pos = 0;
        loop {
            if pos == index.len() {
                return Ok(out);
            }
            index[pos] += 1;
            if index[pos] < per_slot[pos].len() {
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
    }
}

/// Grid policies whose NashConv is within `tol` of an equilibrium.
pub fn approximate_ne_set(mg: &TabularMG, resolution: f64, tol: f64, cap: usize) -> Result<Vec<JointPolicy>> {
    check_scope(mg)?;
    let mut out = Vec::new();
    for pi in grid_joint_policies(mg, resolution, cap)? {
        if nashconv(mg, &pi)? <= tol {
            out.push(pi);
        }
    }
    if out.is_empty() {
        return Err(MraError::Resolution(format!(
            "no grid policy within NashConv {tol} at resolution {resolution}"
        )));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SigmaReport {
    pub sigma: f64,
    pub resolution: f64,
    pub tol: f64,
    pub train_ne_counts: Vec<usize>,
    pub eval_ne_counts: Vec<usize>,
}

/// Directional distance from an evaluation set to a training set:
/// max over evaluation games m' and agents i of the min over training
/// games m, same-role agents i', and equilibrium pairs (π of m, π' of m')
/// of NashConv_{m'} after slotting π's agent-i' policy into π' at i.
///
/// Equilibrium sets are approximated by grid policies within `tol`; the
/// report carries the approximation parameters.
pub fn sigma_distance(
    train_set: &[TabularMG],
    eval_set: &[TabularMG],
    resolution: f64,
    tol: f64,
) -> Result<SigmaReport> {
    const GRID_CAP: usize = 2_000_000;
    if train_set.is_empty() || eval_set.is_empty() {
        return Err(MraError::Parameter("sigma_distance needs nonempty game sets".into()));
    }
    let train_ne: Vec<Vec<JointPolicy>> = train_set
        .iter()
        .map(|mg| approximate_ne_set(mg, resolution, tol, GRID_CAP))
        .collect::<Result<_>>()?;
    let eval_ne: Vec<Vec<JointPolicy>> = eval_set
        .iter()
        .map(|mg| approximate_ne_set(mg, resolution, tol, GRID_CAP))
        .collect::<Result<_>>()?;

    let mut sigma = f64::NEG_INFINITY;
    for (mp_idx, mp) in eval_set.iter().enumerate() {
        for i in 0..mp.num_agents() {
            let mut best = f64::INFINITY;
            for (m_idx, m) in train_set.iter().enumerate() {
                if m.num_states != mp.num_states {
                    return Err(MraError::Contract("games in the two sets must share the state set".into()));
                }
                for i_prime in 0..m.num_agents() {
                    if m.roles[i_prime] != mp.roles[i] || m.num_actions[i_prime] != mp.num_actions[i] {
                        continue;
                    }
                    for pi in &train_ne[m_idx] {
                        for pi_prime in &eval_ne[mp_idx] {
                            let composite = pi_prime.with_agent(i, pi.probs[i_prime].clone());
                            best = best.min(nashconv(mp, &composite)?);
                        }
                    }
                }
            }
            if best.is_infinite() {
                return Err(MraError::Contract(format!(
                    "no same-role training policy for evaluation agent {i}"
                )));
            }
            sigma = sigma.max(best);
        }
    }
    Ok(SigmaReport {
        sigma,
        resolution,
        tol,
        train_ne_counts: train_ne.iter().map(Vec::len).collect(),
        eval_ne_counts: eval_ne.iter().map(Vec::len).collect(),
    })
}

// ---- test oracles ----------------------------------------------------------

/// Brute-force best-response value by enumerating every deterministic
/// policy of one agent. Independent check of the value-iteration path.
pub fn brute_force_best_value(mg: &TabularMG, pi: &JointPolicy, agent: usize) -> Result<Vec<f64>> {
    let mut best = vec![f64::NEG_INFINITY; mg.num_states];
    for choice in deterministic_choices(mg.num_states, mg.num_actions[agent]) {
        let mut dev = vec![vec![0.0; mg.num_actions[agent]]; mg.num_states];
        for (s, &a) in choice.iter().enumerate() {
            dev[s][a] = 1.0;
        }
        let v = policy_value(mg, &pi.with_agent(agent, dev), agent)?;
        for (b, x) in best.iter_mut().zip(v) {
            *b = b.max(x);
        }
    }
    Ok(best)
}

/// Brute-force NashConv via exhaustive deviation search.
pub fn brute_force_nashconv(mg: &TabularMG, pi: &JointPolicy) -> Result<f64> {
    let mut total = 0.0;
    for agent in 0..mg.num_agents() {
        let v = policy_value(mg, pi, agent)?;
        let best = brute_force_best_value(mg, pi, agent)?;
        let gain = best.iter().zip(&v).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        total += gain.max(0.0);
    }
    Ok(total)
}

/// Random tabular game with rewards in [0,1].
pub fn random_game(states: usize, actions: &[usize], gamma: f64, rng: &mut RngStream) -> TabularMG {
    let ja: usize = actions.iter().product();
    let transition = (0..states)
        .map(|_| {
            (0..ja)
                .map(|_| {
                    let raw: Vec<f64> = (0..states).map(|_| rng.uniform_f64(1e-3, 1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    raw.into_iter().map(|p| p / total).collect()
                })
                .collect()
        })
        .collect();
    let rewards = (0..actions.len())
        .map(|_| (0..states).map(|_| (0..ja).map(|_| rng.uniform_f64(0.0, 1.0)).collect()).collect())
        .collect();
    TabularMG {
        num_states: states,
        num_actions: actions.to_vec(),
        roles: vec![0; actions.len()],
        transition,
        rewards,
        gamma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_cap_enforced() {
        let mut rng = RngStream::root(1);
        let mg = random_game(2, &[2, 2, 2], 0.9, &mut rng);
        let mut big = mg.clone();
        big.num_actions = vec![2, 2, 2, 2];
        big.roles = vec![0; 4];
        assert!(matches!(check_scope(&big), Err(MraError::Scope(_))));
        check_scope(&mg).unwrap();
    }

    #[test]
    fn myopic_value_is_expected_reward() {
        let mut rng = RngStream::root(2);
        let mg = random_game(3, &[2, 2], 0.0, &mut rng);
        let pi = JointPolicy::uniform(&mg);
        let v = policy_value(&mg, &pi, 0).unwrap();
        for s in 0..3 {
            let mut expect = 0.0;
            for j in 0..4 {
                expect += 0.25 * mg.rewards[0][s][j];
            }
            assert!((v[s] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_series_value() {
        // one state, reward always 1, gamma 0.9 → v = 10
        let mg = TabularMG {
            num_states: 1,
            num_actions: vec![1],
            roles: vec![0],
            transition: vec![vec![vec![1.0]]],
            rewards: vec![vec![vec![1.0]]],
            gamma: 0.9,
        };
        let v = policy_value(&mg, &JointPolicy::uniform(&mg), 0).unwrap();
        assert!((v[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn gamma_one_rejected() {
        let mut mg = TabularMG::matching_pennies(0.0);
        mg.gamma = 1.0;
        assert!(policy_value(&mg, &JointPolicy::uniform(&mg), 0).is_err());
    }

    #[test]
    fn monte_carlo_agrees_with_linear_solve() {
        let mut rng = RngStream::root(3);
        let mg = random_game(3, &[2, 2], 0.9, &mut rng);
        let pi = random_policy(&mg, &mut rng);
        let v = policy_value(&mg, &pi, 0).unwrap();

        // rollout oracle: sample discounted returns from state 0
        let horizon = 300; // gamma^300 ≈ 2e-14
        let samples = 200_000;
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        let mut roll = RngStream::root(999).split("mc");
        for _ in 0..samples {
            let mut s = 0usize;
            let mut ret = 0.0f64;
            let mut disc = 1.0f64;
            for _ in 0..horizon {
                let mut actions = Vec::with_capacity(2);
                for agent in 0..2 {
                    actions.push(roll.categorical(&pi.probs[agent][s]));
                }
                let j = mg.joint_index(&actions);
                ret += disc * mg.rewards[0][s][j];
                disc *= mg.gamma;
                s = roll.categorical(&mg.transition[s][j]);
            }
            sum += ret;
            sum_sq += ret * ret;
        }
        let mean = sum / samples as f64;
        let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
        let sigma3 = 3.0 * (var / samples as f64).sqrt();
        assert!(
            (v[0] - mean).abs() < sigma3.max(1e-3),
            "linear solve {} vs MC {mean} ± {sigma3}",
            v[0]
        );
    }

    #[test]
    fn pennies_uniform_is_equilibrium() {
        let mg = TabularMG::matching_pennies(0.0);
        let d = nashconv(&mg, &JointPolicy::uniform(&mg)).unwrap();
        assert!(d.abs() < 1e-10);
    }

    #[test]
    fn pennies_pure_heads_conv_is_two() {
        let mg = TabularMG::matching_pennies(0.0);
        let pi = JointPolicy::deterministic(&mg, &[vec![0], vec![0]]);
        let d = nashconv(&mg, &pi).unwrap();
        assert!((d - 2.0).abs() < 1e-10);
        // brute-force deviation search agrees
        let b = brute_force_nashconv(&mg, &pi).unwrap();
        assert!((d - b).abs() < 1e-10);
    }

    #[test]
    fn pennies_best_responses() {
        let mg = TabularMG::matching_pennies(0.0);
        // against uniform, every response is worth 0
        let (_, v) = best_response(&mg, &JointPolicy::uniform(&mg), 0).unwrap();
        assert!(v[0].abs() < 1e-10);
        // against heads, the mismatcher plays tails and earns +1
        let pi = JointPolicy::deterministic(&mg, &[vec![0], vec![0]]);
        let (br, v) = best_response(&mg, &pi, 1).unwrap();
        assert_eq!(br[0], vec![0.0, 1.0]);
        assert!((v[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn br_beats_random_policies() {
        let mut rng = RngStream::root(5);
        let mg = random_game(4, &[2], 0.9, &mut rng);
        let pi = JointPolicy::uniform(&mg);
        let (_, v_star) = best_response(&mg, &pi, 0).unwrap();
        for _ in 0..100 {
            let p = random_policy(&mg, &mut rng);
            let v = policy_value(&mg, &p, 0).unwrap();
            for s in 0..4 {
                assert!(v_star[s] + 1e-8 >= v[s]);
            }
        }
    }

    #[test]
    fn nashconv_nonnegative_on_random_games() {
        let mut rng = RngStream::root(7);
        for _ in 0..100 {
            let mg = random_game(3, &[2, 2], 0.9, &mut rng);
            let pi = random_policy(&mg, &mut rng);
            assert!(nashconv(&mg, &pi).unwrap() >= -1e-8);
        }
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(&[vec![1.0, 0.0]], &[vec![1.0, 0.0]]), 0.0);
        assert_eq!(kappa(&[vec![1.0, 0.0]], &[vec![0.0, 1.0]]), 2.0);
        let k = kappa(&[vec![0.6, 0.4], vec![0.5, 0.5]], &[vec![0.9, 0.1], vec![0.5, 0.5]]);
        assert!((k - 0.6).abs() < 1e-12);
    }

    #[test]
    fn visitation_mass_is_geometric() {
        let mut rng = RngStream::root(11);
        let mg = random_game(4, &[2, 2], 0.9, &mut rng);
        let pi = random_policy(&mg, &mut rng);
        let rho = state_visitation(&mg, &pi).unwrap();
        for row in &rho.rho {
            let mass: f64 = row.iter().sum();
            assert!((mass - 1.0 / (1.0 - mg.gamma)).abs() < 1e-6);
            assert!(row.iter().all(|&x| x >= -1e-12));
        }
    }

    #[test]
    fn no_influence_means_zero_iota() {
        // transitions ignore both agents' actions
        let mut rng = RngStream::root(13);
        let mut mg = random_game(3, &[2, 2], 0.9, &mut rng);
        for s in 0..3 {
            let row = mg.transition[s][0].clone();
            for j in 0..mg.num_joint_actions() {
                mg.transition[s][j] = row.clone();
            }
        }
        let est = lipschitz_estimate(&mg, 20, &mut rng).unwrap();
        assert!(est.estimate.abs() < 1e-12);
    }

    #[test]
    fn flip_game_exhaustive_iota_is_one() {
        // single agent, 2 states; action 0 stays, action 1 flips state;
        // rewards make "stay in state 0 / flip from state 1" optimal
        let mg = TabularMG {
            num_states: 2,
            num_actions: vec![2],
            roles: vec![0],
            transition: vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            ],
            rewards: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            gamma: 0.9,
        };
        let est = lipschitz_estimate_exhaustive(&mg).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-9, "estimate {}", est.estimate);
    }

    #[test]
    fn probe_estimate_is_monotone_in_probes() {
        let mut rng = RngStream::root(17);
        let mg = random_game(3, &[2, 2], 0.9, &mut rng);
        let mut r1 = RngStream::root(23).split("probes");
        let small = lipschitz_estimate(&mg, 10, &mut r1).unwrap();
        let mut r2 = RngStream::root(23).split("probes");
        let large = lipschitz_estimate(&mg, 1000, &mut r2).unwrap();
        assert!(large.estimate >= small.estimate);
    }

    #[test]
    fn lemma1_at_equilibrium_and_zero_kappa() {
        let mut rng = RngStream::root(19);
        let mg = random_game(2, &[2], 0.9, &mut rng);
        // single-agent: the best response itself has kappa 0 and lhs 0
        let (br, _) = best_response(&mg, &JointPolicy::uniform(&mg), 0).unwrap();
        let pi = JointPolicy { probs: vec![br] };
        let rep = lemma1_check(&mg, &pi, 1.0).unwrap();
        assert!(rep.lhs <= 1e-6);
        assert!(rep.rhs <= 1e-6);
        assert!(rep.holds);
    }

    #[test]
    fn lemma1_rejects_signed_rewards() {
        let mg = TabularMG::matching_pennies(0.0);
        let pi = JointPolicy::uniform(&mg);
        assert!(lemma1_check(&mg, &pi, 1.0).is_err());
    }

    #[test]
    fn epsilon_membership() {
        let mg = TabularMG::matching_pennies(0.0);
        let uniform = JointPolicy::uniform(&mg);
        assert!(epsilon_range_member(&mg, &uniform, 0.0).unwrap());
        let heads = JointPolicy::deterministic(&mg, &[vec![0], vec![0]]);
        assert!(!epsilon_range_member(&mg, &heads, 1.0).unwrap());
        assert!(epsilon_range_member(&mg, &heads, 2.5).unwrap());
    }

    #[test]
    fn epsilon_threshold_cancels_for_equal_influence() {
        let t = epsilon_threshold(0.7, &[0.4], &[0.4], 0.9);
        assert!((t - 0.7).abs() < 1e-12);
    }

    #[test]
    fn grid_distributions_cover_simplex() {
        let g = grid_distributions(2, 0.5);
        assert_eq!(g.len(), 3);
        for d in &g {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(grid_distributions(3, 0.25).len(), 15); // C(6,2)
    }

    #[test]
    fn sigma_self_distance_is_small() {
        let mg = TabularMG::matching_pennies(0.0);
        let rep = sigma_distance(&[mg.clone()], &[mg], 0.1, 1e-3).unwrap();
        assert!(rep.sigma <= 1e-3 + 1e-9, "sigma {}", rep.sigma);
    }

    #[test]
    fn identical_payoff_games_have_zero_distance() {
        // 1-state coordination game: both agents rewarded for matching
        let coord = coordination_game(1.0);
        let rep = sigma_distance(&[coord.clone()], &[coord], 0.25, 1e-3).unwrap();
        assert!(rep.sigma <= 1e-3 + 1e-9);
    }

    fn coordination_game(scale: f64) -> TabularMG {
        // rewards: +scale when actions match, 0 otherwise (both agents)
        let r = vec![vec![vec![scale, 0.0, 0.0, scale]]; 2];
        TabularMG {
            num_states: 1,
            num_actions: vec![2, 2],
            roles: vec![0, 0],
            transition: vec![vec![vec![1.0]; 4]],
            rewards: r,
            gamma: 0.0,
        }
    }

    #[test]
    fn sigma_matches_hand_enumeration_on_scaled_coordination() {
        // train: unit-payoff coordination; eval: payoff-scaled copy
        let train = coordination_game(1.0);
        let eval = coordination_game(2.0);
        let resolution = 0.25;
        let tol = 1e-3;
        let rep = sigma_distance(&[train.clone()], &[eval.clone()], resolution, tol).unwrap();

        // independent brute force straight from the definition
        let train_ne = approximate_ne_set(&train, resolution, tol, 1_000_000).unwrap();
        let eval_ne = approximate_ne_set(&eval, resolution, tol, 1_000_000).unwrap();
        let mut expected = f64::NEG_INFINITY;
        for i in 0..2 {
            let mut best = f64::INFINITY;
            for i_prime in 0..2 {
                for pi in &train_ne {
                    for pi_prime in &eval_ne {
                        let composite = pi_prime.with_agent(i, pi.probs[i_prime].clone());
                        best = best.min(nashconv(&eval, &composite).unwrap());
                    }
                }
            }
            expected = expected.max(best);
        }
        assert!((rep.sigma - expected).abs() < 1e-12);
    }

    #[test]
    fn sigma_is_directional() {
        // unique dominant-action equilibria at different actions with
        // different deviation costs: slotting A's policy into B loses 2,
        // the reverse loses only 1
        let dominant = |action: usize, scale: f64| -> TabularMG {
            let mut r0 = vec![vec![0.0; 4]];
            let mut r1 = vec![vec![0.0; 4]];
            for a0 in 0..2 {
                for a1 in 0..2 {
                    if a0 == action {
                        r0[0][a0 * 2 + a1] = scale;
                    }
                    if a1 == action {
                        r1[0][a0 * 2 + a1] = scale;
                    }
                }
            }
            TabularMG {
                num_states: 1,
                num_actions: vec![2, 2],
                roles: vec![0, 0],
                transition: vec![vec![vec![1.0]; 4]],
                rewards: vec![r0, r1],
                gamma: 0.0,
            }
        };
        let a = dominant(0, 1.0);
        let b = dominant(1, 2.0);
        let ab = sigma_distance(&[a.clone()], &[b.clone()], 0.5, 1e-3).unwrap();
        let ba = sigma_distance(&[b], &[a], 0.5, 1e-3).unwrap();
        assert!((ab.sigma - 2.0).abs() < 1e-9, "sigma(A→B) = {}", ab.sigma);
        assert!((ba.sigma - 1.0).abs() < 1e-9, "sigma(B→A) = {}", ba.sigma);
    }
}
