//! Delayed (target) networks with Polyak averaging.

use crate::autodiff::Tensor;

use super::critic::CriticParams;
use super::policy::PolicyParams;

/// Delayed copies of the policy-side parameters (shared value transform +
/// policy head) and the critics, one entry per role.
#[derive(Clone, Debug)]
pub struct TargetSet {
    pub value: Vec<Tensor>,
    pub policy: Vec<PolicyParams>,
    pub critic: Vec<CriticParams>,
    pub tau: f32,
}

/// target ← (1−τ)·target + τ·online, elementwise.
pub fn polyak(target: &mut Tensor, online: &Tensor, tau: f32) {
    assert!(tau > 0.0 && tau <= 1.0, "tau must be in (0,1], got {tau}");
    assert_eq!(target.len(), online.len(), "polyak shape mismatch");
    let src = online.data().to_vec();
    for (t, o) in target.data_mut().iter_mut().zip(src) {
        *t = (1.0 - tau) * *t + tau * o;
    }
}

impl TargetSet {
    pub fn from_online(value: &[Tensor], policy: &[PolicyParams], critic: &[CriticParams], tau: f32) -> Self {
        TargetSet {
            value: value.to_vec(),
            policy: policy.to_vec(),
            critic: critic.to_vec(),
            tau,
        }
    }

    pub fn soft_update(&mut self, value: &[Tensor], policy: &[PolicyParams], critic: &[CriticParams]) {
        let tau = self.tau;
        for (t, o) in self.value.iter_mut().zip(value) {
            polyak(t, o, tau);
        }
        for (t, o) in self.policy.iter_mut().zip(policy) {
            for (tt, ot) in t.tensors_mut().into_iter().zip(o.tensors()) {
                polyak(tt, ot, tau);
            }
        }
        for (t, o) in self.critic.iter_mut().zip(critic) {
            for (tt, ot) in t.tensors_mut().into_iter().zip(o.tensors()) {
                polyak(tt, ot, tau);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_one_copies_online() {
        let mut target = Tensor::from_slice(&[0.0, 5.0]);
        let online = Tensor::from_slice(&[1.0, -2.0]);
        polyak(&mut target, &online, 1.0);
        assert_eq!(target.data(), online.data());
    }

    #[test]
    fn small_tau_moves_proportionally() {
        let mut target = Tensor::from_slice(&[0.0]);
        let online = Tensor::from_slice(&[1.0]);
        polyak(&mut target, &online, 0.01);
        assert!((target.data()[0] - 0.01).abs() < 1e-7);
    }

    #[test]
    fn repeated_updates_converge_geometrically() {
        let mut target = Tensor::from_slice(&[0.0]);
        let online = Tensor::from_slice(&[1.0]);
        let tau = 0.1;
        let mut gap = 1.0f64;
        for _ in 0..40 {
            polyak(&mut target, &online, tau);
            let new_gap = (1.0 - target.data()[0] as f64).abs();
            assert!((new_gap - gap * (1.0 - tau as f64)).abs() < 1e-6);
            gap = new_gap;
        }
        assert!(gap < 0.02);
    }
}
