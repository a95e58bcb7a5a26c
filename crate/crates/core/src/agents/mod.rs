//! Policy heads, centralized critics, target networks, and replay.

pub mod buffer;
pub mod critic;
pub mod policy;
pub mod targets;

pub use buffer::{ReplayBuffer, Transition};
pub use critic::{critic_eval, critic_inputs, CriticParams};
pub use policy::{policy_act, policy_logits, ActMode, PolicyParams};
pub use targets::{polyak, TargetSet};
