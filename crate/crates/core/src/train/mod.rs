//! Multi-game training: inner actor–critic steps, the first-order outer
//! update, and the mutual-information objectives.

pub mod losses;
pub mod model;
pub mod trainer;

pub use losses::{aux_inference_loss, critic_loss, implied_game_mi, mi_action_bound, policy_loss, reptile_outer_update};
pub use model::{AuxNetParams, ModelMeta, ModelParams, RoleParams};
pub use trainer::{train, TrainConfig, Trainer, UpdateEvent};
