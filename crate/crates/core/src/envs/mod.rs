//! Deterministic particle worlds and small tabular Markov games.

pub mod obs;
pub mod spec;
pub mod tabular;
pub mod world;

pub use obs::{entity_width, EntityObservation, ENV_FEATURES};
pub use spec::{make_game_set, EnvKind, GameSet, GameSpec};
pub use tabular::TabularMG;
pub use world::{observe, observe_all, reset, step, World, WorldState, NUM_ACTIONS};
