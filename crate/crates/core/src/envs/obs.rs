//! Egocentric entity observations.
//!
//! An agent sees itself (absolute position and velocity), every other
//! agent (relative position and velocity), and per-entity environment
//! features. Every entity row has the same width regardless of the
//! population, so attention encoders work across games.

/// Entity layout: [pos(2) | vel(2) | role one-hot(h) | env features(3)].
pub const ENV_FEATURES: usize = 3;

/// Per-entity feature width for an environment with `roles` roles.
pub fn entity_width(roles: usize) -> usize {
    4 + roles + ENV_FEATURES
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntityObservation {
    /// The observing agent's own features (absolute frame).
    pub self_entity: Vec<f32>,
    /// One row per other agent in canonical (role, index) order,
    /// quantities relative to the observer.
    pub others: Vec<Vec<f32>>,
    /// Role of each `others` row (canonical order bookkeeping).
    pub other_roles: Vec<usize>,
}

impl EntityObservation {
    pub fn width(&self) -> usize {
        self.self_entity.len()
    }

    pub fn num_others(&self) -> usize {
        self.others.len()
    }
}
