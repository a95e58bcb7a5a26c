//! Game specifications and game sets.

use serde::{Deserialize, Serialize};

use crate::error::{MraError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Treasure,
    Resource,
    Pacman,
    Tabular,
}

impl EnvKind {
    /// Number of roles (types of homogeneous agents).
    pub fn role_count(&self) -> usize {
        match self {
            EnvKind::Pacman => 2,
            _ => 1,
        }
    }
}

/// One game: an environment kind instantiated at a population.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameSpec {
    pub env_kind: EnvKind,
    /// Agents per role; length equals the env's role count.
    pub populations: Vec<usize>,
    /// Steps per episode.
    pub horizon: usize,
    /// Landmark count (treasures, resources, or food dots).
    pub landmarks: usize,
    /// Drop dense distance shaping, keeping only event rewards.
    pub sparse: bool,
    /// Index of this game within its set.
    pub game_id: usize,
}

impl GameSpec {
    pub fn new(env_kind: EnvKind, populations: Vec<usize>, horizon: usize, landmarks: usize) -> Result<Self> {
        let spec = GameSpec { env_kind, populations, horizon, landmarks, sparse: false, game_id: 0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.populations.len() != self.env_kind.role_count() {
            return Err(MraError::Contract(format!(
                "{:?} expects {} role populations, got {}",
                self.env_kind,
                self.env_kind.role_count(),
                self.populations.len()
            )));
        }
        if self.populations.iter().any(|&p| p < 1) {
            return Err(MraError::Parameter("populations must all be >= 1".into()));
        }
        if self.horizon < 1 {
            return Err(MraError::Parameter("horizon must be >= 1".into()));
        }
        if self.env_kind != EnvKind::Tabular && self.landmarks < 1 {
            return Err(MraError::Parameter("landmark count must be >= 1".into()));
        }
        Ok(())
    }

    /// Total population N.
    pub fn total_agents(&self) -> usize {
        self.populations.iter().sum()
    }

    /// Role of agent `i` under the canonical (role-major) agent order.
    pub fn role_of(&self, agent: usize) -> usize {
        let mut acc = 0;
        for (role, &p) in self.populations.iter().enumerate() {
            acc += p;
            if agent < acc {
                return role;
            }
        }
        panic!("agent index {agent} out of population {}", self.total_agents());
    }

    /// Sizes of the resource landmarks: {0.1, 0.2, ..., 0.1·n}.
    pub fn resource_sizes(&self) -> Vec<f32> {
        (1..=self.landmarks).map(|i| 0.1 * i as f32).collect()
    }
}

/// Ordered set of training or evaluation games.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameSet {
    pub games: Vec<GameSpec>,
}

impl GameSet {
    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }
}

/// Build a game set from per-game population lists; game ids follow list
/// position. Duplicate populations are accepted (a warning case, not an
/// error).
pub fn make_game_set(
    env_kind: EnvKind,
    population_lists: &[Vec<usize>],
    horizon: usize,
    landmarks: usize,
) -> Result<GameSet> {
    if population_lists.is_empty() {
        return Err(MraError::Parameter("population list must be nonempty".into()));
    }
    let mut games = Vec::with_capacity(population_lists.len());
    for (i, pops) in population_lists.iter().enumerate() {
        let mut spec = GameSpec::new(env_kind, pops.clone(), horizon, landmarks)?;
        spec.game_id = i;
        games.push(spec);
    }
    Ok(GameSet { games })
}
