//! Deterministic particle worlds.
//!
//! Point-mass dynamics: v' = v·(1−damping) + accel·dir·dt, p' = p + v'·dt,
//! with dt = 0.1, damping = 0.25, accel = 1.0, speeds clamped to 1.0 and
//! positions clamped to [−1.2, +1.2]. Five discrete actions.
//!
//! Rewards:
//! - treasure: +1 per touched treasure (each toucher scores; the treasure
//!   regenerates at a random position), dense shaping −0.1·distance to the
//!   nearest treasure unless `sparse`;
//! - resource: size/(1+k) per step while inside a resource also occupied
//!   by k other agents;
//! - pacman: food +1 (regenerates), −5 per touching ghost, ghost +5 per
//!   touched pac-man, pac-man shaping −0.05·distance to nearest food
//!   unless `sparse`.

use crate::autodiff::RngStream;
use crate::error::{MraError, Result};

use super::obs::{entity_width, EntityObservation, ENV_FEATURES};
use super::spec::{EnvKind, GameSpec};

pub const DT: f32 = 0.1;
pub const DAMPING: f32 = 0.25;
pub const ACCEL: f32 = 1.0;
pub const MAX_SPEED: f32 = 1.0;
pub const POS_CLAMP: f32 = 1.2;
pub const AGENT_RADIUS: f32 = 0.05;
pub const LANDMARK_RADIUS: f32 = 0.05;
pub const NUM_ACTIONS: usize = 5;

/// Directions for the discrete actions {stay, up, down, left, right}.
const ACTION_DIRS: [(f32, f32); NUM_ACTIONS] = [(0.0, 0.0), (0.0, 1.0), (0.0, -1.0), (-1.0, 0.0), (1.0, 0.0)];

#[derive(Clone, Debug)]
pub struct WorldState {
    pub positions: Vec<(f32, f32)>,
    pub velocities: Vec<(f32, f32)>,
    pub landmark_positions: Vec<(f32, f32)>,
    pub landmark_sizes: Vec<f32>,
    pub step_count: usize,
    /// Per-step event flags: indices of landmarks touched and, for
    /// pacman, (ghost, pacman) contact pairs.
    pub touched_landmarks: Vec<usize>,
    pub ghost_contacts: Vec<(usize, usize)>,
}

/// A particle-world instance: spec plus mutable state.
#[derive(Clone, Debug)]
pub struct World {
    pub spec: GameSpec,
    pub state: WorldState,
}

fn dist(a: (f32, f32), b: (f32, f32)) -> f32 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

/// Place agents and landmarks uniformly in [−1,+1]²; velocities zero.
/// Deterministic given the rng stream.
pub fn reset(spec: &GameSpec, rng: &mut RngStream) -> Result<(World, Vec<EntityObservation>)> {
    spec.validate()?;
    if spec.env_kind == EnvKind::Tabular {
        return Err(MraError::Contract("tabular games have no particle world".into()));
    }
    let n = spec.total_agents();
    let positions = (0..n).map(|_| (rng.uniform_f32(-1.0, 1.0), rng.uniform_f32(-1.0, 1.0))).collect();
    let landmark_positions: Vec<(f32, f32)> =
        (0..spec.landmarks).map(|_| (rng.uniform_f32(-1.0, 1.0), rng.uniform_f32(-1.0, 1.0))).collect();
    let landmark_sizes = match spec.env_kind {
        EnvKind::Resource => spec.resource_sizes(),
        _ => vec![LANDMARK_RADIUS; spec.landmarks],
    };
    let world = World {
        spec: spec.clone(),
        state: WorldState {
            positions,
            velocities: vec![(0.0, 0.0); n],
            landmark_positions,
            landmark_sizes,
            step_count: 0,
            touched_landmarks: Vec::new(),
            ghost_contacts: Vec::new(),
        },
    };
    let obs = observe_all(&world);
    Ok((world, obs))
}

/// Advance one step. Errors if the episode horizon is already exhausted
/// or an action index is out of range.
pub fn step(
    world: &mut World,
    joint_action: &[usize],
    rng: &mut RngStream,
) -> Result<(Vec<EntityObservation>, Vec<f32>)> {
    let n = world.spec.total_agents();
    if world.state.step_count >= world.spec.horizon {
        return Err(MraError::Contract(format!(
            "step {} past horizon {}",
            world.state.step_count + 1,
            world.spec.horizon
        )));
    }
    if joint_action.len() != n {
        return Err(MraError::Contract(format!("{} actions for {n} agents", joint_action.len())));
    }
    if let Some(&a) = joint_action.iter().find(|&&a| a >= NUM_ACTIONS) {
        return Err(MraError::Contract(format!("action index {a} out of range {NUM_ACTIONS}")));
    }

    // physics
    for i in 0..n {
        let (dx, dy) = ACTION_DIRS[joint_action[i]];
        let (vx, vy) = world.state.velocities[i];
        let mut vx = vx * (1.0 - DAMPING) + ACCEL * dx * DT;
        let mut vy = vy * (1.0 - DAMPING) + ACCEL * dy * DT;
        let speed = (vx * vx + vy * vy).sqrt();
        if speed > MAX_SPEED {
            vx *= MAX_SPEED / speed;
            vy *= MAX_SPEED / speed;
        }
        let (px, py) = world.state.positions[i];
        let px = (px + vx * DT).clamp(-POS_CLAMP, POS_CLAMP);
        let py = (py + vy * DT).clamp(-POS_CLAMP, POS_CLAMP);
        world.state.velocities[i] = (vx, vy);
        world.state.positions[i] = (px, py);
    }
    world.state.step_count += 1;
    world.state.touched_landmarks.clear();
    world.state.ghost_contacts.clear();

    let rewards = match world.spec.env_kind {
        EnvKind::Treasure => treasure_rewards(world, rng),
        EnvKind::Resource => resource_rewards(world),
        EnvKind::Pacman => pacman_rewards(world, rng),
        EnvKind::Tabular => unreachable!(),
    };
    let obs = observe_all(world);
    Ok((obs, rewards))
}

fn regenerate_landmark(world: &mut World, idx: usize, rng: &mut RngStream) {
    world.state.landmark_positions[idx] = (rng.uniform_f32(-1.0, 1.0), rng.uniform_f32(-1.0, 1.0));
}

fn nearest_landmark(state: &WorldState, p: (f32, f32)) -> (usize, f32) {
    let mut best = (0usize, f32::INFINITY);
    for (j, &lp) in state.landmark_positions.iter().enumerate() {
        let d = dist(p, lp);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn treasure_rewards(world: &mut World, rng: &mut RngStream) -> Vec<f32> {
    let n = world.spec.total_agents();
    let mut rewards = vec![0.0f32; n];
    let mut touched = Vec::new();
    for (t, &tp) in world.state.landmark_positions.iter().enumerate() {
        let mut any = false;
        for i in 0..n {
            if dist(world.state.positions[i], tp) < AGENT_RADIUS + LANDMARK_RADIUS {
                rewards[i] += 1.0;
                any = true;
            }
        }
        if any {
            touched.push(t);
        }
    }
    for &t in &touched {
        regenerate_landmark(world, t, rng);
    }
    world.state.touched_landmarks = touched;
    if !world.spec.sparse {
        for i in 0..n {
            let (_, d) = nearest_landmark(&world.state, world.state.positions[i]);
            rewards[i] -= 0.1 * d;
        }
    }
    rewards
}

fn resource_rewards(world: &mut World) -> Vec<f32> {
    let n = world.spec.total_agents();
    let mut rewards = vec![0.0f32; n];
    for (r, (&rp, &size)) in world
        .state
        .landmark_positions
        .iter()
        .zip(world.state.landmark_sizes.iter())
        .enumerate()
    {
        let inside: Vec<usize> = (0..n).filter(|&i| dist(world.state.positions[i], rp) < size).collect();
        if !inside.is_empty() {
            world.state.touched_landmarks.push(r);
        }
        let k_others = inside.len().saturating_sub(1);
        for &i in &inside {
            rewards[i] += size / (1.0 + k_others as f32);
        }
    }
    rewards
}

fn pacman_rewards(world: &mut World, rng: &mut RngStream) -> Vec<f32> {
    let n = world.spec.total_agents();
    let pac_count = world.spec.populations[0];
    let mut rewards = vec![0.0f32; n];

    // food touched by pac-man agents
    let mut touched = Vec::new();
    for (f, &fp) in world.state.landmark_positions.iter().enumerate() {
        let mut any = false;
        for i in 0..pac_count {
            if dist(world.state.positions[i], fp) < AGENT_RADIUS + LANDMARK_RADIUS {
                rewards[i] += 1.0;
                any = true;
            }
        }
        if any {
            touched.push(f);
        }
    }
    for &f in &touched {
        regenerate_landmark(world, f, rng);
    }
    world.state.touched_landmarks = touched;

    // ghost contacts
    for g in pac_count..n {
        for p in 0..pac_count {
            if dist(world.state.positions[g], world.state.positions[p]) < 2.0 * AGENT_RADIUS {
                rewards[g] += 5.0;
                rewards[p] -= 5.0;
                world.state.ghost_contacts.push((g, p));
            }
        }
    }

    if !world.spec.sparse {
        for p in 0..pac_count {
            let (_, d) = nearest_landmark(&world.state, world.state.positions[p]);
            rewards[p] -= 0.05 * d;
        }
    }
    rewards
}

/// Egocentric observation of one agent: relative quantities in the
/// agent's frame, other entities in canonical (role, index) order.
pub fn observe(world: &World, agent: usize) -> EntityObservation {
    let spec = &world.spec;
    let n = spec.total_agents();
    assert!(agent < n, "agent index {agent} out of population {n}");
    let roles = spec.env_kind.role_count();
    let state = &world.state;
    let (px, py) = state.positions[agent];
    let (vx, vy) = state.velocities[agent];

    let feats = |p: (f32, f32)| -> [f32; ENV_FEATURES] {
        let (j, _) = nearest_landmark(state, p);
        let lp = state.landmark_positions[j];
        [lp.0 - p.0, lp.1 - p.1, state.landmark_sizes[j]]
    };

    let mut self_entity = Vec::with_capacity(entity_width(roles));
    self_entity.extend_from_slice(&[px, py, vx, vy]);
    for r in 0..roles {
        self_entity.push(if spec.role_of(agent) == r { 1.0 } else { 0.0 });
    }
    self_entity.extend_from_slice(&feats((px, py)));

    // agents are stored role-major, so index order is canonical order
    let mut others = Vec::with_capacity(n - 1);
    let mut other_roles = Vec::with_capacity(n - 1);
    for j in 0..n {
        if j == agent {
            continue;
        }
        let (ox, oy) = state.positions[j];
        let (ovx, ovy) = state.velocities[j];
        let mut row = Vec::with_capacity(entity_width(roles));
        row.extend_from_slice(&[ox - px, oy - py, ovx - vx, ovy - vy]);
        let role_j = spec.role_of(j);
        for r in 0..roles {
            row.push(if role_j == r { 1.0 } else { 0.0 });
        }
        row.extend_from_slice(&feats((ox, oy)));
        others.push(row);
        other_roles.push(role_j);
    }
    EntityObservation { self_entity, others, other_roles }
}

pub fn observe_all(world: &World) -> Vec<EntityObservation> {
    (0..world.spec.total_agents()).map(|i| observe(world, i)).collect()
}
