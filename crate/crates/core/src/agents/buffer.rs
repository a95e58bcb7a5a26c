//! Experience replay with per-game partitions.
//!
//! Each game id owns a FIFO ring; sampling is uniform without replacement
//! over the stored items of the requested game. An underfull partition
//! reports "not ready" so the trainer can skip the update.

use crate::autodiff::RngStream;
use crate::envs::EntityObservation;
use crate::error::{MraError, Result};
use crate::relnet::RelationalGraph;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<EntityObservation>,
    pub actions: Vec<usize>,
    pub next_obs: Vec<EntityObservation>,
    pub graphs: Vec<RelationalGraph>,
    pub rewards: Vec<f32>,
}

#[derive(Clone, Debug, Default)]
struct Ring {
    items: Vec<Transition>,
    next: usize,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    partitions: Vec<Ring>,
    capacity: usize,
}

impl ReplayBuffer {
    /// `capacity` applies per game partition.
    pub fn new(num_games: usize, capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { partitions: vec![Ring::default(); num_games], capacity }
    }

    pub fn len(&self, game_id: usize) -> usize {
        self.partitions[game_id].items.len()
    }

    pub fn is_empty(&self, game_id: usize) -> bool {
        self.len(game_id) == 0
    }

    pub fn push(&mut self, game_id: usize, t: Transition) {
        let ring = &mut self.partitions[game_id];
        if ring.items.len() < self.capacity {
            ring.items.push(t);
        } else {
            ring.items[ring.next] = t;
            ring.next = (ring.next + 1) % self.capacity;
        }
    }

    /// Uniform sample of `batch` distinct stored transitions.
    pub fn sample(&self, game_id: usize, batch: usize, rng: &mut RngStream) -> Result<Vec<&Transition>> {
        let ring = &self.partitions[game_id];
        if ring.items.len() < batch {
            return Err(MraError::NotReady(format!(
                "game {game_id} holds {} transitions, batch needs {batch}",
                ring.items.len()
            )));
        }
        Ok(rng.sample_indices(ring.items.len(), batch).into_iter().map(|i| &ring.items[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(tag: f32) -> Transition {
        Transition {
            obs: vec![EntityObservation { self_entity: vec![tag], others: vec![], other_roles: vec![] }],
            actions: vec![0],
            next_obs: vec![EntityObservation { self_entity: vec![tag + 0.5], others: vec![], other_roles: vec![] }],
            graphs: vec![vec![]],
            rewards: vec![tag],
        }
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut buf = ReplayBuffer::new(1, 2);
        buf.push(0, t(1.0));
        buf.push(0, t(2.0));
        buf.push(0, t(3.0));
        let mut rng = RngStream::root(1).split("s");
        let sampled = buf.sample(0, 2, &mut rng).unwrap();
        let tags: Vec<f32> = sampled.iter().map(|x| x.rewards[0]).collect();
        assert!(!tags.contains(&1.0), "oldest item should be evicted, got {tags:?}");
    }

    #[test]
    fn full_batch_is_a_permutation() {
        let mut buf = ReplayBuffer::new(1, 10);
        for i in 0..5 {
            buf.push(0, t(i as f32));
        }
        let mut rng = RngStream::root(2).split("s");
        let sampled = buf.sample(0, 5, &mut rng).unwrap();
        let mut tags: Vec<i32> = sampled.iter().map(|x| x.rewards[0] as i32).collect();
        tags.sort_unstable();
        assert_eq!(tags, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn underfull_buffer_signals_not_ready() {
        let buf = ReplayBuffer::new(2, 10);
        let mut rng = RngStream::root(3).split("s");
        assert!(matches!(buf.sample(1, 1, &mut rng), Err(MraError::NotReady(_))));
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(1, 10);
        for i in 0..10 {
            buf.push(0, t(i as f32));
        }
        let mut rng = RngStream::root(2).split("s");
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            let s = buf.sample(0, 1, &mut rng).unwrap();
            counts[s[0].rewards[0] as usize] += 1;
        }
        for &c in &counts {
            assert!((c as f64 / 10_000.0 - 0.1).abs() < 0.05 * 0.1, "count {c}");
        }
    }

    #[test]
    fn transitions_round_trip_bit_exact() {
        let mut buf = ReplayBuffer::new(1, 4);
        let original = t(0.123456789);
        buf.push(0, original.clone());
        let mut rng = RngStream::root(5).split("s");
        let got = buf.sample(0, 1, &mut rng).unwrap();
        assert_eq!(*got[0], original);
    }
}
