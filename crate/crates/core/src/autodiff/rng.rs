//! Named, splittable random streams.
//!
//! Every stochastic operation takes an explicit stream. A stream is a
//! counter-based ChaCha generator whose stream id is derived from a path
//! of names hashed from the run seed, so any component can deterministically
//! derive independent randomness regardless of thread count or call order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub struct RngStream {
    seed: u64,
    path: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Root stream of a run.
    pub fn root(seed: u64) -> Self {
        Self::with_path(seed, FNV_OFFSET)
    }

    fn with_path(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        RngStream { seed, path, rng }
    }

    /// Derive an independent child stream. Splitting does not consume
    /// randomness from the parent.
    pub fn split(&self, name: &str) -> RngStream {
        Self::with_path(self.seed, fnv1a(self.path, name.as_bytes()))
    }

    /// Child stream keyed by an index, e.g. one per episode or worker.
    pub fn split_index(&self, name: &str, index: u64) -> RngStream {
        let h = fnv1a(self.path, name.as_bytes());
        Self::with_path(self.seed, fnv1a(h, &index.to_le_bytes()))
    }

    pub fn uniform_f32(&mut self, lo: f32, hi: f32) -> f32 {
        self.rng.gen_range(lo..hi)
    }

    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.rng.gen_range(0..n)
    }

    /// Standard Gumbel(0,1) sample.
    pub fn gumbel_f32(&mut self) -> f32 {
        let u: f64 = self.rng.gen_range(1e-12..1.0);
        (-(-u.ln()).ln()) as f32
    }

    /// Index sampled from an unnormalized nonnegative weight vector.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "categorical with zero total weight");
        let mut u = self.rng.gen_range(0.0..1.0) * total;
        for (i, &w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }

    /// First `k` entries of a Fisher–Yates shuffle of 0..n: a uniform
    /// sample of k distinct indices.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} distinct of {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_path_same_draws() {
        let a = RngStream::root(7);
        let b = RngStream::root(7);
        let mut s1 = a.split("env").split_index("episode", 3);
        let mut s2 = b.split("env").split_index("episode", 3);
        for _ in 0..16 {
            assert_eq!(s1.uniform_f32(-1.0, 1.0), s2.uniform_f32(-1.0, 1.0));
        }
    }

    #[test]
    fn sibling_streams_differ() {
        let root = RngStream::root(7);
        let mut a = root.split("a");
        let mut b = root.split("b");
        let da: Vec<f32> = (0..8).map(|_| a.uniform_f32(0.0, 1.0)).collect();
        let db: Vec<f32> = (0..8).map(|_| b.uniform_f32(0.0, 1.0)).collect();
        assert_ne!(da, db);
    }

    #[test]
    fn split_does_not_consume_parent() {
        let mut p1 = RngStream::root(9).split("x");
        let p2 = RngStream::root(9).split("x");
        let _ = p2.split("child");
        let mut p2 = p2;
        assert_eq!(p1.uniform_f32(0.0, 1.0), p2.uniform_f32(0.0, 1.0));
    }
}
