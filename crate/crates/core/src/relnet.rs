//! Relational representation and the latent graph machinery.
//!
//! An agent's egocentric relational graph over the other entities is the
//! softmax of query–key scores, g_j = softmax_j(Q(o_s)ᵀK(o_j)), and the
//! embedding is the graph-weighted sum of value projections,
//! e = Σ_j g_j·V(o_j). The graph generator φ(o, z) turns a latent code z
//! into a graph through one of three variants:
//!
//! - `option`: one attention head per latent class; hard z selects a
//!   head's graph, soft z blends head graphs linearly;
//! - `concat`: z is appended to every entity before attention;
//! - `bilinear`: every entity is replaced by its outer product with z.
//!
//! The query/key transforms (per head) carry the game-specific knowledge;
//! the single value transform is shared and belongs to the policy side,
//! so a policy can consume any stored graph.

use serde::{Deserialize, Serialize};

use crate::autodiff::{RngStream, Tape, Tensor};
use crate::envs::EntityObservation;

/// A stored relational graph: one weight per other entity, summing to 1.
pub type RelationalGraph = Vec<f32>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Option,
    Concat,
    Bilinear,
}

#[derive(Clone, Debug)]
pub struct HeadParams {
    pub query: Tensor,
    pub key: Tensor,
}

/// Attention parameters of one role.
#[derive(Clone, Debug)]
pub struct RelNetParams {
    pub variant: Variant,
    /// Graph-generating heads (the φ side). The option variant has one
    /// head per latent class; concat/bilinear use a single head over
    /// augmented entities.
    pub heads: Vec<HeadParams>,
    /// Shared value transform (the θ side), input width is the raw
    /// entity width for every variant.
    pub value: Tensor,
    pub entity_width: usize,
    pub latent_dim: usize,
    pub embed_dim: usize,
}

pub fn linear_init(rng: &mut RngStream, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f32).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform_f32(-bound, bound)).collect();
    Tensor::new(vec![rows, cols], data)
}

impl RelNetParams {
    /// Input width of the query/key transforms for a variant.
    pub fn head_input_width(variant: Variant, entity_width: usize, latent_dim: usize) -> usize {
        match variant {
            Variant::Option => entity_width,
            Variant::Concat => entity_width + latent_dim,
            Variant::Bilinear => entity_width * latent_dim,
        }
    }

    pub fn init(
        variant: Variant,
        entity_width: usize,
        latent_dim: usize,
        embed_dim: usize,
        rng: &mut RngStream,
    ) -> Self {
        let head_count = match variant {
            Variant::Option => latent_dim,
            _ => 1,
        };
        let head_w = Self::head_input_width(variant, entity_width, latent_dim);
        let heads = (0..head_count)
            .map(|h| {
                let mut hr = rng.split_index("head", h as u64);
                HeadParams {
                    query: linear_init(&mut hr, head_w, embed_dim),
                    key: linear_init(&mut hr, head_w, embed_dim),
                }
            })
            .collect();
        let mut vr = rng.split("value");
        RelNetParams {
            variant,
            heads,
            value: linear_init(&mut vr, entity_width, embed_dim),
            entity_width,
            latent_dim,
            embed_dim,
        }
    }
}

/// Untracked [1, w] row of an observation's self entity.
pub fn self_row(obs: &EntityObservation) -> Tensor {
    Tensor::new(vec![1, obs.width()], obs.self_entity.clone())
}

/// Untracked [n, w] matrix of an observation's other entities.
pub fn others_matrix(obs: &EntityObservation) -> Tensor {
    let n = obs.num_others();
    let w = obs.width();
    let mut data = Vec::with_capacity(n * w);
    for row in &obs.others {
        data.extend_from_slice(row);
    }
    Tensor::new(vec![n, w], data)
}

/// Attention graph of one head over augmented entity inputs: a [1, n]
/// row that sums to 1.
fn head_graph(tape: &mut Tape, self_aug: &Tensor, others_aug: &Tensor, head: &HeadParams) -> Tensor {
    let q = tape.matmul(self_aug, &head.query);
    let k = tape.matmul(others_aug, &head.key);
    let kt = tape.transpose(&k);
    let scores = tape.matmul(&q, &kt);
    tape.softmax(&scores, 1)
}

/// Append z to every row of an entity matrix.
fn augment_concat(tape: &mut Tape, entities: &Tensor, z: &Tensor) -> Tensor {
    let n = entities.rows();
    let zr = tape.reshape(z, vec![1, z.len()]);
    let z_rows = tape.gather_rows(&zr, &vec![0; n]);
    tape.concat_cols(&[entities, &z_rows])
}

/// Replace every row by its outer product with z (flattened row-major).
fn augment_bilinear(tape: &mut Tape, entities: &Tensor, z: &Tensor) -> Tensor {
    let (n, w) = (entities.rows(), entities.cols());
    let zr = tape.reshape(z, vec![1, z.len()]);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let row = tape.gather_rows(entities, &[i]);
        let col = tape.transpose(&row);
        let outer = tape.matmul(&col, &zr);
        rows.push(tape.reshape(&outer, vec![1, w * z.len()]));
    }
    let refs: Vec<&Tensor> = rows.iter().collect();
    tape.concat_rows(&refs)
}

/// Graph and embedding of a single head: e = Σ_j g_j·V(o_j).
///
/// With zero other entities the graph is empty and the embedding is the
/// zero vector.
pub fn relational_embed(
    tape: &mut Tape,
    obs: &EntityObservation,
    params: &RelNetParams,
    head: usize,
) -> (Tensor, Tensor) {
    assert!(head < params.heads.len(), "head {head} out of {}", params.heads.len());
    assert_eq!(
        params.heads[head].query.rows(),
        obs.width(),
        "per-head attention over raw entities needs matching input width (augmenting variants go through generate_graph)"
    );
    if obs.num_others() == 0 {
        return (Tensor::zeros(vec![1, params.embed_dim]), Tensor::zeros(vec![1, 0]));
    }
    let self_r = self_row(obs);
    let others = others_matrix(obs);
    let g = head_graph(tape, &self_r, &others, &params.heads[head]);
    let e = embed_with_graph(tape, &others, &g, &params.value);
    (e, g)
}

/// Embedding from a given graph: e = g·V(others). Works for stored
/// graphs (constants) and live graphs (tracked) alike.
pub fn embed_with_graph(tape: &mut Tape, others: &Tensor, g: &Tensor, value: &Tensor) -> Tensor {
    if others.rows() == 0 {
        return Tensor::zeros(vec![1, value.cols()]);
    }
    let v_all = tape.matmul(others, value);
    tape.matmul(g, &v_all)
}

/// The graph generator g = φ(o, z). `z` may be hard (one-hot) or soft;
/// the result is always a [1, n] distribution over the other entities.
pub fn generate_graph(tape: &mut Tape, obs: &EntityObservation, z: &Tensor, params: &RelNetParams) -> Tensor {
    assert_eq!(z.len(), params.latent_dim, "latent length {} != |Z| {}", z.len(), params.latent_dim);
    let n = obs.num_others();
    if n == 0 {
        return Tensor::zeros(vec![1, 0]);
    }
    let self_r = self_row(obs);
    let others = others_matrix(obs);
    match params.variant {
        Variant::Option => {
            // hard one-hot z selects its head exactly; anything else blends
            if !z.is_tracked() {
                if let Some(k) = one_hot_index(z.data()) {
                    return head_graph(tape, &self_r, &others, &params.heads[k]);
                }
            }
            let per_head: Vec<Tensor> = params
                .heads
                .iter()
                .map(|h| {
                    let g = head_graph(tape, &self_r, &others, h);
                    tape.transpose(&g)
                })
                .collect();
            let refs: Vec<&Tensor> = per_head.iter().collect();
            let stacked = tape.concat_cols(&refs); // [n, |Z|]
            let zc = tape.reshape(z, vec![params.latent_dim, 1]);
            let blended = tape.matmul(&stacked, &zc); // [n, 1]
            tape.transpose(&blended)
        }
        Variant::Concat => {
            let self_aug = augment_concat(tape, &self_r, z);
            let others_aug = augment_concat(tape, &others, z);
            head_graph(tape, &self_aug, &others_aug, &params.heads[0])
        }
        Variant::Bilinear => {
            let self_aug = augment_bilinear(tape, &self_r, z);
            let others_aug = augment_bilinear(tape, &others, z);
            head_graph(tape, &self_aug, &others_aug, &params.heads[0])
        }
    }
}

fn one_hot_index(v: &[f32]) -> Option<usize> {
    let mut hot = None;
    for (i, &x) in v.iter().enumerate() {
        if x == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(i);
        } else if x != 0.0 {
            return None;
        }
    }
    hot
}

/// Per-game categorical latents of one role: a [|M|, |Z|] logit table.
#[derive(Clone, Debug)]
pub struct LatentSpec {
    pub logits: Tensor,
    pub latent_dim: usize,
    pub temperature: f32,
}

impl LatentSpec {
    pub fn new(num_games: usize, latent_dim: usize, temperature: f32) -> Self {
        LatentSpec {
            logits: Tensor::zeros(vec![num_games, latent_dim]),
            latent_dim,
            temperature,
        }
    }

    pub fn num_games(&self) -> usize {
        self.logits.rows()
    }

    /// Softmax probabilities of one game's latent distribution (f64).
    pub fn probs(&self, game_id: usize) -> Vec<f64> {
        assert!(game_id < self.num_games(), "game id {game_id} out of {} rows", self.num_games());
        let row = &self.logits.data()[game_id * self.latent_dim..(game_id + 1) * self.latent_dim];
        let mx = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
        let exps: Vec<f64> = row.iter().map(|&l| ((l as f64) - mx).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }
}

/// Modes for drawing the lower-level latent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentMode {
    /// z ~ p(z|m; ψ) for the given game row.
    PerGame,
    /// z uniform over classes, ignoring the game id (the uni ablation).
    Uniform,
}

/// Draw a latent code. `differentiable` returns a soft Gumbel-softmax
/// sample carrying gradients to ψ via `tracked_logits`; otherwise the
/// result is a hard one-hot sample.
pub fn sample_latent(
    tape: &mut Tape,
    spec: &LatentSpec,
    tracked_logits: Option<&Tensor>,
    game_id: usize,
    rng: &mut RngStream,
    differentiable: bool,
    mode: LatentMode,
) -> Tensor {
    let k = spec.latent_dim;
    if mode == LatentMode::Uniform {
        let mut data = vec![0.0; k];
        data[rng.below(k)] = 1.0;
        return Tensor::from_slice(&data);
    }
    assert!(game_id < spec.num_games(), "game id {game_id} out of {} rows", spec.num_games());
    if differentiable {
        let table = tracked_logits.unwrap_or(&spec.logits);
        let row = tape.gather_rows(table, &[game_id]);
        let flat = tape.reshape(&row, vec![k]);
        tape.gumbel_softmax(&flat, spec.temperature, false, rng)
    } else {
        let probs = spec.probs(game_id);
        let mut data = vec![0.0; k];
        data[rng.categorical(&probs)] = 1.0;
        Tensor::from_slice(&data)
    }
}
