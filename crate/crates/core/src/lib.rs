//! Desk-scale multi-agent reinforcement-learning laboratory.
//!
//! Agents trained across population-varying games share a common policy
//! whose game-specific knowledge lives in an egocentric relational graph
//! generated from a latent code. The crate provides:
//!
//! - [`autodiff`]: dense tensors with a reverse-mode tape, Adam, seeded
//!   random streams, and the checkpoint blob format;
//! - [`envs`]: deterministic particle worlds (treasure collection,
//!   resource occupation, pacman-like) plus small tabular Markov games;
//! - [`relnet`]: entity self-attention producing relational graphs and
//!   fixed-width embeddings, with option/concat/bilinear latent variants;
//! - [`agents`]: decentralized policy heads, a centralized attention
//!   critic, target networks, and the replay buffer;
//! - [`train`]: multi-game training with inner actor–critic steps, a
//!   first-order meta (outer) update, and mutual-information objectives;
//! - [`adapt`]: adaptation in novel games, zero-shot evaluation, and the
//!   cross-play score protocol;
//! - [`oracle`]: exact best responses, NashConv, visitation measures, and
//!   empirical audits of the theory bounds on tabular games;
//! - [`config`], [`metrics`], [`plot`]: run configuration, JSONL metrics,
//!   and deterministic SVG plot emission.

pub mod adapt;
pub mod agents;
pub mod autodiff;
pub mod config;
pub mod envs;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod plot;
pub mod relnet;
pub mod train;

pub use error::{MraError, Result};
