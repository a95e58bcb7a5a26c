//! Numeric substrate: dense tensors, a reverse-mode tape, Adam, named
//! random streams, and the checkpoint blob format.

pub mod adam;
pub mod checkpoint;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamOpt, AdamState};
pub use rng::RngStream;
pub use tape::{Gradients, Tape};
pub use tensor::{NodeId, Tensor};

use crate::error::Result;

/// Central finite differences of a scalar function of one tensor with
/// step h, computed at f64 resolution. Test oracle for gradient checks.
pub fn finite_difference(t: &Tensor, mut f: impl FnMut(&Tensor) -> f64, h: f32) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let mut plus = t.detached();
        plus.data_mut()[i] += h;
        let mut minus = t.detached();
        minus.data_mut()[i] -= h;
        out.push((f(&plus) - f(&minus)) / (2.0 * h as f64));
    }
    out
}

/// Relative error between an analytic and a finite-difference gradient:
/// per-component |a−b| / max(|a|, |b|, 1).
pub fn gradient_rel_err(analytic: &[f32], fd: &[f64]) -> f64 {
    assert_eq!(analytic.len(), fd.len());
    let mut worst = 0.0f64;
    for (&a, &b) in analytic.iter().zip(fd) {
        let a = a as f64;
        let denom = a.abs().max(b.abs()).max(1.0);
        worst = worst.max((a - b).abs() / denom);
    }
    worst
}

/// Abort helper: verify a scalar is finite or produce a diagnostic error.
pub fn check_finite(name: &str, v: f32, dump_path: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(crate::error::MraError::NonFinite(name.to_string(), dump_path.to_string()))
    }
}
