//! JSONL episode metrics.
//!
//! One object per episode. Runs are deterministic, so the `wall_ms` field
//! is written as 0 by default to keep rerun outputs byte-identical; real
//! timing lives in the run manifest.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MraError, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub game_id: usize,
    pub role_returns: Vec<f64>,
    pub mi_bound: f64,
    pub aux_loss: f64,
    pub wall_ms: u64,
}

pub fn write_jsonl(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| MraError::Parse(e.to_string()))?;
        f.write_all(line.as_bytes())?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let f = fs::File::open(path)?;
    let reader = std::io::BufReader::new(f);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| MraError::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Validate the per-game monotone episode index invariant.
pub fn validate_monotone(records: &[EpisodeRecord]) -> Result<()> {
    let mut last: std::collections::BTreeMap<usize, usize> = Default::default();
    for r in records {
        if let Some(&prev) = last.get(&r.game_id) {
            if r.episode <= prev {
                return Err(MraError::Contract(format!(
                    "episode {} for game {} not increasing past {prev}",
                    r.episode, r.game_id
                )));
            }
        }
        last.insert(r.game_id, r.episode);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let records = vec![
            EpisodeRecord { episode: 0, game_id: 0, role_returns: vec![1.5], mi_bound: 0.2, aux_loss: 1.1, wall_ms: 0 },
            EpisodeRecord { episode: 1, game_id: 0, role_returns: vec![-0.25], mi_bound: 0.3, aux_loss: 0.9, wall_ms: 0 },
        ];
        write_jsonl(&path, &records).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), records);
        validate_monotone(&records).unwrap();
    }

    #[test]
    fn monotonicity_is_per_game() {
        let records = vec![
            EpisodeRecord { episode: 5, game_id: 0, role_returns: vec![], mi_bound: 0.0, aux_loss: 0.0, wall_ms: 0 },
            EpisodeRecord { episode: 2, game_id: 1, role_returns: vec![], mi_bound: 0.0, aux_loss: 0.0, wall_ms: 0 },
            EpisodeRecord { episode: 6, game_id: 0, role_returns: vec![], mi_bound: 0.0, aux_loss: 0.0, wall_ms: 0 },
        ];
        validate_monotone(&records).unwrap();
        let bad = vec![
            EpisodeRecord { episode: 5, game_id: 0, role_returns: vec![], mi_bound: 0.0, aux_loss: 0.0, wall_ms: 0 },
            EpisodeRecord { episode: 5, game_id: 0, role_returns: vec![], mi_bound: 0.0, aux_loss: 0.0, wall_ms: 0 },
        ];
        assert!(validate_monotone(&bad).is_err());
    }
}
