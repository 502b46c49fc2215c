use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::error::{Error, Result};
use crate::nn::LossKind;

pub const TRACE_MAGIC: &[u8; 8] = b"ILTRACE\n";

/// Perturbations along an attack run. `deltas[k]` is the perturbation after
/// step `step_indices[k]`; index 0 is always the zero perturbation and the
/// last entry is the final one. Every step is kept for runs of at most 100
/// steps, otherwise every `stride`-th.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub method: Method,
    pub loss_kind: LossKind,
    pub stride: usize,
    pub step_indices: Vec<usize>,
    /// Stored separately as a binary blob.
    #[serde(skip)]
    pub deltas: Vec<Vec<f64>>,
    /// Classification loss at every step `0..=steps_taken`.
    pub loss: Vec<f64>,
    /// Interaction-loss value evaluated at the start of each step, when the
    /// method computes it.
    pub interaction_loss: Vec<f64>,
    pub final_delta: Vec<f64>,
    pub success: bool,
    pub reached_max_steps: bool,
}

impl AttackTrace {
    pub fn steps_taken(&self) -> usize {
        self.loss.len() - 1
    }

    /// Per-step perturbations as `TRACE_MAGIC`, `n` and count (u64 LE), then
    /// the values as f64 LE.
    pub fn blob(&self) -> Vec<u8> {
        let n = self.final_delta.len();
        let mut out = Vec::with_capacity(24 + 8 * n * self.deltas.len());
        out.extend_from_slice(TRACE_MAGIC);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.deltas.len() as u64).to_le_bytes());
        for d in &self.deltas {
            for v in d {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn deltas_from_blob(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
        if bytes.len() < 24 || &bytes[..8] != TRACE_MAGIC {
            return Err(Error::Format("not a trace blob".into()));
        }
        let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().unwrap()) as usize;
        let (n, count) = (word(8), word(16));
        let body = &bytes[24..];
        if n.checked_mul(count).and_then(|c| c.checked_mul(8)) != Some(body.len()) {
            return Err(Error::Malformed(format!(
                "trace blob holds {} bytes, header says {count} x {n}",
                body.len()
            )));
        }
        Ok(body
            .chunks_exact(8 * n.max(1))
            .take(count)
            .map(|chunk| {
                chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect()
            })
            .collect())
    }

    /// Writes `<stem>.json` and `<stem>.bin`, creating `dir` if needed.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(self).expect("trace serialises");
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        let bin = dir.join(format!("{stem}.bin"));
        std::fs::write(&bin, self.blob()).map_err(|e| Error::io(&bin, e))
    }

    /// Reads a trace written by [`AttackTrace::save`]; the blob is optional.
    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let json = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let mut trace: AttackTrace =
            serde_json::from_str(&text).map_err(|e| Error::Malformed(e.to_string()))?;
        let bin = dir.join(format!("{stem}.bin"));
        if bin.exists() {
            let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
            trace.deltas = Self::deltas_from_blob(&bytes)?;
            if trace.deltas.len() != trace.step_indices.len() {
                return Err(Error::Malformed(format!(
                    "{} stored steps but {} indices",
                    trace.deltas.len(),
                    trace.step_indices.len()
                )));
            }
        }
        Ok(trace)
    }
}

pub(crate) fn stride_for(steps: usize) -> usize {
    if steps <= 100 {
        1
    } else {
        steps.div_ceil(100)
    }
}
