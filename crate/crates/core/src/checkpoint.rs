//! Versioned JSON container for named weight tensors.

use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Matrix, ParamSet};
use crate::error::{GlopError, Result};

pub const FORMAT: &str = "glop-weights";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// What the weights belong to, e.g. `reviser` or `partition`.
    pub kind: String,
    pub config: serde_json::Value,
    /// SHA-256 over the config and every tensor.
    pub digest: String,
    pub tensors: Vec<Tensor>,
}

fn digest(config: &serde_json::Value, tensors: &[Tensor]) -> String {
    let mut h = Sha256::new();
    h.update(config.to_string().as_bytes());
    for t in tensors {
        h.update(t.name.as_bytes());
        h.update((t.rows as u64).to_le_bytes());
        h.update((t.cols as u64).to_le_bytes());
        for x in &t.data {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl Checkpoint {
    pub fn new<C: Serialize>(kind: &str, config: &C, params: &ParamSet) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let tensors: Vec<Tensor> = params
            .names
            .iter()
            .zip(&params.values)
            .map(|(n, m)| Tensor { name: n.clone(), rows: m.rows, cols: m.cols, data: m.data.clone() })
            .collect();
        let digest = digest(&config, &tensors);
        Ok(Checkpoint { format: FORMAT.into(), version: VERSION, kind: kind.into(), config, digest, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    /// Reads and verifies format, version and digest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(GlopError::Input(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if digest(&ck.config, &ck.tensors) != ck.digest {
            return Err(GlopError::Input("checkpoint digest mismatch".into()));
        }
        for t in &ck.tensors {
            if t.data.len() != t.rows * t.cols || t.data.iter().any(|x| !x.is_finite()) {
                return Err(GlopError::Input(format!("tensor {} is malformed", t.name)));
            }
        }
        Ok(ck)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(GlopError::Input(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }

    pub fn config<C: DeserializeOwned>(&self) -> Result<C> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    pub fn params(&self) -> ParamSet {
        ParamSet {
            names: self.tensors.iter().map(|t| t.name.clone()).collect(),
            values: self
                .tensors
                .iter()
                .map(|t| Arc::new(Matrix::from_vec(t.rows, t.cols, t.data.clone())))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_tamper_detection() {
        let mut ps = ParamSet::default();
        ps.push("w", Matrix::from_vec(2, 2, vec![0.1, 1.0 / 3.0, -2.5e-9, 7.0]));
        let ck = Checkpoint::new("reviser", &serde_json::json!({"d": 2}), &ps).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.json");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params(), ps);

        let text = std::fs::read_to_string(&p).unwrap().replace("7.0", "7.5");
        std::fs::write(&p, text).unwrap();
        assert!(Checkpoint::load(&p).is_err());
    }
}
