//! Trained-model checkpoints: the model together with the preprocessing it
//! was trained behind, so it can be evaluated on raw features later.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::{PcaBasis, Scaler};
use crate::error::{QmoeError, Result};
use crate::models::HybridModel;

pub const CHECKPOINT_FORMAT: &str = "qmoe-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub model_name: String,
    pub seed: u64,
    pub model: HybridModel,
    #[serde(default)]
    pub pca: Option<PcaBasis>,
    pub scaler: Scaler,
    /// Dataset preparation steps, in order.
    pub provenance: Vec<String>,
}

impl Checkpoint {
    pub fn new(
        model_name: &str,
        seed: u64,
        model: HybridModel,
        pca: Option<PcaBasis>,
        scaler: Scaler,
        provenance: Vec<String>,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            model_name: model_name.into(),
            seed,
            model,
            pca,
            scaler,
            provenance,
        }
    }

    /// Raw features to model inputs.
    pub fn preprocess(&self, raw: &[f64]) -> Vec<f64> {
        match &self.pca {
            Some(p) => self.scaler.transform(&p.project(raw)),
            None => self.scaler.transform(raw),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| QmoeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| QmoeError::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| QmoeError::Config(format!("{}: not a checkpoint: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(QmoeError::Config(format!(
                "{}: checkpoint format {:?}, expected {CHECKPOINT_FORMAT:?}",
                path.display(),
                ck.format
            )));
        }
        let m = &ck.model;
        HybridModel::new(m.router().clone(), m.experts().to_vec(), m.input_dim(), m.n_classes())?;
        if ck.scaler.dim() != m.input_dim() {
            return Err(QmoeError::DimensionMismatch {
                expected: m.input_dim(),
                actual: ck.scaler.dim(),
                context: "checkpoint scaler",
            });
        }
        Ok(ck)
    }
}
