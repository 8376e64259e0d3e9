use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{QmoeError, Result};
use crate::models::{ModelSpec, RouterSpec};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Ablation,
    NoiseSweep,
    ParamSweep,
    Boundary,
    TrainSingle,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::NoiseSweep => "noise_sweep",
            ExperimentKind::ParamSweep => "param_sweep",
            ExperimentKind::Boundary => "boundary",
            ExperimentKind::TrainSingle => "train_single",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    TwoMoons {
        #[serde(default = "default_moons_samples")]
        n_samples: usize,
        #[serde(default = "default_moons_noise")]
        noise_sd: f64,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    /// An IDX image/label pair reduced to a binary task.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        class_a: usize,
        #[serde(default = "one")]
        class_b: usize,
        #[serde(default = "default_n_train")]
        n_train: usize,
        #[serde(default = "default_n_test")]
        n_test: usize,
        /// `null` keeps the raw pixels.
        #[serde(default = "default_pca")]
        pca_dims: Option<usize>,
    },
}

fn default_moons_samples() -> usize {
    1000
}
fn default_moons_noise() -> f64 {
    0.1
}
fn default_test_fraction() -> f64 {
    0.2
}
fn one() -> usize {
    1
}
fn default_n_train() -> usize {
    1600
}
fn default_n_test() -> usize {
    400
}
fn default_pca() -> Option<usize> {
    Some(8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSweepConfig {
    pub epsilons: Vec<f64>,
    pub noisy_embedding: bool,
    /// Model evaluated under noise; defaults to the first quantum-routed model.
    pub quantum_model: Option<String>,
    /// Noiseless reference; defaults to the first linear-routed model.
    pub baseline_model: Option<String>,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![0.0, 0.005, 0.01, 0.02, 0.03],
            noisy_embedding: false,
            quantum_model: None,
            baseline_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    pub grid_size: usize,
    /// Fraction of each axis' data range added on both sides.
    pub margin: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            grid_size: 200,
            margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dataset: DatasetSpec,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub noise: NoiseSweepConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Trained model to evaluate instead of training one (noise sweep, boundary).
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

/// Marker key identifying a run manifest, which embeds its config.
pub const MANIFEST_KEY: &str = "manifest_version";

impl ExperimentConfig {
    /// Parses a config (or a run manifest) from JSON text. Relative input
    /// paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| QmoeError::Config(format!("invalid JSON: {e}")))?;
        if value.get(MANIFEST_KEY).is_some() {
            value = value
                .get_mut("config")
                .map(Value::take)
                .ok_or_else(|| QmoeError::Config("manifest has no `config` entry".into()))?;
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            QmoeError::Config(format!("{path}: {}", e.into_inner()))
        })?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| QmoeError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base, overrides).map_err(|e| match e {
            QmoeError::Config(m) => QmoeError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSpec::Idx { images, labels, .. } = &mut self.dataset {
            fix(images);
            fix(labels);
        }
        if let Some(c) = &mut self.checkpoint {
            fix(c);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(QmoeError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds: at least one seed is required".into());
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("seeds: seed {dup} listed twice"));
        }
        if self.models.is_empty() && self.checkpoint.is_none() {
            return bad("models: at least one model is required".into());
        }
        let mut names = HashSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if m.name.is_empty()
                || !m
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
            {
                return bad(format!(
                    "models[{i}].name: {:?} must be non-empty ASCII letters, digits, '-', '_' or '.'",
                    m.name
                ));
            }
            if !names.insert(&m.name) {
                return bad(format!("models[{i}].name: {:?} is used twice", m.name));
            }
            if m.n_experts == 0 {
                return bad(format!("models[{i}].n_experts: must be at least 1"));
            }
            if let RouterSpec::Quantum { n_layers: 0, .. } = m.router {
                return bad(format!("models[{i}].router.n_layers: must be at least 1"));
            }
        }
        self.train.validate()?;
        for (i, &e) in self.noise.epsilons.iter().enumerate() {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("noise.epsilons[{i}]: {e} outside [0, 1]"));
            }
        }
        if self.boundary.grid_size == 0 {
            return bad("boundary.grid_size: must be at least 1".into());
        }
        if !(self.boundary.margin >= 0.0 && self.boundary.margin.is_finite()) {
            return bad(format!(
                "boundary.margin: must be a finite non-negative number, got {}",
                self.boundary.margin
            ));
        }
        match &self.dataset {
            DatasetSpec::TwoMoons {
                n_samples,
                noise_sd,
                test_fraction,
            } => {
                if *n_samples < 4 {
                    return bad(format!("dataset.n_samples: need at least 4, got {n_samples}"));
                }
                if !(*noise_sd >= 0.0 && noise_sd.is_finite()) {
                    return bad(format!("dataset.noise_sd: must be non-negative, got {noise_sd}"));
                }
                if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                    return bad(format!(
                        "dataset.test_fraction: must lie in (0, 1), got {test_fraction}"
                    ));
                }
            }
            DatasetSpec::Idx {
                images,
                labels,
                class_a,
                class_b,
                pca_dims,
                ..
            } => {
                for (field, p) in [("dataset.images", images), ("dataset.labels", labels)] {
                    if !p.is_file() {
                        return bad(format!("{field}: {} does not exist", p.display()));
                    }
                }
                if class_a == class_b {
                    return bad(format!("dataset.class_b: must differ from class_a ({class_a})"));
                }
                if *pca_dims == Some(0) {
                    return bad("dataset.pca_dims: must be at least 1 (or null)".into());
                }
            }
        }
        if let Some(c) = &self.checkpoint {
            if !c.is_file() {
                return bad(format!("checkpoint: {} does not exist", c.display()));
            }
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Applies one `dotted.key=value` override. The value is parsed as JSON when
/// possible and taken as a string otherwise; numeric segments index arrays.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| QmoeError::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(QmoeError::Config(format!(
            "override {assignment:?} has an empty key segment"
        )));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let segments: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| QmoeError::Config(format!("{key}: {seg:?} is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| QmoeError::Config(format!("{key}: index {idx} out of range (length {len})")))?
            }
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Null => {
                *cur = Value::Object(Default::default());
                let Value::Object(map) = cur else { unreachable!() };
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            _ => {
                return Err(QmoeError::Config(format!(
                    "{key}: cannot descend into scalar at {:?}",
                    segments[..i].join(".")
                )))
            }
        };
        if last {
            *cur = value;
            return Ok(());
        }
    }
    Ok(())
}
