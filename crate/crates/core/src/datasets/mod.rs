//! Dataset construction: Two Moons synthesis, IDX ingestion, binary class
//! filtering, PCA and angle-range scaling.
//!
//! Fitting steps (PCA, scaler) only ever look at rows tagged [`Split::Train`].

mod idx;
mod pca;

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{QmoeError, Result};

pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx};
pub use pca::{pca_reduce, PcaBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    splits: Vec<Split>,
    n_classes: usize,
    provenance: Vec<String>,
}

impl Dataset {
    /// All rows start tagged as training rows.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize, provenance: Vec<String>) -> Result<Self> {
        let splits = vec![Split::Train; labels.len()];
        Self::with_splits(features, labels, splits, n_classes, provenance)
    }

    pub fn with_splits(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        splits: Vec<Split>,
        n_classes: usize,
        provenance: Vec<String>,
    ) -> Result<Self> {
        if features.len() != labels.len() || splits.len() != labels.len() {
            return Err(QmoeError::Data(format!(
                "row counts disagree: {} feature rows, {} labels, {} split tags",
                features.len(),
                labels.len(),
                splits.len()
            )));
        }
        if let Some(first) = features.first() {
            let d = first.len();
            if let Some(i) = features.iter().position(|r| r.len() != d) {
                return Err(QmoeError::Data(format!(
                    "row {i} has {} features, expected {d}",
                    features[i].len()
                )));
            }
        }
        if let Some(i) = features.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(QmoeError::Data(format!("row {i} contains a non-finite value")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(QmoeError::Data(format!("label {bad} outside 0..{n_classes}")));
        }
        Ok(Self {
            features,
            labels,
            splits,
            n_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Feature rows of one split, in dataset order.
    pub fn rows(&self, split: Split) -> Vec<&[f64]> {
        self.indices(split)
            .into_iter()
            .map(|i| self.features[i].as_slice())
            .collect()
    }

    pub fn split_labels(&self, split: Split) -> Vec<usize> {
        self.indices(split).into_iter().map(|i| self.labels[i]).collect()
    }

    /// Retags a seeded random `fraction` of the rows as test rows.
    pub fn with_test_fraction(mut self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(QmoeError::Config(format!(
                "test fraction must lie in [0, 1), got {fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (fraction * self.len() as f64).round() as usize;
        self.splits = vec![Split::Train; self.len()];
        for &i in &order[self.len() - n_test..] {
            self.splits[i] = Split::Test;
        }
        self.provenance
            .push(format!("test_split(fraction={fraction}, seed={seed})"));
        Ok(self)
    }

    pub(crate) fn map_features(mut self, step: String, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        self.features = self.features.iter().map(|r| f(r)).collect();
        self.provenance.push(step);
        let Self {
            features,
            labels,
            splits,
            n_classes,
            provenance,
        } = self;
        Self::with_splits(features, labels, splits, n_classes, provenance)
    }

    /// Writes `f0,...,f{d-1},label` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, label) in self.features.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| QmoeError::io(path, e))?;
        Ok(())
    }
}

/// Two interleaved half circles. Label 0 rows lie on (cos t, sin t), label 1
/// rows on (1 - cos t, 0.5 - sin t), t ~ U[0, pi], plus N(0, noise_sd^2)
/// noise on each coordinate. The first half of the rows has label 0.
pub fn make_two_moons(n_samples: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n_samples < 2 {
        return Err(QmoeError::Config(format!(
            "two moons needs at least 2 samples, got {n_samples}"
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(QmoeError::Config(format!(
            "noise_sd must be a finite non-negative number, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).map_err(|e| QmoeError::Config(e.to_string()))?;
    let n_upper = n_samples / 2;
    let mut features = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let t = rng.random_range(0.0..=PI);
        let (label, mut p) = if i < n_upper {
            (0, [t.cos(), t.sin()])
        } else {
            (1, [1.0 - t.cos(), 0.5 - t.sin()])
        };
        if noise_sd > 0.0 {
            p[0] += noise.sample(&mut rng);
            p[1] += noise.sample(&mut rng);
        }
        features.push(p.to_vec());
        labels.push(label);
    }
    Dataset::new(
        features,
        labels,
        2,
        vec![format!(
            "two_moons(n_samples={n_samples}, noise_sd={noise_sd}, seed={seed})"
        )],
    )
}

/// Stratified, seeded subsample of two classes relabelled to {0, 1}: class
/// `class_a` becomes 0. Train rows come first, then test rows.
pub fn filter_binary(
    ds: &Dataset,
    class_a: usize,
    class_b: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<Dataset> {
    if class_a == class_b {
        return Err(QmoeError::Config("filter_binary needs two distinct classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools = [class_a, class_b].map(|c| (0..ds.len()).filter(|&i| ds.labels[i] == c).collect::<Vec<_>>());
    // Class a gets the extra row when a count is odd.
    let quota = |n: usize, which: usize| if which == 0 { n.div_ceil(2) } else { n / 2 };
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n_test);
    for (which, pool) in pools.iter_mut().enumerate() {
        let (tr, te) = (quota(n_train, which), quota(n_test, which));
        if pool.len() < tr + te {
            let class = if which == 0 { class_a } else { class_b };
            return Err(QmoeError::Data(format!(
                "class {class} has {} samples, {} requested ({tr} train + {te} test)",
                pool.len(),
                tr + te
            )));
        }
        pool.shuffle(&mut rng);
        train.extend(pool[..tr].iter().map(|&i| (i, which)));
        test.extend(pool[tr..tr + te].iter().map(|&i| (i, which)));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    let mut features = Vec::with_capacity(n_train + n_test);
    let mut labels = Vec::with_capacity(n_train + n_test);
    let mut splits = Vec::with_capacity(n_train + n_test);
    for (rows, split) in [(&train, Split::Train), (&test, Split::Test)] {
        for &(i, label) in rows {
            features.push(ds.features[i].clone());
            labels.push(label);
            splits.push(split);
        }
    }
    let mut provenance = ds.provenance.clone();
    provenance.push(format!(
        "filter_binary(class_a={class_a}, class_b={class_b}, n_train={n_train}, n_test={n_test}, seed={seed})"
    ));
    Dataset::with_splits(features, labels, splits, 2, provenance)
}

/// Per-feature affine map of the training range onto [0, pi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    /// Maps one value without clipping; constant features map to pi/2.
    fn map(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            (v - self.min[j]) * (PI / span)
        } else {
            PI / 2.0
        }
    }

    /// Scaled features clipped to [0, pi].
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| self.map(j, v).clamp(0.0, PI))
            .collect()
    }

    /// Scaled features without clipping, for evaluating models off the data range.
    pub fn transform_unclipped(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &v)| self.map(j, v)).collect()
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }
}

pub fn fit_scaler(train_rows: &[&[f64]]) -> Result<Scaler> {
    let d = train_rows
        .first()
        .map(|r| r.len())
        .ok_or_else(|| QmoeError::Data("cannot fit a scaler on zero rows".into()))?;
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for row in train_rows {
        for (j, &v) in row.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(Scaler { min, max })
}

pub fn apply_scaler(scaler: &Scaler, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| scaler.transform(r)).collect()
}

/// Fits a scaler on the training rows and applies it to every row.
pub fn scale_dataset(ds: Dataset) -> Result<(Dataset, Scaler)> {
    let scaler = fit_scaler(&ds.rows(Split::Train))?;
    let scaled = ds.map_features("scale_to_angles(range=[0,pi], fit=train)".into(), |r| {
        scaler.transform(r)
    })?;
    Ok((scaled, scaler))
}
