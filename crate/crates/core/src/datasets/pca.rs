use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{QmoeError, Result};

/// Mean and principal directions fitted on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// Unit-norm components, by descending singular value.
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

impl PcaBasis {
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, a) in self.components.iter().zip(coords) {
            for (o, w) in out.iter_mut().zip(c) {
                *o += a * w;
            }
        }
        out
    }
}

/// Projects every row onto the top-k right singular vectors of the centered
/// training matrix. Each component is signed so its largest-magnitude entry is
/// positive.
pub fn pca_reduce(ds: Dataset, k: usize) -> Result<(Dataset, PcaBasis)> {
    let train = ds.rows(Split::Train);
    let (n, d) = (train.len(), ds.dim());
    if k == 0 || k > d.min(n) {
        return Err(QmoeError::Config(format!(
            "PCA dimension {k} out of range 1..={} ({n} training rows, {d} features)",
            d.min(n)
        )));
    }
    let mut mean = vec![0.0; d];
    for row in &train {
        for (m, v) in mean.iter_mut().zip(*row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| train[i][j] - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| QmoeError::Data("SVD did not return right singular vectors".into()))?;

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut components = Vec::with_capacity(k);
    let mut singular_values = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut c: Vec<f64> = v_t.row(i).iter().copied().collect();
        let pivot = c
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(c);
        singular_values.push(svd.singular_values[i]);
    }
    let basis = PcaBasis {
        mean,
        components,
        singular_values,
    };
    let reduced = ds.map_features(format!("pca(k={k}, fit=train)"), |r| basis.project(r))?;
    Ok((reduced, basis))
}
