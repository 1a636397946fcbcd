//! Training-set imputation and standardization.

use serde::{Deserialize, Serialize};

use crate::cohort::{Column, FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeColumn {
    pub column: Column,
    pub fill: f64,
}

/// Mean fill for continuous/ordinal columns, mode fill for nominal/binary.
/// Columns with no observed training value are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationPolicy {
    pub columns: Vec<ImputeColumn>,
    pub dropped: Vec<String>,
}

/// Most frequent value; the smallest one on ties.
fn mode(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut best, mut best_n) = (sorted[0], 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().position(|v| *v != sorted[i]).map_or(sorted.len(), |p| i + p);
        if j - i > best_n {
            best = sorted[i];
            best_n = j - i;
        }
        i = j;
    }
    best
}

impl ImputationPolicy {
    pub fn fit(train: &FeatureMatrix) -> Self {
        let mut columns = Vec::new();
        let mut dropped = Vec::new();
        for (c, col) in train.columns().iter().enumerate() {
            let observed: Vec<f64> = train.column(c).into_iter().flatten().collect();
            if observed.is_empty() {
                log::warn!("column {} has no observed training values; dropped", col.name);
                dropped.push(col.name.clone());
                continue;
            }
            let fill = match col.kind {
                FeatureKind::Continuous | FeatureKind::Ordinal => observed.iter().sum::<f64>() / observed.len() as f64,
                FeatureKind::Nominal | FeatureKind::Binary => mode(&observed),
            };
            columns.push(ImputeColumn { column: col.clone(), fill });
        }
        ImputationPolicy { columns, dropped }
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.column.name.clone()).collect()
    }

    /// Kept columns of `matrix` (matched by name) with holes filled.
    pub fn transform(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        let names = self.feature_names();
        let mut out = select_features(matrix, &names)?;
        for (c, ic) in self.columns.iter().enumerate() {
            for r in 0..out.nrows() {
                if out.is_missing(r, c) {
                    out.set(r, c, Some(ic.fill));
                }
            }
        }
        Ok(out)
    }
}

/// Columns of `matrix` in `names` order, or a feature-set mismatch.
pub fn select_features(matrix: &FeatureMatrix, names: &[String]) -> Result<FeatureMatrix> {
    if names.iter().any(|n| matrix.column_index(n).is_none()) {
        return Err(Error::FeatureMismatch {
            expected: names.to_vec(),
            got: matrix.column_names(),
        });
    }
    matrix.select_column_names(names)
}

/// Column-wise z-scoring fitted on complete training data. Constant columns
/// map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(matrix: &FeatureMatrix) -> Self {
        let n = matrix.nrows() as f64;
        let p = matrix.ncols();
        let mut mean = vec![0.0; p];
        let mut sd = vec![0.0; p];
        for c in 0..p {
            let col: Vec<f64> = (0..matrix.nrows()).map(|r| matrix.value(r, c)).collect();
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
            mean[c] = m;
            sd[c] = var.sqrt();
        }
        Standardizer { mean, sd }
    }

    pub fn is_constant(&self, c: usize) -> bool {
        !(self.sd[c] > 1e-12 * self.mean[c].abs().max(1.0))
    }

    /// Row-major standardized values; the matrix must be complete.
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        if matrix.ncols() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "{} columns, standardizer fitted on {}",
                matrix.ncols(),
                self.mean.len()
            )));
        }
        if matrix.has_missing() {
            return Err(Error::DegenerateInput("standardizing a matrix with missing cells".into()));
        }
        let p = matrix.ncols();
        let mut out = Vec::with_capacity(matrix.nrows() * p);
        for r in 0..matrix.nrows() {
            for c in 0..p {
                out.push(if self.is_constant(c) {
                    0.0
                } else {
                    (matrix.value(r, c) - self.mean[c]) / self.sd[c]
                });
            }
        }
        Ok(out)
    }
}
