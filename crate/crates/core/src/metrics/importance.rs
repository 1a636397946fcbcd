//! Permutation importance by drop in C-index.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cindex::c_index;
use crate::cohort::{FeatureMatrix, SurvivalOutcome};
use crate::error::Result;
use crate::exec::{derive_seed, hash_seed, Exec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Baseline minus permuted C-index, one entry per repeat.
    pub deltas: Vec<f64>,
}

impl FeatureImportance {
    pub fn mean(&self) -> f64 {
        self.deltas.iter().sum::<f64>() / self.deltas.len() as f64
    }
}

/// Copy of `matrix` with rows of `cols` reordered: row r takes row `perm[r]`.
pub fn permute_columns(matrix: &FeatureMatrix, cols: &[usize], perm: &[usize]) -> FeatureMatrix {
    let mut out = matrix.clone();
    for (r, &src) in perm.iter().enumerate() {
        for &c in cols {
            out.set(r, c, matrix.get(src, c));
        }
    }
    out
}

/// ΔC for every column group (one-hot groups move together), `repeats`
/// permutations each. Results keep the matrix's group order.
pub fn permutation_importance<F>(
    risk: F,
    matrix: &FeatureMatrix,
    outcomes: &[SurvivalOutcome],
    repeats: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<FeatureImportance>>
where
    F: Fn(&FeatureMatrix) -> Result<Vec<f64>> + Sync + Send,
{
    let baseline = c_index(&risk(matrix)?, outcomes)?;
    let groups = matrix.groups();
    let n = matrix.nrows();
    let deltas = exec.map(groups.len() * repeats, |job| {
        let (g, r) = (job / repeats, job % repeats);
        let (name, cols) = &groups[g];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(hash_seed(seed, name), r as u64));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let permuted = permute_columns(matrix, cols, &perm);
        Ok(baseline - c_index(&risk(&permuted)?, outcomes)?)
    });
    let deltas = deltas.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(g, (feature, _))| FeatureImportance {
            feature,
            deltas: deltas[g * repeats..(g + 1) * repeats].to_vec(),
        })
        .collect())
}

/// Features ordered by mean ΔC, largest first (ties by name).
pub fn rank_by_mean(importances: &[FeatureImportance]) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = importances.iter().map(|f| (f.feature.clone(), f.mean())).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}
