//! Survival models: Cox proportional hazards, random survival forest and a
//! DeepSurv-style network, behind one prediction interface.

pub mod artifact;
pub mod cox;
pub mod deepsurv;
pub mod impute;
pub mod rsf;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use artifact::{load_model, save_model, FittedModel};
pub use cox::{cox_fit, CoxConfig, CoxModel, Ties};
pub use deepsurv::{deepsurv_fit, DeepSurvConfig, DeepSurvNet};
pub use impute::{ImputationPolicy, Standardizer};
pub use rsf::{rsf_fit, RsfConfig, SurvivalForest};

use crate::cohort::{FeatureMatrix, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::metrics::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cox,
    Rsf,
    DeepSurv,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Cox, ModelKind::Rsf, ModelKind::DeepSurv];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cox => "cox",
            ModelKind::Rsf => "rsf",
            ModelKind::DeepSurv => "deepsurv",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Cox => "Cox PH",
            ModelKind::Rsf => "RSF",
            ModelKind::DeepSurv => "DeepSurv",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(vec![format!("unknown model {s:?} (cox, rsf, deepsurv)")]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPrediction {
    pub patient_id: String,
    /// Higher means earlier expected death.
    pub risk_score: f64,
    /// S(t) on the grid passed to `predict`.
    pub survival_curve: Vec<f64>,
}

impl AsRef<[f64]> for RiskPrediction {
    fn as_ref(&self) -> &[f64] {
        &self.survival_curve
    }
}

pub trait SurvivalModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    /// Input columns, matched by name against prediction matrices.
    fn features(&self) -> &[String];

    fn risk_scores(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>>;

    /// Row-wise S(t) at every grid time.
    fn survival(&self, matrix: &FeatureMatrix, grid: &TimeGrid) -> Result<Vec<Vec<f64>>>;

    fn predict(&self, matrix: &FeatureMatrix, grid: &TimeGrid) -> Result<Vec<RiskPrediction>> {
        let risks = self.risk_scores(matrix)?;
        let curves = self.survival(matrix, grid)?;
        Ok(matrix
            .patient_ids()
            .iter()
            .zip(risks)
            .zip(curves)
            .map(|((id, risk_score), survival_curve)| RiskPrediction {
                patient_id: id.clone(),
                risk_score,
                survival_curve,
            })
            .collect())
    }
}

/// Right-continuous step function, 0 before the first jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Breslow cumulative baseline hazard for linear predictors `eta`.
pub fn breslow_baseline(eta: &[f64], outcomes: &[SurvivalOutcome]) -> StepFunction {
    let mut order: Vec<usize> = (0..eta.len()).collect();
    order.sort_by(|&a, &b| outcomes[b].duration_days.cmp(&outcomes[a].duration_days));
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut risk_sum = 0.0;
    let mut jumps = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let t = outcomes[order[i]].duration_days;
        let mut deaths = 0usize;
        while i < order.len() && outcomes[order[i]].duration_days == t {
            risk_sum += (eta[order[i]] - shift).exp();
            deaths += usize::from(outcomes[order[i]].event);
            i += 1;
        }
        if deaths > 0 {
            jumps.push((f64::from(t), deaths as f64 / risk_sum * (-shift).exp()));
        }
    }
    jumps.reverse();
    let mut h = 0.0;
    let (times, values) = jumps
        .into_iter()
        .map(|(t, dh)| {
            h += dh;
            (t, h)
        })
        .unzip();
    StepFunction { times, values }
}

/// exp(-H0(t) * exp(eta)) on the grid, with S = 1 for t <= 0.
pub(crate) fn proportional_curve(h0: &StepFunction, eta: f64, grid: &TimeGrid) -> Vec<f64> {
    let scale = eta.exp();
    grid.times()
        .iter()
        .map(|&t| if t <= 0.0 { 1.0 } else { (-h0.at(t) * scale).exp() })
        .collect()
}

pub(crate) fn check_outcomes(matrix: &FeatureMatrix, outcomes: &[SurvivalOutcome]) -> Result<()> {
    if matrix.nrows() != outcomes.len() {
        return Err(Error::Dimension(format!(
            "{} rows for {} outcomes",
            matrix.nrows(),
            outcomes.len()
        )));
    }
    if !outcomes.iter().any(|o| o.event) {
        return Err(Error::NoEvents);
    }
    Ok(())
}
