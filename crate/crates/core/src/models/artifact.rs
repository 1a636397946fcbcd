//! Versioned JSON model artifacts.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CoxModel, DeepSurvNet, ModelKind, SurvivalForest, SurvivalModel};
use crate::cohort::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::TimeGrid;

pub const MODEL_FORMAT: &str = "radsurv.model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Cox(CoxModel),
    Rsf(SurvivalForest),
    DeepSurv(DeepSurvNet),
}

impl FittedModel {
    fn inner(&self) -> &dyn SurvivalModel {
        match self {
            FittedModel::Cox(m) => m,
            FittedModel::Rsf(m) => m,
            FittedModel::DeepSurv(m) => m,
        }
    }

    pub fn hyperparameters(&self) -> Result<Value> {
        Ok(match self {
            FittedModel::Cox(m) => serde_json::to_value(&m.config)?,
            FittedModel::Rsf(m) => serde_json::to_value(&m.config)?,
            FittedModel::DeepSurv(m) => serde_json::to_value(&m.config)?,
        })
    }
}

impl SurvivalModel for FittedModel {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn features(&self) -> &[String] {
        self.inner().features()
    }

    fn risk_scores(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.inner().risk_scores(matrix)
    }

    fn survival(&self, matrix: &FeatureMatrix, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
        self.inner().survival(matrix, grid)
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    kind: ModelKind,
    features: Vec<String>,
    hyperparameters: Value,
    payload: Value,
}

pub fn model_to_json(model: &FittedModel) -> Result<String> {
    let payload = match model {
        FittedModel::Cox(m) => serde_json::to_value(m)?,
        FittedModel::Rsf(m) => serde_json::to_value(m)?,
        FittedModel::DeepSurv(m) => serde_json::to_value(m)?,
    };
    let env = Envelope {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        kind: model.kind(),
        features: model.features().to_vec(),
        hyperparameters: model.hyperparameters()?,
        payload,
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn model_from_json(text: &str, origin: &str) -> Result<FittedModel> {
    let env: Envelope = serde_json::from_str(text)?;
    if env.format != MODEL_FORMAT || env.version != MODEL_VERSION {
        return Err(Error::FormatVersion {
            path: origin.into(),
            expected: MODEL_FORMAT.into(),
            expected_version: MODEL_VERSION,
            found: env.format,
            found_version: env.version,
        });
    }
    let model = match env.kind {
        ModelKind::Cox => FittedModel::Cox(serde_json::from_value(env.payload)?),
        ModelKind::Rsf => FittedModel::Rsf(serde_json::from_value(env.payload)?),
        ModelKind::DeepSurv => FittedModel::DeepSurv(serde_json::from_value(env.payload)?),
    };
    if model.features() != env.features.as_slice() {
        return Err(Error::FeatureMismatch {
            expected: env.features,
            got: model.features().to_vec(),
        });
    }
    Ok(model)
}

pub fn save_model(model: &FittedModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    model_from_json(&fs::read_to_string(path)?, &path.display().to_string())
}
