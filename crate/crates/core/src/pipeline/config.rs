//! Run configuration: one TOML file drives every stage.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::{hash_seed, Exec};
use crate::models::{deepsurv, CoxConfig, DeepSurvConfig, ModelKind, RsfConfig};
use crate::screening::DEFAULT_TAU_THRESHOLD;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "structured")]
    Structured,
    #[serde(rename = "structured+llm")]
    StructuredLlm,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 2] = [FeatureSet::Structured, FeatureSet::StructuredLlm];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Structured => "structured",
            FeatureSet::StructuredLlm => "structured+llm",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FeatureSet::Structured => "Structured EHR data",
            FeatureSet::StructuredLlm => "Structured EHR data + LLM-structured clinical features",
        }
    }

    pub fn uses_llm(self) -> bool {
        self == FeatureSet::StructuredLlm
    }

    /// Directory-safe name.
    pub fn slug(self) -> &'static str {
        match self {
            FeatureSet::Structured => "structured",
            FeatureSet::StructuredLlm => "structured_llm",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" | "structured_only" => Ok(FeatureSet::Structured),
            "structured+llm" | "structured_plus_llm" => Ok(FeatureSet::StructuredLlm),
            _ => Err(Error::Config(vec![format!(
                "unknown feature set {s:?} (structured, structured+llm)"
            )])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

impl FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(ProviderKind::Mock),
            "http" => Ok(ProviderKind::Http),
            _ => Err(Error::Config(vec![format!("unknown provider {s:?} (mock, http)")])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Line-delimited patient records.
    pub cohort: Option<PathBuf>,
    /// Gold labels (case_id, rater_id, category, gold_code, predicted_correct).
    pub gold: Option<PathBuf>,
    /// Directory with prompt templates; built-in prompts when absent.
    pub prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub parallelism: usize,
    pub max_attempts: u32,
    pub timeout_secs: u64,
    /// Error rate of the mock provider.
    pub mock_error_rate: f64,
    /// Gold cases sampled for the accuracy table.
    pub accuracy_cases: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            endpoint: None,
            model: None,
            parallelism: 8,
            max_attempts: 3,
            timeout_secs: 120,
            mock_error_rate: 0.125,
            accuracy_cases: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub bootstrap_resamples: usize,
    pub level: f64,
    pub grid_points: usize,
    /// Grid horizon as a quantile of observed test times.
    pub grid_quantile: f64,
    pub importance_repeats: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bootstrap_resamples: 1000,
            level: 0.95,
            grid_points: 100,
            grid_quantile: 0.9,
            importance_repeats: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives the split, mock provider, bootstrap and permutations.
    pub seed: u64,
    pub test_fraction: f64,
    pub tau_threshold: f64,
    pub feature_sets: Vec<FeatureSet>,
    pub models: Vec<ModelKind>,
    pub exec: Exec,
    pub paths: Paths,
    pub provider: ProviderConfig,
    pub evaluation: EvalConfig,
    pub cox: CoxConfig,
    pub rsf: RsfConfig,
    pub deepsurv: DeepSurvConfig,
    pub synth: SynthConfig,
}

pub const DEFAULT_SEED: u64 = 20240917;

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            test_fraction: 0.2,
            tau_threshold: DEFAULT_TAU_THRESHOLD,
            feature_sets: FeatureSet::ALL.to_vec(),
            models: ModelKind::ALL.to_vec(),
            exec: Exec::Parallel,
            paths: Paths::default(),
            provider: ProviderConfig::default(),
            evaluation: EvalConfig::default(),
            cox: CoxConfig::default(),
            rsf: RsfConfig { seed: DEFAULT_SEED, ..RsfConfig::default() },
            deepsurv: DeepSurvConfig { seed: DEFAULT_SEED, ..DeepSurvConfig::default() },
            synth: SynthConfig { seed: DEFAULT_SEED, ..SynthConfig::default() },
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("run config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("run config", e.to_string()))
    }

    /// Replaces every seed, including the model and generator seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.rsf.seed = seed;
        self.deepsurv.seed = seed;
        self.synth.seed = seed;
    }

    /// Seed of one named stream derived from the run seed.
    pub fn stream_seed(&self, stream: &str) -> u64 {
        hash_seed(self.seed, stream)
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        let text = self.to_toml()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    /// Checks every field and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            problems.push(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        if !(0.0..=1.0).contains(&self.tau_threshold) {
            problems.push(format!("tau_threshold {} outside [0, 1]", self.tau_threshold));
        }
        if self.feature_sets.is_empty() {
            problems.push("feature_sets is empty".into());
        }
        if self.models.is_empty() {
            problems.push("models is empty".into());
        }
        let p = &self.provider;
        if p.parallelism == 0 {
            problems.push("provider.parallelism must be at least 1".into());
        }
        if p.max_attempts == 0 {
            problems.push("provider.max_attempts must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&p.mock_error_rate) {
            problems.push(format!("provider.mock_error_rate {} outside [0, 1]", p.mock_error_rate));
        }
        if p.kind == ProviderKind::Http {
            if p.endpoint.as_deref().unwrap_or("").is_empty() {
                problems.push("provider.endpoint is required for the http provider".into());
            }
            if p.model.as_deref().unwrap_or("").is_empty() {
                problems.push("provider.model is required for the http provider".into());
            }
        }
        let e = &self.evaluation;
        if e.bootstrap_resamples == 0 {
            problems.push("evaluation.bootstrap_resamples must be at least 1".into());
        }
        if !(e.level > 0.0 && e.level < 1.0) {
            problems.push(format!("evaluation.level {} outside (0, 1)", e.level));
        }
        if e.grid_points < 2 {
            problems.push(format!("evaluation.grid_points {} < 2", e.grid_points));
        }
        if !(e.grid_quantile > 0.0 && e.grid_quantile <= 1.0) {
            problems.push(format!("evaluation.grid_quantile {} outside (0, 1]", e.grid_quantile));
        }
        if e.importance_repeats == 0 {
            problems.push("evaluation.importance_repeats must be at least 1".into());
        }
        if !(self.cox.ridge >= 0.0) || self.cox.max_iter == 0 || !(self.cox.tol > 0.0) {
            problems.push("cox: ridge >= 0, max_iter >= 1 and tol > 0 required".into());
        }
        if self.rsf.n_trees == 0 || self.rsf.min_node_events == 0 || self.rsf.grid_points < 2 {
            problems.push("rsf: n_trees >= 1, min_node_events >= 1 and grid_points >= 2 required".into());
        }
        if let Err(Error::Config(ps)) = deepsurv::validate(&self.deepsurv) {
            problems.extend(ps.into_iter().map(|p| format!("deepsurv: {p}")));
        }
        if let Err(Error::Config(ps)) = self.synth.validate() {
            problems.extend(ps.into_iter().map(|p| format!("synth: {p}")));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}
