//! Deterministic completion provider that answers from gold codes.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::documents::find_patient_marker;
use crate::error::{Error, Result};
use crate::exec::hash_seed;
use crate::structurizer::{CategoryKey, ClinicalFeatureSet, CompletionProvider, CompletionRequest, GoldLabel};

/// Free-text answer in the style of a model that ignores the format.
const PROSE: &str = "Given the information provided, the patient should be followed up regularly \
with imaging studies as clinically indicated. Further treatment may be considered depending on \
the response.";

/// Answers with the gold code with probability `1 - error_rate`. Otherwise
/// a uniformly chosen different allowed code, or (one time in ten) prose.
/// The answer depends only on (seed, patient, category), so retries repeat it.
#[derive(Debug, Clone)]
pub struct MockProvider {
    gold: HashMap<String, BTreeMap<CategoryKey, u8>>,
    error_rate: f64,
    seed: u64,
}

impl MockProvider {
    pub fn new(gold: &[ClinicalFeatureSet], error_rate: f64, seed: u64) -> Self {
        MockProvider {
            gold: gold.iter().map(|s| (s.patient_id.clone(), s.codes.clone())).collect(),
            error_rate: error_rate.clamp(0.0, 1.0),
            seed,
        }
    }

    /// Uses the first rater's codes of a gold-label file.
    pub fn from_labels(labels: &[GoldLabel], error_rate: f64, seed: u64) -> Self {
        let mut gold: HashMap<String, BTreeMap<CategoryKey, u8>> = HashMap::new();
        for l in labels {
            gold.entry(l.case_id.clone()).or_default().entry(l.category).or_insert(l.gold_code);
        }
        MockProvider {
            gold,
            error_rate: error_rate.clamp(0.0, 1.0),
            seed,
        }
    }

    /// The response for one (patient, category).
    pub fn answer(&self, patient_id: &str, key: CategoryKey) -> Result<String> {
        let gold = self
            .gold
            .get(patient_id)
            .and_then(|c| c.get(&key))
            .copied()
            .ok_or_else(|| Error::Transport(format!("mock: no gold code for {patient_id}/{key}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(hash_seed(self.seed, &format!("{patient_id}/{key}")));
        let code = if rng.random_bool(self.error_rate) {
            if rng.random_bool(0.1) {
                return Ok(PROSE.to_string());
            }
            let others: Vec<u8> = key.schema().allowed_codes().filter(|&c| c != gold).collect();
            others[rng.random_range(0..others.len())]
        } else {
            gold
        };
        Ok(format!("{{ \"{key}={code}\" }}"))
    }
}

/// The category whose example response appears in the prompt.
fn prompt_category(text: &str) -> Option<CategoryKey> {
    let mut found = CategoryKey::ALL.into_iter().filter(|k| text.contains(&format!("\"{k}=")));
    let key = found.next()?;
    found.next().is_none().then_some(key)
}

impl CompletionProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String> {
        let patient = find_patient_marker(request.user)
            .ok_or_else(|| Error::Transport("mock: patient marker not found".into()))?;
        let key = prompt_category(request.user)
            .ok_or_else(|| Error::Transport("mock: category marker not found".into()))?;
        self.answer(patient, key)
    }
}
