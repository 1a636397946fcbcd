//! Ingestion, observation windowing, exclusion and the train/test split.

pub mod matrix;
pub mod record;
pub mod registry;
pub mod window;

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use matrix::{missingness_report, Column, FeatureMatrix, MissingnessReport};
pub use record::{Cohort, ObsValue, Observation, PatientRecord, SurvivalOutcome};
pub use registry::{structured_feature, DocSlot, FeatureKind, StructuredFeature, Window, STRUCTURED_FEATURES};
pub use window::{select_windowed, select_windowed_value};

use crate::error::{Error, Result};

/// Minimum number of windowed structured values for survival modeling.
pub const MIN_STRUCTURED: usize = 4;

/// Windowed numeric value of one structured feature.
pub fn windowed_feature(record: &PatientRecord, feature: &StructuredFeature) -> Option<f64> {
    let obs = select_windowed(&record.observations, feature.name, feature.window)?;
    let v = obs.value.as_number();
    if v.is_none() {
        log::warn!(
            "patient {}: non-numeric value {:?} for {}",
            record.patient_id,
            obs.value,
            feature.name
        );
    }
    v
}

pub fn structured_count(record: &PatientRecord) -> usize {
    STRUCTURED_FEATURES
        .iter()
        .filter(|f| windowed_feature(record, f).is_some())
        .count()
}

/// The 39-column structured matrix, one row per record in input order.
pub fn structured_matrix(records: &[PatientRecord]) -> FeatureMatrix {
    let columns = STRUCTURED_FEATURES
        .iter()
        .map(|f| Column::new(f.name, f.kind))
        .collect();
    let mut m = FeatureMatrix::new(records.iter().map(|r| r.patient_id.clone()).collect(), columns);
    for (r, rec) in records.iter().enumerate() {
        for (c, f) in STRUCTURED_FEATURES.iter().enumerate() {
            m.set(r, c, windowed_feature(rec, f));
        }
    }
    m
}

/// Fills empty document slots from windowed imaging observations (an
/// observation whose name is a slot and whose value is the report text).
pub fn resolve_documents(record: &PatientRecord) -> PatientRecord {
    let mut out = record.clone();
    for slot in DocSlot::ALL {
        if out.document(slot).is_some() {
            continue;
        }
        if let Some(ObsValue::Label(text)) = select_windowed_value(&record.observations, slot.name(), slot.window()) {
            out.documents.insert(slot, text.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    #[serde(rename = "structured<4")]
    TooFewStructured,
    #[serde(rename = "no outcome")]
    NoOutcome,
    #[serde(rename = "no note")]
    NoNote,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::TooFewStructured => "structured<4",
            ExclusionReason::NoOutcome => "no outcome",
            ExclusionReason::NoNote => "no note",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub patient_id: String,
    pub reason: ExclusionReason,
}

/// Survival-modeling exclusion: fewer than four windowed structured values,
/// or no outcome. Counting happens after windowing.
pub fn exclusion_reason(record: &PatientRecord) -> Option<ExclusionReason> {
    if structured_count(record) < MIN_STRUCTURED {
        Some(ExclusionReason::TooFewStructured)
    } else if record.outcome.is_none() {
        Some(ExclusionReason::NoOutcome)
    } else {
        None
    }
}

pub fn apply_exclusion(records: &[PatientRecord]) -> (Vec<PatientRecord>, Vec<Exclusion>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for r in records {
        match exclusion_reason(r) {
            None => kept.push(r.clone()),
            Some(reason) => excluded.push(Exclusion {
                patient_id: r.patient_id.clone(),
                reason,
            }),
        }
    }
    (kept, excluded)
}

/// Records without a clinical note cannot be structurized.
pub fn structurization_gate(records: &[PatientRecord]) -> (Vec<PatientRecord>, Vec<Exclusion>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for r in records {
        if r.has_note() {
            kept.push(r.clone());
        } else {
            excluded.push(Exclusion {
                patient_id: r.patient_id.clone(),
                reason: ExclusionReason::NoNote,
            });
        }
    }
    (kept, excluded)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Random split by patient id. Ids are sorted before shuffling so the result
/// depends only on the id set and the seed; both halves are returned sorted.
pub fn split_cohort(patient_ids: &[String], test_fraction: f64, seed: u64) -> Result<Split> {
    let n = patient_ids.len();
    if n < 5 {
        return Err(Error::CohortTooSmall(n));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(vec![format!("test_fraction {test_fraction} outside [0, 1)")]));
    }
    let unique: BTreeSet<&String> = patient_ids.iter().collect();
    if unique.len() != n {
        let dup = patient_ids
            .iter()
            .find(|id| patient_ids.iter().filter(|x| x == id).count() > 1)
            .cloned()
            .unwrap_or_default();
        return Err(Error::DuplicatePatient(dup));
    }
    let mut ids: Vec<String> = unique.into_iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut test = ids[..n_test].to_vec();
    let mut train = ids[n_test..].to_vec();
    test.sort();
    train.sort();
    Ok(Split { train, test })
}
