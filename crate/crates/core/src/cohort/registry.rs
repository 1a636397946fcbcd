//! Known structured EHR features and unstructured document slots.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Ordinal,
    Nominal,
    Binary,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::Ordinal => "ordinal",
            FeatureKind::Nominal => "nominal",
            FeatureKind::Binary => "binary",
        }
    }

    /// Nominal and binary columns are imputed with the mode, the rest with the mean.
    pub fn is_categorical(self) -> bool {
        matches!(self, FeatureKind::Nominal | FeatureKind::Binary)
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(FeatureKind::Continuous),
            "ordinal" => Ok(FeatureKind::Ordinal),
            "nominal" => Ok(FeatureKind::Nominal),
            "binary" => Ok(FeatureKind::Binary),
            other => Err(Error::parse("feature kind", format!("unknown kind {other:?}"))),
        }
    }
}

/// Observation window in days relative to the clinic visit, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub const fn new(lo: i64, hi: i64) -> Self {
        Window { lo, hi }
    }

    /// Anthropometrics, vital signs and imaging: 28 days before to 7 days after.
    pub const ANTHROPOMETRIC: Window = Window::new(-28, 7);
    /// Blood count and chemistry: 14 days either side.
    pub const LABORATORY: Window = Window::new(-14, 14);
    /// Demographics do not expire.
    pub const STATIC: Window = Window::new(i64::MIN, i64::MAX);

    pub fn contains(&self, offset: i64) -> bool {
        self.lo <= offset && offset <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredFeature {
    pub name: &'static str,
    pub label: &'static str,
    pub kind: FeatureKind,
    pub window: Window,
}

const fn cont(name: &'static str, label: &'static str, window: Window) -> StructuredFeature {
    StructuredFeature {
        name,
        label,
        kind: FeatureKind::Continuous,
        window,
    }
}

const A: Window = Window::ANTHROPOMETRIC;
const L: Window = Window::LABORATORY;

/// The 39 structured features, in reporting order.
pub const STRUCTURED_FEATURES: [StructuredFeature; 39] = [
    cont("age", "Age", Window::STATIC),
    StructuredFeature {
        name: "sex",
        label: "Sex",
        kind: FeatureKind::Binary,
        window: Window::STATIC,
    },
    cont("height", "Height", A),
    cont("weight", "Weight", A),
    cont("bmi", "Body mass index", A),
    cont("sbp", "Systolic blood pressure", A),
    cont("dbp", "Diastolic blood pressure", A),
    cont("pulse_rate", "Pulse rate", A),
    cont("body_temperature", "Body temperature", A),
    cont("wbc", "White blood cell count", L),
    cont("rbc", "Red blood cell count", L),
    cont("platelet", "Platelet count", L),
    cont("hemoglobin", "Hemoglobin", L),
    cont("hematocrit", "Hematocrit", L),
    cont("anc", "Absolute neutrophil count", L),
    cont("alc", "Absolute lymphocyte count", L),
    cont("nlr", "Neutrophil-lymphocyte ratio", L),
    cont("amc", "Absolute monocyte count", L),
    cont("aec", "Absolute eosinophil count", L),
    cont("abc", "Absolute basophil count", L),
    cont("calcium", "Calcium", L),
    cont("phosphate", "Inorganic phosphate", L),
    cont("glucose", "Glucose", L),
    cont("bun", "Blood urea nitrogen", L),
    cont("creatinine", "Creatinine", L),
    cont("uric_acid", "Uric acid", L),
    cont("cholesterol", "Cholesterol", L),
    cont("total_protein", "Total protein", L),
    cont("albumin", "Albumin", L),
    cont("alp", "Alkaline phosphatase", L),
    cont("ast", "Aspartate aminotransferase", L),
    cont("alt", "Alanine aminotransferase", L),
    cont("total_bilirubin", "Total bilirubin", L),
    cont("ggt", "Gamma-glutamyl transferase", L),
    cont("sodium", "Sodium", L),
    cont("potassium", "Potassium", L),
    cont("chloride", "Chloride", L),
    cont("inr", "Prothrombin time (INR)", L),
    cont("aptt", "Activated partial thromboplastin time", L),
];

pub fn structured_feature(name: &str) -> Option<&'static StructuredFeature> {
    STRUCTURED_FEATURES.iter().find(|f| f.name == name)
}

/// Unstructured document slots, named as the prompt placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DocSlot {
    CC,
    PI,
    Note,
    Plan,
    CXR,
    #[serde(rename = "abdomen")]
    Abdomen,
    #[serde(rename = "bMRI")]
    BMri,
    CCT,
    APCT,
    PET,
}

impl DocSlot {
    pub const ALL: [DocSlot; 10] = [
        DocSlot::CC,
        DocSlot::PI,
        DocSlot::Note,
        DocSlot::Plan,
        DocSlot::CXR,
        DocSlot::Abdomen,
        DocSlot::BMri,
        DocSlot::CCT,
        DocSlot::APCT,
        DocSlot::PET,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DocSlot::CC => "CC",
            DocSlot::PI => "PI",
            DocSlot::Note => "Note",
            DocSlot::Plan => "Plan",
            DocSlot::CXR => "CXR",
            DocSlot::Abdomen => "abdomen",
            DocSlot::BMri => "bMRI",
            DocSlot::CCT => "CCT",
            DocSlot::APCT => "APCT",
            DocSlot::PET => "PET",
        }
    }

    pub fn from_name(name: &str) -> Option<DocSlot> {
        DocSlot::ALL.iter().copied().find(|s| s.name() == name)
    }

    /// Imaging reports are windowed like anthropometrics; clinic documents
    /// belong to the visit itself.
    pub fn window(self) -> Window {
        match self {
            DocSlot::CC | DocSlot::PI | DocSlot::Note | DocSlot::Plan => Window::new(0, 0),
            _ => Window::ANTHROPOMETRIC,
        }
    }
}

impl fmt::Display for DocSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_39_unique_features() {
        let mut names: Vec<_> = STRUCTURED_FEATURES.iter().map(|f| f.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 39);
    }

    #[test]
    fn slot_names_round_trip() {
        for slot in DocSlot::ALL {
            assert_eq!(DocSlot::from_name(slot.name()), Some(slot));
            let json = serde_json::to_string(&slot).unwrap();
            assert_eq!(json, format!("\"{}\"", slot.name()));
        }
    }
}
