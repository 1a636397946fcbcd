use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{DocSlot, FeatureKind};
use crate::error::{Error, Result};

/// Code every schema reserves for "Not evaluable"; also the failure fallback.
pub const NOT_EVALUABLE: u8 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryKey {
    #[serde(rename = "general_condition")]
    GeneralCondition,
    #[serde(rename = "pathology")]
    Pathology,
    #[serde(rename = "disease_extent")]
    DiseaseExtent,
    #[serde(rename = "disease_control")]
    DiseaseControl,
    #[serde(rename = "RT_aim")]
    RtAim,
    #[serde(rename = "re_RT")]
    ReRt,
    #[serde(rename = "emergency")]
    Emergency,
}

impl CategoryKey {
    pub const ALL: [CategoryKey; 7] = [
        CategoryKey::GeneralCondition,
        CategoryKey::Pathology,
        CategoryKey::DiseaseExtent,
        CategoryKey::DiseaseControl,
        CategoryKey::RtAim,
        CategoryKey::ReRt,
        CategoryKey::Emergency,
    ];

    /// The key as it appears in responses (`key=code`).
    pub fn as_str(self) -> &'static str {
        match self {
            CategoryKey::GeneralCondition => "general_condition",
            CategoryKey::Pathology => "pathology",
            CategoryKey::DiseaseExtent => "disease_extent",
            CategoryKey::DiseaseControl => "disease_control",
            CategoryKey::RtAim => "RT_aim",
            CategoryKey::ReRt => "re_RT",
            CategoryKey::Emergency => "emergency",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            CategoryKey::GeneralCondition => "General condition",
            CategoryKey::Pathology => "Primary pathology",
            CategoryKey::DiseaseExtent => "Disease extent",
            CategoryKey::DiseaseControl => "Disease control",
            CategoryKey::RtAim => "Aim of RT",
            CategoryKey::ReRt => "Re-irradiation",
            CategoryKey::Emergency => "Emergency",
        }
    }

    pub fn schema(self) -> &'static CategorySchema {
        &SCHEMAS[self as usize]
    }
}

impl fmt::Display for CategoryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CategoryKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CategoryKey::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::parse("category", format!("unknown category {s:?}")))
    }
}

/// How a category enters the design matrix. Code 9 is always missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// One column holding the code.
    Ordinal,
    /// Indicator columns for every non-reference code (reference = 0).
    OneHot,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategorySchema {
    pub key: CategoryKey,
    pub code_labels: &'static [(u8, &'static str)],
    pub required_slots: &'static [DocSlot],
    pub encoding: Encoding,
}

impl CategorySchema {
    pub fn allowed_codes(&self) -> impl Iterator<Item = u8> + '_ {
        self.code_labels.iter().map(|(c, _)| *c)
    }

    pub fn allows(&self, code: u8) -> bool {
        self.code_labels.iter().any(|(c, _)| *c == code)
    }

    pub fn label(&self, code: u8) -> Option<&'static str> {
        self.code_labels.iter().find(|(c, _)| *c == code).map(|(_, l)| *l)
    }

    /// Evaluable codes (everything but 9), ascending.
    pub fn evaluable_codes(&self) -> Vec<u8> {
        self.allowed_codes().filter(|&c| c != NOT_EVALUABLE).collect()
    }

    /// (column name, kind) pairs of this category's matrix encoding.
    pub fn encoded_columns(&self) -> Vec<(String, FeatureKind)> {
        match self.encoding {
            Encoding::Ordinal => vec![(self.key.as_str().to_string(), FeatureKind::Ordinal)],
            Encoding::Binary => vec![(self.key.as_str().to_string(), FeatureKind::Binary)],
            Encoding::OneHot => self
                .evaluable_codes()
                .into_iter()
                .filter(|&c| c != 0)
                .map(|c| (format!("{}_{}", self.key, c), FeatureKind::Binary))
                .collect(),
        }
    }

    /// Encoded values for `code`; `None` marks a missing cell.
    pub fn encode(&self, code: u8) -> Vec<Option<f64>> {
        let missing = code == NOT_EVALUABLE || !self.allows(code);
        match self.encoding {
            Encoding::Ordinal | Encoding::Binary => vec![(!missing).then_some(f64::from(code))],
            Encoding::OneHot => self
                .evaluable_codes()
                .into_iter()
                .filter(|&c| c != 0)
                .map(|c| (!missing).then_some(if c == code { 1.0 } else { 0.0 }))
                .collect(),
        }
    }
}

use DocSlot::*;

const SCHEMAS: [CategorySchema; 7] = [
    CategorySchema {
        key: CategoryKey::GeneralCondition,
        code_labels: &[
            (0, "Good condition"),
            (1, "Minor issues"),
            (2, "Moderate issues"),
            (3, "Severe issues"),
            (9, "Not evaluable"),
        ],
        required_slots: &[CC, PI, Note, CXR, Abdomen],
        encoding: Encoding::Ordinal,
    },
    CategorySchema {
        key: CategoryKey::Pathology,
        code_labels: &[
            (0, "Epithelial origin"),
            (1, "Mesenchymal origin"),
            (2, "Lymphoid and hematologic origin"),
            (3, "Neuroendocrine origin"),
            (4, "CNS origin"),
            (5, "Others"),
            (9, "Not evaluable"),
        ],
        required_slots: &[CC, PI, Note, Plan],
        encoding: Encoding::OneHot,
    },
    CategorySchema {
        key: CategoryKey::DiseaseExtent,
        code_labels: &[
            (0, "No evidence of disease (NED)"),
            (1, "Tiny residual disease exists"),
            (2, "Moderate residual disease exists"),
            (3, "Extensive & uncontrolled metastasis"),
            (9, "Not evaluable"),
        ],
        required_slots: &[CC, PI, Note, Plan, BMri, CCT, APCT, PET],
        encoding: Encoding::Ordinal,
    },
    CategorySchema {
        key: CategoryKey::DiseaseControl,
        code_labels: &[
            (0, "Complete response after previous treatment"),
            (1, "Partial response after previous treatment"),
            (2, "Stable disease after previous treatment"),
            (3, "Progressive disease even after previous treatment"),
            (9, "Not evaluable"),
        ],
        required_slots: &[CC, PI, Note, Plan, BMri, CCT, APCT, PET],
        encoding: Encoding::Ordinal,
    },
    CategorySchema {
        key: CategoryKey::RtAim,
        code_labels: &[
            (0, "Definitive or postoperative (curative)"),
            (1, "Salvage"),
            (2, "Palliative"),
            (3, "Others"),
            (9, "Not evaluable"),
        ],
        required_slots: &[CC, PI, Note, Plan],
        encoding: Encoding::OneHot,
    },
    CategorySchema {
        key: CategoryKey::ReRt,
        code_labels: &[(0, "No"), (1, "Yes"), (9, "Not evaluable")],
        required_slots: &[CC, PI, Note],
        encoding: Encoding::Binary,
    },
    CategorySchema {
        key: CategoryKey::Emergency,
        code_labels: &[
            (0, "Not emergent at all"),
            (1, "Slightly emergent"),
            (2, "Moderately emergent"),
            (3, "Emergent treatment needed immediately"),
            (9, "Not evaluable"),
        ],
        required_slots: &[CC, PI, Note, Plan],
        encoding: Encoding::Ordinal,
    },
];

/// Total number of matrix columns contributed by the seven categories.
pub fn encoding_width() -> usize {
    CategoryKey::ALL.iter().map(|k| k.schema().encoded_columns().len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allowed_code_sets() {
        let expect: [(CategoryKey, &[u8]); 7] = [
            (CategoryKey::GeneralCondition, &[0, 1, 2, 3, 9]),
            (CategoryKey::Pathology, &[0, 1, 2, 3, 4, 5, 9]),
            (CategoryKey::DiseaseExtent, &[0, 1, 2, 3, 9]),
            (CategoryKey::DiseaseControl, &[0, 1, 2, 3, 9]),
            (CategoryKey::RtAim, &[0, 1, 2, 3, 9]),
            (CategoryKey::ReRt, &[0, 1, 9]),
            (CategoryKey::Emergency, &[0, 1, 2, 3, 9]),
        ];
        for (key, codes) in expect {
            let s = key.schema();
            assert_eq!(s.key, key);
            assert_eq!(s.allowed_codes().collect::<Vec<_>>(), codes);
            assert!(s.allows(NOT_EVALUABLE));
        }
    }

    #[test]
    fn key_strings_round_trip() {
        for k in CategoryKey::ALL {
            assert_eq!(k.as_str().parse::<CategoryKey>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
    }

    #[test]
    fn encoding_layout() {
        // 4 ordinal + pathology 5 indicators + RT_aim 3 indicators + re_RT
        assert_eq!(encoding_width(), 13);
        let p = CategoryKey::Pathology.schema();
        assert_eq!(p.encode(3), vec![Some(0.0), Some(0.0), Some(1.0), Some(0.0), Some(0.0)]);
        assert_eq!(p.encode(0), vec![Some(0.0); 5]);
        assert_eq!(p.encode(9), vec![None; 5]);
        assert_eq!(CategoryKey::DiseaseExtent.schema().encode(2), vec![Some(2.0)]);
        assert_eq!(CategoryKey::ReRt.schema().encode(9), vec![None]);
    }
}
