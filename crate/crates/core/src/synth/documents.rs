//! Clinical documents rendered from gold codes, and the rule-based extractor
//! that reads them back.

use std::collections::BTreeMap;

use crate::cohort::{DocSlot, PatientRecord};
use crate::structurizer::{CategoryKey, ClinicalFeatureSet, ParseStatus, Provenance};

/// Header line carrying the patient id inside every clinical note.
pub fn patient_marker(patient_id: &str) -> String {
    format!("[patient_id={patient_id}]")
}

/// Patient id from the first marker in `text`.
pub fn find_patient_marker(text: &str) -> Option<&str> {
    let start = text.find("[patient_id=")? + "[patient_id=".len();
    let len = text[start..].find(']')?;
    let id = &text[start..start + len];
    (!id.is_empty()).then_some(id)
}

/// The sentence that encodes `code` for `key` in a clinical note.
pub fn sentence(key: CategoryKey, code: u8) -> Option<&'static str> {
    use CategoryKey::*;
    Some(match (key, code) {
        (GeneralCondition, 0) => "General status: ambulatory and fully active without complaints.",
        (GeneralCondition, 1) => "General status: mild fatigue, otherwise independent in daily activities.",
        (GeneralCondition, 2) => "General status: weight loss and pain limiting activity, needs supportive care.",
        (GeneralCondition, 3) => "General status: bedridden with poor oral intake, needs intensive support.",
        (GeneralCondition, 9) => "General status: not documented.",
        (Pathology, 0) => "Histology: carcinoma.",
        (Pathology, 1) => "Histology: sarcoma.",
        (Pathology, 2) => "Histology: lymphoma.",
        (Pathology, 3) => "Histology: neuroendocrine tumor.",
        (Pathology, 4) => "Histology: glioma.",
        (Pathology, 5) => "Histology: other tumor type.",
        (Pathology, 9) => "Histology: not confirmed.",
        (DiseaseExtent, 0) => "Tumor burden: no residual tumor on recent imaging.",
        (DiseaseExtent, 1) => "Tumor burden: small residual lesion only.",
        (DiseaseExtent, 2) => "Tumor burden: measurable residual disease at primary and regional nodes.",
        (DiseaseExtent, 3) => "Tumor burden: widespread metastases in multiple organs.",
        (DiseaseExtent, 9) => "Tumor burden: staging work-up pending.",
        (DiseaseControl, 0) => "Treatment response: complete remission after prior therapy.",
        (DiseaseControl, 1) => "Treatment response: partial remission after prior therapy.",
        (DiseaseControl, 2) => "Treatment response: stable after prior therapy.",
        (DiseaseControl, 3) => "Treatment response: progression despite prior therapy.",
        (DiseaseControl, 9) => "Treatment response: newly diagnosed, untreated.",
        (RtAim, 0) => "Intent: definitive or adjuvant radiotherapy.",
        (RtAim, 1) => "Intent: salvage radiotherapy for recurrence.",
        (RtAim, 2) => "Intent: palliative radiotherapy for symptom relief.",
        (RtAim, 3) => "Intent: radiotherapy for a benign indication.",
        (RtAim, 9) => "Intent: to be decided.",
        (ReRt, 0) => "Prior radiotherapy to this site: none.",
        (ReRt, 1) => "Prior radiotherapy to this site: yes, previously irradiated.",
        (ReRt, 9) => "Prior radiotherapy to this site: unknown.",
        (Emergency, 0) => "Scheduling: elective.",
        (Emergency, 1) => "Scheduling: within a few weeks.",
        (Emergency, 2) => "Scheduling: within a few days.",
        (Emergency, 3) => "Scheduling: same day, emergent.",
        (Emergency, 9) => "Scheduling: unclear.",
        _ => return None,
    })
}

/// Clinic documents for one patient: referral reason, history, the note
/// (marker plus one sentence per category) and the plan.
pub fn render_documents(patient_id: &str, codes: &BTreeMap<CategoryKey, u8>) -> BTreeMap<DocSlot, String> {
    let mut note = patient_marker(patient_id);
    for key in CategoryKey::ALL {
        let code = codes.get(&key).copied().unwrap_or(9);
        note.push('\n');
        note.push_str(sentence(key, code).unwrap_or(""));
    }
    let mut docs = BTreeMap::new();
    docs.insert(DocSlot::CC, "Referred for radiotherapy consultation.".to_string());
    docs.insert(DocSlot::PI, "Cancer patient seen at the outpatient clinic.".to_string());
    docs.insert(DocSlot::Note, note);
    docs.insert(DocSlot::Plan, "Radiotherapy planning CT to be scheduled.".to_string());
    docs
}

/// Reads the gold codes back from a rendered note. A category whose
/// sentence is absent, or ambiguous, reads as 9.
pub fn extract_reference(record: &PatientRecord) -> ClinicalFeatureSet {
    let note = record.document(DocSlot::Note).unwrap_or("");
    let lines: Vec<&str> = note.lines().map(str::trim).collect();
    let mut codes = BTreeMap::new();
    let mut provenance = BTreeMap::new();
    for key in CategoryKey::ALL {
        let hits: Vec<u8> = key
            .schema()
            .allowed_codes()
            .filter(|&c| sentence(key, c).is_some_and(|s| lines.contains(&s)))
            .collect();
        let (code, status) = match hits.as_slice() {
            [c] => (*c, ParseStatus::Strict),
            _ => (9, ParseStatus::Fallback),
        };
        codes.insert(key, code);
        provenance.insert(
            key,
            Provenance {
                raw_response: None,
                parse_status: status,
                attempts: 1,
                last_error: None,
            },
        );
    }
    ClinicalFeatureSet {
        patient_id: record.patient_id.clone(),
        codes,
        provenance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentences_are_distinct_and_complete() {
        let mut all = Vec::new();
        for key in CategoryKey::ALL {
            for code in key.schema().allowed_codes() {
                let s = sentence(key, code).unwrap();
                assert!(!s.contains('"') && !s.contains('='));
                all.push(s);
            }
        }
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn marker_round_trip() {
        let text = format!("x\n{}\nrest", patient_marker("SYN01234"));
        assert_eq!(find_patient_marker(&text), Some("SYN01234"));
        assert_eq!(find_patient_marker("no marker"), None);
        assert_eq!(find_patient_marker("[patient_id=]"), None);
    }
}
