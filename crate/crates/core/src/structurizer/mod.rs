//! LLM structurization of clinical documents into seven categorical codes.

pub mod accuracy;
pub mod parse;
pub mod prompts;
pub mod provider;
pub mod schema;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use accuracy::{evaluate_accuracy, read_gold_file, write_gold_file, AccuracyReport, CategoryAccuracy, GoldLabel};
pub use parse::{parse_response, ParseFailure, ParseStatus, Parsed};
pub use prompts::{render_prompt, PromptSet, PromptTemplate};
pub use provider::{CompletionProvider, CompletionRequest, Decoding, HttpChatProvider};
pub use schema::{encoding_width, CategoryKey, CategorySchema, Encoding, NOT_EVALUABLE};

use crate::cohort::{Column, FeatureMatrix, PatientRecord};
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub raw_response: Option<String>,
    pub parse_status: ParseStatus,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalFeatureSet {
    pub patient_id: String,
    pub codes: BTreeMap<CategoryKey, u8>,
    pub provenance: BTreeMap<CategoryKey, Provenance>,
}

impl ClinicalFeatureSet {
    /// Every key present and every code allowed by its schema.
    pub fn is_valid(&self) -> bool {
        CategoryKey::ALL
            .iter()
            .all(|k| self.codes.get(k).is_some_and(|c| k.schema().allows(*c)))
    }

    pub fn code(&self, key: CategoryKey) -> u8 {
        self.codes.get(&key).copied().unwrap_or(NOT_EVALUABLE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub decoding: Decoding,
    /// Pause before each retry, doubled every time.
    pub backoff: Duration,
    pub system_prompt: String,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            decoding: Decoding::default(),
            backoff: Duration::ZERO,
            system_prompt: String::new(),
        }
    }
}

fn structurize_category(
    key: CategoryKey,
    prompt: &str,
    provider: &dyn CompletionProvider,
    policy: &RetryPolicy,
) -> (u8, Provenance) {
    let request = CompletionRequest {
        system: &policy.system_prompt,
        user: prompt,
        decoding: policy.decoding,
    };
    let mut raw_response = None;
    let mut last_error = None;
    let mut delay = policy.backoff;
    let max = policy.max_attempts.max(1);
    for attempt in 1..=max {
        if attempt > 1 && !delay.is_zero() {
            std::thread::sleep(delay);
            delay *= 2;
        }
        match provider.complete(&request) {
            Ok(raw) => match parse_response(key, &raw) {
                Ok(Parsed { code, status }) => {
                    let prov = Provenance {
                        raw_response: Some(raw),
                        parse_status: status,
                        attempts: attempt,
                        last_error,
                    };
                    return (code, prov);
                }
                Err(ParseFailure { raw }) => {
                    last_error = Some("unparseable response".to_string());
                    raw_response = Some(raw);
                }
            },
            Err(e) => last_error = Some(e.to_string()),
        }
    }
    let prov = Provenance {
        raw_response,
        parse_status: ParseStatus::Fallback,
        attempts: max,
        last_error,
    };
    (NOT_EVALUABLE, prov)
}

/// Renders, queries and parses all seven categories. Failures never escape:
/// a category that cannot be parsed after `max_attempts` becomes code 9.
pub fn structurize_patient(
    record: &PatientRecord,
    prompts: &PromptSet,
    provider: &dyn CompletionProvider,
    policy: &RetryPolicy,
) -> ClinicalFeatureSet {
    let mut codes = BTreeMap::new();
    let mut provenance = BTreeMap::new();
    for key in CategoryKey::ALL {
        let prompt = prompts.get(key).render(record);
        let (code, prov) = structurize_category(key, &prompt, provider, policy);
        if prov.parse_status == ParseStatus::Fallback {
            log::debug!("{} {key}: fallback after {} attempts", record.patient_id, prov.attempts);
        }
        codes.insert(key, code);
        provenance.insert(key, prov);
    }
    ClinicalFeatureSet {
        patient_id: record.patient_id.clone(),
        codes,
        provenance,
    }
}

/// Structurizes records with at most `parallelism` patients in flight.
/// Output order follows input order.
pub fn batch_structurize(
    records: &[PatientRecord],
    prompts: &PromptSet,
    provider: &dyn CompletionProvider,
    policy: &RetryPolicy,
    parallelism: usize,
    exec: Exec,
) -> Vec<ClinicalFeatureSet> {
    exec.map_bounded(records.len(), parallelism, |i| {
        structurize_patient(&records[i], prompts, provider, policy)
    })
}

/// Design-matrix columns of the seven categories, grouped per category.
pub fn llm_columns() -> Vec<Column> {
    CategoryKey::ALL
        .iter()
        .flat_map(|k| {
            k.schema()
                .encoded_columns()
                .into_iter()
                .map(move |(name, kind)| Column::grouped(name, kind, k.as_str()))
        })
        .collect()
}

/// Encodes feature sets in `patient_ids` order; code 9 becomes missing.
pub fn encode_feature_sets(sets: &[ClinicalFeatureSet], patient_ids: &[String]) -> Result<FeatureMatrix> {
    let by_id: BTreeMap<&str, &ClinicalFeatureSet> = sets.iter().map(|s| (s.patient_id.as_str(), s)).collect();
    let mut m = FeatureMatrix::new(patient_ids.to_vec(), llm_columns());
    for (r, id) in patient_ids.iter().enumerate() {
        let set = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::UnknownFeature(format!("no clinical feature set for patient {id}")))?;
        let mut c = 0;
        for key in CategoryKey::ALL {
            for v in key.schema().encode(set.code(key)) {
                m.set(r, c, v);
                c += 1;
            }
        }
    }
    Ok(m)
}

pub fn write_feature_sets<W: Write>(sets: &[ClinicalFeatureSet], mut w: W) -> Result<()> {
    for s in sets {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_feature_sets<R: BufRead>(reader: R) -> Result<Vec<ClinicalFeatureSet>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let set: ClinicalFeatureSet =
            serde_json::from_str(&line).map_err(|e| Error::parse(format!("line {}", i + 1), e.to_string()))?;
        if !set.is_valid() {
            return Err(Error::parse(format!("line {}", i + 1), "code outside schema"));
        }
        out.push(set);
    }
    Ok(out)
}

pub fn write_feature_sets_file(sets: &[ClinicalFeatureSet], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_feature_sets(sets, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_feature_sets_file(path: &Path) -> Result<Vec<ClinicalFeatureSet>> {
    read_feature_sets(BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::DocSlot;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn record(id: &str) -> PatientRecord {
        PatientRecord {
            patient_id: id.into(),
            visit_date: NaiveDate::from_ymd_opt(2024, 1, 2).unwrap(),
            rt_start_offset_days: 3,
            observations: vec![],
            documents: BTreeMap::from([(DocSlot::Note, format!("[{id}] note"))]),
            outcome: None,
        }
    }

    /// Answers with a code derived from the prompt; re_RT optionally gets prose.
    struct Scripted {
        prose_for_re_rt: bool,
        calls: AtomicUsize,
    }

    fn key_of(prompt: &str) -> CategoryKey {
        let set = PromptSet::builtin();
        *CategoryKey::ALL
            .iter()
            .find(|k| prompt.contains(set.get(**k).example_response.as_str()))
            .unwrap()
    }

    impl CompletionProvider for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn complete(&self, r: &CompletionRequest<'_>) -> Result<String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let key = key_of(r.user);
            if key == CategoryKey::ReRt && self.prose_for_re_rt {
                return Ok("The patient has probably not been irradiated before.".into());
            }
            let code = r.user.len() as u8 % 2;
            Ok(format!("{{ \"{key}={code}\" }}"))
        }
    }

    struct Down;
    impl CompletionProvider for Down {
        fn name(&self) -> &str {
            "down"
        }
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<String> {
            Err(Error::Transport("connection refused".into()))
        }
    }

    struct Fixed(String);
    impl CompletionProvider for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn complete(&self, _: &CompletionRequest<'_>) -> Result<String> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn strict_round_trip() {
        let p = Scripted { prose_for_re_rt: false, calls: AtomicUsize::new(0) };
        let s = structurize_patient(&record("A"), &PromptSet::builtin(), &p, &RetryPolicy::default());
        assert!(s.is_valid());
        assert!(s.provenance.values().all(|v| v.parse_status == ParseStatus::Strict && v.attempts == 1));
        assert_eq!(p.calls.load(Ordering::SeqCst), 7);
    }

    #[test]
    fn prose_falls_back_after_three_attempts() {
        let p = Scripted { prose_for_re_rt: true, calls: AtomicUsize::new(0) };
        let s = structurize_patient(&record("A"), &PromptSet::builtin(), &p, &RetryPolicy::default());
        assert_eq!(s.code(CategoryKey::ReRt), NOT_EVALUABLE);
        let prov = &s.provenance[&CategoryKey::ReRt];
        assert_eq!(prov.parse_status, ParseStatus::Fallback);
        assert_eq!(prov.attempts, 3);
        assert!(prov.raw_response.as_deref().unwrap().contains("irradiated"));
        assert_eq!(p.calls.load(Ordering::SeqCst), 6 + 3);
    }

    #[test]
    fn transport_failure_gives_all_nines() {
        let s = structurize_patient(&record("A"), &PromptSet::builtin(), &Down, &RetryPolicy::default());
        assert!(s.codes.values().all(|&c| c == NOT_EVALUABLE));
        assert!(s.provenance.values().all(|p| p.last_error.as_deref() == Some("transport: connection refused")));
    }

    #[test]
    fn batch_matches_sequential() {
        let recs: Vec<_> = (0..100).map(|i| record(&format!("P{i:03}"))).collect();
        let p = Scripted { prose_for_re_rt: false, calls: AtomicUsize::new(0) };
        let set = PromptSet::builtin();
        let pol = RetryPolicy::default();
        let seq = batch_structurize(&recs, &set, &p, &pol, 1, Exec::Sequential);
        let par = batch_structurize(&recs, &set, &p, &pol, 8, Exec::Parallel);
        assert_eq!(seq, par);
        let ids: Vec<_> = seq.iter().map(|s| s.patient_id.clone()).collect();
        assert_eq!(ids, recs.iter().map(|r| r.patient_id.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn encoding_and_io() {
        let p = Scripted { prose_for_re_rt: true, calls: AtomicUsize::new(0) };
        let set = PromptSet::builtin();
        let sets: Vec<_> = ["B", "A"]
            .iter()
            .map(|id| structurize_patient(&record(id), &set, &p, &RetryPolicy::default()))
            .collect();
        let ids = vec!["A".to_string(), "B".to_string()];
        let m = encode_feature_sets(&sets, &ids).unwrap();
        assert_eq!(m.ncols(), encoding_width());
        assert_eq!(m.patient_ids(), &ids[..]);
        let re = m.column_index("re_RT").unwrap();
        assert!(m.is_missing(0, re));
        assert_eq!(m.groups().len(), 7);

        let mut buf = Vec::new();
        write_feature_sets(&sets, &mut buf).unwrap();
        assert_eq!(read_feature_sets(&buf[..]).unwrap(), sets);
        assert!(encode_feature_sets(&sets, &["C".to_string()]).is_err());
    }

    proptest! {
        #[test]
        fn adversarial_outputs_stay_in_schema(raw in ".{0,40}", code in 0u8..=255) {
            let set = PromptSet::builtin();
            for text in [raw.clone(), format!("{{ \"emergency={code}\" }}"), format!("pathology={code}")] {
                let s = structurize_patient(&record("A"), &set, &Fixed(text), &RetryPolicy::default());
                prop_assert!(s.is_valid());
            }
        }
    }
}
