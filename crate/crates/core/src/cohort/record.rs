use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::registry::{structured_feature, DocSlot};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObsValue {
    Number(f64),
    Label(String),
}

impl ObsValue {
    /// Numeric encoding used by the feature matrix. Sex labels map to
    /// female = 0, male = 1.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            ObsValue::Number(v) if v.is_finite() => Some(*v),
            ObsValue::Number(_) => None,
            ObsValue::Label(s) => match s.trim().to_ascii_lowercase().as_str() {
                "f" | "female" => Some(0.0),
                "m" | "male" => Some(1.0),
                other => other.parse::<f64>().ok().filter(|v| v.is_finite()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub name: String,
    pub value: ObsValue,
    pub offset_days: i64,
}

impl Observation {
    pub fn new(name: impl Into<String>, value: ObsValue, offset_days: i64) -> Self {
        Observation {
            name: name.into(),
            value,
            offset_days,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurvivalOutcome {
    pub duration_days: u32,
    pub event: bool,
}

impl SurvivalOutcome {
    pub fn new(duration_days: u32, event: bool) -> Self {
        SurvivalOutcome {
            duration_days,
            event,
        }
    }

    pub fn time(&self) -> f64 {
        f64::from(self.duration_days)
    }
}

/// One patient. Dates other than the visit are held as day offsets from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub visit_date: NaiveDate,
    pub rt_start_offset_days: i64,
    pub observations: Vec<Observation>,
    pub documents: BTreeMap<DocSlot, String>,
    pub outcome: Option<SurvivalOutcome>,
}

impl PatientRecord {
    pub fn rt_start_date(&self) -> NaiveDate {
        self.visit_date + chrono::Duration::days(self.rt_start_offset_days)
    }

    pub fn document(&self, slot: DocSlot) -> Option<&str> {
        self.documents
            .get(&slot)
            .map(String::as_str)
            .filter(|s| !s.trim().is_empty())
    }

    /// Radiation-oncology records are usable for structurization only when
    /// the clinical note is present.
    pub fn has_note(&self) -> bool {
        self.document(DocSlot::Note).is_some()
    }
}

/// Wire form of one ingestion line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordLine {
    patient_id: String,
    visit_date: NaiveDate,
    rt_start_date: NaiveDate,
    #[serde(default)]
    duration_days: Option<i64>,
    #[serde(default)]
    event: Option<bool>,
    #[serde(default)]
    observations: Vec<Observation>,
    #[serde(default)]
    documents: BTreeMap<DocSlot, String>,
}

impl TryFrom<RecordLine> for PatientRecord {
    type Error = Error;

    fn try_from(line: RecordLine) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidRecord {
            patient_id: line.patient_id.clone(),
            reason,
        };
        if line.patient_id.is_empty() {
            return Err(invalid("empty patient_id".into()));
        }
        let rt_offset = (line.rt_start_date - line.visit_date).num_days();
        if rt_offset < -365 {
            return Err(invalid(format!(
                "rt_start_date {} more than 365 days before visit {}",
                line.rt_start_date, line.visit_date
            )));
        }
        for obs in &line.observations {
            if structured_feature(&obs.name).is_none() && DocSlot::from_name(&obs.name).is_none() {
                return Err(Error::UnknownFeature(obs.name.clone()));
            }
        }
        let outcome = match (line.duration_days, line.event) {
            (Some(d), Some(event)) => {
                let d = u32::try_from(d)
                    .map_err(|_| invalid(format!("duration_days {d} out of range")))?;
                Some(SurvivalOutcome::new(d, event))
            }
            (None, None) => None,
            _ => return Err(invalid("duration_days and event must be given together".into())),
        };
        Ok(PatientRecord {
            patient_id: line.patient_id,
            visit_date: line.visit_date,
            rt_start_offset_days: rt_offset,
            observations: line.observations,
            documents: line.documents,
            outcome,
        })
    }
}

impl From<&PatientRecord> for RecordLine {
    fn from(r: &PatientRecord) -> Self {
        RecordLine {
            patient_id: r.patient_id.clone(),
            visit_date: r.visit_date,
            rt_start_date: r.rt_start_date(),
            duration_days: r.outcome.map(|o| i64::from(o.duration_days)),
            event: r.outcome.map(|o| o.event),
            observations: r.observations.clone(),
            documents: r.documents.clone(),
        }
    }
}

pub fn parse_record(line: &str) -> Result<PatientRecord> {
    let raw: RecordLine = serde_json::from_str(line)?;
    raw.try_into()
}

pub fn record_to_line(record: &PatientRecord) -> Result<String> {
    Ok(serde_json::to_string(&RecordLine::from(record))?)
}

/// Immutable collection of records with unique patient ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cohort {
    records: Vec<PatientRecord>,
}

impl Cohort {
    pub fn new(records: Vec<PatientRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.patient_id.as_str()) {
                return Err(Error::DuplicatePatient(r.patient_id.clone()));
            }
        }
        Ok(Cohort { records })
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, patient_id: &str) -> Option<&PatientRecord> {
        self.records.iter().find(|r| r.patient_id == patient_id)
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = parse_record(&line).map_err(|e| match e {
                Error::Json(j) => Error::parse(format!("line {}", i + 1), j.to_string()),
                other => other,
            })?;
            records.push(record);
        }
        Cohort::new(records)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        Cohort::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            writeln!(w, "{}", record_to_line(r)?)?;
        }
        Ok(())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}
