//! Structurization accuracy against rater gold labels.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::CategoryKey;
use super::ClinicalFeatureSet;
use crate::error::{Error, Result};
use crate::metrics::bootstrap::{bootstrap_many, BootstrapConfig, Interval};

/// One rater's judgement of one category for one case. When
/// `predicted_correct` is empty, correctness is predicted code == gold code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub case_id: String,
    pub rater_id: String,
    pub category: CategoryKey,
    pub gold_code: u8,
    pub predicted_correct: Option<bool>,
}

pub fn read_gold<R: Read>(reader: R) -> Result<Vec<GoldLabel>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let g: GoldLabel = row.map_err(|e| Error::parse(format!("gold row {}", i + 1), e.to_string()))?;
        if !g.category.schema().allows(g.gold_code) {
            return Err(Error::parse(
                format!("gold row {}", i + 1),
                format!("code {} not allowed for {}", g.gold_code, g.category),
            ));
        }
        out.push(g);
    }
    Ok(out)
}

pub fn write_gold<W: Write>(labels: &[GoldLabel], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for g in labels {
        w.serialize(g)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gold_file(path: &Path) -> Result<Vec<GoldLabel>> {
    read_gold(std::fs::File::open(path)?)
}

pub fn write_gold_file(labels: &[GoldLabel], path: &Path) -> Result<()> {
    write_gold(labels, std::fs::File::create(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub category: String,
    /// Fraction correct over all (case, rater) judgements.
    pub accuracy: f64,
    pub ci: Interval,
}

impl CategoryAccuracy {
    /// `65.0 (43.2-85.0)`, in percent.
    pub fn cell(&self) -> String {
        format!("{:.1} ({:.1}-{:.1})", self.accuracy * 100.0, self.ci.lo * 100.0, self.ci.hi * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub cases: usize,
    pub raters: usize,
    pub categories: Vec<CategoryAccuracy>,
    pub average: CategoryAccuracy,
}

/// Per-category accuracy and the unweighted average over the seven
/// categories, with percentile intervals from resampling cases.
pub fn evaluate_accuracy(
    predicted: &[ClinicalFeatureSet],
    gold: &[GoldLabel],
    config: &BootstrapConfig,
) -> Result<AccuracyReport> {
    if gold.is_empty() {
        return Err(Error::Empty("gold labels".into()));
    }
    let by_id: BTreeMap<&str, &ClinicalFeatureSet> = predicted.iter().map(|p| (p.patient_id.as_str(), p)).collect();
    let cases: Vec<&str> = gold.iter().map(|g| g.case_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let case_index: BTreeMap<&str, usize> = cases.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let raters: BTreeSet<&str> = gold.iter().map(|g| g.rater_id.as_str()).collect();

    // tallies[case][category] = (correct, judged)
    let mut tallies = vec![[(0u32, 0u32); 7]; cases.len()];
    for g in gold {
        let correct = match g.predicted_correct {
            Some(c) => c,
            None => {
                let p = by_id.get(g.case_id.as_str()).ok_or_else(|| {
                    Error::Empty(format!("no prediction for case {}", g.case_id))
                })?;
                p.code(g.category) == g.gold_code
            }
        };
        let k = CategoryKey::ALL.iter().position(|c| *c == g.category).unwrap_or(0);
        let t = &mut tallies[case_index[g.case_id.as_str()]][k];
        t.0 += u32::from(correct);
        t.1 += 1;
    }
    if let Some((i, _)) = tallies.iter().enumerate().find(|(_, t)| t.iter().any(|(_, n)| *n == 0)) {
        return Err(Error::DegenerateInput(format!("case {} lacks gold for some category", cases[i])));
    }

    let stat = |idx: &[usize]| -> Result<Vec<f64>> {
        let mut acc: Vec<f64> = (0..7)
            .map(|k| {
                let (c, n) = idx
                    .iter()
                    .fold((0u32, 0u32), |(c, n), &i| (c + tallies[i][k].0, n + tallies[i][k].1));
                f64::from(c) / f64::from(n)
            })
            .collect();
        acc.push(acc.iter().sum::<f64>() / 7.0);
        Ok(acc)
    };
    let intervals = bootstrap_many(cases.len(), 8, stat, config)?;
    let categories: Vec<CategoryAccuracy> = CategoryKey::ALL
        .iter()
        .zip(&intervals)
        .map(|(k, iv)| CategoryAccuracy {
            category: k.as_str().to_string(),
            accuracy: iv.plug_in,
            ci: *iv,
        })
        .collect();
    let average = CategoryAccuracy {
        category: "average".into(),
        accuracy: intervals[7].plug_in,
        ci: intervals[7],
    };
    Ok(AccuracyReport {
        cases: cases.len(),
        raters: raters.len(),
        categories,
        average,
    })
}
