//! Synthetic cohorts with a known proportional-hazards ground truth.
//!
//! Structured features are standardized draws that may load on shared
//! latent factors (so that several laboratory values carry the same
//! signal); the seven clinical categories are drawn independently. The
//! log-hazard is a weighted sum of factors, standardized structured values
//! and per-code category effects. Survival times follow a
//! Weibull PH model and censoring is exponential, tuned to a target rate.

pub mod documents;
pub mod mock;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use documents::{extract_reference, find_patient_marker, patient_marker, render_documents};
pub use mock::MockProvider;

use crate::cohort::{structured_feature, Cohort, DocSlot, ObsValue, Observation, PatientRecord, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Exec};
use crate::structurizer::{write_gold_file, CategoryKey, ClinicalFeatureSet, GoldLabel, ParseStatus, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Normal,
    /// Log-normal with the given mean and SD.
    LogNormal,
    /// Bernoulli with probability `mean`.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub shape: Shape,
    /// Fraction of patients with no in-window value.
    pub missing: f64,
    /// Log-hazard per SD.
    pub coef: f64,
}

/// Latent standard-normal factor; a feature with loading `l` gets
/// `l * factor + sqrt(1 - sum of its squared loadings) * noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    /// Log-hazard per SD of the factor.
    pub coef: f64,
    pub loadings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub code: u8,
    pub prob: f64,
    /// Log-hazard contribution (centered over the code distribution).
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub key: CategoryKey,
    pub codes: Vec<CodeSpec>,
}

impl CategorySpec {
    fn mean_effect(&self) -> f64 {
        let total: f64 = self.codes.iter().map(|c| c.prob).sum();
        self.codes.iter().map(|c| c.prob * c.effect).sum::<f64>() / total
    }

    fn draw(&self, rng: &mut impl Rng) -> &CodeSpec {
        let total: f64 = self.codes.iter().map(|c| c.prob).sum();
        let mut u = rng.random_range(0.0..total);
        for c in &self.codes {
            if u < c.prob {
                return c;
            }
            u -= c.prob;
        }
        self.codes.iter().rev().find(|c| c.prob > 0.0).unwrap_or(&self.codes[0])
    }

    /// Multiplies every effect by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        CategorySpec {
            key: self.key,
            codes: self
                .codes
                .iter()
                .map(|c| CodeSpec { effect: c.effect * factor, ..c.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub weibull_shape: f64,
    /// Weibull scale in days for a patient with average log-hazard.
    pub weibull_scale_days: f64,
    /// Target fraction of censored patients.
    pub censoring_target: f64,
    pub mock_error_rate: f64,
    /// Fraction of patients whose clinical note is missing.
    pub note_missing: f64,
    pub features: Vec<FeatureSpec>,
    pub factors: Vec<FactorSpec>,
    pub categories: Vec<CategorySpec>,
}

fn feature(name: &str, mean: f64, sd: f64, missing: f64, coef: f64) -> FeatureSpec {
    let shape = if sd > 0.35 * mean { Shape::LogNormal } else { Shape::Normal };
    FeatureSpec { name: name.into(), mean, sd, shape, missing, coef }
}

fn category(key: CategoryKey, codes: &[(u8, f64, f64)]) -> CategorySpec {
    CategorySpec {
        key,
        codes: codes.iter().map(|&(code, prob, effect)| CodeSpec { code, prob, effect }).collect(),
    }
}

/// Means and SDs of patients without early death and missing fractions per
/// feature. Most of the structured signal enters through the factors.
fn default_features() -> Vec<FeatureSpec> {
    let mut f = vec![
        feature("age", 59.5, 12.0, 0.022, 0.15),
        FeatureSpec { name: "sex".into(), mean: 0.48, sd: 0.5, shape: Shape::Bernoulli, missing: 0.114, coef: 0.10 },
    ];
    f.extend([
        feature("height", 162.0, 10.7, 0.217, 0.0),
        feature("weight", 61.5, 12.0, 0.211, 0.0),
        feature("bmi", 23.4, 5.2, 0.252, -0.15),
        feature("sbp", 124.1, 15.9, 0.409, 0.0),
        feature("dbp", 75.8, 11.0, 0.375, 0.0),
        feature("pulse_rate", 78.0, 17.3, 0.369, 0.0),
        feature("body_temperature", 36.8, 0.4, 0.476, 0.0),
        feature("wbc", 7.2, 4.3, 0.284, 0.0),
        feature("rbc", 3.9, 0.7, 0.284, 0.0),
        feature("platelet", 250.5, 109.1, 0.285, 0.0),
        feature("hemoglobin", 11.8, 2.0, 0.284, 0.0),
        feature("hematocrit", 35.4, 5.8, 0.281, 0.0),
        feature("anc", 4.9, 3.6, 0.300, 0.0),
        feature("alc", 1.6, 1.3, 0.300, 0.0),
        feature("nlr", 4.2, 5.4, 0.301, 0.0),
        feature("amc", 0.6, 0.7, 0.300, 0.0),
        feature("aec", 0.2, 0.2, 0.300, 0.0),
        feature("abc", 0.03, 0.03, 0.300, 0.0),
        feature("calcium", 9.1, 0.6, 0.323, 0.0),
        feature("phosphate", 3.6, 0.7, 0.325, 0.0),
        feature("glucose", 118.5, 44.0, 0.313, 0.0),
        feature("bun", 15.5, 6.9, 0.306, 0.0),
        feature("creatinine", 0.8, 0.5, 0.306, 0.0),
        feature("uric_acid", 4.4, 1.6, 0.337, 0.0),
        feature("cholesterol", 168.4, 45.0, 0.515, 0.0),
        feature("total_protein", 6.7, 0.8, 0.314, 0.0),
        feature("albumin", 4.0, 0.6, 0.310, 0.0),
        feature("alp", 109.4, 133.6, 0.330, 0.0),
        feature("ast", 30.5, 42.4, 0.308, 0.0),
        feature("alt", 27.0, 35.3, 0.308, 0.0),
        feature("total_bilirubin", 0.6, 0.9, 0.320, 0.0),
        feature("ggt", 135.1, 197.9, 0.870, 0.0),
        feature("sodium", 138.6, 3.5, 0.459, 0.0),
        feature("potassium", 4.3, 0.5, 0.459, 0.0),
        feature("chloride", 102.4, 4.1, 0.465, 0.0),
        feature("inr", 1.0, 0.2, 0.559, 0.0),
        feature("aptt", 30.9, 5.8, 0.572, 0.0),
    ]);
    f
}

fn factor(name: &str, coef: f64, loadings: &[(&str, f64)]) -> FactorSpec {
    FactorSpec {
        name: name.into(),
        coef,
        loadings: loadings.iter().map(|(f, l)| (f.to_string(), *l)).collect(),
    }
}

/// Inflammation/nutrition and anemia factors behind the laboratory values
/// that differ most with early death.
fn default_factors() -> Vec<FactorSpec> {
    vec![
        factor(
            "inflammation",
            1.0,
            &[
                ("albumin", -0.85),
                ("nlr", 0.8),
                ("sodium", -0.75),
                ("alp", 0.7),
                ("chloride", -0.7),
                ("anc", 0.7),
                ("alc", -0.7),
                ("total_protein", -0.7),
                ("pulse_rate", 0.5),
            ],
        ),
        factor("anemia", 0.9, &[("hemoglobin", -0.9), ("hematocrit", -0.9), ("rbc", -0.85)]),
    ]
}

/// Pooled code frequencies; general condition, disease extent and RT aim
/// carry the largest effects.
fn default_categories() -> Vec<CategorySpec> {
    use CategoryKey::*;
    vec![
        category(GeneralCondition, &[(0, 0.0014, 0.0), (1, 0.168, 1.1), (2, 0.274, 2.2), (3, 0.557, 3.3), (9, 0.0001, 2.2)]),
        category(
            Pathology,
            &[(0, 0.834, 0.0), (1, 0.027, 0.1), (2, 0.039, -0.1), (3, 0.032, 0.3), (4, 0.065, -0.3), (5, 0.0016, 0.0), (9, 0.0019, 0.0)],
        ),
        category(DiseaseExtent, &[(0, 0.107, 0.0), (1, 0.373, 0.9), (2, 0.229, 1.8), (3, 0.276, 2.7), (9, 0.015, 1.5)]),
        category(DiseaseControl, &[(0, 0.070, 0.0), (1, 0.238, 0.15), (2, 0.136, 0.3), (3, 0.333, 0.45), (9, 0.223, 0.3)]),
        category(RtAim, &[(0, 0.554, 0.0), (1, 0.167, 0.6), (2, 0.271, 2.0), (3, 0.0072, 0.0), (9, 0.0002, 0.8)]),
        category(ReRt, &[(0, 0.797, 0.0), (1, 0.194, 0.2), (9, 0.009, 0.1)]),
        category(Emergency, &[(0, 0.341, 0.0), (1, 0.116, 0.2), (2, 0.502, 0.4), (3, 0.041, 0.6)]),
    ]
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 4000,
            seed: 20240917,
            weibull_shape: 1.2,
            weibull_scale_days: 730.0,
            censoring_target: 0.4,
            mock_error_rate: 0.125,
            note_missing: 0.0,
            features: default_features(),
            factors: default_factors(),
            categories: default_categories(),
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::parse("synth config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("synth config", e.to_string()))
    }

    pub fn category(&self, key: CategoryKey) -> Option<&CategorySpec> {
        self.categories.iter().find(|c| c.key == key)
    }

    pub fn category_mut(&mut self, key: CategoryKey) -> Option<&mut CategorySpec> {
        self.categories.iter_mut().find(|c| c.key == key)
    }

    /// Zeroes every log-hazard coefficient.
    pub fn null_model(mut self) -> Self {
        self.features.iter_mut().for_each(|f| f.coef = 0.0);
        self.factors.iter_mut().for_each(|f| f.coef = 0.0);
        for c in &mut self.categories {
            c.codes.iter_mut().for_each(|s| s.effect = 0.0);
        }
        self
    }

    fn loading_norm(&self, feature: &str) -> f64 {
        self.factors
            .iter()
            .filter_map(|f| f.loadings.get(feature))
            .map(|l| l * l)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_patients == 0 {
            problems.push("n_patients must be positive".to_string());
        }
        if !(self.weibull_shape > 0.0 && self.weibull_shape.is_finite()) {
            problems.push(format!("weibull_shape {} must be positive", self.weibull_shape));
        }
        if !(self.weibull_scale_days > 0.0 && self.weibull_scale_days.is_finite()) {
            problems.push(format!("weibull_scale_days {} must be positive", self.weibull_scale_days));
        }
        if !(0.0..1.0).contains(&self.censoring_target) {
            problems.push(format!("censoring_target {} outside [0, 1)", self.censoring_target));
        }
        if !(0.0..=1.0).contains(&self.mock_error_rate) {
            problems.push(format!("mock_error_rate {} outside [0, 1]", self.mock_error_rate));
        }
        if !(0.0..1.0).contains(&self.note_missing) {
            problems.push(format!("note_missing {} outside [0, 1)", self.note_missing));
        }
        let mut seen = Vec::new();
        for f in &self.features {
            if structured_feature(&f.name).is_none() {
                problems.push(format!("feature {}: not a structured feature", f.name));
            }
            if seen.contains(&f.name.as_str()) {
                problems.push(format!("feature {}: listed twice", f.name));
            }
            seen.push(&f.name);
            if !(0.0..1.0).contains(&f.missing) {
                problems.push(format!("feature {}: missing fraction {} outside [0, 1)", f.name, f.missing));
            }
            if !f.coef.is_finite() || !f.mean.is_finite() || !(f.sd >= 0.0 && f.sd.is_finite()) {
                problems.push(format!("feature {}: mean, sd and coef must be finite, sd >= 0", f.name));
            }
            match f.shape {
                Shape::LogNormal if !(f.mean > 0.0) => {
                    problems.push(format!("feature {}: log-normal mean must be positive", f.name))
                }
                Shape::Bernoulli if !(0.0..=1.0).contains(&f.mean) => {
                    problems.push(format!("feature {}: Bernoulli mean outside [0, 1]", f.name))
                }
                _ => {}
            }
        }
        for fac in &self.factors {
            if !fac.coef.is_finite() {
                problems.push(format!("factor {}: coefficient must be finite", fac.name));
            }
            for (name, l) in &fac.loadings {
                match self.features.iter().find(|f| &f.name == name) {
                    None => problems.push(format!("factor {}: unknown feature {name}", fac.name)),
                    Some(f) if f.shape == Shape::Bernoulli => {
                        problems.push(format!("factor {}: binary feature {name} cannot load", fac.name))
                    }
                    _ => {}
                }
                if !l.is_finite() {
                    problems.push(format!("factor {}: loading of {name} must be finite", fac.name));
                }
            }
        }
        for f in &self.features {
            let total = self.loading_norm(&f.name);
            if total > 1.0 {
                problems.push(format!("feature {}: squared loadings sum to {total:.3} > 1", f.name));
            }
        }
        for key in CategoryKey::ALL {
            let specs: Vec<_> = self.categories.iter().filter(|c| c.key == key).collect();
            if specs.len() != 1 {
                problems.push(format!("category {key}: expected exactly one entry, found {}", specs.len()));
                continue;
            }
            let spec = specs[0];
            for c in &spec.codes {
                if !key.schema().allows(c.code) {
                    problems.push(format!("category {key}: code {} not allowed", c.code));
                }
                if !(c.prob >= 0.0 && c.prob.is_finite()) || !c.effect.is_finite() {
                    problems.push(format!("category {key}: code {} needs finite prob >= 0 and effect", c.code));
                }
            }
            if !(spec.codes.iter().map(|c| c.prob).sum::<f64>() > 0.0) {
                problems.push(format!("category {key}: probabilities sum to zero"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub records: Vec<PatientRecord>,
    pub gold: Vec<ClinicalFeatureSet>,
    /// True log-hazard per patient, centered.
    pub log_hazard: Vec<f64>,
    /// Exponential censoring rate per day found by tuning.
    pub censoring_rate: f64,
}

impl SynthCohort {
    pub fn cohort(&self) -> Result<Cohort> {
        Cohort::new(self.records.clone())
    }

    /// One gold-label row per patient and category, rater `r1`.
    pub fn gold_labels(&self) -> Vec<GoldLabel> {
        self.gold
            .iter()
            .flat_map(|s| {
                CategoryKey::ALL.into_iter().map(move |k| GoldLabel {
                    case_id: s.patient_id.clone(),
                    rater_id: "r1".into(),
                    category: k,
                    gold_code: s.code(k),
                    predicted_correct: None,
                })
            })
            .collect()
    }

    /// `cohort.jsonl` and `gold.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.cohort()?.write_jsonl(&dir.join(COHORT_FILE))?;
        write_gold_file(&self.gold_labels(), &dir.join(GOLD_FILE))
    }
}

pub const COHORT_FILE: &str = "cohort.jsonl";
pub const GOLD_FILE: &str = "gold.csv";

struct Draw {
    observations: Vec<Observation>,
    codes: BTreeMap<CategoryKey, u8>,
    eta: f64,
    u_event: f64,
    u_censor: f64,
    has_note: bool,
    visit_offset: i64,
    rt_offset: i64,
}

const IMAGING: [(DocSlot, f64, &str); 6] = [
    (DocSlot::CXR, 0.6, "Chest radiograph: no acute cardiopulmonary abnormality."),
    (DocSlot::Abdomen, 0.3, "Abdomen radiograph: nonspecific bowel gas pattern."),
    (DocSlot::CCT, 0.5, "Chest CT: findings described in the clinical note."),
    (DocSlot::APCT, 0.5, "Abdominopelvic CT: findings described in the clinical note."),
    (DocSlot::PET, 0.3, "PET-CT: findings described in the clinical note."),
    (DocSlot::BMri, 0.2, "Brain MRI: findings described in the clinical note."),
];

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn feature_value(spec: &FeatureSpec, z: f64) -> f64 {
    match spec.shape {
        Shape::Normal => round2(spec.mean + spec.sd * z),
        Shape::LogNormal => {
            let s2 = (1.0 + (spec.sd / spec.mean).powi(2)).ln();
            round2((spec.mean.ln() - s2 / 2.0 + s2.sqrt() * z).exp())
        }
        Shape::Bernoulli => f64::from(u8::from(z > 0.0)),
    }
}

fn draw_patient(config: &SynthConfig, centers: &[f64], rng: &mut ChaCha8Rng) -> Draw {
    let mut observations = Vec::new();
    let factors: Vec<f64> = config.factors.iter().map(|_| StandardNormal.sample(rng)).collect();
    let mut eta: f64 = config.factors.iter().zip(&factors).map(|(f, v)| f.coef * v).sum();
    for spec in &config.features {
        let window = structured_feature(&spec.name).expect("validated").window;
        let z: f64 = match spec.shape {
            Shape::Bernoulli => {
                // signed standardized indicator
                let x = rng.random_bool(spec.mean);
                let p = spec.mean.clamp(1e-9, 1.0 - 1e-9);
                if x {
                    ((1.0 - p) / p).sqrt()
                } else {
                    -(p / (1.0 - p)).sqrt()
                }
            }
            _ => {
                let noise: f64 = StandardNormal.sample(rng);
                let shared: f64 = config
                    .factors
                    .iter()
                    .zip(&factors)
                    .filter_map(|(f, v)| f.loadings.get(&spec.name).map(|l| l * v))
                    .sum();
                shared + (1.0 - config.loading_norm(&spec.name)).max(0.0).sqrt() * noise
            }
        };
        eta += spec.coef * z;
        let present = !rng.random_bool(spec.missing);
        let value = |z: f64| {
            if spec.name == "sex" {
                ObsValue::Label(if z > 0.0 { "M" } else { "F" }.into())
            } else {
                ObsValue::Number(feature_value(spec, z))
            }
        };
        let static_window = window.lo == i64::MIN;
        if present {
            let offset = if static_window { 0 } else { rng.random_range(window.lo..=window.hi) };
            observations.push(Observation::new(spec.name.clone(), value(z), offset));
        }
        // stale measurement outside the window, to be ignored by windowing
        if !static_window && rng.random_bool(0.15) {
            let stale: f64 = StandardNormal.sample(rng);
            let offset = window.lo - rng.random_range(1..=60);
            observations.push(Observation::new(spec.name.clone(), value(stale), offset));
        }
    }
    let mut codes = BTreeMap::new();
    for (spec, center) in config.categories.iter().zip(centers) {
        let c = spec.draw(rng);
        eta += c.effect - center;
        codes.insert(spec.key, c.code);
    }
    for (slot, p, text) in IMAGING {
        if rng.random_bool(p) {
            let w = slot.window();
            observations.push(Observation::new(slot.name(), ObsValue::Label(text.into()), rng.random_range(w.lo..=w.hi)));
        }
    }
    Draw {
        observations,
        codes,
        eta,
        u_event: rng.random_range(f64::MIN_POSITIVE..1.0),
        u_censor: rng.random_range(f64::MIN_POSITIVE..1.0),
        has_note: !rng.random_bool(config.note_missing),
        visit_offset: rng.random_range(0..3000),
        rt_offset: rng.random_range(1..=21),
    }
}

fn censored_fraction(times: &[f64], u_censor: &[f64], rate: f64) -> f64 {
    let censored = times
        .iter()
        .zip(u_censor)
        .filter(|(t, u)| -u.ln() / rate < **t)
        .count();
    censored as f64 / times.len() as f64
}

/// Exponential censoring rate giving the target censored fraction.
fn tune_censoring(times: &[f64], u_censor: &[f64], target: f64) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-30.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored_fraction(times, u_censor, mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rate = hi.exp();
    let achieved = censored_fraction(times, u_censor, rate);
    if (achieved - target).abs() > 0.01 {
        return Err(Error::CensoringTarget(target));
    }
    Ok(rate)
}

pub fn generate_cohort(config: &SynthConfig, exec: Exec) -> Result<SynthCohort> {
    config.validate()?;
    let centers: Vec<f64> = config.categories.iter().map(CategorySpec::mean_effect).collect();
    let draws = exec.map(config.n_patients, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i as u64));
        draw_patient(config, &centers, &mut rng)
    });
    let k = config.weibull_shape;
    let times: Vec<f64> = draws
        .iter()
        .map(|d| config.weibull_scale_days * (-d.u_event.ln() / d.eta.exp()).powf(1.0 / k))
        .map(|t| t.min(1e6))
        .collect();
    let u_censor: Vec<f64> = draws.iter().map(|d| d.u_censor).collect();
    let rate = tune_censoring(&times, &u_censor, config.censoring_target)?;

    let base = NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date");
    let mut records = Vec::with_capacity(draws.len());
    let mut gold = Vec::with_capacity(draws.len());
    let mut log_hazard = Vec::with_capacity(draws.len());
    for (i, (d, &t)) in draws.into_iter().zip(&times).enumerate() {
        let patient_id = format!("SYN{i:05}");
        let c = if rate > 0.0 { -d.u_censor.ln() / rate } else { f64::INFINITY };
        let outcome = SurvivalOutcome::new(t.min(c).ceil() as u32, t <= c);
        let mut documents = render_documents(&patient_id, &d.codes);
        if !d.has_note {
            documents.remove(&DocSlot::Note);
        }
        gold.push(ClinicalFeatureSet {
            patient_id: patient_id.clone(),
            provenance: d
                .codes
                .keys()
                .map(|k| {
                    let p = Provenance { raw_response: None, parse_status: ParseStatus::Strict, attempts: 0, last_error: None };
                    (*k, p)
                })
                .collect(),
            codes: d.codes,
        });
        records.push(PatientRecord {
            patient_id,
            visit_date: base + chrono::Duration::days(d.visit_offset),
            rt_start_offset_days: d.rt_offset,
            observations: d.observations,
            documents,
            outcome: Some(outcome),
        });
        log_hazard.push(d.eta);
    }
    Ok(SynthCohort { records, gold, log_hazard, censoring_rate: rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{missingness_report, resolve_documents, structured_matrix};
    use crate::metrics::c_index;
    use crate::screening::{derive_30dm, kendall_tau_b};
    use crate::structurizer::{batch_structurize, PromptSet, RetryPolicy};

    fn small(n: usize, seed: u64) -> SynthConfig {
        SynthConfig { n_patients: n, seed, ..Default::default() }
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = SynthConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.features.len(), 39);
        let back = SynthConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let avg: f64 = cfg.features.iter().map(|f| f.missing).sum::<f64>() / 39.0;
        assert!((avg - 0.343).abs() < 0.001, "{avg}");
    }

    #[test]
    fn invalid_config_lists_every_problem() {
        let mut cfg = SynthConfig { censoring_target: 1.0, ..Default::default() };
        cfg.features[0].missing = 1.5;
        cfg.categories[0].codes[0].code = 7;
        match cfg.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_under_seed_and_strategy() {
        let a = generate_cohort(&small(200, 1), Exec::Sequential).unwrap();
        let b = generate_cohort(&small(200, 1), Exec::Parallel).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.gold, b.gold);
        let c = generate_cohort(&small(200, 2), Exec::Parallel).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn censoring_and_missingness_hit_targets() {
        let s = generate_cohort(&SynthConfig::default(), Exec::Parallel).unwrap();
        let events = s.records.iter().filter(|r| r.outcome.unwrap().event).count() as f64 / 4000.0;
        assert!((events - 0.6).abs() <= 0.05, "{events}");
        let report = missingness_report(&structured_matrix(&s.records)).unwrap();
        assert!((report.overall - 0.343).abs() <= 0.02, "{}", report.overall);
    }

    #[test]
    fn unreachable_censoring_is_an_error() {
        let cfg = SynthConfig { censoring_target: 0.5, n_patients: 3, ..Default::default() };
        assert!(matches!(generate_cohort(&cfg, Exec::Sequential), Err(Error::CensoringTarget(_))));
    }

    #[test]
    fn reference_extractor_recovers_gold() {
        let s = generate_cohort(&small(500, 3), Exec::Parallel).unwrap();
        for (r, g) in s.records.iter().zip(&s.gold) {
            assert_eq!(extract_reference(r).codes, g.codes);
        }
    }

    #[test]
    fn null_model_gives_chance_concordance() {
        let cfg = SynthConfig { n_patients: 2000, ..Default::default() }.null_model();
        let s = generate_cohort(&cfg, Exec::Parallel).unwrap();
        let outs: Vec<_> = s.records.iter().map(|r| r.outcome.unwrap()).collect();
        let risk: Vec<f64> = s.records.iter().map(|r| r.observations.len() as f64).collect();
        let c = c_index(&risk, &outs).unwrap();
        assert!((c - 0.5).abs() < 0.03, "{c}");
        assert!(s.log_hazard.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn true_log_hazard_is_concordant() {
        let s = generate_cohort(&small(2000, 4), Exec::Parallel).unwrap();
        let outs: Vec<_> = s.records.iter().map(|r| r.outcome.unwrap()).collect();
        assert!(c_index(&s.log_hazard, &outs).unwrap() > 0.75);
    }

    #[test]
    fn disease_extent_weight_is_monotone_in_tau() {
        let taus: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&f| {
                let mut cfg = small(3000, 5);
                let de = cfg.category(CategoryKey::DiseaseExtent).unwrap().scaled(f);
                *cfg.category_mut(CategoryKey::DiseaseExtent).unwrap() = de;
                let s = generate_cohort(&cfg, Exec::Parallel).unwrap();
                let (x, y): (Vec<f64>, Vec<f64>) = s
                    .records
                    .iter()
                    .zip(&s.gold)
                    .filter(|(_, g)| g.code(CategoryKey::DiseaseExtent) != 9)
                    .map(|(r, g)| {
                        let dm = derive_30dm(&r.outcome.unwrap());
                        (f64::from(g.code(CategoryKey::DiseaseExtent)), f64::from(u8::from(dm)))
                    })
                    .unzip();
                kendall_tau_b(&x, &y).unwrap().tau
            })
            .collect();
        assert!(taus[0] < taus[1] && taus[1] < taus[2], "{taus:?}");
    }

    #[test]
    fn halving_scale_halves_median_in_exponential_case() {
        let median = |scale: f64| {
            let cfg = SynthConfig {
                n_patients: 20000,
                weibull_shape: 1.0,
                weibull_scale_days: scale,
                censoring_target: 0.0,
                ..Default::default()
            }
            .null_model();
            let s = generate_cohort(&cfg, Exec::Parallel).unwrap();
            let mut t: Vec<f64> = s.records.iter().map(|r| r.outcome.unwrap().time()).collect();
            t.sort_by(f64::total_cmp);
            t[t.len() / 2]
        };
        let (base, halved) = (median(730.0), median(365.0));
        assert!((base - 730.0 * std::f64::consts::LN_2).abs() < 0.05 * base, "{base}");
        assert!((halved / base - 0.5).abs() < 0.02, "{base} {halved}");
    }

    #[test]
    fn mock_error_rates() {
        let s = generate_cohort(&small(100, 6), Exec::Parallel).unwrap();
        let records: Vec<_> = s.records.iter().map(resolve_documents).collect();
        let prompts = PromptSet::builtin();
        let policy = RetryPolicy::default();
        let exact = MockProvider::new(&s.gold, 0.0, 1);
        let sets = batch_structurize(&records, &prompts, &exact, &policy, 4, Exec::Parallel);
        for (p, g) in sets.iter().zip(&s.gold) {
            assert_eq!(p.codes, g.codes);
        }
        let wrong = MockProvider::new(&s.gold, 1.0, 1);
        let sets = batch_structurize(&records, &prompts, &wrong, &policy, 4, Exec::Parallel);
        let correct = sets
            .iter()
            .zip(&s.gold)
            .flat_map(|(p, g)| CategoryKey::ALL.map(|k| p.code(k) == g.code(k)))
            .filter(|c| *c)
            .count();
        // only prose answers on gold-9 categories can land on the gold code
        assert!(correct < 10, "{correct}");
    }

    #[test]
    fn mock_without_marker_is_a_transport_error() {
        let s = generate_cohort(&small(5, 7), Exec::Sequential).unwrap();
        let mock = MockProvider::new(&s.gold, 0.0, 1);
        let mut r = s.records[0].clone();
        r.documents.insert(DocSlot::Note, "no marker here".into());
        let set = crate::structurizer::structurize_patient(&r, &PromptSet::builtin(), &mock, &RetryPolicy::default());
        assert!(set.codes.values().all(|&c| c == 9));
        assert!(set.provenance.values().all(|p| p.last_error.as_deref().unwrap_or("").contains("marker")));
    }
}
