//! End-to-end stages with versioned intermediates under one output
//! directory. Every stage reads only what earlier stages persisted, so any
//! stage can be rerun on its own.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use config::{EvalConfig, FeatureSet, Paths, ProviderConfig, ProviderKind, RunConfig};
pub use report::{render_report, write_report};

use crate::cohort::{
    apply_exclusion, resolve_documents, split_cohort, structurization_gate, structured_matrix, Cohort, Column,
    Exclusion, FeatureKind, FeatureMatrix, PatientRecord, SurvivalOutcome,
};
use crate::error::{Error, Result};
use crate::metrics::{
    bootstrap_many, c_index, integrated_brier, nbll, permutation_importance, BootstrapConfig, CensoringKm,
    FeatureImportance, Interval, TimeGrid,
};
use crate::models::{
    cox_fit, deepsurv_fit, load_model, rsf_fit, save_model, FittedModel, ModelKind, SurvivalModel,
};
use crate::screening::{screen_features, write_screening_table, ScreeningResult, ThirtyDayLabel};
use crate::structurizer::{
    batch_structurize, encode_feature_sets, evaluate_accuracy, read_feature_sets_file, read_gold_file,
    write_feature_sets_file, AccuracyReport, CategoryKey, ClinicalFeatureSet, CompletionProvider, GoldLabel,
    HttpChatProvider, ParseStatus, PromptSet, RetryPolicy, NOT_EVALUABLE,
};
use crate::synth::{generate_cohort, MockProvider, SynthCohort};

/// Version of every intermediate written by this module.
pub const ARTIFACT_VERSION: u32 = 1;

/// Output layout.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn stage(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn manifest(&self, stage: &str) -> PathBuf {
        self.stage(stage).join("manifest.json")
    }

    pub fn records(&self) -> PathBuf {
        self.stage("ingest").join("records.jsonl")
    }

    pub fn structured(&self) -> (PathBuf, PathBuf) {
        let d = self.stage("ingest");
        (d.join("structured.csv"), d.join("structured_mask.csv"))
    }

    pub fn features(&self) -> PathBuf {
        self.stage("structurize").join("features.jsonl")
    }

    /// Where `run` writes a synthetic cohort when no input is configured.
    pub fn synth_dir(&self) -> PathBuf {
        self.stage("synth")
    }

    pub fn model(&self, set: FeatureSet, kind: ModelKind) -> PathBuf {
        self.stage("train").join(set.slug()).join(format!("{kind}.json"))
    }
}

#[derive(Serialize, Deserialize)]
struct Stamped<T> {
    format: String,
    version: u32,
    config_hash: String,
    #[serde(flatten)]
    body: T,
}

fn format_name(stage: &str) -> String {
    format!("radsurv.{stage}")
}

fn write_manifest<T: Serialize>(layout: &Layout, stage: &str, config_hash: &str, body: &T) -> Result<()> {
    let path = layout.manifest(stage);
    let stamped = Stamped {
        format: format_name(stage),
        version: ARTIFACT_VERSION,
        config_hash: config_hash.to_string(),
        body,
    };
    let mut text = serde_json::to_string_pretty(&stamped)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a stage manifest, refusing other formats and versions.
pub fn read_manifest<T: DeserializeOwned>(layout: &Layout, stage: &str) -> Result<T> {
    let path = layout.manifest(stage);
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Empty(format!("{} ({e}); run the {stage} stage first", path.display()))
    })?;
    let header: Stamped<serde_json::Value> = serde_json::from_str(&text)?;
    if header.format != format_name(stage) || header.version != ARTIFACT_VERSION {
        return Err(Error::FormatVersion {
            path: path.display().to_string(),
            expected: format_name(stage),
            expected_version: ARTIFACT_VERSION,
            found: header.format,
            found_version: header.version,
        });
    }
    let stamped: Stamped<T> = serde_json::from_str(&text)?;
    Ok(stamped.body)
}

fn stage_dir(layout: &Layout, stage: &str) -> Result<PathBuf> {
    let dir = layout.stage(stage);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn bootstrap_config(cfg: &RunConfig, stream: &str) -> BootstrapConfig {
    BootstrapConfig {
        resamples: cfg.evaluation.bootstrap_resamples,
        level: cfg.evaluation.level,
        seed: cfg.stream_seed(stream),
        exec: cfg.exec,
    }
}

// ---------------------------------------------------------------- synth

/// Generates a synthetic cohort and writes `cohort.jsonl` and `gold.csv`.
pub fn run_synth(cfg: &RunConfig, out: &Path) -> Result<SynthCohort> {
    let cohort = generate_cohort(&cfg.synth, cfg.exec)?;
    cohort.write(out)?;
    fs::write(out.join("synth.toml"), cfg.synth.to_toml()?)?;
    Ok(cohort)
}

// ---------------------------------------------------------------- inputs

fn require(path: PathBuf, field: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Config(vec![format!("paths.{field}: {} does not exist", path.display())]))
    }
}

/// `paths.cohort`, or the synthetic cohort under the output directory.
pub fn cohort_path(cfg: &RunConfig, layout: &Layout) -> Result<PathBuf> {
    let path = cfg.paths.cohort.clone().unwrap_or_else(|| layout.synth_dir().join(crate::synth::COHORT_FILE));
    require(path, "cohort")
}

/// `paths.gold`, or the synthetic gold labels when present.
pub fn gold_path(cfg: &RunConfig, layout: &Layout) -> Result<Option<PathBuf>> {
    match &cfg.paths.gold {
        Some(p) => require(p.clone(), "gold").map(Some),
        None => {
            let p = layout.synth_dir().join(crate::synth::GOLD_FILE);
            Ok(p.exists().then_some(p))
        }
    }
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub n_input: usize,
    pub n_kept: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub exclusions: Vec<Exclusion>,
}

/// Windowing, exclusion (structured count, outcome, clinical note) and the
/// train/test split.
pub fn ingest(cfg: &RunConfig, layout: &Layout) -> Result<IngestManifest> {
    let cohort = Cohort::read_jsonl(&cohort_path(cfg, layout)?)?;
    let resolved: Vec<PatientRecord> = cohort.records().iter().map(resolve_documents).collect();
    let (kept, mut exclusions) = apply_exclusion(&resolved);
    let (kept, no_note) = structurization_gate(&kept);
    exclusions.extend(no_note);
    exclusions.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let ids: Vec<String> = kept.iter().map(|r| r.patient_id.clone()).collect();
    let split = split_cohort(&ids, cfg.test_fraction, cfg.stream_seed("split"))?;
    log::info!(
        "ingest: {} records, {} kept ({} train / {} test), {} excluded",
        cohort.len(),
        kept.len(),
        split.train.len(),
        split.test.len(),
        exclusions.len()
    );

    stage_dir(layout, "ingest")?;
    let kept_cohort = Cohort::new(kept)?;
    kept_cohort.write_jsonl(&layout.records())?;
    let (values, mask) = layout.structured();
    structured_matrix(kept_cohort.records()).write_files(&values, &mask)?;
    let manifest = IngestManifest {
        n_input: cohort.len(),
        n_kept: kept_cohort.len(),
        train: split.train,
        test: split.test,
        exclusions,
    };
    write_manifest(layout, "ingest", &cfg.hash()?, &manifest)?;
    Ok(manifest)
}

struct Ingested {
    manifest: IngestManifest,
    records: Cohort,
    structured: FeatureMatrix,
}

fn load_ingested(layout: &Layout) -> Result<Ingested> {
    let manifest: IngestManifest = read_manifest(layout, "ingest")?;
    let records = Cohort::read_jsonl(&layout.records())?;
    let (values, mask) = layout.structured();
    let structured = FeatureMatrix::read_files(&values, &mask)?;
    Ok(Ingested { manifest, records, structured })
}

fn outcomes_for(records: &Cohort, ids: &[String]) -> Result<Vec<SurvivalOutcome>> {
    ids.iter()
        .map(|id| {
            records
                .get(id)
                .and_then(|r| r.outcome)
                .ok_or_else(|| Error::Empty(format!("no outcome for patient {id}")))
        })
        .collect()
}

// ---------------------------------------------------------------- structurize

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructurizeManifest {
    pub provider: String,
    pub prompt_checksum: String,
    pub n_patients: usize,
    /// Category responses by parse status.
    pub strict: usize,
    pub tolerant: usize,
    pub fallback: usize,
    pub accuracy: Option<AccuracyReport>,
}

fn build_provider(cfg: &RunConfig, gold: Option<&[GoldLabel]>) -> Result<Box<dyn CompletionProvider>> {
    let p = &cfg.provider;
    Ok(match p.kind {
        ProviderKind::Mock => {
            let gold = gold.ok_or_else(|| Error::Config(vec!["the mock provider needs gold labels (paths.gold)".into()]))?;
            Box::new(MockProvider::from_labels(gold, p.mock_error_rate, cfg.stream_seed("mock")))
        }
        ProviderKind::Http => Box::new(HttpChatProvider::new(
            p.endpoint.clone().unwrap_or_default(),
            p.model.clone().unwrap_or_default(),
            Duration::from_secs(p.timeout_secs),
        )),
    })
}

/// Gold labels of `n` cases drawn by seed among those with predictions.
pub fn sample_gold_cases(gold: &[GoldLabel], available: &[String], n: usize, seed: u64) -> Vec<GoldLabel> {
    let mut cases: Vec<&str> = gold
        .iter()
        .map(|g| g.case_id.as_str())
        .filter(|c| available.binary_search_by(|a| a.as_str().cmp(c)).is_ok())
        .collect();
    cases.sort_unstable();
    cases.dedup();
    cases.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    cases.truncate(n);
    gold.iter().filter(|g| cases.contains(&g.case_id.as_str())).cloned().collect()
}

/// Runs the seven prompts over every ingested patient and scores a sample
/// of gold cases.
pub fn structurize(cfg: &RunConfig, layout: &Layout) -> Result<StructurizeManifest> {
    let ingested = load_ingested(layout)?;
    let gold = gold_path(cfg, layout)?.as_deref().map(read_gold_file).transpose()?;
    let provider = build_provider(cfg, gold.as_deref())?;
    let prompts = match &cfg.paths.prompts {
        Some(dir) => PromptSet::load_dir(dir)?,
        None => PromptSet::builtin(),
    };
    let policy = RetryPolicy { max_attempts: cfg.provider.max_attempts, ..RetryPolicy::default() };
    let sets = batch_structurize(
        ingested.records.records(),
        &prompts,
        provider.as_ref(),
        &policy,
        cfg.provider.parallelism,
        cfg.exec,
    );

    let count = |status: ParseStatus| {
        sets.iter()
            .flat_map(|s| s.provenance.values())
            .filter(|p| p.parse_status == status)
            .count()
    };
    let accuracy = match &gold {
        Some(gold) => {
            let mut ids: Vec<String> = sets.iter().map(|s| s.patient_id.clone()).collect();
            ids.sort();
            let sample = sample_gold_cases(gold, &ids, cfg.provider.accuracy_cases, cfg.stream_seed("accuracy-cases"));
            if sample.is_empty() {
                log::warn!("structurize: no gold case among ingested patients; accuracy skipped");
                None
            } else {
                Some(evaluate_accuracy(&sets, &sample, &bootstrap_config(cfg, "accuracy"))?)
            }
        }
        None => None,
    };

    stage_dir(layout, "structurize")?;
    write_feature_sets_file(&sets, &layout.features())?;
    let manifest = StructurizeManifest {
        provider: provider.name().to_string(),
        prompt_checksum: prompts.combined_checksum(),
        n_patients: sets.len(),
        strict: count(ParseStatus::Strict),
        tolerant: count(ParseStatus::Tolerant),
        fallback: count(ParseStatus::Fallback),
        accuracy,
    };
    log::info!(
        "structurize: {} patients; strict {}, tolerant {}, fallback {}",
        manifest.n_patients,
        manifest.strict,
        manifest.tolerant,
        manifest.fallback
    );
    write_manifest(layout, "structurize", &cfg.hash()?, &manifest)?;
    Ok(manifest)
}

fn load_feature_sets(layout: &Layout) -> Result<Vec<ClinicalFeatureSet>> {
    let _: StructurizeManifest = read_manifest(layout, "structurize")?;
    read_feature_sets_file(&layout.features())
}

// ---------------------------------------------------------------- screen

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenManifest {
    pub threshold: f64,
    pub n_train: usize,
    pub n_dm30: usize,
    /// Structured features entering the models.
    pub selected: Vec<String>,
    pub structured: Vec<ScreeningResult>,
    /// Ordinal codes of the seven categories (9 as missing), when available.
    pub categories: Vec<ScreeningResult>,
}

/// Ordinal category codes, not-evaluable as missing.
fn category_codes(sets: &[ClinicalFeatureSet], ids: &[String]) -> Result<FeatureMatrix> {
    let by_id: BTreeMap<&str, &ClinicalFeatureSet> = sets.iter().map(|s| (s.patient_id.as_str(), s)).collect();
    let columns = CategoryKey::ALL.iter().map(|k| Column::new(k.as_str(), FeatureKind::Ordinal)).collect();
    let mut m = FeatureMatrix::new(ids.to_vec(), columns);
    for (r, id) in ids.iter().enumerate() {
        let set = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::UnknownFeature(format!("no clinical feature set for patient {id}")))?;
        for (c, k) in CategoryKey::ALL.iter().enumerate() {
            let code = set.code(*k);
            m.set(r, c, (code != NOT_EVALUABLE).then_some(f64::from(code)));
        }
    }
    Ok(m)
}

/// Kendall tau-b against 30-day mortality on the training split.
pub fn screen(cfg: &RunConfig, layout: &Layout) -> Result<ScreenManifest> {
    let ingested = load_ingested(layout)?;
    let train = &ingested.manifest.train;
    let outcomes = outcomes_for(&ingested.records, train)?;
    let labels: Vec<ThirtyDayLabel> = train
        .iter()
        .zip(&outcomes)
        .map(|(id, o)| ThirtyDayLabel::from_outcome(id.clone(), o))
        .collect();
    let matrix = ingested.structured.select_ids(train)?;
    let structured = screen_features(&matrix, &labels, cfg.tau_threshold, cfg.exec)?;
    let categories = if layout.manifest("structurize").exists() {
        let sets = load_feature_sets(layout)?;
        screen_features(&category_codes(&sets, train)?, &labels, cfg.tau_threshold, cfg.exec)?
    } else {
        Vec::new()
    };
    let selected: Vec<String> = structured.iter().filter(|r| r.selected).map(|r| r.feature_name.clone()).collect();
    log::info!("screen: {} of {} structured features selected", selected.len(), structured.len());

    let dir = stage_dir(layout, "screen")?;
    let mut all = structured.clone();
    all.extend(categories.iter().cloned());
    write_screening_table(&all, fs::File::create(dir.join("screening.csv"))?)?;
    let manifest = ScreenManifest {
        threshold: cfg.tau_threshold,
        n_train: train.len(),
        n_dm30: labels.iter().filter(|l| l.dm30).count(),
        selected,
        structured,
        categories,
    };
    write_manifest(layout, "screen", &cfg.hash()?, &manifest)?;
    Ok(manifest)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub feature_set: FeatureSet,
    pub model: ModelKind,
    pub n_features: usize,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub n_train: usize,
    /// Design-matrix columns per feature set.
    pub feature_counts: BTreeMap<FeatureSet, usize>,
    pub models: Vec<TrainedModel>,
}

/// Design matrix of `ids` for a feature set: the screened structured
/// columns, plus the encoded categories.
fn design_matrix(
    set: FeatureSet,
    ingested: &Ingested,
    selected: &[String],
    sets: Option<&[ClinicalFeatureSet]>,
    ids: &[String],
) -> Result<FeatureMatrix> {
    let structured = ingested.structured.select_ids(ids)?.select_column_names(selected)?;
    if !set.uses_llm() {
        return Ok(structured);
    }
    let sets = sets.ok_or_else(|| Error::Empty("clinical feature sets; run the structurize stage".into()))?;
    structured.hstack(&encode_feature_sets(sets, ids)?)
}

pub fn fit_model(
    kind: ModelKind,
    matrix: &FeatureMatrix,
    outcomes: &[SurvivalOutcome],
    cfg: &RunConfig,
) -> Result<FittedModel> {
    Ok(match kind {
        ModelKind::Cox => FittedModel::Cox(cox_fit(matrix, outcomes, &cfg.cox)?),
        ModelKind::Rsf => FittedModel::Rsf(rsf_fit(matrix, outcomes, &cfg.rsf, cfg.exec)?),
        ModelKind::DeepSurv => FittedModel::DeepSurv(deepsurv_fit(matrix, outcomes, &cfg.deepsurv)?),
    })
}

fn selected_features(layout: &Layout) -> Result<Vec<String>> {
    let screen: ScreenManifest = read_manifest(layout, "screen")?;
    if screen.selected.is_empty() {
        return Err(Error::Empty(format!(
            "no structured feature reached |tau| >= {} in screening",
            screen.threshold
        )));
    }
    Ok(screen.selected)
}

/// Fits every configured model on every configured feature set.
pub fn train(cfg: &RunConfig, layout: &Layout) -> Result<TrainManifest> {
    let ingested = load_ingested(layout)?;
    let selected = selected_features(layout)?;
    let needs_llm = cfg.feature_sets.iter().any(|s| s.uses_llm());
    let sets = if needs_llm { Some(load_feature_sets(layout)?) } else { None };
    let ids = &ingested.manifest.train;
    let outcomes = outcomes_for(&ingested.records, ids)?;

    // keep models of feature sets this run does not retrain
    let (mut feature_counts, mut models) = match read_manifest::<TrainManifest>(layout, "train") {
        Ok(old) => (
            old.feature_counts.into_iter().filter(|(s, _)| !cfg.feature_sets.contains(s)).collect(),
            old.models.into_iter().filter(|m| !cfg.feature_sets.contains(&m.feature_set)).collect(),
        ),
        Err(_) => (BTreeMap::new(), Vec::new()),
    };
    for &set in &cfg.feature_sets {
        let matrix = design_matrix(set, &ingested, &selected, sets.as_deref(), ids)?;
        feature_counts.insert(set, matrix.ncols());
        fs::create_dir_all(layout.stage("train").join(set.slug()))?;
        for &kind in &cfg.models {
            let model = fit_model(kind, &matrix, &outcomes, cfg)?;
            let path = layout.model(set, kind);
            save_model(&model, &path)?;
            log::info!("train: {kind} on {set} ({} features)", matrix.ncols());
            models.push(TrainedModel {
                feature_set: set,
                model: kind,
                n_features: matrix.ncols(),
                path: format!("{}/{kind}.json", set.slug()),
            });
        }
    }
    models.sort_by_key(|m| (m.feature_set, m.model));
    let manifest = TrainManifest { n_train: ids.len(), feature_counts, models };
    write_manifest(layout, "train", &cfg.hash()?, &manifest)?;
    Ok(manifest)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub feature_set: FeatureSet,
    pub model: ModelKind,
    pub n_features: usize,
    pub c_index: Interval,
    pub ibs: Interval,
    pub nbll: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateManifest {
    pub n_test: usize,
    pub grid_rule: String,
    pub horizon: f64,
    pub resamples: usize,
    pub level: f64,
    pub rows: Vec<MetricRow>,
}

struct TestData {
    ingested: Ingested,
    selected: Vec<String>,
    sets: Option<Vec<ClinicalFeatureSet>>,
    outcomes: Vec<SurvivalOutcome>,
    trained: TrainManifest,
}

fn load_test_data(layout: &Layout) -> Result<TestData> {
    let ingested = load_ingested(layout)?;
    let selected = selected_features(layout)?;
    let trained: TrainManifest = read_manifest(layout, "train")?;
    let sets = if trained.models.iter().any(|m| m.feature_set.uses_llm()) {
        Some(load_feature_sets(layout)?)
    } else {
        None
    };
    let outcomes = outcomes_for(&ingested.records, &ingested.manifest.test)?;
    Ok(TestData { ingested, selected, sets, outcomes, trained })
}

impl TestData {
    fn matrix(&self, set: FeatureSet) -> Result<FeatureMatrix> {
        design_matrix(set, &self.ingested, &self.selected, self.sets.as_deref(), &self.ingested.manifest.test)
    }
}

/// C-index, IBS and NBLL with percentile bootstrap intervals over test
/// patients. The censoring estimate is refitted on every resample.
pub fn evaluate_predictions(
    risks: &[f64],
    curves: &[Vec<f64>],
    outcomes: &[SurvivalOutcome],
    grid: &TimeGrid,
    config: &BootstrapConfig,
) -> Result<[Interval; 3]> {
    let stat = |idx: &[usize]| -> Result<Vec<f64>> {
        let r: Vec<f64> = idx.iter().map(|&i| risks[i]).collect();
        let c: Vec<&[f64]> = idx.iter().map(|&i| curves[i].as_slice()).collect();
        let o: Vec<SurvivalOutcome> = idx.iter().map(|&i| outcomes[i]).collect();
        let g = CensoringKm::fit(&o);
        Ok(vec![c_index(&r, &o)?, integrated_brier(grid, &c, &o, &g)?, nbll(grid, &c, &o, &g)?])
    };
    let v = bootstrap_many(risks.len(), 3, stat, config)?;
    Ok([v[0], v[1], v[2]])
}

pub fn evaluation_grid(cfg: &RunConfig, outcomes: &[SurvivalOutcome]) -> Result<TimeGrid> {
    let times: Vec<f64> = outcomes.iter().map(|o| o.time()).collect();
    TimeGrid::from_quantile(&times, cfg.evaluation.grid_points, cfg.evaluation.grid_quantile)
}

pub fn evaluate(cfg: &RunConfig, layout: &Layout) -> Result<EvaluateManifest> {
    let data = load_test_data(layout)?;
    let grid = evaluation_grid(cfg, &data.outcomes)?;
    let boot = bootstrap_config(cfg, "bootstrap");
    let mut rows = Vec::new();
    for trained in &data.trained.models {
        let matrix = data.matrix(trained.feature_set)?;
        let model = load_model(&layout.model(trained.feature_set, trained.model))?;
        let risks = model.risk_scores(&matrix)?;
        let curves = model.survival(&matrix, &grid)?;
        let [c, ibs, nbll] = evaluate_predictions(&risks, &curves, &data.outcomes, &grid, &boot)?;
        log::info!("evaluate: {} on {}: C {c}", trained.model, trained.feature_set);
        rows.push(MetricRow {
            feature_set: trained.feature_set,
            model: trained.model,
            n_features: matrix.ncols(),
            c_index: c,
            ibs,
            nbll,
        });
    }
    let manifest = EvaluateManifest {
        n_test: data.outcomes.len(),
        grid_rule: grid.rule().to_string(),
        horizon: grid.horizon(),
        resamples: boot.resamples,
        level: boot.level,
        rows,
    };
    let dir = stage_dir(layout, "evaluate")?;
    report::write_metrics_csv(&manifest, &cfg.hash()?, fs::File::create(dir.join("metrics.csv"))?)?;
    write_manifest(layout, "evaluate", &cfg.hash()?, &manifest)?;
    Ok(manifest)
}

// ---------------------------------------------------------------- importance

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelImportance {
    pub feature_set: FeatureSet,
    pub model: ModelKind,
    pub features: Vec<FeatureImportance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceManifest {
    pub repeats: usize,
    pub results: Vec<ModelImportance>,
}

/// Permutation importance (drop in test C-index) for every trained model.
pub fn importance(cfg: &RunConfig, layout: &Layout) -> Result<ImportanceManifest> {
    let data = load_test_data(layout)?;
    let mut results = Vec::new();
    for trained in &data.trained.models {
        let matrix = data.matrix(trained.feature_set)?;
        let model = load_model(&layout.model(trained.feature_set, trained.model))?;
        let features = permutation_importance(
            |m| model.risk_scores(m),
            &matrix,
            &data.outcomes,
            cfg.evaluation.importance_repeats,
            cfg.stream_seed("importance"),
            cfg.exec,
        )?;
        results.push(ModelImportance {
            feature_set: trained.feature_set,
            model: trained.model,
            features,
        });
    }
    let manifest = ImportanceManifest { repeats: cfg.evaluation.importance_repeats, results };
    let dir = stage_dir(layout, "importance")?;
    report::write_importance_csv(&manifest, BufWriter::new(fs::File::create(dir.join("importance.csv"))?))?;
    write_manifest(layout, "importance", &cfg.hash()?, &manifest)?;
    Ok(manifest)
}

// ---------------------------------------------------------------- all

/// Runs every stage, generating a synthetic cohort first when no input
/// cohort is configured.
pub fn run_all(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    if cfg.paths.cohort.is_none() {
        run_synth(cfg, &layout.synth_dir())?;
    }
    ingest(cfg, layout)?;
    structurize(cfg, layout)?;
    screen(cfg, layout)?;
    train(cfg, layout)?;
    evaluate(cfg, layout)?;
    importance(cfg, layout)?;
    write_report(cfg, layout)?;
    Ok(())
}

/// Writes the effective config next to the outputs.
pub fn write_config(cfg: &RunConfig, layout: &Layout) -> Result<()> {
    fs::create_dir_all(&layout.root)?;
    let mut f = fs::File::create(layout.root.join("config.toml"))?;
    f.write_all(cfg.to_toml()?.as_bytes())?;
    Ok(())
}
