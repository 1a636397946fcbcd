use std::fs;

use radsurv_core::pipeline::{
    self, read_manifest, EvaluateManifest, FeatureSet, IngestManifest, Layout, RunConfig, TrainManifest,
};
use radsurv_core::structurizer::encoding_width;
use radsurv_core::{Error, Exec};

fn small_config(exec: Exec) -> RunConfig {
    let mut cfg = RunConfig { exec, ..RunConfig::default() };
    cfg.synth.n_patients = 600;
    cfg.evaluation.bootstrap_resamples = 50;
    cfg.evaluation.importance_repeats = 2;
    cfg.rsf.n_trees = 15;
    cfg.deepsurv.hidden = vec![8];
    cfg.deepsurv.max_epochs = 40;
    cfg
}

#[test]
fn full_run_is_consistent_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(Exec::Parallel);
    let layout = Layout::new(dir.path());
    pipeline::run_all(&cfg, &layout).unwrap();

    let ingest: IngestManifest = read_manifest(&layout, "ingest").unwrap();
    assert_eq!(ingest.n_input, 600);
    assert_eq!(ingest.train.len() + ingest.test.len(), ingest.n_kept);

    let train: TrainManifest = read_manifest(&layout, "train").unwrap();
    let s = train.feature_counts[&FeatureSet::Structured];
    assert_eq!(train.feature_counts[&FeatureSet::StructuredLlm], s + encoding_width());
    assert_eq!(train.models.len(), 6);

    let eval: EvaluateManifest = read_manifest(&layout, "evaluate").unwrap();
    assert_eq!(eval.rows.len(), 6);
    for r in &eval.rows {
        assert!(r.c_index.lo <= r.c_index.point && r.c_index.point <= r.c_index.hi);
        assert!((0.0..=1.0).contains(&r.ibs.point));
    }
    for f in ["report.txt", "performance.csv", "screening.csv", "accuracy.csv", "importance.csv"] {
        assert!(layout.stage("report").join(f).is_file(), "{f}");
    }

    let metrics = layout.stage("evaluate").join("metrics.csv");
    let before = fs::read(&metrics).unwrap();
    pipeline::evaluate(&cfg, &layout).unwrap();
    assert_eq!(fs::read(&metrics).unwrap(), before);

    let seq = tempfile::tempdir().unwrap();
    let seq_layout = Layout::new(seq.path());
    pipeline::run_all(&small_config(Exec::Sequential), &seq_layout).unwrap();
    let seq_eval: EvaluateManifest = read_manifest(&seq_layout, "evaluate").unwrap();
    assert_eq!(seq_eval.rows, eval.rows);
}

#[test]
fn stale_artifact_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(Exec::Parallel);
    let layout = Layout::new(dir.path());
    pipeline::run_synth(&cfg, &layout.synth_dir()).unwrap();
    pipeline::ingest(&cfg, &layout).unwrap();
    let path = layout.manifest("ingest");
    let text = fs::read_to_string(&path).unwrap().replacen("\"version\": 1", "\"version\": 99", 1);
    fs::write(&path, text).unwrap();
    match pipeline::screen(&cfg, &layout) {
        Err(Error::FormatVersion { found_version, .. }) => assert_eq!(found_version, 99),
        other => panic!("expected a version error, got {other:?}"),
    }
}

#[test]
fn stage_without_inputs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    assert!(pipeline::train(&RunConfig::default(), &layout).is_err());
}
