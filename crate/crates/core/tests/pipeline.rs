use std::fs;
use std::path::Path;

use biaskit::pipeline::files::hash_tree;
use biaskit::pipeline::report::{artifact_for, read_csv, Cell, ReportTable, ARTIFACTS};
use biaskit::pipeline::synthetic::{write_planted_inputs, write_synthetic_run};
use biaskit::pipeline::{run_pipeline, PipelineError, RunConfig, RunLock, Stage};
use biaskit::synth::synthetic_corpus_sized;

fn synthetic_config(dir: &Path) -> RunConfig {
    let run = write_synthetic_run(dir, 5).unwrap();
    RunConfig::load(&run.config_path).unwrap()
}

fn count(m: &biaskit::pipeline::RunManifest, stage: Stage, key: &str) -> u64 {
    m.stage(stage).unwrap().counts[key]
}

#[test]
fn full_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = synthetic_config(a.path());
    let cb = synthetic_config(b.path());
    let ma = run_pipeline(&ca, &Stage::ALL).unwrap();
    let mb = run_pipeline(&cb, &Stage::ALL).unwrap();

    let report_a = hash_tree(&ca.out_dir.join("report")).unwrap();
    let report_b = hash_tree(&cb.out_dir.join("report")).unwrap();
    assert_eq!(report_a, report_b);
    assert_eq!(ma.output_hashes(), mb.output_hashes());
    assert_eq!(ma.config_hash.len(), 64);

    // One CSV and one JSON per artifact plus the index.
    assert_eq!(report_a.len(), 2 * ARTIFACTS.len() + 1);
    for (name, _) in ARTIFACTS {
        assert!(report_a.contains_key(&format!("{name}.csv")), "{name}.csv missing");
        assert!(report_a.contains_key(&format!("{name}.json")), "{name}.json missing");
    }
    let index: serde_json::Value =
        serde_json::from_slice(&fs::read(ca.out_dir.join("report/index.json")).unwrap()).unwrap();
    assert_eq!(index["fig2a_representation"]["artifact"], "Fig 2A");
    assert_eq!(index["fig2a_representation"]["csv"], "fig2a_representation.csv");
    assert_eq!(artifact_for("table6_validation"), Some("Table 6"));

    // The crawl dedups, the filter drops low-confidence faces.
    assert!(count(&ma, Stage::Ingest, "duplicates_dropped") > 0);
    let detected = count(&ma, Stage::Faces, "detected");
    let kept = count(&ma, Stage::Faces, "kept");
    let classified = count(&ma, Stage::Classify, "classified");
    assert!(classified <= kept && kept < detected, "{classified} {kept} {detected}");
    assert_eq!(count(&ma, Stage::Annotate, "task_failures"), 0);
    assert_eq!(count(&ma, Stage::Validate, "tasks"), 8);

    // Faces come from well separated blobs, so the classifier matches the
    // generating race and agrees with coders about as well as they agree.
    let t: ReportTable =
        serde_json::from_slice(&fs::read(ca.out_dir.join("report/table6_validation.json")).unwrap()).unwrap();
    let race = t.rows.iter().find(|r| r[0] == Cell::text("race")).unwrap();
    let accuracy = race[t.column("accuracy").unwrap()].as_f64().unwrap();
    assert!(accuracy > 0.9, "race accuracy {accuracy}");
    let (header, rows) = read_csv(&fs::read(ca.out_dir.join("report/table6_validation.csv")).unwrap()).unwrap();
    assert_eq!(header, t.columns);
    assert_eq!(rows.len(), 8);

    let archived: RunConfig =
        serde_json::from_slice(&fs::read(ca.out_dir.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(archived, ca);
    assert!(!ca.out_dir.join(".lock").exists());
    assert!(!ca.out_dir.join(".staging").exists());
}

#[test]
fn stats_only_run_on_planted_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic_corpus_sized(3, 600, 300);
    let inputs = write_planted_inputs(&dir.path().join("bundle"), &corpus).unwrap();
    let cfg = RunConfig { out_dir: dir.path().join("out"), inputs, ..RunConfig::default() };
    let m = run_pipeline(&cfg, &[Stage::Stats, Stage::Report]).unwrap();
    assert_eq!(count(&m, Stage::Stats, "text_observations"), 600);
    assert_eq!(count(&m, Stage::Stats, "face_observations"), 300);
    assert_eq!(count(&m, Stage::Stats, "tables"), 13);
    // Without the validation stage the bundle lacks Table 6.
    assert_eq!(count(&m, Stage::Report, "tables"), 13);
    assert_eq!(m.input_hashes.len(), 3);
    assert!(m.stage(Stage::Ingest).is_none());

    let again = run_pipeline(&cfg, &[Stage::Stats, Stage::Report]).unwrap();
    assert_eq!(m.output_hashes(), again.output_hashes());
}

#[test]
fn classify_without_models_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path());
    let err = run_pipeline(&cfg, &[Stage::Faces, Stage::Classify]).unwrap_err();
    match &err {
        PipelineError::StageDependency { stage, missing } => {
            assert_eq!(*stage, Stage::Classify);
            assert!(missing.contains("model A"), "{missing}");
        }
        other => panic!("unexpected {other}"),
    }
    assert_eq!(err.exit_code(), 3);
    // The faces stage finished before the failure; classify left nothing behind.
    assert!(cfg.out_dir.join("faces/faces.jsonl").exists());
    assert!(!cfg.out_dir.join("classified").exists());
    assert!(!cfg.out_dir.join(".staging/classified").exists());
    assert!(!cfg.out_dir.join("run_manifest.json").exists());
}

#[test]
fn failed_stage_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path());
    run_pipeline(&cfg, &[Stage::Ingest, Stage::Annotate]).unwrap();
    // Ratings for an item nobody predicted fail the stage midway.
    let ratings = dir.path().join("bad_ratings.jsonl");
    fs::write(&ratings, "{\"item_id\":\"nope\",\"task\":\"sentiment\",\"ratings\":[\"Positive\",\"Positive\"]}\n").unwrap();
    cfg.validate.ratings = Some(ratings);
    let err = run_pipeline(&cfg, &[Stage::Validate]).unwrap_err();
    assert!(matches!(err, PipelineError::Validation(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(!cfg.out_dir.join("validation").exists());
    assert!(!cfg.out_dir.join(".staging/validation").exists());
    assert!(!cfg.out_dir.join(".lock").exists());
}

#[test]
fn a_locked_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { out_dir: dir.path().join("out"), ..RunConfig::default() };
    let lock = RunLock::acquire(&cfg.out_dir).unwrap();
    assert!(matches!(run_pipeline(&cfg, &[Stage::Stats]), Err(PipelineError::Locked(_))));
    drop(lock);
    // Unlocked, the same run reaches the missing-corpus dependency error.
    assert!(matches!(run_pipeline(&cfg, &[Stage::Stats]), Err(PipelineError::StageDependency { .. })));
}

#[test]
fn report_without_stats_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { out_dir: dir.path().join("out"), ..RunConfig::default() };
    let err = run_pipeline(&cfg, &[Stage::Report]).unwrap_err();
    assert!(matches!(err, PipelineError::StageDependency { stage: Stage::Report, .. }));
}
