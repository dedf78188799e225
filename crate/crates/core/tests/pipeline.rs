mod common;

use std::fs;

use maze_core::backend::BackendSpec;
use maze_core::jsonl;
use maze_core::runner::{self, RunConfig, RunError, RunManifest, RunScores, RunStatus, StageFailure};

fn config(out: &std::path::Path, backend: BackendSpec) -> RunConfig {
    RunConfig {
        corpus: common::fixture("mini_corpus.jsonl"),
        out_dir: out.to_path_buf(),
        backend,
        ..RunConfig::default()
    }
}

#[test]
fn completed_run_manifest_references_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), BackendSpec::Oracle);
    runner::run_pipeline(&cfg).unwrap();
    let m = RunManifest::load(dir.path()).unwrap();
    assert_eq!(m.status, RunStatus::Completed);
    assert_eq!(m.run_id, cfg.run_id());
    assert!(m.corpus_digest.is_some());
    for a in &m.artifacts {
        let digest = jsonl::file_digest(&dir.path().join(&a.file)).unwrap();
        assert_eq!(a.digest.as_deref(), Some(digest.as_str()), "{}", a.file);
    }
    assert_eq!(m.tasks_digest, m.artifacts[0].digest);
    for entry in fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        assert!(
            name == runner::MANIFEST_FILE || m.artifacts.iter().any(|a| a.file == name),
            "unreferenced file {name}"
        );
    }
    let report = fs::read_to_string(dir.path().join(runner::REPORT_FILE)).unwrap();
    assert!(report.starts_with("model,tier,mode,noise_level,multi_hop_mean,single_wise_mean,n_tasks,n_excluded\n"));
}

#[test]
fn missing_corpus_fails_in_the_corpus_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), BackendSpec::Oracle);
    cfg.corpus = dir.path().join("nope.jsonl");
    let err = runner::run_pipeline(&cfg).unwrap_err();
    match &err {
        RunError::Stage { stage, .. } => assert_eq!(stage, "corpus"),
        other => panic!("unexpected {other:?}"),
    }
    assert_ne!(err.exit_code(), 0);
    let m = RunManifest::load(dir.path()).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    let errors: Vec<StageFailure> = jsonl::read(&dir.path().join(runner::ERRORS_FILE)).unwrap();
    assert_eq!(errors[0].stage, "corpus");
    assert!(!dir.path().join(runner::TASKS_FILE).exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), BackendSpec::Oracle);
    cfg.modes.clear();
    assert_eq!(runner::run_pipeline(&cfg).unwrap_err().exit_code(), 1);
    cfg.modes = vec![maze_core::protocol::Mode::OneRound];
    cfg.backend = BackendSpec::Replay {
        path: dir.path().join("missing.jsonl"),
    };
    assert_eq!(runner::run_pipeline(&cfg).unwrap_err().exit_code(), 1);
}

#[test]
fn partial_failure_keeps_completed_artifacts() {
    let root = tempfile::tempdir().unwrap();
    let src = config(&root.path().join("src"), BackendSpec::Oracle);
    runner::run_pipeline(&src).unwrap();
    // drop half of the recorded episodes so replay runs dry midway
    let path = src.out_dir.join(runner::TRANSCRIPTS_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let keep: Vec<&str> = text.lines().take(80).collect();
    let short = root.path().join("short.jsonl");
    fs::write(&short, keep.join("\n") + "\n").unwrap();

    let cfg = config(&root.path().join("replay"), BackendSpec::Replay { path: short });
    let err = runner::run_pipeline(&cfg).unwrap_err();
    assert!(matches!(&err, RunError::Stage { stage, .. } if stage == "run"), "{err}");
    let out = &cfg.out_dir;
    assert!(out.join(runner::TASKS_FILE).exists());
    let done: Vec<maze_core::protocol::EpisodeTranscript> = jsonl::read(&out.join(runner::TRANSCRIPTS_FILE)).unwrap();
    assert_eq!(done.len(), 80);
    assert!(!out.join(runner::SCORES_FILE).exists());
    let errors: Vec<StageFailure> = jsonl::read(&out.join(runner::ERRORS_FILE)).unwrap();
    assert_eq!(errors.iter().filter(|e| e.task_id.is_some()).count(), 80);
    assert_eq!(errors.last().unwrap().stage, "run");
}

#[test]
fn identical_configs_give_identical_scores() {
    let root = tempfile::tempdir().unwrap();
    let spec = BackendSpec::UniformRandom { seed: 5 };
    let a = config(&root.path().join("a"), spec.clone());
    let b = config(&root.path().join("b"), spec);
    runner::run_pipeline(&a).unwrap();
    runner::run_pipeline(&b).unwrap();
    for f in [runner::TASKS_FILE, runner::TRANSCRIPTS_FILE, runner::SCORES_FILE, runner::REPORT_FILE] {
        assert_eq!(fs::read(a.out_dir.join(f)).unwrap(), fs::read(b.out_dir.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn oracle_beats_random_in_every_cell() {
    let root = tempfile::tempdir().unwrap();
    let oracle = config(&root.path().join("oracle"), BackendSpec::Oracle);
    let random = config(&root.path().join("random"), BackendSpec::UniformRandom { seed: 1 });
    runner::run_pipeline(&oracle).unwrap();
    runner::run_pipeline(&random).unwrap();
    let runs = [
        RunScores::load(&oracle.out_dir).unwrap(),
        RunScores::load(&random.out_dir).unwrap(),
    ];
    let cmp = runner::compare_runs(&runs).unwrap();
    assert_eq!(cmp.rows.len(), 3 * 2 * 4 * 2);
    for row in &cmp.rows {
        let d = row.deltas[0].unwrap();
        assert!(d > 0.0, "{row:?}");
    }
    let mut csv = Vec::new();
    runner::write_comparison(&mut csv, &cmp).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().count(), 1 + cmp.rows.len());
    assert!(csv.lines().next().unwrap().ends_with("delta_run0_minus_run1"));
    // 2 runs x 2 modes x 4 noise levels x 2 metrics
    assert_eq!(cmp.plot.len(), 32);
}

#[test]
fn toml_config_drives_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let toml = format!(
        "corpus = {:?}\nout_dir = {:?}\nseed = 4\nnoise_levels = [0, 5]\nmodes = [\"multi_round\"]\nbackend = \"fixed_wrong\"\nmodel = \"baseline\"\n",
        common::fixture("mini_corpus.jsonl"),
        dir.path()
    );
    let cfg = RunConfig::from_toml(&toml).unwrap();
    let out = runner::run_pipeline(&cfg).unwrap();
    assert_eq!(out.scores.len(), 40);
    assert!(out.scores.iter().all(|s| s.model == "baseline"));
    assert!(out.report.iter().all(|r| r.multi_hop_mean < 1.0));
}
