mod common;

use std::fs;
use std::io::Write;

use twin::codec::Real;
use twin::grid::{GridCell, HyperGrid};
use twin::matrices::{assemble, MatricesArtifact, MetricSurfaces};
use twin::quickshift::QuickshiftParams;
use twin::runstore::{load_run, resume_plan, RunManifest, RunWriter, TrialLine, DECISIONS};
use twin::scheduler::{Decision, SchedulerPolicy};
use twin::search::{run_search, SearchConfig, TrainerSettings};
use twin::selector::twin_select;
use twin::task::TaskSpec;
use twin::trial::TrialStatus;
use twin::Error;

fn line(cell: GridCell, epoch: usize, loss: f64, status: TrialStatus) -> TrialLine {
    TrialLine {
        row: cell.row,
        col: cell.col,
        epoch,
        train_loss: Real(loss),
        param_norm: Real(1.0),
        val_acc: None,
        test_acc: None,
        status,
    }
}

fn external(dir: &std::path::Path, budget: usize) -> RunWriter {
    let manifest = RunManifest::external("ext", HyperGrid::default_space(2, 2).unwrap(), SchedulerPolicy::fifo(budget));
    RunWriter::create(dir, &manifest).unwrap()
}

fn small_config(policy: SchedulerPolicy) -> SearchConfig {
    SearchConfig {
        grid: HyperGrid::default_space(3, 3).unwrap(),
        policy,
        task: TaskSpec::new(2, 60, 20, 300, 3, 4, 3.0, 0.0),
        trainer: TrainerSettings {
            hidden: vec![8],
            ..TrainerSettings::default()
        },
    }
}

#[test]
fn append_creates_file_and_rejects_regressions() {
    let tmp = tempfile::tempdir().unwrap();
    let mut w = external(tmp.path(), 10);
    let c = GridCell::new(0, 1);
    w.append_trial_line(&line(c, 0, 0.5, TrialStatus::Running)).unwrap();
    let text = fs::read_to_string(tmp.path().join("trials/0_1.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(
        text,
        "{\"row\":0,\"col\":1,\"epoch\":0,\"train_loss\":0.5,\"param_norm\":1.0,\"status\":\"running\"}\n"
    );
    for e in 1..=7 {
        w.append_trial_line(&line(c, e, 0.4, TrialStatus::Running)).unwrap();
    }
    let err = w.append_trial_line(&line(c, 5, 0.4, TrialStatus::Running)).unwrap_err();
    assert!(matches!(err, Error::Schema { field: "epoch", .. }));
    let err = w
        .append_trial_line(&line(GridCell::new(2, 0), 0, 0.4, TrialStatus::Running))
        .unwrap_err();
    assert!(matches!(err, Error::CellOutOfBounds { .. }));
}

#[test]
fn nan_strings_are_accepted_for_diverged_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let mut w = external(tmp.path(), 10);
    let raw = r#"{"row":1,"col":1,"epoch":0,"train_loss":"NaN","param_norm":"Inf","status":"diverged"}"#;
    let parsed: TrialLine = serde_json::from_str(raw).unwrap();
    assert!(parsed.train_loss.0.is_nan());
    w.append_trial_line(&parsed).unwrap();
    let run = load_run(tmp.path()).unwrap();
    assert_eq!(run.records[0].status, TrialStatus::Diverged);
    assert!(run.records[0].epochs[0].train_loss.is_nan());

    // a non-finite loss must come with the diverged status
    let bad = line(GridCell::new(0, 0), 0, f64::NAN, TrialStatus::Running);
    assert!(matches!(w.append_trial_line(&bad), Err(Error::Schema { field: "status", .. })));
    let unknown = r#"{"row":0,"col":0,"epoch":0,"train_loss":1,"param_norm":1,"status":"running","extra":1}"#;
    assert!(serde_json::from_str::<TrialLine>(unknown).is_err());
}

#[test]
fn torn_tail_is_dropped_and_corrupt_interior_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let mut w = external(tmp.path(), 10);
    let c = GridCell::new(0, 0);
    for e in 0..3 {
        w.append_trial_line(&line(c, e, 0.5, TrialStatus::Running)).unwrap();
    }
    let path = tmp.path().join("trials/0_0.jsonl");
    let mut f = fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(b"{\"row\":0,\"col\":0,\"epo").unwrap();
    drop(f);
    let run = load_run(tmp.path()).unwrap();
    assert_eq!(run.records[0].epochs_run(), 3);
    assert_eq!(run.warnings.len(), 1);
    assert!(run.warnings[0].contains("torn"));

    // reopening repairs the tail so appends continue cleanly
    let mut w = RunWriter::open(tmp.path()).unwrap();
    assert_eq!(w.logged_epochs(c), 3);
    w.append_trial_line(&line(c, 3, 0.5, TrialStatus::Running)).unwrap();
    assert!(load_run(tmp.path()).unwrap().warnings.is_empty());

    let text = fs::read_to_string(&path).unwrap();
    let broken = text.replacen("\"epoch\":1", "\"epoch\":}", 1);
    fs::write(&path, broken).unwrap();
    match load_run(tmp.path()) {
        Err(Error::Corrupt { path: p, line, .. }) => {
            assert_eq!(p, path);
            assert_eq!(line, 2);
        }
        other => panic!("expected corrupt error, got {other:?}"),
    }
}

#[test]
fn missing_manifest_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(load_run(tmp.path()), Err(Error::MissingArtifact(_))));
}

#[test]
fn duplicate_run_ids_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    external(tmp.path(), 3);
    let manifest = RunManifest::external("ext", HyperGrid::default_space(2, 2).unwrap(), SchedulerPolicy::fifo(3));
    assert!(RunWriter::create(tmp.path(), &manifest).is_err());
}

#[test]
fn written_run_reloads_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(SchedulerPolicy::fifo(5));
    let mut w = RunWriter::create(tmp.path(), &RunManifest::builtin("rt", &config)).unwrap();
    let out = run_search(&config, &mut w, 1).unwrap();
    let run = load_run(tmp.path()).unwrap();
    assert_eq!(run.manifest.search_config().unwrap(), config);
    assert_eq!(run.decisions, out.decisions);
    for (a, b) in run.records.iter().zip(&out.records) {
        assert_eq!(a.status, b.status);
        for (x, y) in a.epochs.iter().zip(&b.epochs) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.param_norm.to_bits(), y.param_norm.to_bits());
            assert_eq!(x.test_acc.map(f64::to_bits), y.test_acc.map(f64::to_bits));
        }
    }
    let online = assemble(&out.records, &config.grid).unwrap();
    let offline = assemble(&run.records, &config.grid).unwrap();
    let a = serde_json::to_string(&MatricesArtifact::new(&online, &MetricSurfaces::default())).unwrap();
    let b = serde_json::to_string(&MatricesArtifact::new(&offline, &MetricSurfaces::default())).unwrap();
    assert_eq!(a, b);
    assert!(resume_plan(&run.manifest, &run.records).unwrap().is_empty());
}

#[test]
fn fifo_resume_plan_lists_interrupted_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let mut w = external(tmp.path(), 100);
    let cells = [GridCell::new(0, 0), GridCell::new(0, 1), GridCell::new(1, 1)];
    for c in cells {
        for e in 0..40 {
            w.append_trial_line(&line(c, e, 0.5, TrialStatus::Running)).unwrap();
        }
    }
    // (1, 0) finished
    for e in 0..100 {
        let s = if e == 99 { TrialStatus::Completed } else { TrialStatus::Running };
        w.append_trial_line(&line(GridCell::new(1, 0), e, 0.5, s)).unwrap();
    }
    let run = load_run(tmp.path()).unwrap();
    let plan = resume_plan(&run.manifest, &run.records).unwrap();
    assert_eq!(plan, cells.iter().map(|c| (*c, 40)).collect::<Vec<_>>());
}

#[test]
fn hb_replay_reproduces_log_and_resume_targets_pending_rung() {
    let tmp = tempfile::tempdir().unwrap();
    let mut policy = SchedulerPolicy::hb(16, 0.25);
    policy.grace_fraction = 0.125;
    let config = small_config(policy.clone());
    let mut w = RunWriter::create(tmp.path(), &RunManifest::builtin("hb", &config)).unwrap();
    run_search(&config, &mut w, 1).unwrap();
    let run = load_run(tmp.path()).unwrap();
    let replayed = twin::search::replay(&policy, &config.grid, &run.records).unwrap();
    assert_eq!(replayed.log(), run.decisions.as_slice());

    // truncate two cells back below the first rung (epoch 2)
    let mut partial = run.records.clone();
    for r in partial.iter_mut().take(2) {
        r.epochs.truncate(1);
        r.status = TrialStatus::Running;
    }
    let plan = resume_plan(&run.manifest, &partial).unwrap();
    assert_eq!(plan, vec![(GridCell::new(0, 0), 1), (GridCell::new(0, 1), 1)]);

    // cells already stopped at a resolved rung are never resumed
    let stopped: Vec<GridCell> = run
        .decisions
        .iter()
        .filter(|d| d.decision == Decision::Stop && d.epoch < 16)
        .map(|d| GridCell::new(d.row, d.col))
        .collect();
    assert!(!stopped.is_empty());
    let mut later = run.records.clone();
    for r in later.iter_mut().filter(|r| r.status == TrialStatus::Completed) {
        r.epochs.truncate(10);
        r.status = TrialStatus::Running;
    }
    let plan = resume_plan(&run.manifest, &later).unwrap();
    assert!(!plan.is_empty());
    assert!(plan.iter().all(|(c, e)| !stopped.contains(c) && *e == 10));
}

#[test]
fn resumed_writer_skips_logged_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(SchedulerPolicy::fifo(4));
    let full = tempfile::tempdir().unwrap();
    let mut w = RunWriter::create(full.path(), &RunManifest::builtin("a", &config)).unwrap();
    run_search(&config, &mut w, 1).unwrap();

    // same run, interrupted: only two cells got two epochs on disk
    let mut w = RunWriter::create(tmp.path(), &RunManifest::builtin("a", &config)).unwrap();
    let reference = load_run(full.path()).unwrap();
    for r in reference.records.iter().take(2) {
        let lines: Vec<TrialLine> = r.epochs[..2]
            .iter()
            .map(|e| TrialLine::from_log(r.cell, e, TrialStatus::Running))
            .collect();
        w.append_trial_lines(&lines).unwrap();
    }
    drop(w);
    let mut w = RunWriter::open(tmp.path()).unwrap();
    run_search(&config, &mut w, 1).unwrap();
    for entry in fs::read_dir(full.path().join("trials")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = fs::read(full.path().join("trials").join(&name)).unwrap();
        let b = fs::read(tmp.path().join("trials").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?}");
    }
    assert_eq!(
        fs::read(full.path().join(DECISIONS)).unwrap(),
        fs::read(tmp.path().join(DECISIONS)).unwrap()
    );
}

#[test]
fn external_fixture_loads_and_selects_offline() {
    let run = load_run(common::fixture("external_3x3")).unwrap();
    assert!(run.warnings.is_empty());
    assert_eq!(run.records.len(), 9);
    assert!(run.incomplete_cells().is_empty());
    let m = assemble(&run.records, &run.manifest.grid).unwrap();
    assert!(!m.valid_mask[2], "diverged cell is masked");
    let sel = twin_select(&run.manifest.grid, &m, &QuickshiftParams::default_for(3, 3)).unwrap();
    assert!(m.valid_mask[m.flat(sel.cell)]);
    assert_eq!(run.manifest.grid.cell_params(sel.cell).unwrap(), (sel.lr, sel.wd));
}
