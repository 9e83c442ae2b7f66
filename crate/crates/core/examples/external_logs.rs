//! Feed training logs produced elsewhere into the store and select offline:
//! write a manifest plus one JSONL file per cell, load, and run Twin.
//!
//! `cargo run --example external_logs -- [store_dir]`

use twin::codec::Real;
use twin::grid::{GridCell, HyperGrid};
use twin::matrices::assemble;
use twin::quickshift::QuickshiftParams;
use twin::runstore::{load_run, run_path, RunManifest, RunWriter, TrialLine};
use twin::scheduler::SchedulerPolicy;
use twin::selector::twin_select;
use twin::trial::TrialStatus;

fn main() -> twin::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("twin-external-demo"), Into::into);
    let dir = run_path(&root, "imported");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| twin::Error::io(&dir, e))?;
    }
    let grid = HyperGrid::build_log_grid(1e-3, 1e-1, 3, 1e-5, 1e-3, 3)?;
    let epochs = 6;
    let mut writer = RunWriter::create(
        &dir,
        &RunManifest::external("imported", grid.clone(), SchedulerPolicy::fifo(epochs)),
    )?;

    // stand-in for an external trainer: loss decays with LR, norm shrinks with WD
    for cell in grid.cells() {
        let (lr, wd) = grid.cell_params(cell)?;
        let lines: Vec<TrialLine> = (0..epochs)
            .map(|e| {
                let diverged = lr > 0.05 && wd < 1e-4 && e >= 3;
                let loss = if diverged {
                    f64::NAN
                } else {
                    (-(lr * 60.0) * (e + 1) as f64).exp() + 0.02
                };
                let status = match (diverged, e + 1 == epochs) {
                    (true, _) => TrialStatus::Diverged,
                    (false, true) => TrialStatus::Completed,
                    _ => TrialStatus::Running,
                };
                TrialLine {
                    row: cell.row,
                    col: cell.col,
                    epoch: e,
                    train_loss: Real(loss),
                    param_norm: Real(if diverged {
                        f64::INFINITY
                    } else {
                        3.0 + 2.0 * e as f64 * (1.0 - 300.0 * wd)
                    }),
                    val_acc: None,
                    test_acc: None,
                    status,
                }
            })
            .collect();
        let cut = lines
            .iter()
            .position(|l| l.status == TrialStatus::Diverged)
            .map_or(lines.len(), |p| p + 1);
        writer.append_trial_lines(&lines[..cut])?;
    }

    let run = load_run(&dir)?;
    println!("loaded {} trials from {}", run.records.len(), dir.display());
    let m = assemble(&run.records, &run.manifest.grid)?;
    let sel = twin_select(&grid, &m, &QuickshiftParams::default_for(3, 3))?;
    println!("Twin picks {} (lr {:.0e}, wd {:.0e})", sel.cell, sel.lr, sel.wd);
    assert_ne!(sel.cell, GridCell::new(0, 2));
    Ok(())
}
