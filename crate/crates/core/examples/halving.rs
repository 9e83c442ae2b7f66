//! Successive halving on a 10x10 grid: the rung ladder, the alive counts and
//! the epoch bill against training every trial in full.
//!
//! `cargo run --release --example halving -- [stop_fraction]`

use twin::grid::HyperGrid;
use twin::scheduler::{expected_epochs, Decision, SchedulerPolicy};
use twin::search::{run_search, SearchConfig, TrainerSettings};
use twin::task::TaskSpec;

fn main() -> twin::Result<()> {
    let fraction: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let mut policy = SchedulerPolicy::hb(100, fraction);
    policy.grace_fraction = 0.05;
    let config = SearchConfig {
        grid: HyperGrid::build_log_grid(1e-3, 1e-2, 10, 1e-5, 1e-3, 10)?,
        policy: policy.clone(),
        task: TaskSpec::new(5, 40, 20, 200, 2, 2, 3.0, 0.0),
        trainer: TrainerSettings {
            hidden: vec![8],
            ..TrainerSettings::default()
        },
    };
    println!("ladder {:?}, halving rungs {:?}", policy.ladder(), policy.rungs());
    println!("halving stops at {} survivors", policy.survivor_floor(config.grid.len()));

    let out = run_search(&config, &mut (), 0)?;
    println!("alive after each rung: {:?}", out.alive_history);
    for (k, rung) in policy.rungs().iter().enumerate() {
        let stopped = out
            .decisions
            .iter()
            .filter(|d| d.rung == Some(k) && d.decision == Decision::Stop)
            .count();
        println!("  rung {k} (epoch {rung}): {stopped} stopped");
    }
    let full = config.grid.len() * policy.epoch_budget;
    println!(
        "epochs trained {} (closed form {}), full grid {full}: {:.0}% saved",
        out.epochs_consumed(),
        expected_epochs(&policy, &out.alive_history),
        100.0 * (1.0 - out.epochs_consumed() as f64 / full as f64)
    );
    Ok(())
}
