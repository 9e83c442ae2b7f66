//! How much does Twin depend on grid density? Trains the 7x7 grid once per
//! seed and re-selects on the [::2] and [::3] sub-grids.
//!
//! `cargo run --release --example grid_density -- [seeds]`

use twin::grid::HyperGrid;
use twin::harness::evaluate_search;
use twin::scheduler::SchedulerPolicy;
use twin::search::{SearchConfig, TrainerSettings};
use twin::selector::Method;
use twin::task::TaskSpec;

fn main() -> twin::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    println!("seed  grid  twin   oracle  |err|");
    for seed in 0..seeds {
        let config = SearchConfig {
            grid: HyperGrid::default_space(7, 7)?,
            policy: SchedulerPolicy::fifo(40),
            task: TaskSpec::new(seed, 100, 100, 2000, 4, 16, 4.0, 0.0),
            trainer: TrainerSettings {
                hidden: vec![64, 64],
                init_seed: seed,
                ..TrainerSettings::default()
            },
        };
        let (_, full) = evaluate_search(&config, None, 0)?;
        for k in [1, 2, 3] {
            let eval = if k == 1 { full.clone() } else { full.sliced(k, k, None)? };
            println!(
                "{seed:>4}  {}x{}   {:>5.2}  {:>6.2}  {:>5.2}",
                eval.grid.n_rows(),
                eval.grid.n_cols(),
                eval.test_acc_of(Method::Twin).unwrap_or(f64::NAN),
                eval.test_acc_of(Method::Oracle).unwrap_or(f64::NAN),
                eval.abs_error(Method::Twin).unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
