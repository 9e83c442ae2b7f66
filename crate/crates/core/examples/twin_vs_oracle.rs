//! Twin against the baselines on small synthetic tasks.
//!
//! Trains a 7x7 LR x WD grid per seed under FIFO and prints the test accuracy
//! of every method's pick. Run with
//! `cargo run --release --example twin_vs_oracle -- [seeds] [n_train] [noise] [epochs] [separation]`.

use twin::grid::HyperGrid;
use twin::harness::evaluate_search;
use twin::scheduler::SchedulerPolicy;
use twin::search::{SearchConfig, TrainerSettings};
use twin::selector::Method;
use twin::task::TaskSpec;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> twin::Result<()> {
    let seeds: u64 = arg(1, 5);
    let n_train: usize = arg(2, 100);
    let noise: f64 = arg(3, 0.0);
    let epochs: usize = arg(4, 40);
    let sep: f64 = arg(5, 4.0);

    println!("seed  twin   selts  selvs  oracle   |twin-oracle|  |selts-oracle|  regions");
    let (mut err_twin, mut err_ts) = (0.0, 0.0);
    for seed in 0..seeds {
        let config = SearchConfig {
            grid: HyperGrid::default_space(7, 7)?,
            policy: SchedulerPolicy::fifo(epochs),
            task: TaskSpec::new(seed, n_train, n_train, 20 * n_train, 4, 16, sep, noise),
            trainer: TrainerSettings {
                hidden: vec![64, 64],
                init_seed: seed,
                ..TrainerSettings::default()
            },
        };
        let (_, eval) = evaluate_search(&config, None, 1)?;
        let acc = |m| eval.test_acc_of(m).unwrap_or(f64::NAN);
        let (et, es) = (eval.abs_error(Method::Twin).unwrap(), eval.abs_error(Method::SelTs).unwrap());
        err_twin += et;
        err_ts += es;
        println!(
            "{seed:>4}  {:>5.1}  {:>5.1}  {:>5.1}  {:>6.1}   {et:>12.2}  {es:>14.2}  {:>7}",
            acc(Method::Twin),
            acc(Method::SelTs),
            acc(Method::SelVs),
            acc(Method::Oracle),
            eval.twin.segments.n_regions,
        );
    }
    println!(
        "mean abs error: Twin {:.2}, SelTS {:.2}",
        err_twin / seeds as f64,
        err_ts / seeds as f64
    );
    Ok(())
}
