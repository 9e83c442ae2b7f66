//! Train one configuration on a synthetic task and watch the two logged
//! signals Twin relies on: training loss and parameter norm.
//!
//! `cargo run --release --example single_trial -- [lr] [wd] [epochs]`

use twin::grid::GridCell;
use twin::search::TrainerSettings;
use twin::task::{make_synthetic_task, TaskSpec};
use twin::trial::Trial;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> twin::Result<()> {
    let (lr, wd, epochs) = (arg(1, 0.05), arg(2, 5e-4), arg(3, 30));
    let task = make_synthetic_task(&TaskSpec::new(0, 100, 100, 2000, 4, 16, 4.0, 0.0))?;
    let settings = TrainerSettings {
        hidden: vec![64, 64],
        ..TrainerSettings::default()
    };
    let arch = twin::mlp::ArchSpec::new(task.input_dim(), settings.hidden.clone(), task.n_classes());
    let mut trial = Trial::new(GridCell::new(0, 0), &task, &arch, &settings.config(lr, wd, epochs))?;

    println!("epoch  train_loss  param_norm  test_acc");
    while let Some(log) = trial.step_epoch() {
        if log.epoch % 5 == 0 || log.epoch + 1 == epochs {
            println!(
                "{:>5}  {:>10.4}  {:>10.3}  {:>8.2}",
                log.epoch,
                log.train_loss,
                log.param_norm,
                log.test_acc.unwrap_or(f64::NAN)
            );
        }
    }
    println!("status: {:?}", trial.status());
    Ok(())
}
