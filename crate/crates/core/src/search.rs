//! Grid search driver: trains every cell under the scheduler and replays
//! recorded runs through the same decision sequence.
//!
//! Trials advance together from one ladder level to the next (the single
//! level `T` under FIFO). Within a level they train in parallel; reports
//! reach the scheduler afterwards in row-major order, so the decision log
//! does not depend on thread timing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridCell, HyperGrid};
use crate::mlp::ArchSpec;
use crate::optim::LrSchedule;
use crate::scheduler::{DecisionRecord, RungState, SchedulerPolicy};
use crate::task::{make_synthetic_task, SyntheticTask, TaskSpec};
use crate::trial::{EpochLog, TrainerConfig, Trial, TrialRecord, TrialStatus};

/// Trainer settings shared by every cell; learning rate and weight decay come
/// from the grid, the epoch budget from the scheduler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerSettings {
    pub hidden: Vec<usize>,
    pub momentum: f64,
    pub batch_size: usize,
    pub lr_schedule: LrSchedule,
    pub init_seed: u64,
}

impl Default for TrainerSettings {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            momentum: 0.9,
            batch_size: 16,
            lr_schedule: LrSchedule::Cosine,
            init_seed: 0,
        }
    }
}

impl TrainerSettings {
    pub fn config(&self, lr: f64, wd: f64, epochs: usize) -> TrainerConfig {
        TrainerConfig {
            lr,
            wd,
            momentum: self.momentum,
            epochs,
            batch_size: self.batch_size,
            lr_schedule: self.lr_schedule,
            init_seed: self.init_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub grid: HyperGrid,
    pub policy: SchedulerPolicy,
    pub task: TaskSpec,
    pub trainer: TrainerSettings,
}

impl SearchConfig {
    pub fn arch(&self) -> ArchSpec {
        ArchSpec::new(self.task.input_dim, self.trainer.hidden.clone(), self.task.n_classes)
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.task.validate()?;
        let (lr, wd) = (self.grid.lr_values()[0], self.grid.wd_values()[0]);
        self.trainer.config(lr, wd, self.policy.epoch_budget).validate()?;
        crate::mlp::Mlp::new(&self.arch())?;
        Ok(())
    }
}

/// Receives trial lines and scheduler decisions as each ladder level completes.
pub trait SearchObserver {
    /// Newly trained epochs of one trial and its status after the level.
    fn on_epochs(&mut self, _cell: GridCell, _epochs: &[EpochLog], _status: TrialStatus) -> Result<()> {
        Ok(())
    }

    fn on_decisions(&mut self, _decisions: &[DecisionRecord]) -> Result<()> {
        Ok(())
    }
}

impl SearchObserver for () {}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// One record per cell, row-major.
    pub records: Vec<TrialRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub alive_history: Vec<usize>,
}

impl SearchOutcome {
    pub fn epochs_consumed(&self) -> usize {
        self.records.iter().map(|r| r.epochs_run()).sum()
    }
}

fn reported_loss(record: &TrialRecord) -> f64 {
    match (record.status, record.last()) {
        (TrialStatus::Diverged, _) | (_, None) => f64::NAN,
        (_, Some(e)) if !e.param_norm.is_finite() => f64::NAN,
        (_, Some(e)) => e.train_loss,
    }
}

pub fn run_search(config: &SearchConfig, observer: &mut impl SearchObserver, jobs: usize) -> Result<SearchOutcome> {
    config.validate()?;
    let task = make_synthetic_task(&config.task)?;
    run_search_on(config, &task, observer, jobs)
}

/// Run the search on an already generated task.
pub fn run_search_on(
    config: &SearchConfig,
    task: &SyntheticTask,
    observer: &mut impl SearchObserver,
    jobs: usize,
) -> Result<SearchOutcome> {
    use rayon::prelude::*;

    config.validate()?;
    let grid = &config.grid;
    let budget = config.policy.epoch_budget;
    let arch = config.arch();
    let cells: Vec<GridCell> = grid.cells().collect();
    let mut trials = cells
        .iter()
        .map(|&cell| {
            let (lr, wd) = grid.cell_params(cell)?;
            Trial::new(cell, task, &arch, &config.trainer.config(lr, wd, budget))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut state = RungState::init(&config.policy, cells.iter().copied())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("worker pool: {e}")))?;
    let mut emitted = vec![0usize; cells.len()];
    let mut logged = 0usize;

    for level in config.policy.ladder() {
        let active: Vec<usize> = (0..cells.len()).filter(|&i| state.is_alive(cells[i])).collect();
        if active.is_empty() {
            break;
        }
        pool.install(|| {
            trials
                .par_iter_mut()
                .enumerate()
                .filter(|(i, _)| state.is_alive(cells[*i]))
                .for_each(|(_, t)| {
                    while t.epochs_run() < level && !t.status().is_terminal() {
                        t.step_epoch();
                    }
                })
        });
        for &i in &active {
            let t = &trials[i];
            state.decide(cells[i], t.epochs_run(), reported_loss(t.record()))?;
        }
        for &i in &active {
            if !state.is_alive(cells[i]) {
                trials[i].stop();
            }
            let record = trials[i].record();
            observer.on_epochs(cells[i], &record.epochs[emitted[i]..], record.status)?;
            emitted[i] = record.epochs_run();
        }
        observer.on_decisions(&state.log()[logged..])?;
        logged = state.log().len();
    }

    Ok(SearchOutcome {
        records: trials.into_iter().map(Trial::into_record).collect(),
        decisions: state.log().to_vec(),
        alive_history: state.alive_history().to_vec(),
    })
}

/// Feed logged records through a fresh scheduler in the order the search
/// would have produced them. Partial records stop contributing at the first
/// level they have not reached, which leaves that rung pending.
pub fn replay(policy: &SchedulerPolicy, grid: &HyperGrid, records: &[TrialRecord]) -> Result<RungState> {
    let cells: Vec<GridCell> = grid.cells().collect();
    let mut by_flat: Vec<Option<&TrialRecord>> = vec![None; cells.len()];
    for r in records {
        grid.check(r.cell)?;
        by_flat[grid.flat_index(r.cell)] = Some(r);
    }
    let mut state = RungState::init(policy, cells.iter().copied())?;
    for level in policy.ladder() {
        let mut progressed = false;
        for (i, cell) in cells.iter().enumerate() {
            if !state.is_alive(*cell) || state.is_waiting(*cell) {
                continue;
            }
            let Some(rec) = by_flat[i] else { continue };
            let diverged = rec.status == TrialStatus::Diverged;
            if rec.epochs_run() < level && !diverged {
                continue;
            }
            let reached = rec.epochs_run().min(level);
            if reached == 0 {
                continue;
            }
            let prefix = TrialRecord {
                cell: rec.cell,
                epochs: rec.epochs[..reached].to_vec(),
                status: if diverged && reached == rec.epochs_run() {
                    TrialStatus::Diverged
                } else {
                    TrialStatus::Running
                },
            };
            state.decide(*cell, reached, reported_loss(&prefix))?;
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    Ok(state)
}
