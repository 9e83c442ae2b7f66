//! Execution of a single (learning rate, weight decay) trial.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridCell;
use crate::mlp::{ArchSpec, Mlp};
use crate::optim::{param_l2_norm, sgdm_step, LrSchedule};
use crate::task::SyntheticTask;

const SHUFFLE_STREAM: u64 = 0x0ba7_c4e5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub lr: f64,
    pub wd: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_schedule: LrSchedule,
    pub init_seed: u64,
}

impl TrainerConfig {
    pub fn new(lr: f64, wd: f64, epochs: usize) -> Self {
        Self {
            lr,
            wd,
            momentum: 0.9,
            epochs,
            batch_size: 32,
            lr_schedule: LrSchedule::Cosine,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid("lr", format!("must be positive, got {}", self.lr)));
        }
        if !(self.wd.is_finite() && self.wd >= 0.0) {
            return Err(Error::invalid("wd", format!("must be non-negative, got {}", self.wd)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must lie in [0, 1)"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    /// Still training, or interrupted before reaching a terminal state.
    Running,
    Completed,
    StoppedEarly,
    Diverged,
}

impl TrialStatus {
    pub fn is_terminal(self) -> bool {
        self != TrialStatus::Running
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub param_norm: f64,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub cell: GridCell,
    pub epochs: Vec<EpochLog>,
    pub status: TrialStatus,
}

impl TrialRecord {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }

    pub fn train_losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.epochs.iter().map(|e| e.train_loss)
    }
}

/// Read-only stop flag polled between epochs.
#[derive(Debug, Clone, Default)]
pub struct StopSignal(Arc<AtomicBool>);

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stop(&self) {
        self.0.store(true, Ordering::Release);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::Acquire)
    }
}

/// A trial that can be advanced one epoch at a time.
///
/// The scheduler drives trials epoch by epoch; [`run_trial`] is the
/// run-to-completion wrapper.
pub struct Trial<'a> {
    task: &'a SyntheticTask,
    mlp: Mlp,
    config: TrainerConfig,
    theta: Vec<f64>,
    velocity: Vec<f64>,
    grad: Vec<f64>,
    order: Vec<usize>,
    shuffle_rng: ChaCha8Rng,
    record: TrialRecord,
}

impl<'a> Trial<'a> {
    pub fn new(cell: GridCell, task: &'a SyntheticTask, arch: &ArchSpec, config: &TrainerConfig) -> Result<Self> {
        config.validate()?;
        if arch.input_dim != task.input_dim() {
            return Err(Error::invalid(
                "input_dim",
                format!("architecture expects {}, task has {}", arch.input_dim, task.input_dim()),
            ));
        }
        if arch.n_classes != task.n_classes() {
            return Err(Error::invalid(
                "n_classes",
                format!("architecture emits {}, task has {}", arch.n_classes, task.n_classes()),
            ));
        }
        let mlp = Mlp::new(arch)?;
        let theta = mlp.init(config.init_seed);
        let n = mlp.n_params();
        Ok(Self {
            task,
            mlp,
            config: config.clone(),
            theta,
            velocity: vec![0.0; n],
            grad: vec![0.0; n],
            order: (0..task.train.len()).collect(),
            shuffle_rng: ChaCha8Rng::seed_from_u64(config.init_seed ^ SHUFFLE_STREAM),
            record: TrialRecord {
                cell,
                epochs: Vec::new(),
                status: TrialStatus::Running,
            },
        })
    }

    pub fn epochs_run(&self) -> usize {
        self.record.epochs.len()
    }

    pub fn status(&self) -> TrialStatus {
        self.record.status
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn record(&self) -> &TrialRecord {
        &self.record
    }

    /// Train one epoch and append its log. No-op once the trial is terminal.
    pub fn step_epoch(&mut self) -> Option<&EpochLog> {
        if self.record.status.is_terminal() {
            return None;
        }
        let epoch = self.record.epochs.len();
        let lr = self.config.lr_schedule.rate(self.config.lr, epoch, self.config.epochs);
        self.order.shuffle(&mut self.shuffle_rng);

        let data = &self.task.train;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut finite = true;
        for batch in self.order.chunks(self.config.batch_size) {
            let loss = self.mlp.loss_and_grad(&self.theta, data, batch, &mut self.grad);
            loss_sum += loss;
            batches += 1;
            let ok = sgdm_step(
                &mut self.theta,
                &mut self.velocity,
                &self.grad,
                lr,
                self.config.wd,
                self.config.momentum,
            );
            if !ok || !loss.is_finite() {
                finite = false;
                break;
            }
        }
        let train_loss = loss_sum / batches as f64;
        let param_norm = param_l2_norm(&self.theta);
        let diverged = !finite || !train_loss.is_finite() || !param_norm.is_finite();
        let eval =
            |split: Option<&crate::task::Dataset>| split.map(|d| if diverged { f64::NAN } else { self.mlp.accuracy(&self.theta, d) });
        let log = EpochLog {
            epoch,
            train_loss: if finite { train_loss } else { f64::NAN },
            param_norm,
            val_acc: eval(self.task.val.as_ref()),
            test_acc: eval(Some(&self.task.test)),
        };
        self.record.epochs.push(log);
        if diverged {
            self.record.status = TrialStatus::Diverged;
        } else if self.record.epochs.len() >= self.config.epochs {
            self.record.status = TrialStatus::Completed;
        }
        self.record.epochs.last()
    }

    /// Mark a still-running trial as stopped by the scheduler.
    pub fn stop(&mut self) {
        if !self.record.status.is_terminal() {
            self.record.status = TrialStatus::StoppedEarly;
        }
    }

    pub fn into_record(self) -> TrialRecord {
        self.record
    }
}

/// Train until completion, divergence, or until `stop` is raised (checked
/// between epochs).
pub fn run_trial(cell: GridCell, task: &SyntheticTask, arch: &ArchSpec, config: &TrainerConfig, stop: &StopSignal) -> Result<TrialRecord> {
    let mut trial = Trial::new(cell, task, arch, config)?;
    while !trial.status().is_terminal() {
        if stop.is_stopped() {
            trial.stop();
            break;
        }
        trial.step_epoch();
    }
    Ok(trial.into_record())
}
