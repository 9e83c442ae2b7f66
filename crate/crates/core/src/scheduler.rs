//! Trial schedulers: FIFO (every trial runs the full budget) and HB_X%, a
//! single successive-halving ladder that stops halving once only X% of the
//! trials are alive and then runs the survivors to the full budget.
//!
//! Halving is synchronous: a rung resolves once every trial alive at the
//! start of the rung has reported (or diverged). Losses are ranked ascending,
//! non-finite losses last, ties by `(row, col)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridCell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Fifo,
    Hb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerPolicy {
    pub kind: SchedulerKind,
    /// Fraction X of trials left alive when halving stops (HB only).
    pub stop_fraction: f64,
    pub eta: usize,
    pub grace_fraction: f64,
    pub epoch_budget: usize,
}

impl SchedulerPolicy {
    pub fn fifo(epoch_budget: usize) -> Self {
        Self {
            kind: SchedulerKind::Fifo,
            stop_fraction: 1.0,
            eta: 2,
            grace_fraction: 0.05,
            epoch_budget,
        }
    }

    pub fn hb(epoch_budget: usize, stop_fraction: f64) -> Self {
        Self {
            kind: SchedulerKind::Hb,
            stop_fraction,
            ..Self::fifo(epoch_budget)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epoch_budget == 0 {
            return Err(Error::invalid("epoch_budget", "must be at least 1"));
        }
        if self.kind == SchedulerKind::Hb {
            if self.eta < 2 {
                return Err(Error::invalid("eta", format!("must be >= 2, got {}", self.eta)));
            }
            if !(self.grace_fraction > 0.0 && self.grace_fraction < 1.0) {
                return Err(Error::invalid("grace_fraction", "must lie in (0, 1)"));
            }
            if !(self.stop_fraction > 0.0 && self.stop_fraction <= 1.0) {
                return Err(Error::invalid("stop_fraction", "must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    /// Resource ladder `r_0 < r_1 < … = T`. FIFO has the single level `T`.
    pub fn ladder(&self) -> Vec<usize> {
        let t = self.epoch_budget;
        if self.kind == SchedulerKind::Fifo {
            return vec![t];
        }
        let mut r = ((self.grace_fraction * t as f64).round() as usize).clamp(1, t);
        let mut ladder = vec![r];
        while r < t {
            r = (r * self.eta).min(t);
            ladder.push(r);
        }
        ladder
    }

    /// Rungs at which halving may happen (ladder entries below the budget).
    pub fn rungs(&self) -> Vec<usize> {
        let t = self.epoch_budget;
        match self.kind {
            SchedulerKind::Fifo => Vec::new(),
            SchedulerKind::Hb => self.ladder().into_iter().filter(|&r| r < t).collect(),
        }
    }

    /// `⌈X·n⌉`, the alive count at which halving ceases.
    pub fn survivor_floor(&self, n_trials: usize) -> usize {
        // absorb representation error so that e.g. 0.07 * 100 stays 7
        let x = self.stop_fraction * n_trials as f64;
        ((x - 1e-9).ceil().max(1.0)) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    Stop,
    /// Waiting for the rest of the rung cohort.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub row: usize,
    pub col: usize,
    pub epoch: usize,
    pub decision: Decision,
    /// Index into [`SchedulerPolicy::rungs`] when the decision was taken at a rung.
    pub rung: Option<usize>,
    pub alive: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CellState {
    Alive { last_epoch: usize },
    AtRung { loss: f64 },
    Stopped,
}

#[derive(Debug, Clone)]
pub struct RungState {
    policy: SchedulerPolicy,
    rungs: Vec<usize>,
    n_trials: usize,
    floor: usize,
    cells: BTreeMap<GridCell, CellState>,
    halving: bool,
    next_rung: usize,
    /// Trials alive when the current rung segment started.
    cohort: Vec<GridCell>,
    /// Cohort members that diverged before reaching the current rung.
    fallen: Vec<GridCell>,
    resolved: BTreeMap<GridCell, Decision>,
    alive_history: Vec<usize>,
    log: Vec<DecisionRecord>,
}

impl RungState {
    pub fn init(policy: &SchedulerPolicy, cells: impl IntoIterator<Item = GridCell>) -> Result<Self> {
        policy.validate()?;
        let cells: BTreeMap<GridCell, CellState> = cells.into_iter().map(|c| (c, CellState::Alive { last_epoch: 0 })).collect();
        let n_trials = cells.len();
        if n_trials == 0 {
            return Err(Error::invalid("n_trials", "need at least one trial"));
        }
        let rungs = policy.rungs();
        let floor = policy.survivor_floor(n_trials);
        let halving = policy.kind == SchedulerKind::Hb && !rungs.is_empty() && n_trials > floor;
        Ok(Self {
            policy: policy.clone(),
            rungs,
            n_trials,
            floor,
            cohort: cells.keys().copied().collect(),
            cells,
            halving,
            next_rung: 0,
            fallen: Vec::new(),
            resolved: BTreeMap::new(),
            alive_history: vec![n_trials],
            log: Vec::new(),
        })
    }

    pub fn policy(&self) -> &SchedulerPolicy {
        &self.policy
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn alive_count(&self) -> usize {
        self.cells.values().filter(|s| !matches!(s, CellState::Stopped)).count()
    }

    pub fn alive_fraction(&self) -> f64 {
        self.alive_count() as f64 / self.n_trials as f64
    }

    pub fn is_alive(&self, cell: GridCell) -> bool {
        matches!(self.cells.get(&cell), Some(s) if !matches!(s, CellState::Stopped))
    }

    /// Alive and reported at the current rung, awaiting the rest of the cohort.
    pub fn is_waiting(&self, cell: GridCell) -> bool {
        matches!(self.cells.get(&cell), Some(CellState::AtRung { .. }))
    }

    pub fn alive_cells(&self) -> Vec<GridCell> {
        self.cells
            .iter()
            .filter(|(_, s)| !matches!(s, CellState::Stopped))
            .map(|(c, _)| *c)
            .collect()
    }

    /// Alive counts: the initial population followed by the count after every halving.
    pub fn alive_history(&self) -> &[usize] {
        &self.alive_history
    }

    pub fn is_halving(&self) -> bool {
        self.halving
    }

    pub fn log(&self) -> &[DecisionRecord] {
        &self.log
    }

    /// Outcome of a rung this cell was waiting on, once resolved.
    pub fn resolution(&self, cell: GridCell) -> Option<Decision> {
        self.resolved.get(&cell).copied()
    }

    fn push_log(&mut self, cell: GridCell, epoch: usize, decision: Decision, rung: Option<usize>) {
        let alive = self.alive_count();
        self.log.push(DecisionRecord {
            row: cell.row,
            col: cell.col,
            epoch,
            decision,
            rung,
            alive,
        });
    }

    /// Report a trial's training loss after `epoch_completed` epochs.
    ///
    /// A non-finite loss marks the trial diverged: it stops immediately and
    /// ranks last at the pending rung.
    pub fn decide(&mut self, cell: GridCell, epoch_completed: usize, train_loss: f64) -> Result<Decision> {
        let t = self.policy.epoch_budget;
        let last_epoch = match self.cells.get(&cell) {
            None => return Err(Error::Contract(format!("unknown trial {cell}"))),
            Some(CellState::Stopped) => return Err(Error::Contract(format!("decision requested for stopped trial {cell}"))),
            Some(CellState::AtRung { .. }) => return Err(Error::Contract(format!("trial {cell} is already waiting at a rung"))),
            Some(CellState::Alive { last_epoch }) => *last_epoch,
        };
        if epoch_completed <= last_epoch || epoch_completed > t {
            return Err(Error::Contract(format!(
                "trial {cell} reported epoch {epoch_completed} after {last_epoch} (budget {t})"
            )));
        }
        let rung_epoch = self.halving.then(|| self.rungs[self.next_rung]);
        if let Some(r) = rung_epoch {
            if epoch_completed > r {
                return Err(Error::Contract(format!(
                    "trial {cell} skipped rung at epoch {r} (reported {epoch_completed})"
                )));
            }
        }

        if !train_loss.is_finite() {
            self.cells.insert(cell, CellState::Stopped);
            self.push_log(cell, epoch_completed, Decision::Stop, None);
            if self.halving && self.cohort.contains(&cell) {
                self.fallen.push(cell);
                self.try_resolve()?;
            }
            return Ok(Decision::Stop);
        }

        if epoch_completed == t {
            self.cells.insert(cell, CellState::Stopped);
            self.push_log(cell, epoch_completed, Decision::Stop, None);
            return Ok(Decision::Stop);
        }

        if rung_epoch == Some(epoch_completed) {
            self.cells.insert(cell, CellState::AtRung { loss: train_loss });
            self.resolved.remove(&cell);
            self.try_resolve()?;
            return Ok(self.resolution(cell).unwrap_or(Decision::Pending));
        }

        self.cells.insert(
            cell,
            CellState::Alive {
                last_epoch: epoch_completed,
            },
        );
        Ok(Decision::Continue)
    }

    fn try_resolve(&mut self) -> Result<()> {
        let mut entries: Vec<(GridCell, f64)> = Vec::with_capacity(self.cohort.len());
        for cell in &self.cohort {
            match self.cells[cell] {
                CellState::AtRung { loss } => entries.push((*cell, loss)),
                CellState::Stopped if self.fallen.contains(cell) => entries.push((*cell, f64::NAN)),
                CellState::Stopped => return Err(Error::Internal(format!("cohort member {cell} stopped off-rung"))),
                CellState::Alive { .. } => return Ok(()),
            }
        }
        let rung_idx = self.next_rung;
        let rung_epoch = self.rungs[rung_idx];
        entries.sort_by(|a, b| match (a.1.is_finite(), b.1.is_finite()) {
            (true, true) => a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)),
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            (false, false) => a.0.cmp(&b.0),
        });
        let contenders = entries.iter().filter(|e| e.1.is_finite()).count();
        let keep = if contenders <= self.floor {
            contenders
        } else {
            self.cohort.len().div_ceil(self.policy.eta).min(contenders)
        };

        let promoted: Vec<GridCell> = entries[..keep].iter().map(|e| e.0).collect();
        let mut outcome: Vec<(GridCell, Decision)> = entries
            .iter()
            .filter(|e| e.1.is_finite())
            .map(|e| {
                let d = if promoted.contains(&e.0) {
                    Decision::Continue
                } else {
                    Decision::Stop
                };
                (e.0, d)
            })
            .collect();
        outcome.sort_by_key(|o| o.0);
        for (cell, d) in &outcome {
            let state = match d {
                Decision::Continue => CellState::Alive { last_epoch: rung_epoch },
                _ => CellState::Stopped,
            };
            self.cells.insert(*cell, state);
            self.resolved.insert(*cell, *d);
        }
        for (cell, d) in outcome {
            self.push_log(cell, rung_epoch, d, Some(rung_idx));
        }

        let alive = promoted.len();
        self.alive_history.push(alive);
        self.next_rung += 1;
        self.halving = alive > self.floor && self.next_rung < self.rungs.len();
        self.cohort = promoted;
        self.fallen.clear();
        Ok(())
    }
}

/// Closed-form epoch consumption of a divergence-free run: each halving's
/// population trains up to its rung, and the final survivors run to the budget.
pub fn expected_epochs(policy: &SchedulerPolicy, alive_history: &[usize]) -> usize {
    let t = policy.epoch_budget;
    let rungs = policy.rungs();
    let mut total = 0;
    let mut prev = 0;
    for (k, &alive) in alive_history.iter().enumerate() {
        match rungs.get(k) {
            Some(&r) if k + 1 < alive_history.len() => {
                total += alive * (r - prev);
                prev = r;
            }
            _ => {
                total += alive * (t - prev);
                break;
            }
        }
    }
    total
}
