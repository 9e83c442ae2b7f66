//! On-disk run layout:
//!
//! ```text
//! runs/<run_id>/
//!   manifest.json
//!   trials/<row>_<col>.jsonl    one line per logged epoch
//!   decisions.jsonl             scheduler decisions in the order taken
//!   matrices.json  selection.json  eval_report.json
//! ```
//!
//! Trial and decision logs are append-only JSON lines. A torn final line
//! (crash mid-write) is dropped on load with a warning; a bad line anywhere
//! else is an error naming the file and line.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::codec::Real;
use crate::error::{Error, Result};
use crate::grid::{GridCell, HyperGrid};
use crate::scheduler::{DecisionRecord, SchedulerKind, SchedulerPolicy};
use crate::search::{replay, SearchConfig, SearchObserver, TrainerSettings};
use crate::task::TaskSpec;
use crate::trial::{EpochLog, TrialRecord, TrialStatus};

/// Environment variable overriding the store root.
pub const STORE_ENV: &str = "TWIN_STORE";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const MANIFEST: &str = "manifest.json";
pub const DECISIONS: &str = "decisions.jsonl";
pub const MATRICES: &str = "matrices.json";
pub const SELECTION: &str = "selection.json";
pub const EVAL_REPORT: &str = "eval_report.json";
const TRIALS: &str = "trials";

/// Where trial records come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialSource {
    Builtin {
        task: TaskSpec,
        trainer: TrainerSettings,
    },
    /// Records are produced by an outside training system.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub task: u64,
    pub val: u64,
    pub init: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tool_version: String,
    pub grid: HyperGrid,
    pub policy: SchedulerPolicy,
    pub source: TrialSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<RunSeeds>,
}

impl RunManifest {
    pub fn builtin(run_id: impl Into<String>, config: &SearchConfig) -> Self {
        Self {
            run_id: run_id.into(),
            tool_version: TOOL_VERSION.to_string(),
            grid: config.grid.clone(),
            policy: config.policy.clone(),
            source: TrialSource::Builtin {
                task: config.task.clone(),
                trainer: config.trainer.clone(),
            },
            seeds: Some(RunSeeds {
                task: config.task.seed,
                val: config.task.val_seed,
                init: config.trainer.init_seed,
            }),
        }
    }

    pub fn external(run_id: impl Into<String>, grid: HyperGrid, policy: SchedulerPolicy) -> Self {
        Self {
            run_id: run_id.into(),
            tool_version: TOOL_VERSION.to_string(),
            grid,
            policy,
            source: TrialSource::External,
            seeds: None,
        }
    }

    /// The search this manifest describes, for built-in runs.
    pub fn search_config(&self) -> Option<SearchConfig> {
        match &self.source {
            TrialSource::Builtin { task, trainer } => Some(SearchConfig {
                grid: self.grid.clone(),
                policy: self.policy.clone(),
                task: task.clone(),
                trainer: trainer.clone(),
            }),
            TrialSource::External => None,
        }
    }
}

/// One epoch of one trial as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialLine {
    pub row: usize,
    pub col: usize,
    pub epoch: usize,
    pub train_loss: Real,
    pub param_norm: Real,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_acc: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_acc: Option<Real>,
    /// Trial status as of this line; `running` on all but the last line.
    pub status: TrialStatus,
}

impl TrialLine {
    pub fn from_log(cell: GridCell, log: &EpochLog, status: TrialStatus) -> Self {
        Self {
            row: cell.row,
            col: cell.col,
            epoch: log.epoch,
            train_loss: Real(log.train_loss),
            param_norm: Real(log.param_norm),
            val_acc: log.val_acc.map(Real),
            test_acc: log.test_acc.map(Real),
            status,
        }
    }

    pub fn cell(&self) -> GridCell {
        GridCell::new(self.row, self.col)
    }

    pub fn to_log(&self) -> EpochLog {
        EpochLog {
            epoch: self.epoch,
            train_loss: self.train_loss.0,
            param_norm: self.param_norm.0,
            val_acc: self.val_acc.map(|r| r.0),
            test_acc: self.test_acc.map(|r| r.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |field, reason: &str| {
            Err(Error::Schema {
                field,
                reason: reason.to_string(),
            })
        };
        if self.param_norm.0 < 0.0 {
            return schema("param_norm", "must be non-negative");
        }
        for (field, v) in [("val_acc", self.val_acc), ("test_acc", self.test_acc)] {
            if let Some(Real(v)) = v {
                if v.is_finite() && !(0.0..=100.0).contains(&v) {
                    return schema(field, "accuracy is a percentage in [0, 100]");
                }
            }
        }
        let finite = self.train_loss.0.is_finite() && self.param_norm.0.is_finite();
        if !finite && self.status != TrialStatus::Diverged {
            return schema("status", "non-finite loss or norm requires status `diverged`");
        }
        Ok(())
    }
}

/// Store root: `TWIN_STORE` if set, else `fallback`.
pub fn store_root(fallback: impl Into<PathBuf>) -> PathBuf {
    std::env::var_os(STORE_ENV).map(PathBuf::from).unwrap_or_else(|| fallback.into())
}

pub fn run_path(root: &Path, run_id: &str) -> PathBuf {
    root.join("runs").join(run_id)
}

fn trial_file(dir: &Path, cell: GridCell) -> PathBuf {
    dir.join(TRIALS).join(format!("{}_{}.jsonl", cell.row, cell.col))
}

/// Serialize as pretty JSON with a trailing newline, written atomically.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingArtifact(path.to_path_buf())),
        Err(e) => return Err(Error::io(path, e)),
    };
    serde_json::from_slice(&bytes).map_err(|e| Error::Corrupt {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    read_json(&dir.join(MANIFEST))
}

/// Cut a file back to its last complete line; returns whether bytes were dropped.
fn truncate_torn_tail(path: &Path) -> Result<bool> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(false),
        Err(e) => return Err(Error::io(path, e)),
    };
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if keep == bytes.len() {
        return Ok(false);
    }
    let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
    f.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
    Ok(true)
}

fn append_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    for l in lines {
        buf.push_str(l);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

/// Append handle for a run directory.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    grid: HyperGrid,
    last_epoch: BTreeMap<GridCell, usize>,
    /// Decision lines on disk.
    decisions: usize,
    /// Decisions received from a search so far (resume skips the logged prefix).
    seen_decisions: usize,
}

impl RunWriter {
    /// Create a new run directory; fails if it already holds a manifest.
    pub fn create(dir: impl Into<PathBuf>, manifest: &RunManifest) -> Result<Self> {
        let dir = dir.into();
        if dir.join(MANIFEST).exists() {
            return Err(Error::invalid(
                "run_id",
                format!("run `{}` already exists at {}", manifest.run_id, dir.display()),
            ));
        }
        manifest.policy.validate()?;
        let trials = dir.join(TRIALS);
        fs::create_dir_all(&trials).map_err(|e| Error::io(&trials, e))?;
        write_json(&dir.join(MANIFEST), manifest)?;
        Ok(Self {
            dir,
            grid: manifest.grid.clone(),
            last_epoch: BTreeMap::new(),
            decisions: 0,
            seen_decisions: 0,
        })
    }

    /// Reopen an existing run for appending, repairing torn tails first.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let manifest = read_manifest(&dir)?;
        let trials = dir.join(TRIALS);
        fs::create_dir_all(&trials).map_err(|e| Error::io(&trials, e))?;
        truncate_torn_tail(&dir.join(DECISIONS))?;
        let mut last_epoch = BTreeMap::new();
        for cell in manifest.grid.cells() {
            let path = trial_file(&dir, cell);
            truncate_torn_tail(&path)?;
            if let Some(last) = read_lines::<TrialLine>(&path)?.0.last() {
                last_epoch.insert(cell, last.epoch);
            }
        }
        let decisions = read_lines::<DecisionRecord>(&dir.join(DECISIONS))?.0.len();
        Ok(Self {
            dir,
            grid: manifest.grid,
            last_epoch,
            decisions,
            seen_decisions: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Epochs already on disk for `cell`.
    pub fn logged_epochs(&self, cell: GridCell) -> usize {
        self.last_epoch.get(&cell).map_or(0, |e| e + 1)
    }

    pub fn logged_decisions(&self) -> usize {
        self.decisions
    }

    pub fn append_trial_line(&mut self, line: &TrialLine) -> Result<()> {
        self.append_trial_lines(std::slice::from_ref(line))
    }

    /// Validate and append lines, all for the same cell.
    pub fn append_trial_lines(&mut self, lines: &[TrialLine]) -> Result<()> {
        let Some(first) = lines.first() else { return Ok(()) };
        let cell = first.cell();
        self.grid.check(cell)?;
        let mut prev = self.last_epoch.get(&cell).copied();
        let mut encoded = Vec::with_capacity(lines.len());
        for line in lines {
            if line.cell() != cell {
                return Err(Error::invalid("lines", "a batch must belong to one cell"));
            }
            line.validate()?;
            if let Some(p) = prev {
                if line.epoch <= p {
                    return Err(Error::Schema {
                        field: "epoch",
                        reason: format!("epoch {} after {} for cell {cell}", line.epoch, p),
                    });
                }
            }
            prev = Some(line.epoch);
            encoded.push(serde_json::to_string(line)?);
        }
        append_lines(&trial_file(&self.dir, cell), &encoded)?;
        self.last_epoch.insert(cell, prev.expect("non-empty batch"));
        Ok(())
    }

    pub fn append_decisions(&mut self, decisions: &[DecisionRecord]) -> Result<()> {
        if decisions.is_empty() {
            return Ok(());
        }
        let encoded = decisions
            .iter()
            .map(serde_json::to_string)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        append_lines(&self.dir.join(DECISIONS), &encoded)?;
        self.decisions += decisions.len();
        Ok(())
    }
}

/// Writes search progress into a run, skipping whatever is already on disk
/// (resumed runs re-derive the same lines deterministically).
impl SearchObserver for RunWriter {
    fn on_epochs(&mut self, cell: GridCell, epochs: &[EpochLog], status: TrialStatus) -> Result<()> {
        let have = self.logged_epochs(cell);
        let lines: Vec<TrialLine> = epochs
            .iter()
            .enumerate()
            .filter(|(_, e)| e.epoch >= have)
            .map(|(i, e)| {
                let s = if i + 1 == epochs.len() { status } else { TrialStatus::Running };
                TrialLine::from_log(cell, e, s)
            })
            .collect();
        self.append_trial_lines(&lines)
    }

    fn on_decisions(&mut self, decisions: &[DecisionRecord]) -> Result<()> {
        let skip = self.decisions.saturating_sub(self.seen_decisions).min(decisions.len());
        self.seen_decisions += decisions.len();
        self.append_decisions(&decisions[skip..])
    }
}

/// Parsed lines plus a warning if a torn final line was dropped.
fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, Option<String>)> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), None)),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut raw = Vec::new();
    let mut reader = BufReader::new(file);
    loop {
        let mut buf = String::new();
        let n = reader.read_line(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        raw.push(buf);
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut warning = None;
    for (i, line) in raw.iter().enumerate() {
        // every write ends in a newline, so a final line without one is torn
        if i + 1 == raw.len() && !line.ends_with('\n') {
            warning = Some(format!("{}: dropped torn final line {}", path.display(), i + 1));
            break;
        }
        let value = serde_json::from_str::<T>(line.trim_end()).map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(value);
    }
    Ok((out, warning))
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    /// Row-major; cells without any logged epoch are absent.
    pub records: Vec<TrialRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub warnings: Vec<String>,
}

impl LoadedRun {
    /// Cells whose record is missing or not in a terminal state.
    pub fn incomplete_cells(&self) -> Vec<GridCell> {
        let done: BTreeMap<GridCell, TrialStatus> = self.records.iter().map(|r| (r.cell, r.status)).collect();
        self.manifest
            .grid
            .cells()
            .filter(|c| !done.get(c).is_some_and(|s| s.is_terminal()))
            .collect()
    }
}

pub fn load_run(dir: impl AsRef<Path>) -> Result<LoadedRun> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let mut warnings = Vec::new();
    let mut records = Vec::new();
    for cell in manifest.grid.cells() {
        let path = trial_file(dir, cell);
        let (lines, warn) = read_lines::<TrialLine>(&path)?;
        warnings.extend(warn);
        if lines.is_empty() {
            continue;
        }
        let mut epochs = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let corrupt = |reason: String| Error::Corrupt {
                path: path.clone(),
                line: i + 1,
                reason,
            };
            if line.cell() != cell {
                return Err(corrupt(format!("line belongs to cell {}", line.cell())));
            }
            if line.epoch != i {
                return Err(corrupt(format!("expected epoch {i}, found {}", line.epoch)));
            }
            line.validate().map_err(|e| corrupt(e.to_string()))?;
            epochs.push(line.to_log());
        }
        let status = lines.last().map_or(TrialStatus::Running, |l| l.status);
        records.push(TrialRecord { cell, epochs, status });
    }
    let (decisions, warn) = read_lines::<DecisionRecord>(&dir.join(DECISIONS))?;
    warnings.extend(warn);
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest,
        records,
        decisions,
        warnings,
    })
}

/// Cells that still need training, with the epoch to resume from.
///
/// FIFO: every non-terminal cell below the budget. HB: the logs are replayed
/// through the scheduler; cells it still considers alive and that are not
/// already parked at a pending rung are listed.
pub fn resume_plan(manifest: &RunManifest, records: &[TrialRecord]) -> Result<Vec<(GridCell, usize)>> {
    let budget = manifest.policy.epoch_budget;
    let by_cell: BTreeMap<GridCell, &TrialRecord> = records.iter().map(|r| (r.cell, r)).collect();
    let run = |c: &GridCell| by_cell.get(c).map_or(0, |r| r.epochs_run());
    let terminal = |c: &GridCell| by_cell.get(c).is_some_and(|r| r.status.is_terminal());
    let plan = match manifest.policy.kind {
        SchedulerKind::Fifo => manifest
            .grid
            .cells()
            .filter(|c| !terminal(c) && run(c) < budget)
            .map(|c| (c, run(&c)))
            .collect(),
        SchedulerKind::Hb => {
            let state = replay(&manifest.policy, &manifest.grid, records)?;
            manifest
                .grid
                .cells()
                .filter(|c| state.is_alive(*c) && !state.is_waiting(*c) && !terminal(c) && run(c) < budget)
                .map(|c| (c, run(&c)))
                .collect()
        }
    };
    Ok(plan)
}
