//! Loss (Ψ) and parameter-norm (Θ) matrices over the grid, with the outlier
//! filter and inverted min-max normalization applied before segmentation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::Real;
use crate::error::{Error, Result};
use crate::grid::{GridCell, HyperGrid};
use crate::scheduler::SchedulerKind;
use crate::trial::TrialRecord;

/// Trailing epochs averaged into a loss summary.
pub const LOSS_WINDOW: usize = 5;

/// Cells with |z| strictly above this are outliers.
pub const Z_THRESHOLD: f64 = 2.0;

/// Ψ, Θ and validity over a row-major `n_rows x n_cols` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMatrices {
    pub n_rows: usize,
    pub n_cols: usize,
    pub psi: Vec<f64>,
    pub theta: Vec<f64>,
    pub valid_mask: Vec<bool>,
    pub epochs_run: Vec<usize>,
}

impl LogMatrices {
    /// Build from raw vectors; validity is derived from finiteness.
    pub fn from_parts(n_rows: usize, n_cols: usize, psi: Vec<f64>, theta: Vec<f64>, epochs_run: Vec<usize>) -> Result<Self> {
        let n = n_rows * n_cols;
        if psi.len() != n || theta.len() != n || epochs_run.len() != n {
            return Err(Error::invalid("shape", format!("expected {n} entries per matrix")));
        }
        let valid_mask = psi.iter().zip(&theta).map(|(p, t)| p.is_finite() && t.is_finite()).collect();
        Ok(Self {
            n_rows,
            n_cols,
            psi,
            theta,
            valid_mask,
            epochs_run,
        })
    }

    pub fn len(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, cell: GridCell) -> usize {
        cell.row * self.n_cols + cell.col
    }

    pub fn cell_at(&self, flat: usize) -> GridCell {
        GridCell::new(flat / self.n_cols, flat % self.n_cols)
    }

    /// Restrict to the cells kept by a `[::lr_stride]`, `[::wd_stride]` slice.
    pub fn slice(&self, lr_stride: usize, wd_stride: usize) -> Result<Self> {
        if lr_stride == 0 || wd_stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        let rows: Vec<usize> = (0..self.n_rows).step_by(wd_stride).collect();
        let cols: Vec<usize> = (0..self.n_cols).step_by(lr_stride).collect();
        let pick = |v: &[f64]| -> Vec<f64> { rows.iter().flat_map(|r| cols.iter().map(move |c| v[r * self.n_cols + c])).collect() };
        let epochs_run = rows
            .iter()
            .flat_map(|r| cols.iter().map(move |c| self.epochs_run[r * self.n_cols + c]))
            .collect();
        Self::from_parts(rows.len(), cols.len(), pick(&self.psi), pick(&self.theta), epochs_run)
    }
}

/// Validation and test accuracy surfaces used only by the baselines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSurfaces {
    pub val_acc: Option<Vec<f64>>,
    pub test_acc: Option<Vec<f64>>,
}

impl MetricSurfaces {
    pub fn slice(&self, n_rows: usize, n_cols: usize, lr_stride: usize, wd_stride: usize) -> Self {
        let pick = |v: &Vec<f64>| -> Vec<f64> {
            (0..n_rows)
                .step_by(wd_stride)
                .flat_map(|r| (0..n_cols).step_by(lr_stride).map(move |c| v[r * n_cols + c]))
                .collect()
        };
        Self {
            val_acc: self.val_acc.as_ref().map(pick),
            test_acc: self.test_acc.as_ref().map(pick),
        }
    }
}

/// Loss after inversion: the lowest loss maps to 1, the highest to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLoss {
    pub n_rows: usize,
    pub n_cols: usize,
    /// NaN on masked cells.
    pub values: Vec<f64>,
    /// True where the cell is invalid or a z-score outlier.
    pub outlier_mask: Vec<bool>,
}

/// Mean of the last `min(5, epochs_run)` training losses.
pub fn summarize_loss(record: &TrialRecord) -> Result<f64> {
    summarize_tail(record.epochs.iter().map(|e| e.train_loss)).ok_or(Error::EmptyRecord(record.cell))
}

fn summarize_tail(values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let k = n.min(LOSS_WINDOW);
    let tail: Vec<f64> = values.skip(n - k).collect();
    Some(tail.iter().sum::<f64>() / k as f64)
}

/// Metric summary used by the baselines: last epoch under FIFO, mean of the
/// last five under early stopping.
fn summarize_metric(values: &[f64], kind: SchedulerKind) -> f64 {
    match kind {
        SchedulerKind::Fifo => values.last().copied().unwrap_or(f64::NAN),
        SchedulerKind::Hb => summarize_tail(values.iter().copied()).unwrap_or(f64::NAN),
    }
}

fn index_records<'a>(records: &'a [TrialRecord], grid: &HyperGrid) -> Result<Vec<&'a TrialRecord>> {
    let mut by_cell: BTreeMap<GridCell, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        grid.check(r.cell)?;
        by_cell.entry(r.cell).or_default().push(r);
    }
    let missing: Vec<GridCell> = grid.cells().filter(|c| !by_cell.contains_key(c)).collect();
    let duplicate: Vec<GridCell> = by_cell.iter().filter(|(_, v)| v.len() > 1).map(|(c, _)| *c).collect();
    if !missing.is_empty() || !duplicate.is_empty() {
        return Err(Error::CellCoverage { missing, duplicate });
    }
    Ok(grid.cells().map(|c| by_cell[&c][0]).collect())
}

/// One Ψ/Θ entry per grid cell. Θ is the norm at the last logged epoch.
pub fn assemble(records: &[TrialRecord], grid: &HyperGrid) -> Result<LogMatrices> {
    let ordered = index_records(records, grid)?;
    let mut psi = Vec::with_capacity(ordered.len());
    let mut theta = Vec::with_capacity(ordered.len());
    let mut epochs_run = Vec::with_capacity(ordered.len());
    for r in ordered {
        psi.push(summarize_loss(r)?);
        theta.push(r.last().map(|e| e.param_norm).unwrap_or(f64::NAN));
        epochs_run.push(r.epochs_run());
    }
    LogMatrices::from_parts(grid.n_rows(), grid.n_cols(), psi, theta, epochs_run)
}

/// Validation/test accuracy surfaces (absent when no trial logged that split).
pub fn metric_surfaces(records: &[TrialRecord], grid: &HyperGrid, kind: SchedulerKind) -> Result<MetricSurfaces> {
    let ordered = index_records(records, grid)?;
    let surface = |get: fn(&crate::trial::EpochLog) -> Option<f64>| -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(ordered.len());
        for r in &ordered {
            let values: Option<Vec<f64>> = r.epochs.iter().map(get).collect();
            out.push(summarize_metric(&values?, kind));
        }
        Some(out)
    };
    Ok(MetricSurfaces {
        val_acc: surface(|e| e.val_acc),
        test_acc: surface(|e| e.test_acc),
    })
}

/// Population z-scores over valid cells; outliers have |z| > 2. Invalid cells
/// are always masked.
pub fn zscore_outlier_mask(psi: &[f64], valid_mask: &[bool]) -> Result<Vec<bool>> {
    let valid: Vec<f64> = psi
        .iter()
        .zip(valid_mask)
        .filter(|(p, v)| **v && p.is_finite())
        .map(|(p, _)| *p)
        .collect();
    if valid.is_empty() {
        return Err(Error::NoTrainableConfiguration);
    }
    let n = valid.len() as f64;
    let mean = valid.iter().sum::<f64>() / n;
    let var = valid.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    Ok(psi
        .iter()
        .zip(valid_mask)
        .map(|(p, v)| {
            if !*v || !p.is_finite() {
                return true;
            }
            std > 0.0 && ((p - mean) / std).abs() > Z_THRESHOLD
        })
        .collect())
}

/// `1 − minmax(Ψ)` over unmasked cells; a constant landscape maps to 0.5.
pub fn normalize_invert(psi: &[f64], outlier_mask: &[bool], n_rows: usize, n_cols: usize) -> Result<NormalizedLoss> {
    let kept = || psi.iter().zip(outlier_mask).filter(|(_, m)| !**m).map(|(p, _)| *p);
    let min = kept().fold(f64::INFINITY, f64::min);
    let max = kept().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::NoTrainableConfiguration);
    }
    let span = max - min;
    let values = psi
        .iter()
        .zip(outlier_mask)
        .map(|(p, m)| {
            if *m {
                f64::NAN
            } else if span > 0.0 {
                1.0 - (p - min) / span
            } else {
                0.5
            }
        })
        .collect();
    Ok(NormalizedLoss {
        n_rows,
        n_cols,
        values,
        outlier_mask: outlier_mask.to_vec(),
    })
}

/// On-disk form of `matrices.json`: flat row-major arrays plus the shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatricesArtifact {
    pub shape: [usize; 2],
    pub layout: String,
    pub psi: Vec<Real>,
    pub theta: Vec<Real>,
    pub valid_mask: Vec<bool>,
    pub epochs_run: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_acc: Option<Vec<Real>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_acc: Option<Vec<Real>>,
}

impl MatricesArtifact {
    pub fn new(m: &LogMatrices, surfaces: &MetricSurfaces) -> Self {
        Self {
            shape: [m.n_rows, m.n_cols],
            layout: "row-major".to_string(),
            psi: Real::vec(&m.psi),
            theta: Real::vec(&m.theta),
            valid_mask: m.valid_mask.clone(),
            epochs_run: m.epochs_run.clone(),
            val_acc: surfaces.val_acc.as_deref().map(Real::vec),
            test_acc: surfaces.test_acc.as_deref().map(Real::vec),
        }
    }

    /// The selection-facing matrices only; accuracy surfaces stay behind.
    pub fn log_matrices(&self) -> Result<LogMatrices> {
        let [rows, cols] = self.shape;
        let m = LogMatrices {
            n_rows: rows,
            n_cols: cols,
            psi: self.psi.iter().map(|r| r.0).collect(),
            theta: self.theta.iter().map(|r| r.0).collect(),
            valid_mask: self.valid_mask.clone(),
            epochs_run: self.epochs_run.clone(),
        };
        let n = rows * cols;
        if m.psi.len() != n || m.theta.len() != n || m.valid_mask.len() != n || m.epochs_run.len() != n {
            return Err(Error::Schema {
                field: "shape",
                reason: format!("arrays do not match shape {rows}x{cols}"),
            });
        }
        Ok(m)
    }

    pub fn surfaces(&self) -> MetricSurfaces {
        MetricSurfaces {
            val_acc: self.val_acc.as_ref().map(|v| v.iter().map(|r| r.0).collect()),
            test_acc: self.test_acc.as_ref().map(|v| v.iter().map(|r| r.0).collect()),
        }
    }
}
