//! Final configuration choice.
//!
//! Twin segments the inverted, normalized loss landscape, keeps the region
//! with the highest mean, and returns the cell with the smallest parameter
//! norm inside it. [`twin_select`] only ever sees [`LogMatrices`], which carry
//! no validation or test information. The baselines read the accuracy
//! surfaces explicitly.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::Real;
use crate::error::{Error, Result};
use crate::grid::{GridCell, HyperGrid};
use crate::matrices::{normalize_invert, zscore_outlier_mask, LogMatrices, MetricSurfaces, NormalizedLoss};
use crate::quickshift::{quickshift, QuickshiftParams, SegmentLabels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Twin,
    #[serde(rename = "SelTS")]
    SelTs,
    #[serde(rename = "SelVS")]
    SelVs,
    Oracle,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Twin => "Twin",
            Method::SelTs => "SelTS",
            Method::SelVs => "SelVS",
            Method::Oracle => "Oracle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: Method,
    pub cell: GridCell,
    pub lr: f64,
    pub wd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_at_cell: Option<f64>,
}

/// Everything the Twin pipeline computed on its way to a selection.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinOutcome {
    pub selection: Selection,
    pub params: QuickshiftParams,
    pub normalized: NormalizedLoss,
    pub segments: SegmentLabels,
    pub region_means: Vec<f64>,
}

/// Mean normalized loss of every region.
pub fn region_stats(norm: &NormalizedLoss, labels: &SegmentLabels) -> Result<Vec<f64>> {
    if labels.n_regions == 0 {
        return Err(Error::NoTrainableConfiguration);
    }
    if labels.labels.len() != norm.values.len() {
        return Err(Error::invalid("labels", "shape differs from the normalized loss"));
    }
    let mut sums = vec![0.0; labels.n_regions];
    let mut counts = vec![0usize; labels.n_regions];
    for (l, v) in labels.labels.iter().zip(&norm.values) {
        if *l >= 0 {
            sums[*l as usize] += v;
            counts[*l as usize] += 1;
        }
    }
    Ok(sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect())
}

/// Full Twin pipeline, keeping every intermediate result.
pub fn twin_pipeline(grid: &HyperGrid, matrices: &LogMatrices, params: &QuickshiftParams) -> Result<TwinOutcome> {
    if grid.shape() != (matrices.n_rows, matrices.n_cols) {
        return Err(Error::invalid("matrices", "shape differs from the grid"));
    }
    let (rows, cols) = (matrices.n_rows, matrices.n_cols);
    let outliers = zscore_outlier_mask(&matrices.psi, &matrices.valid_mask)?;
    let normalized = normalize_invert(&matrices.psi, &outliers, rows, cols)?;
    let segments = quickshift(&normalized.values, &normalized.outlier_mask, rows, cols, params)?;
    let region_means = region_stats(&normalized, &segments)?;

    let mut best_region = 0;
    for (r, m) in region_means.iter().enumerate() {
        if *m > region_means[best_region] {
            best_region = r;
        }
    }
    let best_cell = segments
        .members(best_region)
        .into_iter()
        .fold(None::<usize>, |acc, i| match acc {
            Some(j) if matrices.theta[j] <= matrices.theta[i] => Some(j),
            _ => Some(i),
        })
        .ok_or_else(|| Error::Internal(format!("region {best_region} has no cells")))?;

    let cell = matrices.cell_at(best_cell);
    let (lr, wd) = grid.cell_params(cell)?;
    Ok(TwinOutcome {
        selection: Selection {
            method: Method::Twin,
            cell,
            lr,
            wd,
            region_id: Some(best_region),
            region_mean: Some(region_means[best_region]),
            norm_at_cell: Some(matrices.theta[best_cell]),
        },
        params: *params,
        normalized,
        segments,
        region_means,
    })
}

pub fn twin_select(grid: &HyperGrid, matrices: &LogMatrices, params: &QuickshiftParams) -> Result<Selection> {
    twin_pipeline(grid, matrices, params).map(|o| o.selection)
}

fn arg_best(values: &[f64], valid: &[bool], lower_is_better: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if !valid[i] || !v.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) if lower_is_better => *v < values[b],
            Some(b) => *v > values[b],
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// SelTS (lowest training loss), SelVS (best validation accuracy) or Oracle
/// (best test accuracy). Ties go to the lexicographically first cell.
pub fn baseline_select(grid: &HyperGrid, matrices: &LogMatrices, surfaces: &MetricSurfaces, method: Method) -> Result<Selection> {
    let (values, lower) = match method {
        Method::SelTs => (&matrices.psi, true),
        Method::SelVs => (
            surfaces.val_acc.as_ref().ok_or(Error::MissingSurface {
                method: "SelVS",
                requirement: "validation accuracy (train with a validation split)",
            })?,
            false,
        ),
        Method::Oracle => (
            surfaces.test_acc.as_ref().ok_or(Error::MissingSurface {
                method: "Oracle",
                requirement: "test accuracy",
            })?,
            false,
        ),
        Method::Twin => return Err(Error::invalid("method", "Twin is not a baseline")),
    };
    if values.len() != matrices.len() {
        return Err(Error::invalid("surfaces", "shape differs from the matrices"));
    }
    let flat = arg_best(values, &matrices.valid_mask, lower).ok_or(Error::NoTrainableConfiguration)?;
    let cell = matrices.cell_at(flat);
    let (lr, wd) = grid.cell_params(cell)?;
    Ok(Selection {
        method,
        cell,
        lr,
        wd,
        region_id: None,
        region_mean: None,
        norm_at_cell: None,
    })
}

/// One dataset/model configuration to score.
#[derive(Debug, Clone)]
pub struct ConfigSelections {
    pub name: String,
    pub n_cols: usize,
    pub selections: Vec<Selection>,
    pub test_acc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickScore {
    pub cell: GridCell,
    pub test_acc: Real,
    pub abs_error: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub name: String,
    pub oracle_test_acc: Real,
    pub picks: BTreeMap<Method, PickScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub configs: Vec<ConfigReport>,
    /// Mean absolute test-accuracy gap to the Oracle pick, per method.
    pub mae: BTreeMap<Method, Real>,
}

/// Per-config |test(method) − test(Oracle)| and its mean over configs.
pub fn evaluate(configs: &[ConfigSelections]) -> Result<EvalReport> {
    let mut reports = Vec::with_capacity(configs.len());
    let mut errors: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for cfg in configs {
        let at = |c: GridCell| cfg.test_acc[c.row * cfg.n_cols + c.col];
        let oracle = cfg
            .selections
            .iter()
            .find(|s| s.method == Method::Oracle)
            .ok_or(Error::MissingSurface {
                method: "evaluate",
                requirement: "an Oracle selection for every configuration",
            })?;
        let reference = at(oracle.cell);
        let mut picks = BTreeMap::new();
        for s in &cfg.selections {
            let acc = at(s.cell);
            let err = (acc - reference).abs();
            errors.entry(s.method).or_default().push(err);
            picks.insert(
                s.method,
                PickScore {
                    cell: s.cell,
                    test_acc: Real(acc),
                    abs_error: Real(err),
                },
            );
        }
        reports.push(ConfigReport {
            name: cfg.name.clone(),
            oracle_test_acc: Real(reference),
            picks,
        });
    }
    let mae = errors
        .into_iter()
        .map(|(m, e)| (m, Real(e.iter().sum::<f64>() / e.len() as f64)))
        .collect();
    Ok(EvalReport { configs: reports, mae })
}

/// On-disk form of `selection.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArtifact {
    #[serde(flatten)]
    pub selection: Selection,
    pub quickshift: QuickshiftParams,
    pub shape: [usize; 2],
    pub region_means: Vec<Real>,
    /// Row-major region ids, −1 where masked.
    pub labels: Vec<i64>,
    /// Cells excluded as non-finite.
    pub invalid_mask: Vec<bool>,
    /// Cells excluded by the z-score filter or as non-finite.
    pub outlier_mask: Vec<bool>,
}

impl SelectionArtifact {
    pub fn new(outcome: &TwinOutcome, matrices: &LogMatrices) -> Self {
        Self {
            selection: outcome.selection.clone(),
            quickshift: outcome.params,
            shape: [matrices.n_rows, matrices.n_cols],
            region_means: Real::vec(&outcome.region_means),
            labels: outcome.segments.labels.clone(),
            invalid_mask: matrices.valid_mask.iter().map(|v| !v).collect(),
            outlier_mask: outcome.normalized.outlier_mask.clone(),
        }
    }
}
