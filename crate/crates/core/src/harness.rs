//! End-to-end evaluation of one search configuration: train the grid, build
//! the matrices, and run Twin next to the baselines.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::grid::HyperGrid;
use crate::matrices::{assemble, metric_surfaces, LogMatrices, MetricSurfaces};
use crate::quickshift::QuickshiftParams;
use crate::search::{run_search, SearchConfig, SearchObserver, SearchOutcome};
use crate::selector::{baseline_select, twin_pipeline, ConfigSelections, Method, Selection, TwinOutcome};

/// Selections of every method on one (possibly sliced) grid.
#[derive(Debug, Clone)]
pub struct GridEvaluation {
    pub grid: HyperGrid,
    pub matrices: LogMatrices,
    pub surfaces: MetricSurfaces,
    pub twin: TwinOutcome,
    /// Baselines whose required surface is available.
    pub baselines: BTreeMap<Method, Selection>,
}

impl GridEvaluation {
    pub fn from_matrices(
        grid: HyperGrid,
        matrices: LogMatrices,
        surfaces: MetricSurfaces,
        params: Option<QuickshiftParams>,
    ) -> Result<Self> {
        let params = params.unwrap_or_else(|| QuickshiftParams::default_for(matrices.n_rows, matrices.n_cols));
        let twin = twin_pipeline(&grid, &matrices, &params)?;
        let mut baselines = BTreeMap::new();
        for method in [Method::SelTs, Method::SelVs, Method::Oracle] {
            match baseline_select(&grid, &matrices, &surfaces, method) {
                Ok(sel) => {
                    baselines.insert(method, sel);
                }
                Err(crate::Error::MissingSurface { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            grid,
            matrices,
            surfaces,
            twin,
            baselines,
        })
    }

    /// Re-run selection on the `[::wd_stride, ::lr_stride]` sub-grid.
    pub fn sliced(&self, lr_stride: usize, wd_stride: usize, params: Option<QuickshiftParams>) -> Result<Self> {
        let grid = self.grid.slice(lr_stride, wd_stride)?;
        let matrices = self.matrices.slice(lr_stride, wd_stride)?;
        let surfaces = self
            .surfaces
            .slice(self.matrices.n_rows, self.matrices.n_cols, lr_stride, wd_stride);
        Self::from_matrices(grid, matrices, surfaces, params)
    }

    pub fn selections(&self) -> Vec<Selection> {
        std::iter::once(self.twin.selection.clone())
            .chain(self.baselines.values().cloned())
            .collect()
    }

    /// Input for [`crate::selector::evaluate`]; `None` without a test surface.
    pub fn config_selections(&self, name: impl Into<String>) -> Option<ConfigSelections> {
        Some(ConfigSelections {
            name: name.into(),
            n_cols: self.matrices.n_cols,
            selections: self.selections(),
            test_acc: self.surfaces.test_acc.clone()?,
        })
    }

    /// Test accuracy of the cell picked by `method`.
    pub fn test_acc_of(&self, method: Method) -> Option<f64> {
        let cell = match method {
            Method::Twin => self.twin.selection.cell,
            m => self.baselines.get(&m)?.cell,
        };
        let acc = self.surfaces.test_acc.as_ref()?;
        Some(acc[self.matrices.flat(cell)])
    }

    /// `|acc(method) - acc(Oracle)|` in accuracy points.
    pub fn abs_error(&self, method: Method) -> Option<f64> {
        Some((self.test_acc_of(method)? - self.test_acc_of(Method::Oracle)?).abs())
    }
}

/// Train the whole grid and evaluate every method.
pub fn evaluate_search(config: &SearchConfig, params: Option<QuickshiftParams>, jobs: usize) -> Result<(SearchOutcome, GridEvaluation)> {
    evaluate_search_with(config, params, jobs, &mut ())
}

pub fn evaluate_search_with(
    config: &SearchConfig,
    params: Option<QuickshiftParams>,
    jobs: usize,
    observer: &mut impl SearchObserver,
) -> Result<(SearchOutcome, GridEvaluation)> {
    let outcome = run_search(config, observer, jobs)?;
    let matrices = assemble(&outcome.records, &config.grid)?;
    let surfaces = metric_surfaces(&outcome.records, &config.grid, config.policy.kind)?;
    let eval = GridEvaluation::from_matrices(config.grid.clone(), matrices, surfaces, params)?;
    Ok((outcome, eval))
}
