//! The learning-rate × weight-decay search lattice.
//!
//! Rows index weight decay, columns index learning rate. Every matrix in the
//! crate (losses, norms, masks, segment labels) uses this orientation and is
//! stored row-major, so `row * n_cols + col` is the flat index of a cell.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Address of one trial in the grid.
///
/// Ordering is lexicographic on `(row, col)`, which is the tie-break rule used
/// by every selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
}

impl GridCell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr")]
pub struct HyperGrid {
    lr_values: Vec<f64>,
    wd_values: Vec<f64>,
    lr_bounds: (f64, f64),
    wd_bounds: (f64, f64),
}

#[derive(Deserialize)]
struct GridRepr {
    lr_values: Vec<f64>,
    wd_values: Vec<f64>,
    lr_bounds: (f64, f64),
    wd_bounds: (f64, f64),
}

impl TryFrom<GridRepr> for HyperGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        check_axis("lr_values", &r.lr_values, r.lr_bounds)?;
        check_axis("wd_values", &r.wd_values, r.wd_bounds)?;
        Ok(HyperGrid {
            lr_values: r.lr_values,
            wd_values: r.wd_values,
            lr_bounds: r.lr_bounds,
            wd_bounds: r.wd_bounds,
        })
    }
}

fn check_axis(param: &'static str, values: &[f64], bounds: (f64, f64)) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::invalid(param, "an axis needs at least two points"));
    }
    if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::invalid(param, "values must be finite and positive"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(param, "values must be strictly increasing"));
    }
    if values[0] != bounds.0 || values[values.len() - 1] != bounds.1 {
        return Err(Error::invalid(param, "endpoints must equal the bounds"));
    }
    Ok(())
}

fn log_axis(
    low_param: &'static str,
    high_param: &'static str,
    count_param: &'static str,
    low: f64,
    high: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if !(low.is_finite() && low > 0.0) {
        return Err(Error::invalid(low_param, format!("must be positive, got {low}")));
    }
    if !(high.is_finite() && high > 0.0) {
        return Err(Error::invalid(high_param, format!("must be positive, got {high}")));
    }
    if low >= high {
        return Err(Error::invalid(high_param, format!("must exceed {low_param} ({low} >= {high})")));
    }
    if n < 2 {
        return Err(Error::invalid(count_param, format!("needs at least 2 points, got {n}")));
    }
    let (lo, hi) = (low.log10(), high.log10());
    let step = (hi - lo) / (n - 1) as f64;
    let mut values: Vec<f64> = (0..n).map(|i| 10f64.powf(lo + step * i as f64)).collect();
    values[0] = low;
    values[n - 1] = high;
    Ok(values)
}

fn strided(values: &[f64], stride: usize, param: &'static str) -> Result<Vec<f64>> {
    if stride == 0 {
        return Err(Error::invalid(param, "stride must be at least 1"));
    }
    if stride >= values.len() {
        return Err(Error::invalid(
            param,
            format!("stride {stride} on a {}-point axis leaves fewer than 2 points", values.len()),
        ));
    }
    Ok(values.iter().copied().step_by(stride).collect())
}

fn nearest_log(values: &[f64], x: f64) -> Option<usize> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let lx = x.log10();
    values
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (a.1.log10() - lx).abs();
            let db = (b.1.log10() - lx).abs();
            da.total_cmp(&db)
        })
        .map(|(i, _)| i)
}

impl HyperGrid {
    /// Log-spaced grid including both endpoints on each axis.
    pub fn build_log_grid(lr_low: f64, lr_high: f64, n_lr: usize, wd_low: f64, wd_high: f64, n_wd: usize) -> Result<Self> {
        let lr_values = log_axis("lr_low", "lr_high", "n_lr", lr_low, lr_high, n_lr)?;
        let wd_values = log_axis("wd_low", "wd_high", "n_wd", wd_low, wd_high, n_wd)?;
        Ok(Self {
            lr_values,
            wd_values,
            lr_bounds: (lr_low, lr_high),
            wd_bounds: (wd_low, wd_high),
        })
    }

    /// Default search space: both axes span 5e-5..5e-1.
    pub fn default_space(n_lr: usize, n_wd: usize) -> Result<Self> {
        Self::build_log_grid(5e-5, 5e-1, n_lr, 5e-5, 5e-1, n_wd)
    }

    /// Keep every `stride`-th value from index 0 (Python's `[::stride]`).
    pub fn slice(&self, lr_stride: usize, wd_stride: usize) -> Result<Self> {
        let lr_values = strided(&self.lr_values, lr_stride, "lr_stride")?;
        let wd_values = strided(&self.wd_values, wd_stride, "wd_stride")?;
        Ok(Self {
            lr_bounds: (lr_values[0], lr_values[lr_values.len() - 1]),
            wd_bounds: (wd_values[0], wd_values[wd_values.len() - 1]),
            lr_values,
            wd_values,
        })
    }

    pub fn lr_values(&self) -> &[f64] {
        &self.lr_values
    }

    pub fn wd_values(&self) -> &[f64] {
        &self.wd_values
    }

    pub fn lr_bounds(&self) -> (f64, f64) {
        self.lr_bounds
    }

    pub fn wd_bounds(&self) -> (f64, f64) {
        self.wd_bounds
    }

    pub fn n_rows(&self) -> usize {
        self.wd_values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.lr_values.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows(), self.n_cols())
    }

    pub fn len(&self) -> usize {
        self.n_rows() * self.n_cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, cell: GridCell) -> bool {
        cell.row < self.n_rows() && cell.col < self.n_cols()
    }

    pub fn check(&self, cell: GridCell) -> Result<()> {
        if self.contains(cell) {
            Ok(())
        } else {
            Err(Error::CellOutOfBounds {
                cell,
                rows: self.n_rows(),
                cols: self.n_cols(),
            })
        }
    }

    /// `(learning rate, weight decay)` of a cell.
    pub fn cell_params(&self, cell: GridCell) -> Result<(f64, f64)> {
        self.check(cell)?;
        Ok((self.lr_values[cell.col], self.wd_values[cell.row]))
    }

    /// Cell whose values are nearest (in log space) to the given pair.
    pub fn locate(&self, lr: f64, wd: f64) -> Option<GridCell> {
        Some(GridCell::new(nearest_log(&self.wd_values, wd)?, nearest_log(&self.lr_values, lr)?))
    }

    pub fn flat_index(&self, cell: GridCell) -> usize {
        cell.row * self.n_cols() + cell.col
    }

    pub fn cell_at(&self, flat: usize) -> GridCell {
        GridCell::new(flat / self.n_cols(), flat % self.n_cols())
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = GridCell> + '_ {
        (0..self.len()).map(|i| self.cell_at(i))
    }
}
