//! Build the log-spaced LR x WD grid, walk its cells, and thin it out.
//!
//! `cargo run --example log_grid`

use twin::grid::HyperGrid;
use twin::plot::tick_label;

fn main() -> twin::Result<()> {
    let grid = HyperGrid::default_space(7, 7)?;
    let fmt = |v: &[f64]| v.iter().map(|x| tick_label(*x)).collect::<Vec<_>>().join(" ");
    println!("lr: {}", fmt(grid.lr_values()));
    println!("wd: {}", fmt(grid.wd_values()));

    // rows are weight decays, columns learning rates, flat index row-major
    for cell in grid.cells().step_by(8) {
        let (lr, wd) = grid.cell_params(cell)?;
        println!("cell {cell} -> flat {:>2}  lr {lr:.2e}  wd {wd:.2e}", grid.flat_index(cell));
    }

    for k in [2, 3] {
        let sub = grid.slice(k, k)?;
        println!("[::{k}] -> {}x{}  lr {}", sub.n_rows(), sub.n_cols(), fmt(sub.lr_values()));
    }
    Ok(())
}
