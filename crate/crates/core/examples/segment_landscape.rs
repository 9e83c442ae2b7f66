//! Quickshift on a hand-made loss landscape: a low-loss diagonal valley
//! between an underfitting corner and a diverged corner. Prints the regions
//! and the Twin pick for default and oversized parameters.
//!
//! `cargo run --example segment_landscape`

use twin::grid::HyperGrid;
use twin::matrices::LogMatrices;
use twin::quickshift::QuickshiftParams;
use twin::selector::twin_pipeline;

fn show(outcome: &twin::selector::TwinOutcome, n: usize) {
    for r in 0..n {
        let row: Vec<String> = (0..n)
            .map(|c| match outcome.segments.labels[r * n + c] {
                -1 => " .".to_string(),
                l => format!("{l:>2}"),
            })
            .collect();
        println!("  {}", row.join(" "));
    }
    let s = &outcome.selection;
    println!(
        "  {} regions; pick {} (region {:?}, norm {:.2})",
        outcome.segments.n_regions,
        s.cell,
        s.region_id,
        s.norm_at_cell.unwrap_or(f64::NAN)
    );
}

fn main() -> twin::Result<()> {
    let n = 7;
    let grid = HyperGrid::default_space(n, n)?;
    let (mut psi, mut theta) = (vec![0.0; n * n], vec![0.0; n * n]);
    for r in 0..n {
        for c in 0..n {
            let i = r * n + c;
            // small LR and WD underfit; the anti-diagonal band fits well
            let band = (r as f64 + c as f64 - (n - 1) as f64).abs();
            psi[i] = if r + c >= 2 * n - 3 { f64::NAN } else { 0.05 + 0.25 * band };
            theta[i] = 10.0 - r as f64 + 0.3 * c as f64;
        }
    }
    let m = LogMatrices::from_parts(n, n, psi, theta, vec![40; n * n])?;

    println!("default parameters:");
    show(&twin_pipeline(&grid, &m, &QuickshiftParams::default_for(n, n))?, n);
    println!("kernel and link distance = grid side:");
    let big = QuickshiftParams::new(n as f64, n as f64, QuickshiftParams::default_for(n, n).ratio);
    show(&twin_pipeline(&grid, &m, &big)?, n);
    Ok(())
}
