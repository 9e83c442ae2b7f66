//! Train a small grid and render the four SVG figures next to each other.
//!
//! `cargo run --release --example render_plots -- [out_dir]`

use std::path::PathBuf;

use twin::grid::HyperGrid;
use twin::harness::evaluate_search;
use twin::plot::{heatmap_svg, labels_svg, norm_vs_test_svg};
use twin::scheduler::SchedulerPolicy;
use twin::search::{SearchConfig, TrainerSettings};
use twin::task::TaskSpec;

fn main() -> twin::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("twin-plots"), Into::into);
    std::fs::create_dir_all(&out).map_err(|e| twin::Error::io(&out, e))?;
    let config = SearchConfig {
        grid: HyperGrid::default_space(6, 6)?,
        policy: SchedulerPolicy::fifo(20),
        task: TaskSpec::new(1, 80, 40, 800, 3, 8, 3.0, 0.0),
        trainer: TrainerSettings {
            hidden: vec![32, 32],
            ..TrainerSettings::default()
        },
    };
    let (_, eval) = evaluate_search(&config, None, 0)?;
    let (grid, m, twin) = (&eval.grid, &eval.matrices, &eval.twin);
    let picked = Some(twin.selection.cell);
    let invalid: Vec<bool> = m.valid_mask.iter().map(|v| !v).collect();
    let test = eval.surfaces.test_acc.as_ref().expect("builtin tasks log test accuracy");
    let region = twin.selection.region_id.expect("twin reports its region");

    let figures = [
        ("psi.svg", heatmap_svg(grid, &m.psi, &invalid, picked, "training loss")?),
        ("theta.svg", heatmap_svg(grid, &m.theta, &invalid, picked, "parameter norm")?),
        ("labels.svg", labels_svg(grid, &twin.segments.labels, picked, "regions")?),
        (
            "norm_vs_test.svg",
            norm_vs_test_svg(grid, &m.theta, test, &twin.segments.labels, region, picked, "selected region")?,
        ),
    ];
    for (name, svg) in figures {
        let path = out.join(name);
        std::fs::write(&path, svg).map_err(|e| twin::Error::io(&path, e))?;
        println!("{}", path.display());
    }
    Ok(())
}
