//! Deterministic SVG figures: value heatmaps, region maps and the
//! norm-versus-test scatter of the selected region.
//!
//! Columns are learning rates (left to right), rows are weight decays (top
//! to bottom). Output depends only on the inputs, so figures can be diffed.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{GridCell, HyperGrid};

/// 16-step viridis-like ramp, low to high.
pub const RAMP: [&str; 16] = [
    "#440154", "#481a6c", "#472f7d", "#414487", "#39568c", "#31688e", "#2a788e", "#23888e", "#1f988b", "#22a884", "#35b779", "#54c568",
    "#7ad151", "#a5db36", "#d2e21b", "#fde725",
];

/// Region colours, cycled by region id.
pub const REGION_PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

const CELL: usize = 40;
const LEFT: usize = 80;
const TOP: usize = 40;
const BOTTOM: usize = 70;
const RIGHT: usize = 30;

/// Ramp step for `t` in [0, 1]: step k covers [k/16, (k+1)/16), 1 maps to 15.
pub fn ramp_index(t: f64) -> usize {
    ((t.clamp(0.0, 1.0) * 16.0).floor() as usize).min(15)
}

/// `5e-5`, `1.08e-3`: scientific notation with trailing zeros trimmed.
pub fn tick_label(v: f64) -> String {
    let s = format!("{v:.2e}");
    let (mantissa, exp) = s.split_once('e').unwrap_or((&s, "0"));
    let mantissa = if mantissa.contains('.') {
        mantissa.trim_end_matches('0').trim_end_matches('.')
    } else {
        mantissa
    };
    format!("{mantissa}e{exp}")
}

fn hatch_defs(out: &mut String) {
    out.push_str(
        "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" \
         patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#ffffff\"/>\
         <line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#999999\" stroke-width=\"2\"/></pattern></defs>\n",
    );
}

fn open_svg(width: usize, height: usize, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    hatch_defs(&mut out);
    let _ = writeln!(out, "<rect width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        width / 2,
        escape(title)
    );
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, grid: &HyperGrid) {
    let (rows, cols) = grid.shape();
    for (c, lr) in grid.lr_values().iter().enumerate() {
        let x = LEFT + c * CELL + CELL / 2;
        let y = TOP + rows * CELL + 14;
        let _ = writeln!(
            out,
            "<text class=\"tick-x\" x=\"{x}\" y=\"{y}\" text-anchor=\"end\" transform=\"rotate(-45 {x} {y})\">{}</text>",
            tick_label(*lr)
        );
    }
    for (r, wd) in grid.wd_values().iter().enumerate() {
        let y = TOP + r * CELL + CELL / 2 + 4;
        let _ = writeln!(
            out,
            "<text class=\"tick-y\" x=\"{}\" y=\"{y}\" text-anchor=\"end\">{}</text>",
            LEFT - 6,
            tick_label(*wd)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">learning rate</text>",
        LEFT + cols * CELL / 2,
        TOP + rows * CELL + BOTTOM - 8
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {0})\">weight decay</text>",
        TOP + rows * CELL / 2
    );
}

fn cell_rect(out: &mut String, cell: GridCell, fill: &str, class: &str) {
    let _ = writeln!(
        out,
        "<rect class=\"{class}\" x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\"/>",
        LEFT + cell.col * CELL,
        TOP + cell.row * CELL
    );
}

fn outline(out: &mut String, cell: GridCell) {
    let _ = writeln!(
        out,
        "<rect class=\"selected\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#ff0000\" stroke-width=\"3\"/>",
        LEFT + cell.col * CELL + 1,
        TOP + cell.row * CELL + 1,
        CELL - 2,
        CELL - 2
    );
}

fn check_len(grid: &HyperGrid, len: usize, what: &'static str) -> Result<()> {
    if len != grid.len() {
        return Err(Error::invalid(what, format!("expected {} values, got {len}", grid.len())));
    }
    Ok(())
}

/// Heatmap of `values`; masked or non-finite cells are hatched. Colours are
/// min-max scaled over the remaining cells.
pub fn heatmap_svg(grid: &HyperGrid, values: &[f64], mask: &[bool], selected: Option<GridCell>, title: &str) -> Result<String> {
    check_len(grid, values.len(), "values")?;
    check_len(grid, mask.len(), "mask")?;
    let (rows, cols) = grid.shape();
    let shown = |i: usize| !mask[i] && values[i].is_finite();
    let (lo, hi) = (0..values.len())
        .filter(|&i| shown(i))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            (lo.min(values[i]), hi.max(values[i]))
        });
    let mut out = open_svg(LEFT + cols * CELL + RIGHT, TOP + rows * CELL + BOTTOM, title);
    for (i, cell) in grid.cells().enumerate() {
        if !shown(i) {
            cell_rect(&mut out, cell, "url(#hatch)", "masked");
            continue;
        }
        let t = if hi > lo { (values[i] - lo) / (hi - lo) } else { 0.5 };
        cell_rect(&mut out, cell, RAMP[ramp_index(t)], "cell");
    }
    axes(&mut out, grid);
    if let Some(cell) = selected {
        grid.check(cell)?;
        outline(&mut out, cell);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Region map: one palette colour per region, `-1` cells hatched.
pub fn labels_svg(grid: &HyperGrid, labels: &[i64], selected: Option<GridCell>, title: &str) -> Result<String> {
    check_len(grid, labels.len(), "labels")?;
    let (rows, cols) = grid.shape();
    let mut out = open_svg(LEFT + cols * CELL + RIGHT, TOP + rows * CELL + BOTTOM, title);
    for (i, cell) in grid.cells().enumerate() {
        match labels[i] {
            l if l < 0 => cell_rect(&mut out, cell, "url(#hatch)", "masked"),
            l => cell_rect(
                &mut out,
                cell,
                REGION_PALETTE[l as usize % REGION_PALETTE.len()],
                &format!("region-{l}"),
            ),
        }
        if labels[i] >= 0 {
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#ffffff\">{}</text>",
                LEFT + cell.col * CELL + CELL / 2,
                TOP + cell.row * CELL + CELL / 2 + 4,
                labels[i]
            );
        }
    }
    axes(&mut out, grid);
    if let Some(cell) = selected {
        grid.check(cell)?;
        outline(&mut out, cell);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Parameter norm against test accuracy for the cells of `region`.
pub fn norm_vs_test_svg(
    grid: &HyperGrid,
    theta: &[f64],
    test_acc: &[f64],
    labels: &[i64],
    region: usize,
    selected: Option<GridCell>,
    title: &str,
) -> Result<String> {
    check_len(grid, theta.len(), "theta")?;
    check_len(grid, test_acc.len(), "test_acc")?;
    check_len(grid, labels.len(), "labels")?;
    let members: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == region as i64 && theta[i].is_finite() && test_acc[i].is_finite())
        .collect();
    if members.is_empty() {
        return Err(Error::invalid("region", format!("region {region} has no plottable cells")));
    }
    let (w, h) = (360usize, 260usize);
    let (x0, y0, pw, ph) = (60.0, 40.0, 270.0, 170.0);
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (nlo, nhi) = span(&mut members.iter().map(|&i| theta[i]));
    let (alo, ahi) = span(&mut members.iter().map(|&i| test_acc[i]));
    let px = |v: f64| x0 + (v - nlo) / (nhi - nlo) * pw;
    let py = |v: f64| y0 + ph - (v - alo) / (ahi - alo) * ph;

    let mut out = open_svg(w, h, title);
    let _ = writeln!(
        out,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#000000\"/>"
    );
    for (v, anchor, x, y) in [(nlo, "start", x0, y0 + ph + 16.0), (nhi, "end", x0 + pw, y0 + ph + 16.0)] {
        let _ = writeln!(out, "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\">{v:.3}</text>");
    }
    for (v, y) in [(alo, y0 + ph), (ahi, y0 + 8.0)] {
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{y:.2}\" text-anchor=\"end\">{v:.1}</text>", x0 - 4.0);
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">parameter norm</text>",
        x0 + pw / 2.0,
        h - 12
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{0:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {0:.2})\">test accuracy (%)</text>",
        y0 + ph / 2.0
    );
    for &i in &members {
        let cell = grid.cell_at(i);
        let is_sel = selected == Some(cell);
        let _ = writeln!(
            out,
            "<circle class=\"point\" data-cell=\"{},{}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"{}\" fill=\"{}\"/>",
            cell.row,
            cell.col,
            px(theta[i]),
            py(test_acc[i]),
            if is_sel { 6 } else { 4 },
            if is_sel {
                "#ff0000"
            } else {
                REGION_PALETTE[region % REGION_PALETTE.len()]
            }
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
