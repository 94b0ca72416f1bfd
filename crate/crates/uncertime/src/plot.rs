//! Minimal SVG renderers for the calibration series, retention curves and
//! the uncertainty heatmap. Plot-ready CSVs are the primary output; these
//! charts are a convenience behind `--svg`.

use std::fmt::Write as _;
use std::path::Path;

use uncertime_core::eval::UncertaintyHeatmap;

use crate::CliError;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn axis_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Line chart of one or more named series.
pub fn line_chart(
    path: impl AsRef<Path>,
    title: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<(), CliError> {
    let (x_lo, x_hi) = axis_bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y_lo, y_hi) = axis_bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{W}' height='{H}' viewBox='0 0 {W} {H}'>"
    );
    let _ = write!(svg, "<rect width='{W}' height='{H}' fill='white'/>");
    let _ = write!(
        svg,
        "<text x='{}' y='20' text-anchor='middle' font-size='14'>{title}</text>",
        W / 2.0
    );
    // Axes.
    let _ = write!(
        svg,
        "<line x1='{m}' y1='{b}' x2='{r}' y2='{b}' stroke='black'/><line x1='{m}' y1='{t}' x2='{m}' y2='{b}' stroke='black'/>",
        m = MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        b = H - MARGIN
    );
    let _ = write!(
        svg,
        "<text x='{m}' y='{y}' font-size='10'>{lo:.3}</text><text x='{m}' y='{t}' font-size='10'>{hi:.3}</text>",
        m = 4.0,
        y = H - MARGIN,
        t = MARGIN,
        lo = y_lo,
        hi = y_hi
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (j, (x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(*x), sy(*y));
        }
        let _ = write!(svg, "<path d='{d}' fill='none' stroke='{color}' stroke-width='1.5'/>");
        let _ = write!(
            svg,
            "<text x='{x}' y='{y}' font-size='11' fill='{color}'>{name}</text>",
            x = W - MARGIN + 4.0,
            y = MARGIN + 14.0 * i as f64
        );
    }
    svg.push_str("</svg>");
    std::fs::write(path.as_ref(), svg).map_err(CliError::io(path.as_ref()))
}

/// Grid heatmap: color encodes mean total uncertainty, cell labels carry
/// the frequency.
pub fn heatmap_chart(path: impl AsRef<Path>, hm: &UncertaintyHeatmap) -> Result<(), CliError> {
    let rows = hm.spec.day_bins();
    let cols = hm.spec.prefix_cap;
    let cell_w = (W - 2.0 * MARGIN) / cols as f64;
    let cell_h = (H - 2.0 * MARGIN) / rows as f64;
    let max_u = hm
        .cells
        .iter()
        .map(|c| c.mean_total_std)
        .fold(0.0f64, f64::max)
        .max(1e-12);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{W}' height='{H}' viewBox='0 0 {W} {H}'>"
    );
    let _ = write!(svg, "<rect width='{W}' height='{H}' fill='white'/>");
    for cell in &hm.cells {
        // Blue (low) to red (high).
        let t = cell.mean_total_std / max_u;
        let r = (255.0 * t) as u8;
        let b = (255.0 * (1.0 - t)) as u8;
        let x = MARGIN + cell.prefix_bin as f64 * cell_w;
        // Day bin 0 at the bottom.
        let y = H - MARGIN - (cell.day_bin + 1) as f64 * cell_h;
        let _ = write!(
            svg,
            "<rect x='{x:.1}' y='{y:.1}' width='{cell_w:.1}' height='{cell_h:.1}' fill='rgb({r},80,{b})'/>"
        );
        let _ = write!(
            svg,
            "<text x='{:.1}' y='{:.1}' font-size='9' fill='white' text-anchor='middle'>{}</text>",
            x + cell_w / 2.0,
            y + cell_h / 2.0,
            cell.count
        );
    }
    for p in 0..cols {
        let _ = write!(
            svg,
            "<text x='{:.1}' y='{:.1}' font-size='10' text-anchor='middle'>{}</text>",
            MARGIN + (p as f64 + 0.5) * cell_w,
            H - MARGIN + 14.0,
            p + 1
        );
    }
    for d in 0..rows {
        let _ = write!(
            svg,
            "<text x='2' y='{:.1}' font-size='9'>{}</text>",
            H - MARGIN - (d as f64 + 0.5) * cell_h,
            hm.spec.day_label(d)
        );
    }
    svg.push_str("</svg>");
    std::fs::write(path.as_ref(), svg).map_err(CliError::io(path.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_emits_svg() {
        let path = std::env::temp_dir().join(format!("uncertime-plot-{}.svg", std::process::id()));
        line_chart(
            &path,
            "demo",
            &[("a".to_string(), vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)])],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("demo"));
        std::fs::remove_file(path).ok();
    }
}
