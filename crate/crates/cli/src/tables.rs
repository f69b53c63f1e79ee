//! Deterministic CSV and SVG emitters for evaluation artifacts.

use cadx_core::evaluation::{ConfusionMatrix, RocPoint};
use std::fmt::Write as _;

/// roc.csv: threshold,fpr,tpr rows in sweep order.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    out
}

/// Confusion CSV: row-major counts block, then the row-normalized block.
pub fn confusion_csv(matrix: &ConfusionMatrix) -> String {
    let mut out = String::from("# counts\n");
    for r in 0..matrix.k {
        let row: Vec<String> = (0..matrix.k)
            .map(|c| matrix.get(r, c).to_string())
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out.push_str("# row_normalized\n");
    for row in matrix.row_normalized() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

const SVG_MARGIN: f64 = 60.0;
const SVG_PLOT: f64 = 480.0;

fn svg_open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    )
}

/// Static ROC plot: axes, diagonal reference, staircase polyline.
pub fn roc_svg(points: &[RocPoint], auc: Option<f64>) -> String {
    let size = SVG_PLOT + 2.0 * SVG_MARGIN;
    let mut out = svg_open(size, size);
    let x = |fpr: f64| SVG_MARGIN + fpr * SVG_PLOT;
    let y = |tpr: f64| SVG_MARGIN + (1.0 - tpr) * SVG_PLOT;
    let _ = writeln!(
        out,
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{SVG_PLOT}\" height=\"{SVG_PLOT}\" fill=\"none\" stroke=\"black\"/>",
        SVG_MARGIN, SVG_MARGIN
    );
    let _ = writeln!(
        out,
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    // Axis ticks at 0, 0.25, .., 1.
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\">{:.2}</text>",
            x(f),
            SVG_MARGIN + SVG_PLOT + 24.0,
            f
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"end\">{:.2}</text>",
            SVG_MARGIN - 8.0,
            y(f) + 5.0,
            f
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"16\" text-anchor=\"middle\">false positive rate</text>",
        SVG_MARGIN + SVG_PLOT / 2.0,
        size - 12.0
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" font-size=\"16\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">true positive rate</text>",
        SVG_MARGIN + SVG_PLOT / 2.0,
        SVG_MARGIN + SVG_PLOT / 2.0
    );
    if let Some(auc) = auc {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"16\">AUC = {auc:.4}</text>",
            SVG_MARGIN + 12.0,
            SVG_MARGIN + 24.0
        );
    }
    if !points.is_empty() {
        let coords: Vec<String> = points
            .iter()
            .map(|p| format!("{:.4},{:.4}", x(p.fpr), y(p.tpr)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"blue\" stroke-width=\"2\"/>",
            coords.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Fine (5x5) and binary (2x2) row-normalized confusion grids side by side.
pub fn confusion_svg(fine: &ConfusionMatrix, binary: &ConfusionMatrix) -> String {
    let cell = 72.0;
    let gap = 120.0;
    let left = 90.0;
    let top = 70.0;
    let width = left + 5.0 * cell + gap + 2.0 * cell + 60.0;
    let height = top + 5.0 * cell + 80.0;
    let mut out = svg_open(width, height);
    draw_matrix(&mut out, fine, left, top, cell, "five-class", &["0", "1", "2", "3", "4"]);
    draw_matrix(
        &mut out,
        binary,
        left + 5.0 * cell + gap,
        top,
        cell,
        "binary",
        &["L", "H"],
    );
    out.push_str("</svg>\n");
    out
}

fn draw_matrix(
    out: &mut String,
    matrix: &ConfusionMatrix,
    x0: f64,
    y0: f64,
    cell: f64,
    title: &str,
    labels: &[&str],
) {
    let normalized = matrix.row_normalized();
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"16\" text-anchor=\"middle\">{title}</text>",
        x0 + matrix.k as f64 * cell / 2.0,
        y0 - 40.0
    );
    for (r, norm_row) in normalized.iter().enumerate() {
        for (c, &v) in norm_row.iter().enumerate() {
            // Darker cell = more mass; text flips to white on dark cells.
            let shade = (255.0 * (1.0 - v)).round() as u8;
            let text_color = if v > 0.5 { "white" } else { "black" };
            let cx = x0 + c as f64 * cell;
            let cy = y0 + r as f64 * cell;
            let _ = writeln!(
                out,
                "<rect x=\"{cx:.1}\" y=\"{cy:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},{shade})\" stroke=\"black\"/>"
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" fill=\"{text_color}\">{}</text>",
                cx + cell / 2.0,
                cy + cell / 2.0 - 4.0,
                matrix.get(r, c)
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" fill=\"{text_color}\">{v:.3}</text>",
                cx + cell / 2.0,
                cy + cell / 2.0 + 14.0
            );
        }
    }
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\">{label}</text>",
            x0 + i as f64 * cell + cell / 2.0,
            y0 - 12.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"end\">{label}</text>",
            x0 - 12.0,
            y0 + i as f64 * cell + cell / 2.0 + 5.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">predicted</text>",
        x0 + matrix.k as f64 * cell / 2.0,
        y0 - 26.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"end\">actual</text>",
        x0 - 12.0,
        y0 - 26.0
    );
}
