//! Self-contained SVG figures: t-SNE scatter, dendrogram and biplot.
//!
//! Marks carry a class (`point`, `leaf`, `arrow`, ...) so tests and style
//! sheets can find them.

use std::fmt::Write;

use coda::cluster::Dendrogram;
use nalgebra::DMatrix;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 560.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn colour(cluster: usize) -> &'static str {
    PALETTE[(cluster.max(1) - 1) % PALETTE.len()]
}

fn open(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text class="title" x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

/// Maps data coordinates onto the plotting area with equal scales on both
/// axes, so distances in the figure are faithful.
struct Frame {
    cx: f64,
    cy: f64,
    scale: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-12);
        let room = (WIDTH - 2.0 * MARGIN).min(HEIGHT - 2.0 * MARGIN);
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            scale: room / span,
        }
    }

    fn x(&self, x: f64) -> f64 {
        WIDTH / 2.0 + (x - self.cx) * self.scale
    }

    fn y(&self, y: f64) -> f64 {
        (HEIGHT + 20.0) / 2.0 - (y - self.cy) * self.scale
    }
}

/// Embedding scatter coloured by cluster, each point labelled.
pub fn scatter(y: &DMatrix<f64>, labels: &[String], clusters: &[usize], title: &str) -> String {
    let mut out = String::new();
    open(&mut out, WIDTH, HEIGHT, title);
    let frame = Frame::fit((0..y.nrows()).map(|i| (y[(i, 0)], y[(i, 1)])));
    for i in 0..y.nrows() {
        let (px, py) = (frame.x(y[(i, 0)]), frame.y(y[(i, 1)]));
        let c = clusters.get(i).copied().unwrap_or(1);
        let _ = writeln!(
            out,
            r#"<circle class="point" cx="{px:.2}" cy="{py:.2}" r="5" fill="{}" stroke="black" stroke-width="0.5"><title>{} (cluster {c})</title></circle>"#,
            colour(c),
            escape(&labels[i])
        );
        let _ = writeln!(
            out,
            r#"<text class="label" x="{:.2}" y="{:.2}">{}</text>"#,
            px + 7.0,
            py + 4.0,
            escape(&labels[i])
        );
    }
    let mut ks: Vec<usize> = clusters.to_vec();
    ks.sort_unstable();
    ks.dedup();
    for (row, k) in ks.iter().enumerate() {
        let ly = 44.0 + 16.0 * row as f64;
        let _ = writeln!(
            out,
            r#"<circle class="legend" cx="{:.1}" cy="{ly:.1}" r="5" fill="{}"/><text x="{:.1}" y="{:.1}">cluster {k}</text>"#,
            WIDTH - 90.0,
            colour(*k),
            WIDTH - 80.0,
            ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Dendrogram with the leaves along the bottom and merge heights on the
/// vertical axis.
pub fn dendrogram(tree: &Dendrogram, title: &str) -> String {
    let n = tree.leaves();
    let order = tree.leaf_order();
    // vertical labels hang below the leaves; leave room for the longest
    let longest = tree.labels().iter().map(|l| l.chars().count()).max().unwrap_or(0);
    let bottom = HEIGHT - 150.0;
    let height = bottom + 20.0 + 6.5 * longest as f64;
    let top = 50.0;
    let step = (WIDTH - 2.0 * MARGIN) / n.max(1) as f64;
    let max_h = tree.merges().iter().map(|m| m.height).fold(0.0, f64::max);
    let scale = if max_h > 0.0 { (bottom - top) / max_h } else { 0.0 };
    let y_of = |h: f64| bottom - h * scale;

    // x position and height of every node, leaves first
    let mut xs = vec![0.0; 2 * n - 1];
    let mut hs = vec![0.0; 2 * n - 1];
    for (pos, &leaf) in order.iter().enumerate() {
        xs[leaf] = MARGIN + step * (pos as f64 + 0.5);
    }

    let mut out = String::new();
    open(&mut out, WIDTH, height, title);
    for (m, merge) in tree.merges().iter().enumerate() {
        let node = n + m;
        xs[node] = (xs[merge.left] + xs[merge.right]) / 2.0;
        hs[node] = merge.height;
        let yh = y_of(merge.height);
        let _ = writeln!(
            out,
            r#"<path class="link" d="M{:.2},{:.2} V{yh:.2} H{:.2} V{:.2}" fill="none" stroke="black"/>"#,
            xs[merge.left],
            y_of(hs[merge.left]),
            xs[merge.right],
            y_of(hs[merge.right])
        );
    }
    for &leaf in &order {
        let x = xs[leaf];
        let _ = writeln!(
            out,
            r#"<text class="leaf" x="{x:.2}" y="{:.2}" transform="rotate(-90 {x:.2} {:.2})" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            bottom + 12.0,
            bottom + 12.0,
            escape(&tree.labels()[leaf])
        );
    }
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{:.1}" y1="{top:.1}" x2="{:.1}" y2="{bottom:.1}" stroke="black"/>"#,
        MARGIN - 10.0,
        MARGIN - 10.0
    );
    for t in 0..=4 {
        let h = max_h * t as f64 / 4.0;
        let y = y_of(h);
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="black"/><text class="tick" x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN - 14.0,
            MARGIN - 10.0,
            MARGIN - 16.0,
            y + 4.0,
            format_tick(h)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Biplot of rows (numbered 1..n in table order) and clr loading arrows.
/// `rows` is n x 2 and `columns` D x 2, as returned by
/// `PcaModel::biplot_coordinates`.
pub fn biplot(rows: &DMatrix<f64>, columns: &DMatrix<f64>, parts: &[String], ratios: (f64, f64), title: &str) -> String {
    let col = |m: &DMatrix<f64>, i: usize, c: usize| if c < m.ncols() { m[(i, c)] } else { 0.0 };
    let pts = (0..rows.nrows())
        .map(|i| (col(rows, i, 0), col(rows, i, 1)))
        .chain((0..columns.nrows()).map(|j| (col(columns, j, 0), col(columns, j, 1))))
        .chain(std::iter::once((0.0, 0.0)));
    let frame = Frame::fit(pts);
    let mut out = String::new();
    open(&mut out, WIDTH, HEIGHT, title);
    let _ = writeln!(
        out,
        r##"<defs><marker id="head" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="7" markerHeight="7" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#b22222"/></marker></defs>"##
    );
    let (ox, oy) = (frame.x(0.0), frame.y(0.0));
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{:.1}" y1="{oy:.2}" x2="{:.1}" y2="{oy:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        MARGIN / 2.0,
        WIDTH - MARGIN / 2.0
    );
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{ox:.2}" y1="{:.1}" x2="{ox:.2}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
        40.0,
        HEIGHT - MARGIN / 2.0
    );
    for i in 0..rows.nrows() {
        let _ = writeln!(
            out,
            r#"<text class="score" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            frame.x(col(rows, i, 0)),
            frame.y(col(rows, i, 1)) + 4.0,
            i + 1
        );
    }
    for (j, name) in parts.iter().enumerate() {
        let (x, y) = (frame.x(col(columns, j, 0)), frame.y(col(columns, j, 1)));
        let _ = writeln!(
            out,
            r##"<line class="arrow" x1="{ox:.2}" y1="{oy:.2}" x2="{x:.2}" y2="{y:.2}" stroke="#b22222" stroke-width="1.5" marker-end="url(#head)"/>"##
        );
        let _ = writeln!(
            out,
            r##"<text class="part" x="{:.2}" y="{:.2}" fill="#b22222">{}</text>"##,
            x + 4.0,
            y - 4.0,
            escape(name)
        );
    }
    let _ = writeln!(
        out,
        r#"<text class="axis-label" x="{:.1}" y="{:.1}" text-anchor="middle">PC1 ({:.1}%)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 8.0,
        100.0 * ratios.0
    );
    let _ = writeln!(
        out,
        r#"<text class="axis-label" x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">PC2 ({:.1}%)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        100.0 * ratios.1
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_escaped() {
        let y = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let s = scatter(&y, &["a<b".into(), "c&d".into()], &[1, 2], "t");
        assert!(s.contains("a&lt;b") && s.contains("c&amp;d"));
        assert!(!s.contains("a<b"));
    }
}
