use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_len, ProjectionError};

/// Twenty distinguishable colours for highlighted documents.
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2", "#393b79", "#dbdb8d", "#9edae5",
];
const BACKGROUND_POINT: &str = "#d0d0d0";
const SIDE: f64 = 800.0;
const MARGIN: f64 = 20.0;

/// Pick up to `count` distinct labels at random.
pub fn select_highlight(labels: &[String], count: usize, seed: u64) -> Vec<String> {
    let mut unique: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    unique.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    unique.truncate(count);
    unique
}

struct Frame {
    min: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a [f64; 2]>) -> Frame {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let span = (max[0] - min[0]).max(max[1] - min[1]);
        let scale = if span.is_finite() && span > 0.0 { (SIDE - 2.0 * MARGIN) / span } else { 1.0 };
        Frame { min, scale }
    }

    fn map(&self, p: &[f64; 2]) -> (f64, f64) {
        if !self.min[0].is_finite() {
            return (SIDE / 2.0, SIDE / 2.0);
        }
        (
            MARGIN + (p[0] - self.min[0]) * self.scale,
            SIDE - MARGIN - (p[1] - self.min[1]) * self.scale,
        )
    }
}

fn colours(highlight: &[String]) -> HashMap<&str, &'static str> {
    highlight
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), PALETTE[i % PALETTE.len()]))
        .collect()
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIDE}" height="{SIDE}" viewBox="0 0 {SIDE} {SIDE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

/// Grey points, with the labels in `highlight` drawn on top in colour.
pub fn render_scatter_svg(
    coords: &[[f64; 2]],
    labels: &[String],
    highlight: &[String],
) -> Result<String, ProjectionError> {
    check_len("labels", labels.len(), coords.len())?;
    let frame = Frame::fit(coords.iter());
    let colour = colours(highlight);
    let mut out = String::new();
    header(&mut out);
    // Background first so highlighted points are not hidden.
    for pass in [false, true] {
        for (p, l) in coords.iter().zip(labels) {
            let c = colour.get(l.as_str());
            if c.is_some() != pass {
                continue;
            }
            let (x, y) = frame.map(p);
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="{}" fill="{}"/>"#,
                if pass { 3 } else { 2 },
                c.copied().unwrap_or(BACKGROUND_POINT)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// One segment per row from its position in `from` to its position in
/// `to`, coloured like the scatter plot.
pub fn render_displacement_svg(
    from: &[[f64; 2]],
    to: &[[f64; 2]],
    labels: &[String],
    highlight: &[String],
) -> Result<String, ProjectionError> {
    check_len("target coordinates", to.len(), from.len())?;
    check_len("labels", labels.len(), from.len())?;
    let frame = Frame::fit(from.iter().chain(to));
    let colour = colours(highlight);
    let mut out = String::new();
    header(&mut out);
    for ((a, b), l) in from.iter().zip(to).zip(labels) {
        let c = colour.get(l.as_str()).copied().unwrap_or(BACKGROUND_POINT);
        let (x1, y1) = frame.map(a);
        let (x2, y2) = frame.map(b);
        let _ = writeln!(
            out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{c}" stroke-width="1"/>"#
        );
        let _ = writeln!(out, r#"<circle cx="{x2:.2}" cy="{y2:.2}" r="2" fill="{c}"/>"#);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<(), ProjectionError> {
    std::fs::write(path, svg)?;
    Ok(())
}

/// CSV with header `row_id,label,x,y`.
pub fn write_coords_csv(
    path: &Path,
    row_ids: &[u64],
    labels: &[String],
    coords: &[[f64; 2]],
) -> Result<(), ProjectionError> {
    check_len("row ids", row_ids.len(), coords.len())?;
    check_len("labels", labels.len(), coords.len())?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row_id", "label", "x", "y"])?;
    for ((id, l), p) in row_ids.iter().zip(labels).zip(coords) {
        w.write_record([id.to_string(), l.clone(), p[0].to_string(), p[1].to_string()])?;
    }
    w.flush()?;
    Ok(())
}
