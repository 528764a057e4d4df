use std::io::{BufRead, Write};

use crate::error::{Error, Result};

fn io_err(e: std::io::Error) -> Error {
    Error::io("<curve>", e)
}

fn check_points(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "a curve needs at least 2 points, got {}",
            points.len()
        )));
    }
    Ok(())
}

/// Writes `header.0,header.1` followed by one row per point, 17 significant digits.
pub fn export_curve_csv(points: &[(f64, f64)], header: (&str, &str), mut out: impl Write) -> Result<()> {
    check_points(points)?;
    writeln!(out, "{},{}", header.0, header.1).map_err(io_err)?;
    for (x, y) in points {
        writeln!(out, "{x:.16e},{y:.16e}").map_err(io_err)?;
    }
    Ok(())
}

pub fn parse_curve_csv(source: impl BufRead) -> Result<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    for (i, line) in source.lines().enumerate().skip(1) {
        let line = line.map_err(io_err)?;
        let bad = || Error::NonNumeric {
            line: i + 1,
            cell: line.clone(),
        };
        let (x, y) = line.split_once(',').ok_or_else(bad)?;
        points.push((
            x.parse().map_err(|_| bad())?,
            y.parse().map_err(|_| bad())?,
        ));
    }
    Ok(points)
}

const VIEW: f64 = 600.0;
const MARGIN: f64 = 60.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A single-polyline SVG over a 600x600 view box with unit axes, axis
/// labels and an annotation (typically the area under the curve).
pub fn render_curve_svg(
    points: &[(f64, f64)],
    axis_labels: (&str, &str),
    annotation: &str,
    mut out: impl Write,
) -> Result<()> {
    check_points(points)?;
    let span = VIEW - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + x.clamp(0.0, 1.0) * span;
    let py = |y: f64| VIEW - MARGIN - y.clamp(0.0, 1.0) * span;
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let (x0, y0, x1, y1) = (px(0.0), py(0.0), px(1.0), py(1.0));
    let svg = format!(
        r##"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 600 600" width="600" height="600">
  <rect x="0" y="0" width="600" height="600" fill="white"/>
  <line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black" stroke-width="1.5"/>
  <line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black" stroke-width="1.5"/>
  <text x="{xm}" y="{xl}" text-anchor="middle" font-family="sans-serif" font-size="16">{xlabel}</text>
  <text x="20" y="{ym}" text-anchor="middle" font-family="sans-serif" font-size="16" transform="rotate(-90 20 {ym})">{ylabel}</text>
  <text x="{x1}" y="{ya}" text-anchor="end" font-family="sans-serif" font-size="16">{annotation}</text>
  <polyline points="{points}" fill="none" stroke="#1f77b4" stroke-width="2"/>
</svg>
"##,
        xm = (x0 + x1) / 2.0,
        xl = VIEW - 20.0,
        ym = (y0 + y1) / 2.0,
        ya = y0 - 20.0,
        xlabel = escape(axis_labels.0),
        ylabel = escape(axis_labels.1),
        annotation = escape(annotation),
        points = coords.join(" "),
    );
    out.write_all(svg.as_bytes()).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_format_and_round_trip() {
        let mut buf = Vec::new();
        export_curve_csv(&[(0.0, 0.0), (1.0, 1.0)], ("fpr", "tpr"), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("fpr,tpr\n"));

        let pts = vec![(0.0, 1.0), (1.0 / 3.0, 0.1 + 0.2), (0.999_999_999_7, 2.0f64.sqrt() / 2.0)];
        let mut buf = Vec::new();
        export_curve_csv(&pts, ("recall", "precision"), &mut buf).unwrap();
        let back = parse_curve_csv(buf.as_slice()).unwrap();
        for (a, b) in pts.iter().zip(&back) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_points() {
        assert!(export_curve_csv(&[(0.0, 0.0)], ("x", "y"), Vec::new()).is_err());
        assert!(render_curve_svg(&[], ("x", "y"), "", Vec::new()).is_err());
    }

    #[test]
    fn svg_has_one_polyline() {
        let mut buf = Vec::new();
        render_curve_svg(&[(0.0, 0.0), (0.2, 0.7), (1.0, 1.0)], ("FPR", "TPR"), "AUROC = 0.85 <micro>", &mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches("<polyline").count(), 1);
        assert!(text.contains("viewBox=\"0 0 600 600\""));
        assert!(text.contains("&lt;micro&gt;"));
    }
}
