//! SVG line plots for planar curve frames.
//!
//! The path data contains the vertex coordinates verbatim (same shortest
//! round-trip formatting as the `.curve` files), so a plot can be parsed
//! back into the exact polygon it shows. The y-axis flip needed for screen
//! coordinates happens in a group transform, never in the numbers.

use geomatch::{ShapeKind, SimplicialShape};
use std::fmt::Write as _;

/// Render a planar curve as a standalone SVG document.
pub fn curve_svg(shape: &SimplicialShape) -> String {
    assert_eq!(shape.kind(), ShapeKind::Curve);
    assert_eq!(shape.dim(), 2);
    let verts = shape.vertices();
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in verts.chunks_exact(2) {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    let extent = (max_x - min_x).max(max_y - min_y).max(1e-9);
    let margin = 0.05 * extent;
    // the group is mirrored in y, so the viewBox covers [-max_y, -min_y]
    let vb = format!(
        "{} {} {} {}",
        min_x - margin,
        -max_y - margin,
        (max_x - min_x) + 2.0 * margin,
        (max_y - min_y) + 2.0 * margin
    );

    let mut d = String::new();
    let mut subpath_start: Option<usize> = None;
    let mut last: Option<usize> = None;
    for s in shape.simplices().chunks_exact(2) {
        let (i, j) = (s[0], s[1]);
        if last != Some(i) {
            let p = &verts[2 * i..2 * i + 2];
            if !d.is_empty() {
                d.push(' ');
            }
            let _ = write!(d, "M {} {}", p[0], p[1]);
            subpath_start = Some(i);
        }
        if subpath_start == Some(j) {
            d.push_str(" Z");
            last = None;
            subpath_start = None;
        } else {
            let p = &verts[2 * j..2 * j + 2];
            let _ = write!(d, " L {} {}", p[0], p[1]);
            last = Some(j);
        }
    }

    let stroke = 0.01 * extent;
    format!(
        concat!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" ",
            "viewBox=\"{vb}\" preserveAspectRatio=\"xMidYMid meet\">\n",
            "  <g transform=\"scale(1,-1)\" fill=\"none\" stroke=\"#1f6feb\" ",
            "stroke-width=\"{sw}\" stroke-linejoin=\"round\" stroke-linecap=\"round\">\n",
            "    <path d=\"{d}\"/>\n",
            "  </g>\n",
            "</svg>\n"
        ),
        vb = vb,
        sw = stroke,
        d = d
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use geomatch::fixtures;

    #[test]
    fn closed_curve_path_uses_z_and_verbatim_coordinates() {
        let shape = fixtures::circle(8, 1.0, (0.25, -0.5));
        let svg = curve_svg(&shape);
        assert!(svg.contains(" Z\""));
        for p in shape.vertices().chunks_exact(2) {
            let needle = format!("{} {}", p[0], p[1]);
            assert!(svg.contains(&needle), "missing vertex '{needle}'");
        }
    }

    #[test]
    fn open_curve_path_has_no_z() {
        let shape = fixtures::arc(7);
        let svg = curve_svg(&shape);
        assert!(!svg.contains('Z'));
        assert_eq!(svg.matches("M ").count(), 1);
        assert_eq!(svg.matches("L ").count(), 6);
    }
}
