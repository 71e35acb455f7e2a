//! Static SVG rendering of a reconstructed region.

use std::fmt::Write;

use crate::boundary::BoundaryFunction;
use crate::recon::RegionImage;

const SIZE: f64 = 600.0;

/// Filled region `{d > 0}` (cells with `d >= 2` darker), the masked band
/// in grey and the curve `η(Γ)` on top.
pub fn render_region(region: &RegionImage, curve: &BoundaryFunction) -> String {
    let f = &region.field;
    let b = f.bounds;
    let sx = SIZE / (b.x1 - b.x0);
    let sy = SIZE / (b.y1 - b.y0);
    // y grows upwards in the plane, downwards in SVG.
    let map = |x: f64, y: f64| ((x - b.x0) * sx, (b.y1 - y) * sy);
    let (dx, dy) = f.cell_size();
    let (w, h) = (dx * sx, dy * sy);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);

    let mut path = String::new();
    for line in &region.boundary {
        for (k, p) in line.iter().enumerate() {
            let (x, y) = map(p[0], p[1]);
            let _ = write!(path, "{}{x:.2},{y:.2} ", if k == 0 { "M" } else { "L" });
        }
        path.push_str("Z ");
    }
    let _ = writeln!(
        out,
        r##"<path d="{}" fill="#9ecae1" fill-rule="evenodd" stroke="none"/>"##,
        path.trim_end()
    );

    for j in 0..f.ny {
        for i in 0..f.nx {
            let z = f.center(i, j);
            let (x, y) = map(z.re - 0.5 * dx, z.im + 0.5 * dy);
            let fill = if f.masked(i, j) {
                "#d9d9d9"
            } else if f.value(i, j) >= 2 {
                "#3182bd"
            } else {
                continue;
            };
            let opacity = if f.masked(i, j) { 0.5 } else { 1.0 };
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" fill-opacity="{opacity}"/>"#
            );
        }
    }

    let samples = curve.samples_on(1024);
    let mut pts = String::new();
    for v in &samples {
        let (x, y) = map(v.re, v.im);
        let _ = write!(pts, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        out,
        r#"<polygon points="{}" fill="none" stroke="black" stroke-width="1.2"/>"#,
        pts.trim_end()
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::GridSpec;
    use crate::recon::{image_region, winding_field, Bounds};

    #[test]
    fn renders_a_closed_document() {
        let g = GridSpec::unit_circle(4).unwrap();
        let w = BoundaryFunction::mode(g, 1);
        let r = image_region(winding_field(&w, Bounds::around(&w, 0.2), 24)).unwrap();
        let s = render_region(&r, &w);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("<path d=\"M"));
        assert!(s.contains("<polygon"));
    }
}
