//! Planar plots in canonical coordinates.
//!
//! Everything is drawn in covering-space coordinates together with its
//! copies shifted by one circumference on each circle dimension, then
//! clipped to the fundamental domain. A path crossing the seam therefore
//! shows up as two pieces on opposite edges.

use std::fmt::Write;

use geoplan_core::ggcs::GgcsGraph;
use geoplan_core::regions::ConvexObstacle;
use geoplan_core::{Factor, FlatManifold};

const SIZE: f64 = 600.0;
const PAD: f64 = 20.0;

struct Frame {
    lo: [f64; 2],
    span: [f64; 2],
    periods: [Option<f64>; 2],
}

impl Frame {
    fn new(m: &FlatManifold, fallback: &[[f64; 2]]) -> Frame {
        let mut lo = [0.0; 2];
        let mut span = [1.0; 2];
        let mut periods = [None; 2];
        for d in 0..2 {
            match *m.factor(d) {
                Factor::Circle { circumference } => {
                    span[d] = circumference;
                    periods[d] = Some(circumference);
                }
                Factor::Line { lo: a, hi: b } if a.is_finite() && b.is_finite() => {
                    lo[d] = a;
                    span[d] = b - a;
                }
                Factor::Line { .. } => {
                    let a = fallback.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
                    let b = fallback.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
                    if a.is_finite() && b > a {
                        lo[d] = a;
                        span[d] = b - a;
                    }
                }
            }
        }
        Frame { lo, span, periods }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let scale = SIZE - 2.0 * PAD;
        (
            PAD + (p[0] - self.lo[0]) / self.span[0] * scale,
            SIZE - PAD - (p[1] - self.lo[1]) / self.span[1] * scale,
        )
    }

    /// Shifts that bring copies of a shape into view.
    fn copies(&self) -> Vec<[f64; 2]> {
        let ks = |d: usize| -> Vec<f64> {
            match self.periods[d] {
                Some(c) => vec![-c, 0.0, c],
                None => vec![0.0],
            }
        };
        let mut out = Vec::new();
        for a in ks(0) {
            for b in ks(1) {
                out.push([a, b]);
            }
        }
        out
    }

    fn points(&self, pts: &[[f64; 2]], shift: [f64; 2]) -> String {
        let mut s = String::new();
        for p in pts {
            let (x, y) = self.px([p[0] + shift[0], p[1] + shift[1]]);
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        s.trim_end().to_string()
    }
}

const PASTELS: [&str; 12] = [
    "#aec7e8", "#ffbb78", "#98df8a", "#c5b0d5", "#c49c94", "#f7b6d2",
    "#dbdb8d", "#9edae5", "#fdd0a2", "#c7e9c0", "#dadaeb", "#fcbba1",
];

fn pastel(i: usize) -> &'static str {
    PASTELS[i % PASTELS.len()]
}

fn hull(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().map(|v| [v[0], v[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Obstacles red, regions pastel, overlaps dashed grey between region
/// centers, path black, start and goal as dots.
pub fn render(
    graph: &GgcsGraph,
    obstacles: &[ConvexObstacle],
    path: Option<&[Vec<f64>]>,
) -> String {
    let m = &graph.manifold;
    let region_polys: Vec<Vec<[f64; 2]>> = graph.regions.iter().map(|r| r.polytope.vertices_2d()).collect();
    let all: Vec<[f64; 2]> = region_polys.iter().flatten().copied().collect();
    let frame = Frame::new(m, &all);
    let copies = frame.copies();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let (x0, y1) = frame.px(frame.lo);
    let (x1, y0) = frame.px([frame.lo[0] + frame.span[0], frame.lo[1] + frame.span[1]]);
    let _ = writeln!(
        s,
        r#"<defs><clipPath id="domain"><rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}"/></clipPath></defs>"#,
        x1 - x0,
        y1 - y0
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g clip-path="url(#domain)">"#);

    for (i, poly) in region_polys.iter().enumerate() {
        for &c in &copies {
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.6" stroke="grey" stroke-width="0.5"/>"#,
                frame.points(poly, c),
                pastel(i)
            );
        }
    }
    for o in obstacles {
        let h = hull(&o.vertices);
        for &c in &copies {
            let _ = writeln!(s, r##"<polygon points="{}" fill="#d62728"/>"##, frame.points(&h, c));
        }
    }
    let centers: Vec<[f64; 2]> = graph
        .regions
        .iter()
        .map(|r| match r.polytope.chebyshev_center() {
            Ok(Some((x, _))) => [x[0], x[1]],
            _ => [r.seed.coords[0], r.seed.coords[1]],
        })
        .collect();
    for (u, v, t) in graph.overlap_pairs() {
        // v's center in u's chart is x_v - t
        let seg = [centers[u], [centers[v][0] - t[0], centers[v][1] - t[1]]];
        for &c in &copies {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="grey" stroke-width="1" stroke-dasharray="4,3"/>"#,
                frame.points(&seg, c)
            );
        }
    }
    if let Some(path) = path {
        let pts: Vec<[f64; 2]> = path.iter().map(|p| [p[0], p[1]]).collect();
        for &c in &copies {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2"/>"#,
                frame.points(&pts, c)
            );
        }
    }
    let _ = writeln!(s, "</g>");
    for (p, color) in [(&graph.start, "#2ca02c"), (&graph.goal, "#1f77b4")] {
        let (x, y) = frame.px([p.coords[0], p.coords[1]]);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
    }
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
        x1 - x0,
        y1 - y0
    );
    s.push_str("</svg>\n");
    s
}
