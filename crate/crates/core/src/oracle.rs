//! Independent reference computations: a fine-grid shortest path on planar
//! flat manifolds and the spherical parallelogramoid.
//!
//! Nothing here shares code with the planner beyond the manifold type, so
//! the two can be checked against each other.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::{Factor, FlatManifold, MPoint, ManifoldError};
use crate::regions::ConvexObstacle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid oracle needs a 2-dimensional manifold, got {0}")]
    NotPlanar(usize),
    #[error("grid resolution {0} is below 16")]
    ResolutionTooLow(usize),
    #[error("dimension {0} is an unbounded line")]
    Unbounded(usize),
    #[error("wrap flags do not match the manifold: {0}")]
    WrapMismatch(String),
    #[error("{which} point has no free grid node nearby")]
    Blocked { which: &'static str },
    #[error("no grid path between start and goal")]
    NoGridPath,
    #[error("epsilon {0} outside (0, 0.5)")]
    EpsilonOutOfRange(f64),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

impl Connectivity {
    /// Worst-case ratio of grid path length to Euclidean length, minus one.
    pub fn metric_overestimate(self) -> f64 {
        match self {
            // 1/cos(22.5°) and 1/cos(atan(1/2)/2) to four places
            Connectivity::Eight => 0.0824,
            Connectivity::Sixteen => 0.028,
        }
    }

    fn steps(self) -> &'static [(i64, i64)] {
        const EIGHT: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        const SIXTEEN: [(i64, i64); 16] = [
            (1, 0), (-1, 0), (0, 1), (0, -1),
            (1, 1), (1, -1), (-1, 1), (-1, -1),
            (1, 2), (1, -2), (-1, 2), (-1, -2),
            (2, 1), (2, -1), (-2, 1), (-2, -1),
        ];
        match self {
            Connectivity::Eight => &EIGHT,
            Connectivity::Sixteen => &SIXTEEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: usize,
    pub connectivity: Connectivity,
    /// Periodic wrap per dimension; only circle dimensions may wrap.
    pub wrap: Vec<bool>,
}

impl GridSpec {
    /// `n` nodes per dimension, wrapping exactly on the circle factors.
    pub fn for_manifold(m: &FlatManifold, n: usize, connectivity: Connectivity) -> Self {
        GridSpec {
            resolution: n,
            connectivity,
            wrap: m.factors().iter().map(|f| f.is_circle()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub length: f64,
    /// Start, visited grid nodes, goal; canonical coordinates.
    pub polyline: Vec<Vec<f64>>,
}

struct Axis {
    lo: f64,
    step: f64,
    n: usize,
    period: Option<f64>,
}

impl Axis {
    fn coord(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }

    /// Neighbor index `i + di`, wrapped or rejected at the ends.
    fn shift(&self, i: usize, di: i64) -> Option<usize> {
        let j = i as i64 + di;
        if self.period.is_some() {
            Some(j.rem_euclid(self.n as i64) as usize)
        } else {
            (0..self.n as i64).contains(&j).then_some(j as usize)
        }
    }

    /// Distance between coordinates along this axis.
    fn gap(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        match self.period {
            Some(c) => {
                let w = d.rem_euclid(c);
                w.min(c - w)
            }
            None => d,
        }
    }
}

/// Convex polygon with counter-clockwise vertices.
struct Polygon {
    ccw: Vec<[f64; 2]>,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Polygon {
    fn hull(points: &[Vec<f64>]) -> Polygon {
        let mut pts: Vec<[f64; 2]> = points.iter().map(|v| [v[0], v[1]]).collect();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup();
        let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
            (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
        };
        let mut hull: Vec<[f64; 2]> = Vec::new();
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
                Box::new(pts.iter())
            } else {
                Box::new(pts.iter().rev())
            };
            for &p in iter {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                    hull.pop();
                }
                hull.push(p);
            }
            hull.pop();
        }
        if hull.is_empty() {
            hull = pts;
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &hull {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        Polygon { ccw: hull, lo, hi }
    }

    /// Closed containment; degenerate hulls contain nothing.
    fn contains(&self, x: [f64; 2]) -> bool {
        let n = self.ccw.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.ccw[i];
            let b = self.ccw[(i + 1) % n];
            (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]) >= 0.0
        })
    }
}

fn collides(polys: &[Polygon], axes: &[Axis; 2], x: [f64; 2]) -> bool {
    polys.iter().any(|poly| {
        let range = |d: usize| -> (i64, i64) {
            match axes[d].period {
                Some(c) => (
                    ((poly.lo[d] - x[d]) / c).ceil() as i64,
                    ((poly.hi[d] - x[d]) / c).floor() as i64,
                ),
                None => (0, 0),
            }
        };
        let (r0, r1) = (range(0), range(1));
        (r0.0..=r0.1).any(|k0| {
            (r1.0..=r1.1).any(|k1| {
                let y = [
                    x[0] + axes[0].period.map_or(0.0, |c| k0 as f64 * c),
                    x[1] + axes[1].period.map_or(0.0, |c| k1 as f64 * c),
                ];
                poly.contains(y)
            })
        })
    })
}

/// Dijkstra over free grid nodes, wrapping on circle dimensions.
///
/// Only nodes are collision-checked. The start and goal snap to the nearest
/// free node and the snapping distances are added to the length.
pub fn grid_shortest_path(
    obstacles: &[ConvexObstacle],
    m: &FlatManifold,
    p: &MPoint,
    q: &MPoint,
    spec: &GridSpec,
) -> Result<GridPath, OracleError> {
    if m.dim() != 2 {
        return Err(OracleError::NotPlanar(m.dim()));
    }
    if spec.resolution < 16 {
        return Err(OracleError::ResolutionTooLow(spec.resolution));
    }
    if spec.wrap.len() != 2 {
        return Err(OracleError::WrapMismatch(format!("{} flags for 2 dimensions", spec.wrap.len())));
    }
    let p = m.canonicalize(&p.coords)?;
    let q = m.canonicalize(&q.coords)?;
    let n = spec.resolution;
    let mut axes = Vec::with_capacity(2);
    for d in 0..2 {
        let f = m.factor(d);
        let axis = match (f.period(), spec.wrap[d]) {
            (Some(c), true) => Axis {
                lo: 0.0,
                step: c / n as f64,
                n,
                period: Some(c),
            },
            (Some(c), false) => Axis {
                lo: 0.0,
                step: c / (n - 1) as f64,
                n,
                period: None,
            },
            (None, true) => {
                return Err(OracleError::WrapMismatch(format!("dimension {d} is a line")));
            }
            (None, false) => {
                let Factor::Line { lo, hi } = *f else { unreachable!() };
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(OracleError::Unbounded(d));
                }
                Axis {
                    lo,
                    step: (hi - lo) / (n - 1) as f64,
                    n,
                    period: None,
                }
            }
        };
        axes.push(axis);
    }
    let axes: [Axis; 2] = axes.try_into().ok().expect("two axes");
    let polys: Vec<Polygon> = obstacles.iter().map(|o| Polygon::hull(&o.vertices)).collect();

    let idx = |i: usize, j: usize| i * n + j;
    let node = |k: usize| [axes[0].coord(k / n), axes[1].coord(k % n)];
    let free: Vec<bool> = (0..n * n).map(|k| !collides(&polys, &axes, node(k))).collect();

    let snap = |x: &MPoint, which: &'static str| -> Result<(usize, f64), OracleError> {
        let nearest = |d: usize| -> i64 { ((x.coords[d] - axes[d].lo) / axes[d].step).round() as i64 };
        let (ci, cj) = (nearest(0), nearest(1));
        let mut best: Option<(usize, f64)> = None;
        for di in -3..=3 {
            for dj in -3..=3 {
                let (Some(i), Some(j)) = (axes[0].shift(0, ci + di), axes[1].shift(0, cj + dj)) else {
                    continue;
                };
                let k = idx(i, j);
                if !free[k] {
                    continue;
                }
                let y = node(k);
                let d = axes[0].gap(x.coords[0], y[0]).hypot(axes[1].gap(x.coords[1], y[1]));
                if best.is_none_or(|(_, b)| d < b) {
                    best = Some((k, d));
                }
            }
        }
        best.ok_or(OracleError::Blocked { which })
    };
    let (s, snap_p) = snap(&p, "start")?;
    let (t, snap_q) = snap(&q, "goal")?;

    let steps: Vec<(i64, i64, f64)> = spec
        .connectivity
        .steps()
        .iter()
        .map(|&(di, dj)| (di, dj, (di as f64 * axes[0].step).hypot(dj as f64 * axes[1].step)))
        .collect();
    let mut dist = vec![f64::INFINITY; n * n];
    let mut prev = vec![usize::MAX; n * n];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Reverse((Key(0.0), s)));
    while let Some(Reverse((Key(d), k))) = heap.pop() {
        if d > dist[k] {
            continue;
        }
        if k == t {
            break;
        }
        let (i, j) = (k / n, k % n);
        for &(di, dj, w) in &steps {
            let (Some(a), Some(b)) = (axes[0].shift(i, di), axes[1].shift(j, dj)) else {
                continue;
            };
            let nb = idx(a, b);
            if !free[nb] {
                continue;
            }
            let nd = d + w;
            if nd < dist[nb] {
                dist[nb] = nd;
                prev[nb] = k;
                heap.push(Reverse((Key(nd), nb)));
            }
        }
    }
    if !dist[t].is_finite() {
        return Err(OracleError::NoGridPath);
    }
    let mut nodes = vec![t];
    while *nodes.last().unwrap() != s {
        nodes.push(prev[*nodes.last().unwrap()]);
    }
    nodes.reverse();
    let mut polyline = vec![p.coords.clone()];
    polyline.extend(nodes.into_iter().map(|k| node(k).to_vec()));
    polyline.push(q.coords.clone());
    Ok(GridPath {
        length: snap_p + dist[t] + snap_q,
        polyline,
    })
}

#[derive(Debug, Clone, Copy)]
struct Key(f64);
impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Quadrilateral on the unit sphere built from a geodesic base `A1 B1` of
/// length `epsilon` and sides of length `epsilon` along the transported
/// normal, in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parallelogramoid {
    pub epsilon: f64,
    pub a0: [f64; 3],
    pub a1: [f64; 3],
    pub a2: [f64; 3],
    pub b0: [f64; 3],
    pub b1: [f64; 3],
    pub b2: [f64; 3],
    /// `d(A1, B1)`.
    pub d_base: f64,
    /// `d(A2, B2)`.
    pub d_supra: f64,
    /// `d(A0, B0)`.
    pub d_sub: f64,
}

/// Second-order coefficient of the suprabase expansion as stated for the construction.
pub const CARTAN_COEFFICIENT: f64 = 8.0 / 3.0;

impl Parallelogramoid {
    /// `d_supra² − (ε² − (8/3) ε⁴)`.
    pub fn cartan_residual(&self) -> f64 {
        let e2 = self.epsilon * self.epsilon;
        self.d_supra * self.d_supra - (e2 - CARTAN_COEFFICIENT * e2 * e2)
    }

    /// `(ε² − d_supra²) / ε⁴`, the empirical fourth-order coefficient.
    pub fn curvature_coefficient(&self) -> f64 {
        let e2 = self.epsilon * self.epsilon;
        (e2 - self.d_supra * self.d_supra) / (e2 * e2)
    }
}

fn sphere_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let s = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let c = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    s.atan2(c)
}

/// Builds the parallelogramoid with base at `(1, 0, 0)` along the equator.
///
/// The normal `u = (0, 0, 1)` is orthogonal to the equatorial plane, so its
/// parallel transport along the base is itself, and `exp_X(t u) = cos t X + sin t u`.
pub fn sphere_parallelogramoid(epsilon: f64) -> Result<Parallelogramoid, OracleError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(OracleError::EpsilonOutOfRange(epsilon));
    }
    let (s, c) = epsilon.sin_cos();
    let a1 = [1.0, 0.0, 0.0];
    let b1 = [c, s, 0.0];
    let exp_u = |x: [f64; 3], t: f64| [t.cos() * x[0], t.cos() * x[1], t.cos() * x[2] + t.sin()];
    let (a0, a2) = (exp_u(a1, -epsilon), exp_u(a1, epsilon));
    let (b0, b2) = (exp_u(b1, -epsilon), exp_u(b1, epsilon));
    Ok(Parallelogramoid {
        epsilon,
        a0,
        a1,
        a2,
        b0,
        b1,
        b2,
        d_base: sphere_distance(a1, b1),
        d_supra: sphere_distance(a2, b2),
        d_sub: sphere_distance(a0, b0),
    })
}
