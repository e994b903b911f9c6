//! Graph of geodesically convex sets and its Euclidean shortest-path reduction.
//!
//! Vertices are regions plus two singleton vertices for the start and goal.
//! An edge `u -> v` carries the translation that maps `u`-chart coordinates
//! to `v`-chart coordinates of the same manifold point: `x_v = x_u + t_uv`.

mod program;
mod search;
mod trajectory;

pub use program::{solve_fixed_path, CONTINUITY_TOL};
pub use search::{solve_exact, AuditLog, SearchOutcome, SearchParams, SearchStats};
pub use trajectory::{
    lift_trajectory, region_visits, shortcut_path, verify_equivalence, Trajectory, EQUIVALENCE_TOL,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::{FlatManifold, MPoint, ManifoldError, Offset};
use crate::regions::{region_overlap, Region, RegionError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GgcsError {
    #[error("start point is not covered by any region")]
    StartNotCovered,
    #[error("goal point is not covered by any region")]
    GoalNotCovered,
    #[error("no path from start to goal")]
    NoPath,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("path program is infeasible")]
    InfeasiblePath,
    #[error("solver failed: {0}")]
    SolverFailure(String),
    #[error("time budget exceeded")]
    TimeBudgetExceeded { incumbent: Option<Box<PathSolution>> },
    #[error("replacement geodesic leaves region {region}")]
    SegmentEscapesRegion { region: String },
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// `x_to = x_from + translation`; integer multiples of circumferences.
    pub translation: Vec<f64>,
    /// A point of the overlap, in `from` chart coordinates.
    pub witness: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GgcsGraph {
    pub manifold: FlatManifold,
    pub regions: Vec<Region>,
    pub start: MPoint,
    pub goal: MPoint,
    pub edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
}

impl GgcsGraph {
    pub fn source(&self) -> usize {
        self.regions.len()
    }

    pub fn target(&self) -> usize {
        self.regions.len() + 1
    }

    pub fn num_vertices(&self) -> usize {
        self.regions.len() + 2
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn edges_between(&self, u: usize, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[u]
            .iter()
            .copied()
            .filter(move |&e| self.edges[e].to == v)
    }

    /// Undirected overlap pairs `(u, v)` with `u < v` between regions.
    pub fn overlap_pairs(&self) -> Vec<(usize, usize, Vec<f64>)> {
        self.edges
            .iter()
            .filter(|e| e.from < e.to && e.to < self.regions.len())
            .map(|e| (e.from, e.to, e.translation.clone()))
            .collect()
    }

    pub fn vertex_label(&self, v: usize) -> String {
        if v == self.source() {
            "source".into()
        } else if v == self.target() {
            "target".into()
        } else {
            self.regions[v].id.clone()
        }
    }
}

/// Builds the overlap graph of `regions` plus start/goal singleton vertices.
pub fn build_graph(
    regions: Vec<Region>,
    p: &MPoint,
    q: &MPoint,
    m: &FlatManifold,
) -> Result<GgcsGraph, GgcsError> {
    let p = m.canonicalize(&p.coords)?;
    let q = m.canonicalize(&q.coords)?;
    let n = regions.len();
    let mut edges = Vec::new();

    for u in 0..n {
        for v in (u + 1)..n {
            for k in candidate_offsets(&regions[u], &regions[v], m) {
                if let Some(x) = region_overlap(&regions[u], &regions[v], &k, m)? {
                    let t = m.translation(&k);
                    let x_v: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a - b).collect();
                    edges.push(Edge {
                        from: u,
                        to: v,
                        translation: t.iter().map(|a| -a).collect(),
                        witness: x,
                    });
                    edges.push(Edge {
                        from: v,
                        to: u,
                        translation: t,
                        witness: x_v,
                    });
                }
            }
        }
    }

    let (source, target) = (n, n + 1);
    let mut start_covered = false;
    let mut goal_covered = false;
    for (r, region) in regions.iter().enumerate() {
        if let Some(x) = region.locate(&p, m) {
            start_covered = true;
            edges.push(Edge {
                from: source,
                to: r,
                translation: x.iter().zip(&p.coords).map(|(a, b)| a - b).collect(),
                witness: p.coords.clone(),
            });
        }
        if let Some(x) = region.locate(&q, m) {
            goal_covered = true;
            edges.push(Edge {
                from: r,
                to: target,
                translation: q.coords.iter().zip(&x).map(|(a, b)| a - b).collect(),
                witness: x,
            });
        }
    }
    if !start_covered {
        return Err(GgcsError::StartNotCovered);
    }
    if !goal_covered {
        return Err(GgcsError::GoalNotCovered);
    }

    let mut out = vec![Vec::new(); n + 2];
    for (i, e) in edges.iter().enumerate() {
        out[e.from].push(i);
    }
    Ok(GgcsGraph {
        manifold: m.clone(),
        regions,
        start: p,
        goal: q,
        edges,
        out,
    })
}

/// Offsets `k` for which the boxes of `u` and `v + k∘c` can meet.
fn candidate_offsets(u: &Region, v: &Region, m: &FlatManifold) -> Vec<Offset> {
    let mut ranges = Vec::with_capacity(m.dim());
    for d in 0..m.dim() {
        match m.factor(d).period() {
            Some(c) => {
                let k0 = ((u.box_lo[d] - v.box_hi[d]) / c).ceil() as i64;
                let k1 = ((u.box_hi[d] - v.box_lo[d]) / c).floor() as i64;
                if k0 > k1 {
                    return Vec::new();
                }
                ranges.push((k0, k1));
            }
            None => ranges.push((0, 0)),
        }
    }
    let mut out = vec![Vec::new()];
    for (a, b) in ranges {
        out = out
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                (a..=b).map(move |k| {
                    let mut p = p.clone();
                    p.push(k);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(Offset).collect()
}

/// Optimal segment endpoints along one source-to-target path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSolution {
    /// Vertex ids, starting at the source and ending at the target.
    pub vertices: Vec<usize>,
    /// Edge ids joining consecutive vertices.
    pub edges: Vec<usize>,
    /// `(x_{k,0}, x_{k,1})` per vertex, in that vertex's chart.
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
    pub objective: f64,
    /// Max of duality gap and residuals reported by the conic solve.
    pub certificate: f64,
}

impl PathSolution {
    /// Region ids along the path, without the source and target.
    pub fn region_path(&self) -> &[usize] {
        &self.vertices[1..self.vertices.len() - 1]
    }
}
