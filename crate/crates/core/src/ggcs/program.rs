//! The convex program of one path: a sum of Euclidean segment lengths with
//! polytope membership and translation continuity constraints.

use crate::conic::{Affine, ConicError, ConicProgram};
use crate::ggcs::{GgcsError, GgcsGraph, PathSolution};
use crate::manifold::FlatManifold;

/// Tolerance on `x_{k,1} + t = x_{k+1,0}` and polytope membership of solutions.
pub const CONTINUITY_TOL: f64 = 1e-8;

/// Largest acceptable solver certificate.
const CERTIFICATE_TOL: f64 = 1e-8;

/// How the last region of a chain ends.
pub(crate) enum Terminal<'a> {
    /// Fixed endpoint in the last region's chart (the goal lift).
    Fixed(&'a [f64]),
    /// Free endpoint, plus the distance to the nearest of these points.
    Toward(&'a [Vec<f64>]),
}

pub(crate) struct ChainResult {
    /// `(start, end)` chart points per region of the chain.
    pub segments: Vec<(Vec<f64>, Vec<f64>)>,
    /// Sum of the segment lengths plus any terminal distance.
    pub value: f64,
    pub certificate: f64,
}

/// Solves the chain program along `edges` (first edge leaves the source).
///
/// The start of each region's segment is the previous segment's end pushed
/// through the edge translation, so continuity holds by construction.
pub(crate) fn solve_chain(
    graph: &GgcsGraph,
    edges: &[usize],
    terminal: Terminal<'_>,
) -> Result<ChainResult, GgcsError> {
    match terminal {
        Terminal::Fixed(goal) => solve_chain_once(graph, edges, Some(goal), None),
        Terminal::Toward(goals) => {
            // the start pushed through every translation, in the last chart
            let mut origin = graph.start.coords.clone();
            for &e in edges {
                for (o, t) in origin.iter_mut().zip(&graph.edges[e].translation) {
                    *o += t;
                }
            }
            let mut order: Vec<(f64, &Vec<f64>)> = goals.iter().map(|g| (dist(&origin, g), g)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut best: Option<ChainResult> = None;
            for (straight, c) in order {
                // no chain to `c` is shorter than the straight line
                if best.as_ref().is_some_and(|b| straight >= b.value) {
                    break;
                }
                let r = solve_chain_once(graph, edges, None, Some(c))?;
                if best.as_ref().is_none_or(|b| r.value < b.value) {
                    best = Some(r);
                }
            }
            best.ok_or_else(|| GgcsError::InvalidPath("no terminal candidates".into()))
        }
    }
}

fn solve_chain_once(
    graph: &GgcsGraph,
    edges: &[usize],
    fixed_end: Option<&[f64]>,
    toward: Option<&[f64]>,
) -> Result<ChainResult, GgcsError> {
    let n = graph.manifold.dim();
    let regions: Vec<usize> = edges.iter().map(|&e| graph.edges[e].to).collect();
    let m = regions.len();
    debug_assert!(m >= 1);

    let first = &graph.edges[edges[0]];
    let start: Vec<f64> = graph
        .start
        .coords
        .iter()
        .zip(&first.translation)
        .map(|(a, b)| a + b)
        .collect();

    let mut prog = ConicProgram::new();
    // one free junction point per region except a fixed final one
    let free = if fixed_end.is_some() { m - 1 } else { m };
    let w0 = prog.add_vars(free * n);
    let t0 = prog.add_vars(m + usize::from(toward.is_some()));
    for i in 0..prog.num_vars() - t0 {
        prog.set_cost(t0 + i, 1.0);
    }

    let end_expr = |i: usize| -> Vec<Affine> {
        if i < free {
            (0..n).map(|d| Affine::var(w0 + i * n + d)).collect()
        } else {
            let goal = fixed_end.expect("fixed end");
            goal.iter().map(|&g| Affine::constant(g)).collect()
        }
    };

    let mut seg_start: Vec<Affine> = start.iter().map(|&s| Affine::constant(s)).collect();
    for i in 0..m {
        let poly = &graph.regions[regions[i]].polytope;
        let end = end_expr(i);
        if i < free {
            poly.constrain(&mut prog, w0 + i * n);
        }
        let mut cone = vec![Affine::var(t0 + i)];
        for d in 0..n {
            cone.push(seg_start[d].clone().add(&end[d], -1.0));
        }
        prog.soc(cone);
        if i + 1 < m {
            let t = &graph.edges[edges[i + 1]].translation;
            let next_poly = &graph.regions[regions[i + 1]].polytope;
            next_poly.constrain_shifted(&mut prog, w0 + i * n, t);
            seg_start = end
                .iter()
                .zip(t)
                .map(|(e, &s)| e.clone().plus(s))
                .collect();
        }
    }
    if let Some(target) = toward {
        let end = end_expr(m - 1);
        let mut cone = vec![Affine::var(t0 + m)];
        for d in 0..n {
            cone.push(end[d].clone().plus(-target[d]));
        }
        prog.soc(cone);
    }

    let sol = match prog.solve() {
        Ok(s) => s,
        Err(ConicError::Infeasible) => return Err(GgcsError::InfeasiblePath),
        Err(e) => return Err(GgcsError::SolverFailure(e.to_string())),
    };
    if sol.certificate() > CERTIFICATE_TOL {
        return Err(GgcsError::SolverFailure(format!(
            "certificate {:e} above {CERTIFICATE_TOL:e}",
            sol.certificate()
        )));
    }

    let mut segments = Vec::with_capacity(m);
    let mut a = start;
    let mut value = 0.0;
    for i in 0..m {
        let b: Vec<f64> = end_expr(i).iter().map(|e| e.eval(&sol.x)).collect();
        value += dist(&a, &b);
        let next = if i + 1 < m {
            let t = &graph.edges[edges[i + 1]].translation;
            b.iter().zip(t).map(|(x, s)| x + s).collect()
        } else {
            Vec::new()
        };
        segments.push((a, b));
        a = next;
    }
    if let Some(target) = toward {
        value += dist(&segments[m - 1].1, target);
    }
    Ok(ChainResult {
        segments,
        value,
        certificate: sol.certificate(),
    })
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Goal lift in the chart of the last region on `edges`' final edge into the target.
pub(crate) fn goal_in_chart(graph: &GgcsGraph, target_edge: usize) -> Vec<f64> {
    let e = &graph.edges[target_edge];
    graph
        .goal
        .coords
        .iter()
        .zip(&e.translation)
        .map(|(q, t)| q - t)
        .collect()
}

/// Goal lifts that can be nearest to some point of region `r`'s box.
pub(crate) fn goal_candidates(graph: &GgcsGraph, r: usize) -> Vec<Vec<f64>> {
    let m = &graph.manifold;
    let region = &graph.regions[r];
    let mut out = vec![Vec::new()];
    for d in 0..m.dim() {
        let q = graph.goal.coords[d];
        let choices: Vec<f64> = match m.factor(d).period() {
            Some(c) => {
                let k0 = ((region.box_lo[d] - 0.5 * c - q) / c).ceil() as i64;
                let k1 = ((region.box_hi[d] + 0.5 * c - q) / c).floor() as i64;
                (k0..=k1).map(|k| q + k as f64 * c).collect()
            }
            None => vec![q],
        };
        out = out
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                choices.iter().map(move |&v| {
                    let mut p = p.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Assembles a [`PathSolution`] for a full source-to-target edge sequence.
pub(crate) fn full_solution(graph: &GgcsGraph, edges: &[usize]) -> Result<PathSolution, GgcsError> {
    let last = *edges.last().expect("nonempty path");
    debug_assert_eq!(graph.edges[last].to, graph.target());
    let goal = goal_in_chart(graph, last);
    let chain = solve_chain(graph, &edges[..edges.len() - 1], Terminal::Fixed(&goal))?;

    let mut vertices = vec![graph.source()];
    vertices.extend(edges.iter().map(|&e| graph.edges[e].to));
    let mut points = Vec::with_capacity(vertices.len());
    let p = graph.start.coords.clone();
    points.push((p.clone(), p));
    points.extend(chain.segments.iter().cloned());
    let q = graph.goal.coords.clone();
    points.push((q.clone(), q));

    let objective = chain.segments.iter().map(|(a, b)| dist(a, b)).sum();
    let sol = PathSolution {
        vertices,
        edges: edges.to_vec(),
        points,
        objective,
        certificate: chain.certificate,
    };
    check_solution(graph, &sol)?;
    Ok(sol)
}

/// Verifies membership and continuity of a solution to [`CONTINUITY_TOL`].
pub(crate) fn check_solution(graph: &GgcsGraph, sol: &PathSolution) -> Result<(), GgcsError> {
    for (k, &v) in sol.vertices.iter().enumerate() {
        if v < graph.regions.len() {
            let poly = &graph.regions[v].polytope;
            let (a, b) = &sol.points[k];
            let worst = poly.max_violation(a).max(poly.max_violation(b));
            if worst > CONTINUITY_TOL {
                return Err(GgcsError::SolverFailure(format!(
                    "segment in {} violates its polytope by {worst:e}",
                    graph.vertex_label(v)
                )));
            }
        }
    }
    for (k, &e) in sol.edges.iter().enumerate() {
        let t = &graph.edges[e].translation;
        let moved: Vec<f64> = sol.points[k].1.iter().zip(t).map(|(x, s)| x + s).collect();
        if dist(&moved, &sol.points[k + 1].0) > CONTINUITY_TOL {
            return Err(GgcsError::SolverFailure(format!("continuity broken on edge {e}")));
        }
    }
    Ok(())
}

/// Solves the convex restriction for one vertex sequence `source, r_1, …, r_K, target`.
///
/// When a pair of consecutive vertices is joined by several edges, every
/// combination is solved and the cheapest kept.
pub fn solve_fixed_path(graph: &GgcsGraph, path: &[usize], _m: &FlatManifold) -> Result<PathSolution, GgcsError> {
    if path.len() < 3 || path[0] != graph.source() || *path.last().unwrap() != graph.target() {
        return Err(GgcsError::InvalidPath(
            "path must run from the source through at least one region to the target".into(),
        ));
    }
    let mut seen = vec![false; graph.num_vertices()];
    for &v in path {
        if v >= graph.num_vertices() || std::mem::replace(&mut seen[v], true) {
            return Err(GgcsError::InvalidPath(format!("vertex {v} repeated or out of range")));
        }
    }
    let mut options: Vec<Vec<usize>> = Vec::with_capacity(path.len() - 1);
    for w in path.windows(2) {
        let es: Vec<usize> = graph.edges_between(w[0], w[1]).collect();
        if es.is_empty() {
            return Err(GgcsError::InvalidPath(format!(
                "no edge {} -> {}",
                graph.vertex_label(w[0]),
                graph.vertex_label(w[1])
            )));
        }
        options.push(es);
    }
    let mut best: Option<PathSolution> = None;
    let mut choice = vec![0usize; options.len()];
    loop {
        let edges: Vec<usize> = choice.iter().zip(&options).map(|(&c, o)| o[c]).collect();
        let sol = full_solution(graph, &edges)?;
        if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
            best = Some(sol);
        }
        // odometer increment over the edge choices
        let mut i = 0;
        while i < choice.len() {
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == choice.len() {
            break;
        }
    }
    Ok(best.expect("at least one combination"))
}
