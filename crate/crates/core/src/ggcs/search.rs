//! Exact shortest path over the graph by enumeration of simple paths,
//! pruned with an admissible lower bound.
//!
//! The bound of a prefix `source, r_1, …, r_j` is the optimum of the prefix
//! program with a free final point plus the straight distance from that
//! point to the nearest goal lift. Any completion pays at least that much,
//! since dropping the unexplored regions only removes constraints.
//!
//! The search runs in two phases. A best-first pass finds the optimal cost;
//! a depth-first pass in vertex-id order then returns the lexicographically
//! smallest path within `TIE_TOL` of it. Prefix bounds are memoized across
//! the two passes.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::ggcs::program::{full_solution, goal_candidates, solve_chain, Terminal};
use crate::ggcs::{GgcsError, GgcsGraph, PathSolution};

/// Costs within this of each other are ties, broken by vertex sequence.
const TIE_TOL: f64 = 1e-9;

/// A prefix must promise at least this much improvement to be expanded.
const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Maximum number of regions on a path.
    pub max_path_len: usize,
    pub time_budget: Option<Duration>,
    /// Record every prefix bound and completed path cost.
    pub audit: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            max_path_len: 64,
            time_budget: None,
            audit: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub expanded: usize,
    pub bound_solves: usize,
    pub completed: usize,
    pub pruned: usize,
}

/// Prefix bounds and completed path costs seen during one search.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditLog {
    /// `(vertex prefix starting at the source, lower bound)`.
    pub prefixes: Vec<(Vec<usize>, f64)>,
    /// `(full vertex path, exact cost)`.
    pub completed: Vec<(Vec<usize>, f64)>,
}

impl AuditLog {
    /// Largest `bound - cost` over recorded prefixes of recorded completed
    /// paths; nonpositive (up to solver tolerance) when the bound is admissible.
    pub fn worst_excess(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (path, cost) in &self.completed {
            for (prefix, bound) in &self.prefixes {
                if path.starts_with(prefix) {
                    worst = worst.max(bound - cost);
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub solution: PathSolution,
    pub stats: SearchStats,
    pub audit: Option<AuditLog>,
}

struct Node {
    bound: f64,
    /// False while `bound` is still the parent's.
    exact: bool,
    vertices: Vec<usize>,
    edges: Vec<usize>,
}

impl Node {
    /// Bound bucket, then deeper prefixes, then vertex order.
    fn key(&self) -> (i64, Reverse<usize>, &[usize]) {
        ((self.bound / TIE_TOL).floor() as i64, Reverse(self.vertices.len()), &self.vertices)
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

struct Search<'a> {
    graph: &'a GgcsGraph,
    params: &'a SearchParams,
    started: Instant,
    stats: SearchStats,
    audit: Option<AuditLog>,
    bounds: HashMap<Vec<usize>, f64>,
    completions: HashMap<Vec<usize>, PathSolution>,
    incumbent: Option<PathSolution>,
}

impl<'a> Search<'a> {
    fn check_time(&self) -> Result<(), GgcsError> {
        match self.params.time_budget {
            Some(b) if self.started.elapsed() > b => Err(GgcsError::TimeBudgetExceeded {
                incumbent: self.incumbent.clone().map(Box::new),
            }),
            _ => Ok(()),
        }
    }

    fn vertices_of(&self, edges: &[usize]) -> Vec<usize> {
        let mut v = vec![self.graph.source()];
        v.extend(edges.iter().map(|&e| self.graph.edges[e].to));
        v
    }

    /// Lower bound of a prefix ending in a region.
    fn bound(&mut self, edges: &[usize]) -> Result<f64, GgcsError> {
        if let Some(&b) = self.bounds.get(edges) {
            return Ok(b);
        }
        let last = self.graph.edges[*edges.last().expect("nonempty")].to;
        let cands = goal_candidates(self.graph, last);
        let value = solve_chain(self.graph, edges, Terminal::Toward(&cands))?.value;
        self.stats.bound_solves += 1;
        if self.audit.is_some() {
            let prefix = self.vertices_of(edges);
            if let Some(log) = self.audit.as_mut() {
                log.prefixes.push((prefix, value));
            }
        }
        self.bounds.insert(edges.to_vec(), value);
        Ok(value)
    }

    /// Exact solution of a path whose last edge enters the target.
    fn complete(&mut self, edges: &[usize]) -> Result<PathSolution, GgcsError> {
        if let Some(s) = self.completions.get(edges) {
            return Ok(s.clone());
        }
        let sol = full_solution(self.graph, edges)?;
        self.stats.completed += 1;
        if let Some(log) = self.audit.as_mut() {
            log.completed.push((sol.vertices.clone(), sol.objective));
        }
        if self.incumbent.as_ref().is_none_or(|i| sol.objective < i.objective) {
            self.incumbent = Some(sol.clone());
        }
        self.completions.insert(edges.to_vec(), sol.clone());
        Ok(sol)
    }

    /// Best-first pass; leaves the optimum in `self.incumbent`.
    fn best_first(&mut self) -> Result<(), GgcsError> {
        let mut heap = BinaryHeap::new();
        heap.push(Node {
            bound: 0.0,
            exact: true,
            vertices: vec![self.graph.source()],
            edges: Vec::new(),
        });
        while let Some(mut node) = heap.pop() {
            self.check_time()?;
            let limit = self.incumbent.as_ref().map_or(f64::INFINITY, |i| i.objective - PRUNE_TOL);
            if node.bound >= limit {
                self.stats.pruned += 1;
                continue;
            }
            if !node.exact {
                // a child's bound is never below its parent's, so the
                // parent's value kept it in order until now
                node.bound = self.bound(&node.edges)?;
                node.exact = true;
                heap.push(node);
                continue;
            }
            self.stats.expanded += 1;
            let last = *node.vertices.last().expect("nonempty");
            for &e in self.graph.out_edges(last) {
                let next = self.graph.edges[e].to;
                if node.vertices.contains(&next) {
                    continue;
                }
                let mut edges = node.edges.clone();
                edges.push(e);
                if next == self.graph.target() {
                    self.complete(&edges)?;
                    continue;
                }
                if node.vertices.len() > self.params.max_path_len {
                    continue;
                }
                let mut vertices = node.vertices.clone();
                vertices.push(next);
                heap.push(Node {
                    bound: node.bound,
                    exact: false,
                    vertices,
                    edges,
                });
            }
        }
        Ok(())
    }

    /// First path in vertex-id order whose cost is at most `limit`.
    fn lex_first(&mut self, edges: &mut Vec<usize>, visited: &mut Vec<bool>, limit: f64) -> Result<Option<PathSolution>, GgcsError> {
        self.check_time()?;
        let last = edges.last().map_or(self.graph.source(), |&e| self.graph.edges[e].to);
        let mut out: Vec<usize> = self.graph.out_edges(last).to_vec();
        out.sort_by_key(|&e| (self.graph.edges[e].to, e));
        // parallel edges into the same vertex are all tried before returning
        let mut best_here: Option<PathSolution> = None;
        for (i, &e) in out.iter().enumerate() {
            let next = self.graph.edges[e].to;
            if visited[next] {
                continue;
            }
            edges.push(e);
            let found = if next == self.graph.target() {
                let sol = self.complete(edges)?;
                (sol.objective <= limit).then_some(sol)
            } else if edges.len() > self.params.max_path_len || self.bound(edges)? > limit {
                self.stats.pruned += 1;
                None
            } else {
                visited[next] = true;
                let r = self.lex_first(edges, visited, limit)?;
                visited[next] = false;
                r
            };
            edges.pop();
            if let Some(sol) = found {
                let better = best_here.as_ref().is_none_or(|b| match sol.vertices.cmp(&b.vertices) {
                    Ordering::Less => true,
                    Ordering::Equal => sol.objective < b.objective,
                    Ordering::Greater => false,
                });
                if better {
                    best_here = Some(sol);
                }
            }
            let next_to = out.get(i + 1).map(|&f| self.graph.edges[f].to);
            if best_here.is_some() && next_to != Some(next) {
                return Ok(best_here);
            }
        }
        Ok(best_here)
    }
}

/// Globally optimal path over all simple source-to-target paths; among
/// paths within `TIE_TOL` of the optimum the smallest vertex sequence wins.
pub fn solve_exact(graph: &GgcsGraph, params: &SearchParams) -> Result<SearchOutcome, GgcsError> {
    let mut search = Search {
        graph,
        params,
        started: Instant::now(),
        stats: SearchStats::default(),
        audit: params.audit.then(AuditLog::default),
        bounds: HashMap::new(),
        completions: HashMap::new(),
        incumbent: None,
    };
    search.best_first()?;
    let Some(best) = search.incumbent.clone() else {
        return Err(GgcsError::NoPath);
    };
    let mut visited = vec![false; graph.num_vertices()];
    visited[graph.source()] = true;
    let solution = search
        .lex_first(&mut Vec::new(), &mut visited, best.objective + TIE_TOL)?
        .unwrap_or(best);
    Ok(SearchOutcome {
        solution,
        stats: search.stats,
        audit: search.audit,
    })
}
