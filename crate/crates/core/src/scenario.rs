//! Scenario files and the end-to-end planning pipeline.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ggcs::{
    build_graph, lift_trajectory, solve_exact, solve_fixed_path, verify_equivalence, GgcsError, GgcsGraph,
    PathSolution, SearchParams, SearchStats, Trajectory,
};
use crate::manifold::{FlatManifold, MPoint, ManifoldError};
use crate::regions::{grow_regions, ConvexObstacle, GrowParams, Region, RegionError, RegionSet};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Ggcs(#[from] GgcsError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub max_path_len: usize,
    pub time_budget_ms: Option<u64>,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            max_path_len: SearchParams::default().max_path_len,
            time_budget_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub manifold: FlatManifold,
    #[serde(default)]
    pub obstacles: Vec<ConvexObstacle>,
    #[serde(default)]
    pub seeds: Vec<Vec<f64>>,
    /// Regions file to use instead of growing from `seeds`; relative paths
    /// resolve against the scenario file's directory.
    #[serde(default)]
    pub regions_file: Option<PathBuf>,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub grow: GrowParams,
    #[serde(default)]
    pub rng_seed: u64,
}

/// Replace circle `dim` by the interval `[cut, cut + c]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unroll {
    pub dim: usize,
    pub cut: f64,
}

impl std::str::FromStr for Unroll {
    type Err = String;

    /// Parses `<dim>:<cut>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (d, c) = s.split_once(':').ok_or_else(|| format!("expected <dim>:<cut>, got `{s}`"))?;
        let dim = d.trim().parse().map_err(|_| format!("bad dimension `{d}`"))?;
        let cut: f64 = c.trim().parse().map_err(|_| format!("bad cut `{c}`"))?;
        if !cut.is_finite() {
            return Err(format!("bad cut `{c}`"));
        }
        Ok(Unroll { dim, cut })
    }
}

/// Scenario data on the manifold actually planned on.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub manifold: FlatManifold,
    pub obstacles: Vec<ConvexObstacle>,
    pub seeds: Vec<MPoint>,
    pub start: MPoint,
    pub goal: MPoint,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Reads a scenario file; a relative `regions_file` is resolved here.
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut s = Scenario::from_json(&text)?;
        if let Some(rf) = &s.regions_file {
            if rf.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                s.regions_file = Some(base.join(rf));
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.manifold.dim();
        let check_point = |field: String, p: &[f64]| -> Result<(), ScenarioError> {
            if p.len() != n {
                return Err(invalid(field, format!("has {} coordinates, manifold has {n}", p.len())));
            }
            self.manifold
                .canonicalize(p)
                .map_err(|e| invalid(field, e.to_string()))?;
            Ok(())
        };
        check_point("start".into(), &self.start)?;
        check_point("goal".into(), &self.goal)?;
        for (i, s) in self.seeds.iter().enumerate() {
            check_point(format!("seeds[{i}]"), s)?;
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if o.vertices.is_empty() {
                return Err(invalid(format!("obstacles[{i}]"), "has no vertices"));
            }
            for (j, v) in o.vertices.iter().enumerate() {
                if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                    return Err(invalid(
                        format!("obstacles[{i}][{j}]"),
                        format!("must be {n} finite coordinates"),
                    ));
                }
            }
        }
        if self.seeds.is_empty() && self.regions_file.is_none() {
            return Err(invalid("seeds", "no seeds and no regions_file"));
        }
        if self.solver.max_path_len == 0 {
            return Err(invalid("solver.max_path_len", "must be positive"));
        }
        Ok(())
    }

    /// Manifold, obstacles and points after an optional unroll, with the
    /// start and goal checked against the obstacles.
    pub fn workspace(&self, unroll: Option<Unroll>) -> Result<Workspace, ScenarioError> {
        let (manifold, obstacles, frame): (FlatManifold, Vec<ConvexObstacle>, Box<dyn Fn(&[f64]) -> Vec<f64>>) =
            match unroll {
                None => (self.manifold.clone(), self.obstacles.clone(), Box::new(|p: &[f64]| p.to_vec())),
                Some(u) => {
                    if u.dim >= self.manifold.dim() {
                        return Err(invalid("unroll", format!("dimension {} out of range", u.dim)));
                    }
                    let c = self
                        .manifold
                        .factor(u.dim)
                        .period()
                        .ok_or_else(|| invalid("unroll", format!("dimension {} is not a circle", u.dim)))?;
                    let m = self.manifold.unroll_factor(u.dim, u.cut)?;
                    let obstacles = unroll_obstacles(&self.obstacles, u, c);
                    let frame = move |p: &[f64]| {
                        let mut q = p.to_vec();
                        q[u.dim] = u.cut + (p[u.dim] - u.cut).rem_euclid(c);
                        q
                    };
                    (m, obstacles, Box::new(frame))
                }
            };
        let point = |field: &str, p: &[f64]| -> Result<MPoint, ScenarioError> {
            manifold
                .canonicalize(&frame(p))
                .map_err(|e| invalid(field, e.to_string()))
        };
        let start = point("start", &self.start)?;
        let goal = point("goal", &self.goal)?;
        let seeds = self
            .seeds
            .iter()
            .enumerate()
            .map(|(i, s)| point(&format!("seeds[{i}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        for (field, p) in [("start", &start), ("goal", &goal)] {
            if let Some(i) = colliding_obstacle(&obstacles, &manifold, p)? {
                return Err(invalid(field, format!("collides with obstacle {i}")));
            }
        }
        Ok(Workspace {
            manifold,
            obstacles,
            seeds,
            start,
            goal,
        })
    }
}

/// Copies of each obstacle that meet `[cut, cut + c]` along the unrolled
/// dimension; an obstacle straddling the cut appears at both ends.
fn unroll_obstacles(obstacles: &[ConvexObstacle], u: Unroll, c: f64) -> Vec<ConvexObstacle> {
    let mut out = Vec::new();
    for o in obstacles {
        let lo = o.vertices.iter().map(|v| v[u.dim]).fold(f64::INFINITY, f64::min);
        let hi = o.vertices.iter().map(|v| v[u.dim]).fold(f64::NEG_INFINITY, f64::max);
        let k0 = ((u.cut - hi) / c).floor() as i64;
        let k1 = ((u.cut + c - lo) / c).ceil() as i64;
        for k in k0..=k1 {
            let s = k as f64 * c;
            if hi + s > u.cut && lo + s < u.cut + c {
                let mut t = vec![0.0; o.vertices[0].len()];
                t[u.dim] = s;
                out.push(o.translated(&t));
            }
        }
    }
    out
}

/// Index of an obstacle containing some lift of `p`.
pub fn colliding_obstacle(
    obstacles: &[ConvexObstacle],
    m: &FlatManifold,
    p: &MPoint,
) -> Result<Option<usize>, ScenarioError> {
    for (i, o) in obstacles.iter().enumerate() {
        let mut lifts = vec![p.coords.clone()];
        for d in 0..m.dim() {
            let Some(c) = m.factor(d).period() else { continue };
            let lo = o.vertices.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min);
            let hi = o.vertices.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max);
            let x = p.coords[d];
            let ks = ((lo - x) / c).ceil() as i64..=((hi - x) / c).floor() as i64;
            lifts = lifts
                .into_iter()
                .flat_map(|l| {
                    ks.clone().map(move |k| {
                        let mut l = l.clone();
                        l[d] += k as f64 * c;
                        l
                    })
                })
                .collect();
        }
        for l in lifts {
            let dist = o
                .distance(&l)
                .map_err(|e| ScenarioError::Region(RegionError::from(e)))?;
            if dist <= 1e-12 {
                return Ok(Some(i));
            }
        }
    }
    Ok(None)
}

/// Grows regions from the scenario seeds, or loads them from `regions_file`.
pub fn scenario_regions(scenario: &Scenario, ws: &Workspace) -> Result<Vec<Region>, ScenarioError> {
    match &scenario.regions_file {
        Some(path) => {
            let set = read_region_set(path)?;
            regions_for(&set, &ws.manifold)
        }
        None => Ok(grow_regions(&ws.seeds, &ws.obstacles, &ws.manifold, &scenario.grow)?),
    }
}

pub fn read_region_set(path: &Path) -> Result<RegionSet, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))
}

/// Regions of a regions file, validated against the manifold planned on.
pub fn regions_for(set: &RegionSet, m: &FlatManifold) -> Result<Vec<Region>, ScenarioError> {
    if &set.manifold != m {
        return Err(invalid("regions.manifold", "does not match the scenario manifold"));
    }
    let regions = set.to_regions()?;
    for r in &regions {
        r.validate(m)?;
    }
    Ok(regions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    Exact,
    /// Region indices to pass through, in order.
    FixedPath(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOptions {
    pub mode: PlanMode,
    pub unroll: Option<Unroll>,
    /// Overrides both the scenario's time budget and its absence.
    pub time_budget: Option<Duration>,
    pub audit: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            mode: PlanMode::Exact,
            unroll: None,
            time_budget: None,
            audit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMetadata {
    pub objective: f64,
    /// Region ids along the path.
    pub path: Vec<String>,
    /// Region indices along the path.
    pub path_indices: Vec<usize>,
    pub mode: String,
    /// False when the time budget ran out and the incumbent is reported.
    pub optimal: bool,
    pub certificate: f64,
    pub equivalence_residual: f64,
    pub trajectory_length: f64,
    pub num_regions: usize,
    pub num_edges: usize,
    pub search: Option<SearchStats>,
    pub unroll: Option<Unroll>,
    pub rng_seed: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub workspace: Workspace,
    pub graph: GgcsGraph,
    pub solution: PathSolution,
    pub trajectory: Trajectory,
    pub metadata: PlanMetadata,
}

/// Plans on the given regions (grown or loaded by the caller).
pub fn plan_with_regions(
    scenario: &Scenario,
    ws: Workspace,
    regions: Vec<Region>,
    opts: &PlanOptions,
    started: Instant,
) -> Result<PlanOutput, ScenarioError> {
    let m = ws.manifold.clone();
    let graph = build_graph(regions, &ws.start, &ws.goal, &m)?;
    let budget = opts
        .time_budget
        .or(scenario.solver.time_budget_ms.map(Duration::from_millis));
    let (solution, optimal, search, mode) = match &opts.mode {
        PlanMode::Exact => {
            let params = SearchParams {
                max_path_len: scenario.solver.max_path_len,
                time_budget: budget.map(|b| b.saturating_sub(started.elapsed())),
                audit: opts.audit,
            };
            match solve_exact(&graph, &params) {
                Ok(out) => (out.solution, true, Some(out.stats), "exact"),
                Err(GgcsError::TimeBudgetExceeded { incumbent: Some(sol) }) => (*sol, false, None, "exact"),
                Err(e) => return Err(e.into()),
            }
        }
        PlanMode::FixedPath(regions) => {
            if let Some(&bad) = regions.iter().find(|&&r| r >= graph.regions.len()) {
                return Err(invalid("path", format!("region index {bad} out of range")));
            }
            let mut path = vec![graph.source()];
            path.extend(regions);
            path.push(graph.target());
            (solve_fixed_path(&graph, &path, &m)?, true, None, "fixed-path")
        }
    };
    let trajectory = lift_trajectory(&solution, &graph, &m)?;
    let residual = verify_equivalence(&trajectory, &solution, &m)?;
    let path_indices = solution.region_path().to_vec();
    let metadata = PlanMetadata {
        objective: solution.objective,
        path: path_indices.iter().map(|&r| graph.regions[r].id.clone()).collect(),
        path_indices,
        mode: mode.into(),
        optimal,
        certificate: solution.certificate,
        equivalence_residual: residual,
        trajectory_length: trajectory.length,
        num_regions: graph.regions.len(),
        num_edges: graph.edges.len(),
        search,
        unroll: opts.unroll,
        rng_seed: scenario.rng_seed,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(PlanOutput {
        workspace: ws,
        graph,
        solution,
        trajectory,
        metadata,
    })
}

/// Full pipeline: workspace, regions, graph, solve, lift, verify.
pub fn plan(scenario: &Scenario, opts: &PlanOptions) -> Result<PlanOutput, ScenarioError> {
    let started = Instant::now();
    let ws = scenario.workspace(opts.unroll)?;
    let regions = scenario_regions(scenario, &ws)?;
    plan_with_regions(scenario, ws, regions, opts, started)
}
