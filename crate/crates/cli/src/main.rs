mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use geoplan_core::ggcs::GgcsError;
use geoplan_core::oracle::{grid_shortest_path, sphere_parallelogramoid, Connectivity, GridSpec};
use geoplan_core::regions::{check_gconvex, grow_regions, RegionSet};
use geoplan_core::scenario::{
    plan_with_regions, read_region_set, regions_for, scenario_regions, PlanMode, PlanOptions, Scenario, ScenarioError,
    Unroll,
};

const TIME_BUDGET_ENV: &str = "GEOPLAN_TIME_BUDGET_MS";

#[derive(Parser)]
#[command(name = "geoplan", version, about = "Shortest paths on tori, cylinders and other flat manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    FixedPath,
}

#[derive(Clone, Copy, ValueEnum)]
enum Neighborhood {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

#[derive(Subcommand)]
enum Command {
    /// Grow or load regions, solve, and write the trajectory and metadata.
    Plan {
        scenario: PathBuf,
        /// Output directory for trajectory.csv and metadata.json.
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        /// Also write an SVG plot (2-D manifolds only).
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Regions file to plan on instead of the scenario's own regions.
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
        /// Comma-separated region indices for `--mode fixed-path`.
        #[arg(long, value_delimiter = ',')]
        path: Vec<usize>,
        /// Cut circle <dim> at <cut> and plan on the resulting interval.
        #[arg(long)]
        unroll: Option<Unroll>,
        /// Overrides the scenario's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grow one region per scenario seed and write them as JSON.
    Regions {
        scenario: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        unroll: Option<Unroll>,
    },
    /// Grid shortest path between the scenario's start and goal.
    Oracle {
        scenario: PathBuf,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[arg(long, value_enum, default_value = "16")]
        connectivity: Neighborhood,
        #[arg(long)]
        unroll: Option<Unroll>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Sample geodesics between region points; exits 3 on any violation.
    CheckGconvex {
        regions: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Suprabase and subbase lengths of a small quadrilateral on the unit sphere.
    DemoCurvature {
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
}

enum Failure {
    Input(String),
    NoPath(String),
    Violations,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Ggcs(GgcsError::NoPath) => Failure::NoPath(e.to_string()),
            ScenarioError::Ggcs(GgcsError::TimeBudgetExceeded { incumbent: None }) => {
                Failure::NoPath("time budget exceeded before any path was found".into())
            }
            e => Failure::Input(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn env_budget() -> Result<Option<Duration>, Failure> {
    match std::env::var(TIME_BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(|ms| Some(Duration::from_millis(ms)))
            .map_err(|_| Failure::Input(format!("{TIME_BUDGET_ENV}: expected milliseconds, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_plan(
    scenario_path: &Path,
    out: &Path,
    svg_path: Option<&Path>,
    regions_path: Option<&Path>,
    mode: Mode,
    path: Vec<usize>,
    unroll: Option<Unroll>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let started = Instant::now();
    let mut scenario = Scenario::load(scenario_path)?;
    if let Some(s) = seed {
        scenario.rng_seed = s;
    }
    let mode = match mode {
        Mode::Exact => PlanMode::Exact,
        Mode::FixedPath if path.is_empty() => {
            return Err(Failure::Input("--mode fixed-path needs --path".into()));
        }
        Mode::FixedPath => PlanMode::FixedPath(path),
    };
    let opts = PlanOptions {
        mode,
        unroll,
        time_budget: env_budget()?,
        audit: false,
    };
    let ws = scenario.workspace(unroll)?;
    let regions = match regions_path {
        Some(p) => regions_for(&read_region_set(p)?, &ws.manifold)?,
        None => scenario_regions(&scenario, &ws)?,
    };
    let result = plan_with_regions(&scenario, ws, regions, &opts, started)?;

    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let csv_path = out.join("trajectory.csv");
    let mut csv = Vec::new();
    result.trajectory.write_csv(&mut csv).expect("in-memory write");
    fs::write(&csv_path, csv).map_err(|e| io_err(&csv_path, e))?;
    write_json(&result.metadata, Some(&out.join("metadata.json")))?;

    if let Some(svg_path) = svg_path {
        if result.workspace.manifold.dim() == 2 {
            let poly = result.trajectory.unwrapped(&result.workspace.manifold);
            let doc = svg::render(&result.graph, &result.workspace.obstacles, Some(&poly));
            fs::write(svg_path, doc).map_err(|e| io_err(svg_path, e))?;
        } else {
            eprintln!("warning: SVG output needs a 2-D manifold; skipped");
        }
    }
    let md = &result.metadata;
    eprintln!(
        "objective {:.9} via [{}]{} in {:.3} s",
        md.objective,
        md.path.join(", "),
        if md.optimal { "" } else { " (time budget hit; not proven optimal)" },
        md.wall_time_s
    );
    Ok(())
}

fn run_regions(scenario_path: &Path, out: Option<&Path>, unroll: Option<Unroll>) -> Result<(), Failure> {
    let scenario = Scenario::load(scenario_path)?;
    if scenario.seeds.is_empty() {
        return Err(Failure::Input("field `seeds`: no seeds to grow regions from".into()));
    }
    let ws = scenario.workspace(unroll)?;
    let regions = grow_regions(&ws.seeds, &ws.obstacles, &ws.manifold, &scenario.grow)
        .map_err(|e| Failure::Input(e.to_string()))?;
    write_json(&RegionSet::new(ws.manifold, &regions), out)
}

#[derive(Serialize)]
struct OracleReport {
    length: f64,
    resolution: usize,
    connectivity: u8,
    nodes: usize,
    polyline: Vec<Vec<f64>>,
}

fn run_oracle(
    scenario_path: &Path,
    grid: usize,
    connectivity: Neighborhood,
    unroll: Option<Unroll>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let scenario = Scenario::load(scenario_path)?;
    let ws = scenario.workspace(unroll)?;
    let (conn, degree) = match connectivity {
        Neighborhood::Eight => (Connectivity::Eight, 8),
        Neighborhood::Sixteen => (Connectivity::Sixteen, 16),
    };
    let spec = GridSpec::for_manifold(&ws.manifold, grid, conn);
    let path = grid_shortest_path(&ws.obstacles, &ws.manifold, &ws.start, &ws.goal, &spec).map_err(|e| match e {
        geoplan_core::oracle::OracleError::NoGridPath => Failure::NoPath(e.to_string()),
        e => Failure::Input(e.to_string()),
    })?;
    write_json(
        &OracleReport {
            length: path.length,
            resolution: grid,
            connectivity: degree,
            nodes: path.polyline.len().saturating_sub(2),
            polyline: path.polyline,
        },
        out,
    )
}

#[derive(Serialize)]
struct RegionCheck {
    id: String,
    pairs: usize,
    violations: usize,
    worst_excess: f64,
}

#[derive(Serialize)]
struct CheckReport {
    samples: usize,
    seed: u64,
    total_violations: usize,
    regions: Vec<RegionCheck>,
}

fn run_check(regions_path: &Path, samples: usize, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let set = read_region_set(regions_path)?;
    let regions = set.to_regions().map_err(|e| Failure::Input(e.to_string()))?;
    let mut report = CheckReport {
        samples,
        seed,
        total_violations: 0,
        regions: Vec::new(),
    };
    for r in &regions {
        let g = check_gconvex(r, &set.manifold, samples, seed);
        report.total_violations += g.violations;
        report.regions.push(RegionCheck {
            id: r.id.clone(),
            pairs: g.pairs,
            violations: g.violations,
            worst_excess: g.worst_excess,
        });
    }
    write_json(&report, out)?;
    if report.total_violations > 0 {
        return Err(Failure::Violations);
    }
    Ok(())
}

#[derive(Serialize)]
struct CurvatureReport {
    epsilon: f64,
    d_base: f64,
    d_supra: f64,
    d_sub: f64,
    cartan_residual: f64,
    curvature_coefficient: f64,
}

fn run_demo(epsilon: f64) -> Result<(), Failure> {
    let pg = sphere_parallelogramoid(epsilon).map_err(|e| Failure::Input(e.to_string()))?;
    write_json(
        &CurvatureReport {
            epsilon,
            d_base: pg.d_base,
            d_supra: pg.d_supra,
            d_sub: pg.d_sub,
            cartan_residual: pg.cartan_residual(),
            curvature_coefficient: pg.curvature_coefficient(),
        },
        None,
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan {
            scenario,
            out,
            svg,
            regions,
            mode,
            path,
            unroll,
            seed,
        } => run_plan(&scenario, &out, svg.as_deref(), regions.as_deref(), mode, path, unroll, seed),
        Command::Regions { scenario, out, unroll } => run_regions(&scenario, out.as_deref(), unroll),
        Command::Oracle {
            scenario,
            grid,
            connectivity,
            unroll,
            out,
        } => run_oracle(&scenario, grid, connectivity, unroll, out.as_deref()),
        Command::CheckGconvex {
            regions,
            samples,
            seed,
            out,
        } => run_check(&regions, samples, seed, out.as_deref()),
        Command::DemoCurvature { epsilon } => run_demo(epsilon),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NoPath(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Violations) => {
            eprintln!("error: g-convexity violations found");
            ExitCode::from(3)
        }
    }
}
