//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when
//! nothing fails. Exits nonzero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use geoplan_core::ggcs::{
    build_graph, region_visits, shortcut_path, solve_exact, solve_fixed_path, SearchParams, Trajectory,
};
use geoplan_core::oracle::{grid_shortest_path, sphere_parallelogramoid, Connectivity, GridSpec};
use geoplan_core::regions::{check_gconvex, Region};
use geoplan_core::scenario::{plan, PlanOptions, PlanOutput, Scenario, Unroll};
use geoplan_core::{Factor, FlatManifold};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenarios() -> Vec<(String, Scenario)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenarios directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, Scenario::load(&p).expect("scenario loads"))
        })
        .collect()
}

fn is_unit_torus(m: &FlatManifold) -> bool {
    m.dim() == 2 && m.factors().iter().all(|f| f.period() == Some(1.0))
}

fn grid_length(out: &PlanOutput) -> Result<f64, String> {
    let ws = &out.workspace;
    let spec = GridSpec::for_manifold(&ws.manifold, 512, Connectivity::Sixteen);
    grid_shortest_path(&ws.obstacles, &ws.manifold, &ws.start, &ws.goal, &spec)
        .map(|g| g.length)
        .map_err(|e| e.to_string())
}

/// Planned scenarios shared by several criteria, with their wall times.
struct Planned {
    name: String,
    seconds: f64,
    out: PlanOutput,
}

struct Ctx {
    planned: Vec<Planned>,
    /// Equivalence residuals of every solution produced here.
    residuals: Vec<f64>,
}

impl Ctx {
    fn record(&mut self, out: &PlanOutput) {
        self.residuals.push(out.metadata.equivalence_residual);
    }
}

type Check = fn(&mut Ctx) -> Result<String, String>;

fn criterion_1(ctx: &mut Ctx) -> Result<String, String> {
    let mut lines = Vec::new();
    let mut torus = 0;
    let mut wraps = false;
    for p in &ctx.planned {
        let m = &p.out.workspace.manifold;
        if !is_unit_torus(m) {
            continue;
        }
        torus += 1;
        let obj = p.out.metadata.objective;
        let grid = grid_length(&p.out)?;
        let rel = grid / obj - 1.0;
        if !(-0.005..=0.03).contains(&rel) {
            return Err(format!("{}: objective {obj:.6}, grid {grid:.6}, grid/objective - 1 = {rel:+.4}", p.name));
        }
        if p.seconds >= 10.0 {
            return Err(format!("{}: took {:.2} s", p.name, p.seconds));
        }
        wraps |= p.out.graph.regions.iter().any(|r| match r.polytope.axis_bounds() {
            Ok(b) => b.iter().any(|&(lo, hi)| lo < 0.0 && hi > 0.0 || lo < 1.0 && hi > 1.0),
            Err(_) => false,
        });
        lines.push(format!("{} {:+.2}% in {:.2}s", p.name, 100.0 * rel, p.seconds));
    }
    if torus < 5 {
        return Err(format!("only {torus} torus scenarios"));
    }
    if !wraps {
        return Err("no grown region straddles the seam".into());
    }
    Ok(lines.join(", "))
}

fn criterion_2(ctx: &mut Ctx) -> Result<String, String> {
    let band = ctx
        .planned
        .iter()
        .find(|p| p.name == "band")
        .ok_or("band scenario missing")?;
    let obj = band.out.metadata.objective;
    let grid = grid_length(&band.out)?;
    if (obj - grid).abs() > 0.03 * grid || (obj - 0.4).abs() > 0.03 * 0.4 {
        return Err(format!("wrap-around optimum {obj:.6}, grid {grid:.6}"));
    }
    let scenario = Scenario::load(&scenario_dir().join("band.json")).map_err(|e| e.to_string())?;
    let opts = PlanOptions {
        unroll: Some(Unroll { dim: 0, cut: 0.0 }),
        ..PlanOptions::default()
    };
    let unrolled = plan(&scenario, &opts).map_err(|e| e.to_string())?;
    ctx.record(&unrolled);
    let base = unrolled.metadata.objective;
    if base < 1.2 * obj {
        return Err(format!("unrolled baseline {base:.6} is only {:.3}x the wrap-around path", base / obj));
    }
    Ok(format!("wrap {obj:.6} (grid {grid:.6}), unrolled {base:.6} = {:.2}x", base / obj))
}

fn criterion_3(ctx: &mut Ctx) -> Result<String, String> {
    let worst = ctx.residuals.iter().copied().fold(0.0, f64::max);
    if worst > 1e-9 {
        return Err(format!("residual {worst:.3e} over {} solutions", ctx.residuals.len()));
    }
    Ok(format!("max residual {worst:.3e} over {} solutions", ctx.residuals.len()))
}

fn criterion_4(ctx: &mut Ctx) -> Result<String, String> {
    let mut checked = 0;
    for p in &ctx.planned {
        let m = &p.out.workspace.manifold;
        for (i, r) in p.out.graph.regions.iter().enumerate() {
            let rep = check_gconvex(r, m, 1000, i as u64);
            if rep.violations > 0 {
                return Err(format!("{} region {}: {} violations", p.name, r.id, rep.violations));
            }
            checked += 1;
        }
    }
    // an arc of length 0.6 across the seam of a unit circle
    let m = FlatManifold::new(vec![Factor::circle(1.0)]).map_err(|e| e.to_string())?;
    let wide = Region::from_box("wide", m.canonicalize(&[0.0]).unwrap(), vec![-0.3], vec![0.3]);
    let rep = check_gconvex(&wide, &m, 1000, 0);
    if rep.violations == 0 {
        return Err("over-wide arc reported no violations".into());
    }
    Ok(format!("{checked} grown regions clean, over-wide arc has {} violations", rep.violations))
}

fn criterion_5(_ctx: &mut Ctx) -> Result<String, String> {
    // L-shaped corridor: horizontal arm [0,0.6]x[0,0.2], vertical arm
    // [0.4,0.6]x[0,1]. The straight line is blocked, so the shortest path
    // bends at the inner corner (0.4, 0.2).
    let m = FlatManifold::new(vec![Factor::line(0.0, 1.0), Factor::line(0.0, 1.0)]).map_err(|e| e.to_string())?;
    let pt = |x: f64, y: f64| m.canonicalize(&[x, y]).unwrap();
    let arms = vec![
        Region::from_box("h", pt(0.1, 0.1), vec![0.0, 0.0], vec![0.6, 0.2]),
        Region::from_box("v", pt(0.5, 0.5), vec![0.4, 0.0], vec![0.6, 1.0]),
    ];
    let (p, q) = ([0.05, 0.1], [0.5, 0.9]);
    let corner = [0.4, 0.2];
    let leg = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let analytic = leg(p, corner) + leg(corner, q);
    let g = build_graph(arms, &pt(p[0], p[1]), &pt(q[0], q[1]), &m).map_err(|e| e.to_string())?;
    let sol = solve_fixed_path(&g, &[g.source(), 0, 1, g.target()], &m).map_err(|e| e.to_string())?;
    let err = (sol.objective - analytic).abs();
    if err > 1e-6 {
        return Err(format!("corridor objective {:.9} vs corner path {analytic:.9}", sol.objective));
    }

    // one box across the seam of the unit torus
    let t = FlatManifold::unit_torus(2);
    let a = t.canonicalize(&[0.93, 0.42]).unwrap();
    let b = t.canonicalize(&[0.08, 0.55]).unwrap();
    let r = Region::from_box("seam", t.canonicalize(&[0.0, 0.5]).unwrap(), vec![-0.2, 0.3], vec![0.2, 0.7]);
    let g = build_graph(vec![r], &a, &b, &t).map_err(|e| e.to_string())?;
    let sol = solve_fixed_path(&g, &[g.source(), 0, g.target()], &t).map_err(|e| e.to_string())?;
    let d = t.geodesic_distance(&a, &b).map_err(|e| e.to_string())?;
    if (sol.objective - d).abs() > 1e-10 {
        return Err(format!("single region {:.12} vs geodesic {d:.12}", sol.objective));
    }
    Ok(format!("corridor error {err:.2e}, single region error {:.2e}", (sol.objective - d).abs()))
}

/// 5x5 overlapping boxes tiling the unit torus.
fn tiling(m: &FlatManifold) -> Vec<Region> {
    let mut out = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let c = [0.1 + 0.2 * i as f64, 0.1 + 0.2 * j as f64];
            out.push(Region::from_box(
                format!("t{i}{j}"),
                m.canonicalize(&c).unwrap(),
                vec![c[0] - 0.14, c[1] - 0.14],
                vec![c[0] + 0.14, c[1] + 0.14],
            ));
        }
    }
    out
}

/// Random walk with steps short enough that each one fits in some tile.
fn random_walk(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let steps = rng.random_range(5..40);
    let mut p = vec![rng.random::<f64>(), rng.random::<f64>()];
    let mut out = vec![p.clone()];
    for _ in 0..steps {
        p = vec![p[0] + rng.random_range(-0.08..0.08), p[1] + rng.random_range(-0.08..0.08)];
        out.push(p.clone());
    }
    out
}

fn criterion_6(_ctx: &mut Ctx) -> Result<String, String> {
    let m = FlatManifold::unit_torus(2);
    let regions = tiling(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut saved = 0.0;
    for case in 0..100 {
        let poly = random_walk(&mut rng);
        let traj = Trajectory::from_polyline(&poly, vec![None; poly.len() - 1], &m).map_err(|e| e.to_string())?;
        let once = shortcut_path(&traj, &regions, &m).map_err(|e| format!("case {case}: {e}"))?;
        let twice = shortcut_path(&once, &regions, &m).map_err(|e| format!("case {case}: {e}"))?;
        if once.length > traj.length + 1e-12 {
            return Err(format!("case {case}: length grew {} -> {}", traj.length, once.length));
        }
        if (twice.length - once.length).abs() > 1e-12 || twice.waypoints != once.waypoints {
            return Err(format!("case {case}: second pass changed the path"));
        }
        if let Some(r) = regions.iter().find(|r| region_visits(&once, r, &m) > 1) {
            return Err(format!("case {case}: region {} visited {} times", r.id, region_visits(&once, r, &m)));
        }
        saved += traj.length - once.length;
    }
    Ok(format!("100 walks, total length removed {saved:.3}"))
}

fn criterion_7(_ctx: &mut Ctx) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for eps in [0.05, 0.1, 0.2, 0.3] {
        let pg = sphere_parallelogramoid(eps).map_err(|e| e.to_string())?;
        if !(pg.d_supra < pg.d_base && pg.d_sub < pg.d_base) {
            return Err(format!("eps {eps}: sides not shorter than the base"));
        }
        // expected expansion written out here rather than taken from the library
        let predicted = eps * eps - 8.0 / 3.0 * eps.powi(4);
        let residual = (pg.d_supra * pg.d_supra - predicted).abs();
        worst = worst.max(residual / eps.powi(5));
        if residual > 5.0 * eps.powi(5) {
            failures.push(format!(
                "eps {eps}: |residual| {residual:.3e} > {:.3e}, fitted eps^4 coefficient {:.4}",
                5.0 * eps.powi(5),
                pg.curvature_coefficient()
            ));
        }
    }
    if failures.is_empty() {
        Ok(format!("worst residual {worst:.3} eps^5"))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_8(ctx: &mut Ctx) -> Result<String, String> {
    let mut lines = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for p in &ctx.planned {
        let params = SearchParams {
            audit: true,
            ..SearchParams::default()
        };
        let out = solve_exact(&p.out.graph, &params).map_err(|e| format!("{}: {e}", p.name))?;
        let log = out.audit.expect("audit requested");
        let excess = log.worst_excess();
        // bounds and costs each carry solver error up to the certificate tolerance
        if excess > 2e-8 {
            return Err(format!("{}: a prefix bound exceeds a completed cost by {excess:.3e}", p.name));
        }
        worst = worst.max(excess);
        lines.push(format!("{} ({} prefixes, {} paths)", p.name, log.prefixes.len(), log.completed.len()));
    }
    Ok(format!("worst bound - cost {worst:.3e}; {}", lines.join(", ")))
}

fn main() -> ExitCode {
    let mut ctx = Ctx {
        planned: Vec::new(),
        residuals: Vec::new(),
    };
    for (name, scenario) in scenarios() {
        let started = Instant::now();
        match plan(&scenario, &PlanOptions::default()) {
            Ok(out) => {
                let seconds = started.elapsed().as_secs_f64();
                ctx.record(&out);
                ctx.planned.push(Planned { name, seconds, out });
            }
            Err(e) => {
                println!("scenario {name} failed to plan: {e}");
                return ExitCode::FAILURE;
            }
        }
    }

    let criteria: [(&str, Check); 8] = [
        ("torus optimality against the grid oracle", criterion_1),
        ("wrap-around beats the unrolled baseline", criterion_2),
        ("trajectory equivalence residual", criterion_3),
        ("g-convexity of grown regions", criterion_4),
        ("fixed-path corridor and single region", criterion_5),
        ("shortcut post-processor", criterion_6),
        ("suprabase expansion with coefficient 8/3", criterion_7),
        ("search bound admissibility", criterion_8),
    ];
    let mut results = Vec::new();
    for (i, (label, check)) in criteria.iter().enumerate() {
        let r = check(&mut ctx);
        results.push((i + 1, *label, r));
    }
    // criterion 3 covers solutions produced by the later checks too
    if let Err(e) = criterion_3(&mut ctx) {
        results[2].2 = Err(e);
    }
    let mut failed = 0;
    for (n, label, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n} PASS  {label}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL  {label}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
