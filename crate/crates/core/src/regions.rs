//! Collision-free, geodesically convex regions grown in chart coordinates.
//!
//! A region lives in the globally aligned chart around its seed. Its
//! polytope is always intersected with the seed's convexity box, which is
//! narrower than half a circumference on every circle dimension; inside
//! such a box straight chart segments are minimizing geodesics, so a convex
//! polytope there is geodesically convex on the manifold.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{Affine, ConicError, ConicProgram};
use crate::manifold::{Factor, FlatManifold, MPoint, ManifoldError, Offset};
use crate::polytope::{Ellipsoid, Polytope, PolytopeError};

/// Membership tolerance for points that must lie in a region.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Points sampled along each geodesic by [`check_gconvex`].
pub const GEODESIC_SAMPLES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("epsilon {epsilon} must lie in (0, {limit})")]
    EpsilonTooLarge { epsilon: f64, limit: f64 },
    #[error("obstacle {index} spans at least a full circumference on dimension {dim}")]
    ObstacleTooLarge { index: usize, dim: usize },
    #[error("obstacle {index} has vertices of dimension {got}, expected {expected}")]
    ObstacleDimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("seed is in collision with obstacle {index}")]
    SeedInCollision { index: usize },
    #[error("inscribed ellipsoid collapsed (volume {volume:e})")]
    Degenerate { volume: f64 },
    #[error("dimension {dim} is unbounded; regions need bounded line factors")]
    UnboundedRegion { dim: usize },
    #[error("invalid region {id}: {reason}")]
    InvalidRegion { id: String, reason: String },
    #[error("invalid grow parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

impl From<ConicError> for RegionError {
    fn from(e: ConicError) -> Self {
        RegionError::Polytope(PolytopeError::Solver(e))
    }
}

/// Convex hull of a vertex list, in canonical coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConvexObstacle {
    pub vertices: Vec<Vec<f64>>,
}

impl ConvexObstacle {
    pub fn new(vertices: Vec<Vec<f64>>) -> Self {
        ConvexObstacle { vertices }
    }

    /// Axis-aligned box obstacle.
    pub fn rect(lo: &[f64], hi: &[f64]) -> Self {
        let n = lo.len();
        let vertices = (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
                    .collect()
            })
            .collect();
        ConvexObstacle { vertices }
    }

    pub fn translated(&self, t: &[f64]) -> ConvexObstacle {
        ConvexObstacle {
            vertices: self
                .vertices
                .iter()
                .map(|v| v.iter().zip(t).map(|(a, b)| a + b).collect())
                .collect(),
        }
    }

    fn extent(&self, dim: usize) -> (f64, f64) {
        self.vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v[dim]), hi.max(v[dim]))
            })
    }

    /// Point of the hull minimizing `‖L⁻¹ (x - c)‖` for the ellipsoid `(c, L)`,
    /// returned in unit-ball coordinates.
    fn closest_in_metric(&self, e: &Ellipsoid) -> Result<DVector<f64>, ConicError> {
        let unit: Vec<DVector<f64>> = self.vertices.iter().map(|v| e.to_unit(v)).collect();
        closest_to_origin(&unit)
    }

    /// Euclidean distance from `x` to the hull.
    pub fn distance(&self, x: &[f64]) -> Result<f64, ConicError> {
        let shifted: Vec<DVector<f64>> = self
            .vertices
            .iter()
            .map(|v| DVector::from_iterator(v.len(), v.iter().zip(x).map(|(a, b)| a - b)))
            .collect();
        Ok(closest_to_origin(&shifted)?.norm())
    }
}

/// Minimum-norm point of `conv(points)`.
fn closest_to_origin(points: &[DVector<f64>]) -> Result<DVector<f64>, ConicError> {
    let n = points[0].len();
    if points.len() == 1 {
        return Ok(points[0].clone());
    }
    let mut prog = ConicProgram::new();
    let w = prog.add_vars(points.len());
    let t = prog.add_vars(1);
    prog.set_cost(t, 1.0);
    let mut cone = vec![Affine::var(t)];
    for k in 0..n {
        let mut e = Affine::default();
        for (j, p) in points.iter().enumerate() {
            e = e.term(w + j, p[k]);
        }
        cone.push(e);
    }
    prog.soc(cone);
    let mut sum = Affine::constant(-1.0);
    for j in 0..points.len() {
        prog.nonneg(Affine::var(w + j));
        sum = sum.term(w + j, 1.0);
    }
    prog.eq(sum);
    let s = prog.solve()?;
    let mut x = DVector::zeros(n);
    for (j, p) in points.iter().enumerate() {
        x += p * s.x[w + j].max(0.0);
    }
    Ok(x)
}

/// Which inscribed body drives the hyperplane search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InscribedBody {
    #[default]
    MaxVolumeEllipsoid,
    ChebyshevBall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowParams {
    /// Clipping margin; `None` means `1e-3 · min circumference`.
    pub epsilon: Option<f64>,
    pub max_iterations: usize,
    /// Stop once the relative ellipsoid volume growth falls below this.
    pub termination_growth: f64,
    /// Required clearance between the region and every obstacle.
    pub configuration_margin: f64,
    pub inscribed: InscribedBody,
}

impl Default for GrowParams {
    fn default() -> Self {
        GrowParams {
            epsilon: None,
            max_iterations: 10,
            termination_growth: 0.02,
            configuration_margin: 0.0,
            inscribed: InscribedBody::MaxVolumeEllipsoid,
        }
    }
}

impl GrowParams {
    pub fn epsilon_for(&self, m: &FlatManifold) -> f64 {
        self.epsilon
            .unwrap_or_else(|| 1e-3 * m.min_circumference().unwrap_or(1.0))
    }

    fn validate(&self, m: &FlatManifold) -> Result<(), RegionError> {
        if self.max_iterations < 1 {
            return Err(RegionError::InvalidParams("max_iterations must be >= 1".into()));
        }
        if !(self.termination_growth > 0.0 && self.termination_growth < 1.0) {
            return Err(RegionError::InvalidParams(
                "termination_growth must lie in (0, 1)".into(),
            ));
        }
        if !(self.configuration_margin >= 0.0) {
            return Err(RegionError::InvalidParams(
                "configuration_margin must be nonnegative".into(),
            ));
        }
        let eps = self.epsilon_for(m);
        if !(eps > 0.0) {
            return Err(RegionError::EpsilonTooLarge {
                epsilon: eps,
                limit: min_circle_radius(m),
            });
        }
        Ok(())
    }
}

fn min_circle_radius(m: &FlatManifold) -> f64 {
    m.convexity_radii()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Bounds of the convexity box around `seed`.
///
/// Circle dimension `i` gets `[seed_i - r_i + ε, seed_i + r_i - ε]` with
/// `r_i = c_i / 4`; line dimensions get their own bounds.
pub fn convexity_box_bounds(
    seed: &MPoint,
    m: &FlatManifold,
    epsilon: f64,
) -> Result<(Vec<f64>, Vec<f64>), RegionError> {
    if seed.dim() != m.dim() {
        return Err(ManifoldError::DimensionMismatch {
            expected: m.dim(),
            got: seed.dim(),
        }
        .into());
    }
    let limit = min_circle_radius(m);
    if !(epsilon > 0.0 && epsilon < limit) {
        return Err(RegionError::EpsilonTooLarge { epsilon, limit });
    }
    let mut lo = Vec::with_capacity(m.dim());
    let mut hi = Vec::with_capacity(m.dim());
    for (i, f) in m.factors().iter().enumerate() {
        match *f {
            Factor::Circle { .. } => {
                let half = f.convexity_radius() - epsilon;
                lo.push(seed.coords[i] - half);
                hi.push(seed.coords[i] + half);
            }
            Factor::Line { lo: a, hi: b } => {
                lo.push(a);
                hi.push(b);
            }
        }
    }
    Ok((lo, hi))
}

pub fn convexity_box(seed: &MPoint, m: &FlatManifold, epsilon: f64) -> Result<Polytope, RegionError> {
    let (lo, hi) = convexity_box_bounds(seed, m, epsilon)?;
    Ok(Polytope::from_box(&lo, &hi))
}

/// A chart translate of an input obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct WrappedObstacle {
    /// Index into the caller's obstacle list.
    pub source: usize,
    pub offset: Offset,
    pub hull: ConvexObstacle,
}

fn check_obstacle(ob: &ConvexObstacle, index: usize, m: &FlatManifold) -> Result<(), RegionError> {
    if ob.vertices.is_empty() {
        return Err(RegionError::ObstacleDimension {
            index,
            expected: m.dim(),
            got: 0,
        });
    }
    for v in &ob.vertices {
        if v.len() != m.dim() {
            return Err(RegionError::ObstacleDimension {
                index,
                expected: m.dim(),
                got: v.len(),
            });
        }
    }
    for d in m.circle_dims() {
        let c = m.factor(d).period().unwrap();
        let (lo, hi) = ob.extent(d);
        if hi - lo >= c {
            return Err(RegionError::ObstacleTooLarge { index, dim: d });
        }
    }
    Ok(())
}

/// Every translate `obstacle + k∘c` that meets `bx`.
///
/// Candidate offsets are those whose translated bounding interval overlaps
/// the box on each circle dimension; intersection is then decided by LP.
pub fn wrap_obstacles(
    obstacles: &[ConvexObstacle],
    bx: &Polytope,
    m: &FlatManifold,
) -> Result<Vec<WrappedObstacle>, RegionError> {
    let mut out = Vec::new();
    if obstacles.is_empty() {
        return Ok(out);
    }
    let bounds = bx.axis_bounds()?;
    for (index, ob) in obstacles.iter().enumerate() {
        check_obstacle(ob, index, m)?;
        let mut ranges = Vec::with_capacity(m.dim());
        for d in 0..m.dim() {
            match m.factor(d).period() {
                Some(c) => {
                    let (olo, ohi) = ob.extent(d);
                    let (blo, bhi) = bounds[d];
                    let k0 = ((blo - ohi) / c).ceil() as i64;
                    let k1 = ((bhi - olo) / c).floor() as i64;
                    ranges.push((k0, k1));
                }
                None => ranges.push((0, 0)),
            }
        }
        if ranges.iter().any(|(a, b)| a > b) {
            continue;
        }
        for k in offsets_in(&ranges) {
            let hull = ob.translated(&m.translation(&k));
            if hull_meets(&hull, bx)? {
                out.push(WrappedObstacle {
                    source: index,
                    offset: k,
                    hull,
                });
            }
        }
    }
    Ok(out)
}

fn offsets_in(ranges: &[(i64, i64)]) -> Vec<Offset> {
    let mut out = vec![Vec::new()];
    for &(a, b) in ranges {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<i64>| {
                (a..=b).map(move |k| {
                    let mut p = prefix.clone();
                    p.push(k);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(Offset).collect()
}

fn hull_meets(hull: &ConvexObstacle, bx: &Polytope) -> Result<bool, RegionError> {
    let n = bx.dim();
    let mut prog = ConicProgram::new();
    let w = prog.add_vars(hull.vertices.len());
    let mut sum = Affine::constant(-1.0);
    for j in 0..hull.vertices.len() {
        prog.nonneg(Affine::var(w + j));
        sum = sum.term(w + j, 1.0);
    }
    prog.eq(sum);
    for r in 0..bx.num_facets() {
        let mut e = Affine::constant(bx.b()[r]);
        for (j, v) in hull.vertices.iter().enumerate() {
            let av: f64 = (0..n).map(|i| bx.a()[(r, i)] * v[i]).sum();
            e = e.term(w + j, -av);
        }
        prog.nonneg(e);
    }
    match prog.solve() {
        Ok(_) => Ok(true),
        Err(ConicError::Infeasible) => Ok(false),
        Err(e) => Err(e.into()),
    }
}

/// Hyperplane `normal·x <= offset` separating the region from one obstacle translate.
#[derive(Debug, Clone, PartialEq)]
pub struct Separator {
    pub obstacle: usize,
    pub offset: Offset,
    pub normal: Vec<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: String,
    pub seed: MPoint,
    pub polytope: Polytope,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub separators: Vec<Separator>,
}

impl Region {
    pub fn new(id: impl Into<String>, seed: MPoint, polytope: Polytope, box_lo: Vec<f64>, box_hi: Vec<f64>) -> Self {
        Region {
            id: id.into(),
            seed,
            polytope,
            box_lo,
            box_hi,
            separators: Vec::new(),
        }
    }

    /// Region equal to its own box, e.g. a hand-specified axis-aligned cell.
    pub fn from_box(id: impl Into<String>, seed: MPoint, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let polytope = Polytope::from_box(&lo, &hi);
        Region::new(id, seed, polytope, lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim()
    }

    pub fn box_polytope(&self) -> Polytope {
        Polytope::from_box(&self.box_lo, &self.box_hi)
    }

    /// Checks the region invariants: finite box narrower than half a
    /// circumference on circle dims, polytope nonempty and inside the box.
    pub fn validate(&self, m: &FlatManifold) -> Result<(), RegionError> {
        let bad = |reason: String| RegionError::InvalidRegion {
            id: self.id.clone(),
            reason,
        };
        if self.dim() != m.dim() || self.box_lo.len() != m.dim() || self.box_hi.len() != m.dim() {
            return Err(bad("dimension mismatch with manifold".into()));
        }
        for d in 0..m.dim() {
            let (lo, hi) = (self.box_lo[d], self.box_hi[d]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(bad(format!("box on dimension {d} is not a finite interval")));
            }
            if let Some(c) = m.factor(d).period() {
                if hi - lo >= 0.5 * c {
                    return Err(bad(format!(
                        "box width {} on circle dimension {d} is not below half the circumference",
                        hi - lo
                    )));
                }
            }
        }
        let bounds = self.polytope.axis_bounds().map_err(|e| bad(e.to_string()))?;
        for (d, (lo, hi)) in bounds.into_iter().enumerate() {
            if lo < self.box_lo[d] - MEMBERSHIP_TOL || hi > self.box_hi[d] + MEMBERSHIP_TOL {
                return Err(bad(format!("polytope leaves its box on dimension {d}")));
            }
        }
        Ok(())
    }

    /// Lift of `p` that lies in the box, closest to the box center otherwise.
    pub fn chart_lift(&self, p: &MPoint, m: &FlatManifold) -> Vec<f64> {
        p.coords
            .iter()
            .enumerate()
            .map(|(d, &x)| match m.factor(d).period() {
                Some(c) => {
                    let mid = 0.5 * (self.box_lo[d] + self.box_hi[d]);
                    x + ((mid - x) / c).round() * c
                }
                None => x,
            })
            .collect()
    }

    /// Chart coordinates of `p` inside the polytope, if `p` belongs to the region.
    pub fn locate(&self, p: &MPoint, m: &FlatManifold) -> Option<Vec<f64>> {
        let x = self.chart_lift(p, m);
        self.polytope.contains(&x, MEMBERSHIP_TOL).then_some(x)
    }
}

/// Grows a collision-free region around `seed` by alternating separating
/// hyperplanes and inscribed ellipsoids inside the convexity box.
pub fn grow_region(
    seed: &MPoint,
    obstacles: &[ConvexObstacle],
    m: &FlatManifold,
    params: &GrowParams,
) -> Result<Region, RegionError> {
    params.validate(m)?;
    let eps = params.epsilon_for(m);
    let (box_lo, box_hi) = convexity_box_bounds(seed, m, eps)?;
    if let Some(d) = (0..m.dim()).find(|&d| !(box_lo[d].is_finite() && box_hi[d].is_finite())) {
        return Err(RegionError::UnboundedRegion { dim: d });
    }
    let bx = Polytope::from_box(&box_lo, &box_hi);
    let wrapped = wrap_obstacles(obstacles, &bx, m)?;

    for w in &wrapped {
        let dist = w.hull.distance(&seed.coords)?;
        if dist <= params.configuration_margin.max(1e-12) {
            return Err(RegionError::SeedInCollision { index: w.source });
        }
    }

    let scale = box_hi
        .iter()
        .zip(&box_lo)
        .map(|(h, l)| h - l)
        .fold(f64::INFINITY, f64::min);
    let mut ellipsoid = Ellipsoid::ball(&seed.coords, 1e-4 * scale);
    let mut volume = ellipsoid.volume_factor();
    let mut polytope = bx.clone();
    let mut separators = Vec::new();

    for _ in 0..params.max_iterations {
        let (candidate, seps) = separate(&bx, &wrapped, &ellipsoid, params.configuration_margin)?;
        if !candidate.contains(&seed.coords, MEMBERSHIP_TOL) {
            break;
        }
        polytope = candidate;
        separators = seps;
        let next = inscribed(&polytope, params.inscribed)?;
        let next_volume = next.volume_factor();
        if !(next_volume > 1e-12) {
            return Err(RegionError::Degenerate { volume: next_volume });
        }
        let growth = (next_volume - volume) / volume;
        ellipsoid = next;
        volume = next_volume;
        if growth < params.termination_growth {
            break;
        }
    }

    Ok(Region {
        id: String::new(),
        seed: seed.clone(),
        polytope,
        box_lo,
        box_hi,
        separators,
    })
}

fn inscribed(poly: &Polytope, body: InscribedBody) -> Result<Ellipsoid, RegionError> {
    match body {
        InscribedBody::MaxVolumeEllipsoid => match Ellipsoid::max_inscribed(poly) {
            Err(PolytopeError::Degenerate { volume }) => Err(RegionError::Degenerate { volume }),
            other => Ok(other?),
        },
        InscribedBody::ChebyshevBall => {
            let (c, r) = poly
                .chebyshev_center()?
                .ok_or(RegionError::Polytope(PolytopeError::Empty))?;
            Ok(Ellipsoid::ball(&c, r))
        }
    }
}

/// One round of hyperplane placement for a fixed ellipsoid.
fn separate(
    bx: &Polytope,
    wrapped: &[WrappedObstacle],
    ellipsoid: &Ellipsoid,
    margin: f64,
) -> Result<(Polytope, Vec<Separator>), RegionError> {
    let mut closest = Vec::with_capacity(wrapped.len());
    for (i, w) in wrapped.iter().enumerate() {
        let u = w.hull.closest_in_metric(ellipsoid)?;
        closest.push((u.norm(), i, u));
    }
    // ascending metric distance, input order on ties
    closest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut poly = bx.clone();
    let mut seps: Vec<Separator> = Vec::new();
    for (dist, i, u) in closest {
        let w = &wrapped[i];
        let excluded = seps.iter().any(|s| {
            w.hull.vertices.iter().all(|v| {
                let av: f64 = s.normal.iter().zip(v).map(|(a, b)| a * b).sum();
                av >= s.bound + margin
            })
        });
        if excluded {
            continue;
        }
        if dist < 1e-12 {
            // the ellipsoid touches the obstacle; its center direction is undefined
            continue;
        }
        // tangent plane at u in unit coordinates, mapped back through L⁻ᵀ
        let nbar = &u / dist;
        let normal = ellipsoid
            .shape
            .transpose()
            .solve_upper_triangular(&nbar)
            .ok_or(RegionError::Degenerate { volume: 0.0 })?;
        let normal = &normal / normal.norm();
        let normal: Vec<f64> = normal.iter().copied().collect();
        // supporting plane of the hull in that direction, so separation is exact
        let support = w
            .hull
            .vertices
            .iter()
            .map(|v| normal.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let bound = support - margin;
        poly.add_halfspace(&normal, bound)?;
        seps.push(Separator {
            obstacle: w.source,
            offset: w.offset.clone(),
            normal,
            bound,
        });
    }
    Ok((poly, seps))
}

/// Grows one region per seed. Seeds are processed on scoped worker threads;
/// output order follows seed order and ids are `r<index>`.
pub fn grow_regions(
    seeds: &[MPoint],
    obstacles: &[ConvexObstacle],
    m: &FlatManifold,
    params: &GrowParams,
) -> Result<Vec<Region>, RegionError> {
    let results: Vec<Result<Region, RegionError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|s| scope.spawn(move || grow_region(s, obstacles, m, params)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("region worker panicked"))
            .collect()
    });
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map(|mut reg| {
                reg.id = format!("r{i}");
                reg
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GConvexReport {
    pub pairs: usize,
    pub violations: usize,
    /// Largest polytope violation seen along any sampled geodesic.
    pub worst_excess: f64,
}

/// Samples point pairs from the region, follows the minimizing geodesic
/// between them on the manifold and reports samples that leave the polytope.
pub fn check_gconvex(region: &Region, m: &FlatManifold, n_samples: usize, rng_seed: u64) -> GConvexReport {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut report = GConvexReport {
        pairs: n_samples,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
    };
    let pts = match region.polytope.sample(2 * n_samples, &mut rng) {
        Ok(p) => p,
        Err(_) => {
            report.violations = n_samples;
            report.worst_excess = f64::INFINITY;
            return report;
        }
    };
    for pair in pts.chunks(2) {
        let (Ok(p), Ok(q)) = (m.canonicalize_clamped(&pair[0]), m.canonicalize_clamped(&pair[1])) else {
            report.violations += 1;
            continue;
        };
        let mut worst = f64::NEG_INFINITY;
        for j in 0..GEODESIC_SAMPLES {
            let t = j as f64 / (GEODESIC_SAMPLES - 1) as f64;
            match m.geodesic_interpolate(&p, &q, t) {
                Ok(y) => {
                    let x = region.chart_lift(&y, m);
                    worst = worst.max(region.polytope.max_violation(&x));
                }
                Err(_) => {
                    // non-unique minimizing geodesic
                    worst = f64::INFINITY;
                    break;
                }
            }
        }
        report.worst_excess = report.worst_excess.max(worst);
        if worst > MEMBERSHIP_TOL {
            report.violations += 1;
        }
    }
    report
}

/// Interior witness of `u ∩ (v + k∘c)` in `u`'s chart, or `None` if empty.
///
/// A point with `u`-coordinates `x` has `v`-coordinates `x - k∘c`.
pub fn region_overlap(
    u: &Region,
    v: &Region,
    k: &Offset,
    m: &FlatManifold,
) -> Result<Option<Vec<f64>>, RegionError> {
    let t = m.translation(k);
    let inter = u.polytope.intersect(&v.polytope.translated(&t));
    let Some((x, _r)) = inter.chebyshev_center()? else {
        return Ok(None);
    };
    let shifted: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a - b).collect();
    let ok = u.polytope.contains(&x, MEMBERSHIP_TOL) && v.polytope.contains(&shifted, MEMBERSHIP_TOL);
    Ok(ok.then_some(x))
}

/// JSON document for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDoc {
    pub id: String,
    pub seed: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
}

impl From<&Region> for RegionDoc {
    fn from(r: &Region) -> Self {
        RegionDoc {
            id: r.id.clone(),
            seed: r.seed.coords.clone(),
            a: r.polytope.rows(),
            b: r.polytope.b().iter().copied().collect(),
            box_lo: r.box_lo.clone(),
            box_hi: r.box_hi.clone(),
        }
    }
}

impl RegionDoc {
    pub fn to_region(&self) -> Result<Region, RegionError> {
        let dim = self.seed.len();
        let polytope = Polytope::from_rows(&self.a, &self.b, dim)?;
        if self.box_lo.len() != dim || self.box_hi.len() != dim {
            return Err(RegionError::InvalidRegion {
                id: self.id.clone(),
                reason: "box dimension does not match seed".into(),
            });
        }
        Ok(Region::new(
            self.id.clone(),
            MPoint {
                coords: self.seed.clone(),
            },
            polytope,
            self.box_lo.clone(),
            self.box_hi.clone(),
        ))
    }
}

/// A regions file: the manifold plus its regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub manifold: FlatManifold,
    pub regions: Vec<RegionDoc>,
}

impl RegionSet {
    pub fn new(manifold: FlatManifold, regions: &[Region]) -> Self {
        RegionSet {
            manifold,
            regions: regions.iter().map(RegionDoc::from).collect(),
        }
    }

    pub fn to_regions(&self) -> Result<Vec<Region>, RegionError> {
        self.regions.iter().map(RegionDoc::to_region).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus() -> FlatManifold {
        FlatManifold::unit_torus(2)
    }

    fn pt(m: &FlatManifold, c: &[f64]) -> MPoint {
        m.canonicalize(c).unwrap()
    }

    #[test]
    fn convexity_box_examples() {
        let c1 = FlatManifold::new(vec![Factor::circle(1.0)]).unwrap();
        let (lo, hi) = convexity_box_bounds(&pt(&c1, &[0.5]), &c1, 0.05).unwrap();
        assert!((lo[0] - 0.3).abs() < 1e-15 && (hi[0] - 0.7).abs() < 1e-15);

        let s = FlatManifold::new(vec![Factor::circle(2.0 * std::f64::consts::PI)]).unwrap();
        let (lo, hi) = convexity_box_bounds(&pt(&s, &[0.0]), &s, 0.1).unwrap();
        let h = std::f64::consts::FRAC_PI_2;
        assert!((lo[0] - (-h + 0.1)).abs() < 1e-15 && (hi[0] - (h - 0.1)).abs() < 1e-15);

        let cl = FlatManifold::new(vec![Factor::circle(1.0), Factor::line(0.0, 1.0)]).unwrap();
        let (lo, hi) = convexity_box_bounds(&pt(&cl, &[0.2, 0.7]), &cl, 0.01).unwrap();
        assert_eq!((lo[1], hi[1]), (0.0, 1.0));

        assert!(matches!(
            convexity_box_bounds(&pt(&c1, &[0.5]), &c1, 0.25),
            Err(RegionError::EpsilonTooLarge { .. })
        ));
    }

    #[test]
    fn wrap_includes_seam_copy() {
        let m = torus();
        let seed = pt(&m, &[0.05, 0.5]);
        let bx = convexity_box(&seed, &m, 1e-3).unwrap();
        let ob = ConvexObstacle::rect(&[0.9, 0.4], &[1.0, 0.6]);
        let w = wrap_obstacles(&[ob], &bx, &m).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].offset, Offset(vec![-1, 0]));
        let xs: Vec<f64> = w[0].hull.vertices.iter().map(|v| v[0]).collect();
        assert!(xs.iter().all(|&x| (-0.1 - 1e-12..=1e-12).contains(&x)));
        assert!(wrap_obstacles(&[], &bx, &m).unwrap().is_empty());
    }

    #[test]
    fn wrap_excludes_far_obstacle() {
        let m = torus();
        let bx = convexity_box(&pt(&m, &[0.5, 0.5]), &m, 1e-3).unwrap();
        // box spans [0.251, 0.749]²; this obstacle never meets any lift of it
        let ob = ConvexObstacle::rect(&[0.8, 0.8], &[0.9, 0.9]);
        assert!(wrap_obstacles(&[ob], &bx, &m).unwrap().is_empty());
    }

    #[test]
    fn wrap_rejects_oversized_obstacle() {
        let m = torus();
        let bx = convexity_box(&pt(&m, &[0.5, 0.5]), &m, 1e-3).unwrap();
        let ob = ConvexObstacle::rect(&[0.0, 0.4], &[1.0, 0.6]);
        assert_eq!(
            wrap_obstacles(&[ob], &bx, &m),
            Err(RegionError::ObstacleTooLarge { index: 0, dim: 0 })
        );
    }

    #[test]
    fn grow_without_obstacles_is_the_box() {
        let m = torus();
        let seed = pt(&m, &[0.3, 0.6]);
        let r = grow_region(&seed, &[], &m, &GrowParams::default()).unwrap();
        let bounds = r.polytope.axis_bounds().unwrap();
        for d in 0..2 {
            assert!((bounds[d].0 - r.box_lo[d]).abs() < 1e-7);
            assert!((bounds[d].1 - r.box_hi[d]).abs() < 1e-7);
        }
        assert!(r.separators.is_empty());
    }

    #[test]
    fn grow_rejects_seed_in_collision() {
        let m = torus();
        let ob = ConvexObstacle::rect(&[0.4, 0.4], &[0.6, 0.6]);
        assert_eq!(
            grow_region(&pt(&m, &[0.5, 0.5]), &[ob], &m, &GrowParams::default()),
            Err(RegionError::SeedInCollision { index: 0 })
        );
    }

    #[test]
    fn grown_region_wraps_the_seam_and_avoids_obstacles() {
        let m = torus();
        let obstacles = vec![
            ConvexObstacle::rect(&[0.9, 0.4], &[0.95, 0.6]),
            ConvexObstacle::new(vec![vec![0.15, 0.7], vec![0.25, 0.8], vec![0.1, 0.85]]),
        ];
        let seed = pt(&m, &[0.05, 0.5]);
        let r = grow_region(&seed, &obstacles, &m, &GrowParams::default()).unwrap();
        assert!(r.polytope.contains(&seed.coords, 1e-9));
        let bounds = r.polytope.axis_bounds().unwrap();
        assert!(bounds[0].0 < 0.0, "region should straddle the seam");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for x in r.polytope.sample(2000, &mut rng).unwrap() {
            let p = m.canonicalize(&x).unwrap();
            for ob in &obstacles {
                for k in Offset::neighborhood(&m) {
                    let lifted = m.lift(&p, &k);
                    assert!(ob.distance(&lifted).unwrap() > -1e-9);
                }
            }
        }
        assert_eq!(check_gconvex(&r, &m, 300, 5).violations, 0);
    }

    #[test]
    fn chebyshev_variant_also_grows() {
        let m = torus();
        let obstacles = vec![ConvexObstacle::rect(&[0.4, 0.4], &[0.6, 0.6])];
        let params = GrowParams {
            inscribed: InscribedBody::ChebyshevBall,
            ..GrowParams::default()
        };
        let r = grow_region(&pt(&m, &[0.2, 0.5]), &obstacles, &m, &params).unwrap();
        assert!(r.polytope.contains(&[0.2, 0.5], 1e-9));
        assert!(!r.polytope.contains(&[0.45, 0.5], 1e-9));
    }

    #[test]
    fn gconvex_report_examples() {
        let m = torus();
        let seed = pt(&m, &[0.5, 0.5]);
        let (lo, hi) = convexity_box_bounds(&seed, &m, 1e-3).unwrap();
        let r = Region::from_box("box", seed, lo, hi);
        assert_eq!(check_gconvex(&r, &m, 1000, 7).violations, 0);

        let c1 = FlatManifold::new(vec![Factor::circle(1.0)]).unwrap();
        let wide = Region::from_box("wide", pt(&c1, &[0.0]), vec![0.7], vec![1.3]);
        assert!(check_gconvex(&wide, &c1, 1000, 7).violations >= 1);

        let point = Region::from_box("pt", pt(&c1, &[0.2]), vec![0.2], vec![0.2]);
        assert_eq!(check_gconvex(&point, &c1, 50, 7).violations, 0);
    }

    #[test]
    fn overlap_examples() {
        let m = torus();
        let u = Region::from_box("u", pt(&m, &[0.5, 0.5]), vec![0.3, 0.3], vec![0.7, 0.7]);
        let w = region_overlap(&u, &u, &Offset::zero(2), &m).unwrap().unwrap();
        assert!((w[0] - 0.5).abs() < 1e-7 && (w[1] - 0.5).abs() < 1e-7);

        let a = Region::from_box("a", pt(&m, &[0.875, 0.5]), vec![0.8, 0.0], vec![0.95, 1.0]);
        let b = Region::from_box("b", pt(&m, &[0.05, 0.5]), vec![0.0, 0.0], vec![0.1, 1.0]);
        for k in [[0, 0], [1, 0], [-1, 0]] {
            assert!(region_overlap(&a, &b, &Offset(k.to_vec()), &m).unwrap().is_none());
        }

        let wrapping = Region::from_box("w", pt(&m, &[0.925, 0.5]), vec![0.8, 0.0], vec![1.05, 1.0]);
        let x = region_overlap(&wrapping, &b, &Offset(vec![1, 0]), &m).unwrap().unwrap();
        assert!((1.0 - 1e-9..=1.05 + 1e-9).contains(&x[0]));
    }

    #[test]
    fn region_json_round_trip() {
        let m = torus();
        let r = Region::from_box("r0", pt(&m, &[0.5, 0.5]), vec![0.3, 0.3], vec![0.7, 0.7]);
        let set = RegionSet::new(m.clone(), std::slice::from_ref(&r));
        let s = serde_json::to_string(&set).unwrap();
        assert!(s.contains("\"A\":"));
        let back: RegionSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back.to_regions().unwrap()[0].polytope, r.polytope);
    }

    #[test]
    fn validate_flags_wide_box() {
        let c1 = FlatManifold::new(vec![Factor::circle(1.0)]).unwrap();
        let wide = Region::from_box("wide", pt(&c1, &[0.0]), vec![0.7], vec![1.3]);
        assert!(wide.validate(&c1).is_err());
        let ok = Region::from_box("ok", pt(&c1, &[0.0]), vec![-0.2], vec![0.2]);
        ok.validate(&c1).unwrap();
    }
}
