//! H-polytopes `{x : A x <= b}` and inscribed ellipsoids.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::conic::{Affine, ConicError, ConicProgram};

/// Facet normals shorter than this are rejected.
pub const MIN_ROW_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolytopeError {
    #[error("A has {rows} rows but b has {len} entries")]
    Shape { rows: usize, len: usize },
    #[error("non-finite entry in facet {row}")]
    NonFinite { row: usize },
    #[error("facet {row} has a near-zero normal")]
    ZeroRow { row: usize },
    #[error("polytope is empty")]
    Empty,
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("inscribed ellipsoid volume {volume:e} is degenerate")]
    Degenerate { volume: f64 },
    #[error(transparent)]
    Solver(#[from] ConicError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, PolytopeError> {
        if a.nrows() != b.len() {
            return Err(PolytopeError::Shape {
                rows: a.nrows(),
                len: b.len(),
            });
        }
        for r in 0..a.nrows() {
            let row = a.row(r);
            if !b[r].is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(PolytopeError::NonFinite { row: r });
            }
            if row.norm() < MIN_ROW_NORM {
                return Err(PolytopeError::ZeroRow { row: r });
            }
        }
        Ok(Self { a, b })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: &[f64], dim: usize) -> Result<Self, PolytopeError> {
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PolytopeError::Shape {
                rows: rows.len(),
                len: dim,
            });
        }
        let a = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self::new(a, DVector::from_column_slice(b))
    }

    /// Axis-aligned box; infinite bounds produce no facet.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        let n = lo.len();
        let mut rows = Vec::new();
        let mut b = Vec::new();
        for i in 0..n {
            if hi[i].is_finite() {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                rows.push(r);
                b.push(hi[i]);
            }
            if lo[i].is_finite() {
                let mut r = vec![0.0; n];
                r[i] = -1.0;
                rows.push(r);
                b.push(-lo[i]);
            }
        }
        Self::from_rows(&rows, &b, n).expect("unit box rows are valid")
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_facets(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_facets())
            .map(|r| self.a.row(r).iter().copied().collect())
            .collect()
    }

    /// Largest `a_i·x - b_i`, or `-inf` for a polytope without facets.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        (0..self.num_facets())
            .map(|r| {
                self.a
                    .row(r)
                    .iter()
                    .zip(x)
                    .map(|(a, v)| a * v)
                    .sum::<f64>()
                    - self.b[r]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    pub fn intersect(&self, other: &Polytope) -> Polytope {
        assert_eq!(self.dim(), other.dim());
        let n = self.dim();
        let m = self.num_facets() + other.num_facets();
        let a = DMatrix::from_fn(m, n, |i, j| {
            if i < self.num_facets() {
                self.a[(i, j)]
            } else {
                other.a[(i - self.num_facets(), j)]
            }
        });
        let b = DVector::from_fn(m, |i, _| {
            if i < self.num_facets() {
                self.b[i]
            } else {
                other.b[i - self.num_facets()]
            }
        });
        Polytope { a, b }
    }

    /// `{x + t : A x <= b}`.
    pub fn translated(&self, t: &[f64]) -> Polytope {
        let shift = &self.a * DVector::from_column_slice(t);
        Polytope {
            a: self.a.clone(),
            b: &self.b + shift,
        }
    }

    pub fn add_halfspace(&mut self, normal: &[f64], offset: f64) -> Result<(), PolytopeError> {
        let n = self.dim();
        let row = DVector::from_column_slice(normal);
        if row.norm() < MIN_ROW_NORM {
            return Err(PolytopeError::ZeroRow {
                row: self.num_facets(),
            });
        }
        let m = self.num_facets();
        let mut a = self.a.clone().resize_vertically(m + 1, 0.0);
        for j in 0..n {
            a[(m, j)] = normal[j];
        }
        let mut b = self.b.clone().resize_vertically(m + 1, 0.0);
        b[m] = offset;
        self.a = a;
        self.b = b;
        Ok(())
    }

    fn row_affine(&self, r: usize, x0: usize) -> Affine {
        let mut e = Affine::constant(self.b[r]);
        for j in 0..self.dim() {
            e = e.term(x0 + j, -self.a[(r, j)]);
        }
        e
    }

    /// Adds `A x <= b` on the variables `x0 .. x0+dim` of `prog`.
    pub(crate) fn constrain(&self, prog: &mut ConicProgram, x0: usize) {
        for r in 0..self.num_facets() {
            prog.nonneg(self.row_affine(r, x0));
        }
    }

    /// Adds `A (x + shift) <= b` where `x` lives at `x0`.
    pub(crate) fn constrain_shifted(&self, prog: &mut ConicProgram, x0: usize, shift: &[f64]) {
        for r in 0..self.num_facets() {
            let s: f64 = (0..self.dim()).map(|j| self.a[(r, j)] * shift[j]).sum();
            prog.nonneg(self.row_affine(r, x0).plus(-s));
        }
    }

    /// Center and radius of the largest inscribed ball, `None` if empty.
    pub fn chebyshev_center(&self) -> Result<Option<(Vec<f64>, f64)>, PolytopeError> {
        let n = self.dim();
        let mut prog = ConicProgram::new();
        let x = prog.add_vars(n);
        let r = prog.add_vars(1);
        prog.set_cost(r, -1.0);
        for i in 0..self.num_facets() {
            let norm = self.a.row(i).norm();
            prog.nonneg(self.row_affine(i, x).term(r, -norm));
        }
        prog.nonneg(Affine::var(r));
        match prog.solve() {
            Ok(s) => Ok(Some((s.x[x..x + n].to_vec(), s.x[r].max(0.0)))),
            Err(ConicError::Infeasible) => Ok(None),
            Err(ConicError::Unbounded) => Err(PolytopeError::Unbounded),
            Err(e) => Err(e.into()),
        }
    }

    pub fn is_empty(&self) -> Result<bool, PolytopeError> {
        Ok(self.chebyshev_center()?.is_none())
    }

    /// `max dir·x` over the polytope.
    pub fn support(&self, dir: &[f64]) -> Result<f64, PolytopeError> {
        let n = self.dim();
        let mut prog = ConicProgram::new();
        let x = prog.add_vars(n);
        for (j, d) in dir.iter().enumerate() {
            prog.set_cost(x + j, -d);
        }
        self.constrain(&mut prog, x);
        match prog.solve() {
            Ok(s) => Ok(-s.objective),
            Err(ConicError::Infeasible) => Err(PolytopeError::Empty),
            Err(ConicError::Unbounded) => Err(PolytopeError::Unbounded),
            Err(e) => Err(e.into()),
        }
    }

    /// Per-axis `(min, max)` of the polytope.
    pub fn axis_bounds(&self) -> Result<Vec<(f64, f64)>, PolytopeError> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                let hi = self.support(&e)?;
                e[i] = -1.0;
                let lo = -self.support(&e)?;
                Ok((lo, hi))
            })
            .collect()
    }

    /// Parameter range `[t0, t1]` of `{x + t·d}` inside the polytope, `None` if it misses.
    pub fn line_interval(&self, x: &[f64], d: &[f64]) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for r in 0..self.num_facets() {
            let row = self.a.row(r);
            let ad: f64 = row.iter().zip(d).map(|(a, v)| a * v).sum();
            let slack = self.b[r] - row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            if ad.abs() < 1e-300 {
                if slack < 0.0 {
                    return None;
                }
            } else if ad > 0.0 {
                t1 = t1.min(slack / ad);
            } else {
                t0 = t0.max(slack / ad);
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }

    /// Hit-and-run samples, approximately uniform over the polytope.
    ///
    /// Lower-dimensional polytopes (zero Chebyshev radius) return copies of
    /// the center.
    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>, PolytopeError> {
        let (center, radius) = self.chebyshev_center()?.ok_or(PolytopeError::Empty)?;
        if radius < 1e-12 {
            return Ok(vec![center; count]);
        }
        let n = self.dim();
        let mut x = center;
        let step = |x: &mut Vec<f64>, rng: &mut R| {
            let mut d: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            d.iter_mut().for_each(|v| *v /= norm);
            if let Some((t0, t1)) = self.line_interval(x, &d) {
                if t0.is_finite() && t1.is_finite() {
                    let t = t0 + (t1 - t0) * rng.random::<f64>();
                    for j in 0..n {
                        x[j] += t * d[j];
                    }
                }
            }
        };
        for _ in 0..64 {
            step(&mut x, rng);
        }
        let thin = 3 + n;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            for _ in 0..thin {
                step(&mut x, rng);
            }
            out.push(x.clone());
        }
        Ok(out)
    }

    /// Polygon vertices (counter-clockwise) of a bounded 2-D polytope.
    pub fn vertices_2d(&self) -> Vec<[f64; 2]> {
        assert_eq!(self.dim(), 2, "vertices_2d needs a planar polytope");
        const BIG: f64 = 1e6;
        let mut poly = vec![[-BIG, -BIG], [BIG, -BIG], [BIG, BIG], [-BIG, BIG]];
        for r in 0..self.num_facets() {
            let (a0, a1, b) = (self.a[(r, 0)], self.a[(r, 1)], self.b[r]);
            let f = |p: &[f64; 2]| a0 * p[0] + a1 * p[1] - b;
            let mut next = Vec::with_capacity(poly.len() + 1);
            for i in 0..poly.len() {
                let p = poly[i];
                let q = poly[(i + 1) % poly.len()];
                let (fp, fq) = (f(&p), f(&q));
                if fp <= 0.0 {
                    next.push(p);
                }
                if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
                    let t = fp / (fp - fq);
                    next.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                }
            }
            poly = next;
            if poly.is_empty() {
                break;
            }
        }
        poly
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; only directions are needed so one variate per call is fine
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Ellipsoid `{L u + c : ‖u‖ <= 1}` with `L` lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn ball(center: &[f64], radius: f64) -> Self {
        let n = center.len();
        Ellipsoid {
            center: DVector::from_column_slice(center),
            shape: DMatrix::identity(n, n) * radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `det L`, proportional to the volume.
    pub fn volume_factor(&self) -> f64 {
        self.shape.determinant().abs()
    }

    /// `L⁻¹ (x - c)`.
    pub fn to_unit(&self, x: &[f64]) -> DVector<f64> {
        let rhs = DVector::from_column_slice(x) - &self.center;
        self.shape
            .solve_lower_triangular(&rhs)
            .unwrap_or_else(|| DVector::from_element(x.len(), f64::INFINITY))
    }

    pub fn from_unit(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.shape * u + &self.center
    }

    /// Maximum-volume ellipsoid inscribed in a bounded polytope.
    ///
    /// Solved as `max Σ log L_ii` s.t. `‖Lᵀ a_i‖ + a_iᵀ c <= b_i`, with the
    /// log terms expressed through exponential cones.
    pub fn max_inscribed(poly: &Polytope) -> Result<Ellipsoid, PolytopeError> {
        let n = poly.dim();
        poly.axis_bounds()?;
        let mut prog = ConicProgram::new();
        let tri = n * (n + 1) / 2;
        let l0 = prog.add_vars(tri);
        let c0 = prog.add_vars(n);
        let t0 = prog.add_vars(n);
        let mut slot = vec![usize::MAX; n * n];
        let mut next = l0;
        for j in 0..n {
            for i in j..n {
                slot[i * n + j] = next;
                next += 1;
            }
        }
        let idx = |i: usize, j: usize| slot[i * n + j];
        for k in 0..n {
            prog.set_cost(t0 + k, -1.0);
            prog.exp_cone(
                Affine::var(t0 + k),
                Affine::constant(1.0),
                Affine::var(idx(k, k)),
            );
        }
        for r in 0..poly.num_facets() {
            let row = poly.a.row(r);
            let norm = row.norm();
            let a: Vec<f64> = row.iter().map(|v| v / norm).collect();
            let b = poly.b[r] / norm;
            let mut head = Affine::constant(b);
            for j in 0..n {
                head = head.term(c0 + j, -a[j]);
            }
            let mut cone = vec![head];
            for k in 0..n {
                let mut e = Affine::default();
                for j in k..n {
                    e = e.term(idx(j, k), a[j]);
                }
                cone.push(e);
            }
            prog.soc(cone);
        }
        let s = match prog.solve() {
            Ok(s) => s,
            Err(ConicError::Infeasible) => return Err(PolytopeError::Empty),
            Err(ConicError::Unbounded) => return Err(PolytopeError::Unbounded),
            Err(e) => return Err(e.into()),
        };
        let shape = DMatrix::from_fn(n, n, |i, j| if i >= j { s.x[idx(i, j)] } else { 0.0 });
        let center = DVector::from_column_slice(&s.x[c0..c0 + n]);
        let e = Ellipsoid { center, shape };
        let volume = e.volume_factor();
        if !(volume > 1e-12) {
            return Err(PolytopeError::Degenerate { volume });
        }
        Ok(e)
    }
}
