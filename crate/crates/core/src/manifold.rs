//! Flat product manifolds built from circles and intervals.
//!
//! Every factor shares one globally aligned coordinate frame, so moving
//! between charts is a pure translation by integer multiples of the circle
//! circumferences. Points are stored by their canonical representative:
//! circle coordinates in `[0, c)`, line coordinates inside their bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used to decide that a circle coordinate pair is antipodal.
pub const ANTIPODAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} = {value} lies outside line bounds [{lo}, {hi}]")]
    LineOutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("antipodal ambiguity on dimension {index}: minimizing geodesic is not unique")]
    AntipodalAmbiguity { index: usize },
    #[error("factor {index} is not a circle")]
    NotACircle { index: usize },
    #[error("invalid factor {index}: {reason}")]
    InvalidFactor { index: usize, reason: String },
    #[error("manifold must have at least one factor")]
    Empty,
    #[error("non-finite coordinate at index {index}")]
    NonFinite { index: usize },
}

/// One factor of a product manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Factor {
    Circle {
        circumference: f64,
    },
    /// A (possibly unbounded) interval. Missing bounds mean unbounded.
    Line {
        #[serde(default = "neg_inf", skip_serializing_if = "is_neg_inf", with = "opt_bound_lo")]
        lo: f64,
        #[serde(default = "pos_inf", skip_serializing_if = "is_pos_inf", with = "opt_bound_hi")]
        hi: f64,
    },
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}
fn pos_inf() -> f64 {
    f64::INFINITY
}
fn is_neg_inf(v: &f64) -> bool {
    *v == f64::NEG_INFINITY
}
fn is_pos_inf(v: &f64) -> bool {
    *v == f64::INFINITY
}

// JSON has no infinities; unbounded ends are written as `null` or omitted.
mod opt_bound_lo {
    use serde::{Deserialize, Deserializer, Serializer};
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(*v)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

mod opt_bound_hi {
    use serde::{Deserialize, Deserializer, Serializer};
    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(*v)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Factor {
    pub fn circle(circumference: f64) -> Self {
        Factor::Circle { circumference }
    }

    pub fn line(lo: f64, hi: f64) -> Self {
        Factor::Line { lo, hi }
    }

    pub fn unbounded_line() -> Self {
        Factor::Line {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, Factor::Circle { .. })
    }

    /// Circumference for circles, `None` for lines.
    pub fn period(&self) -> Option<f64> {
        match *self {
            Factor::Circle { circumference } => Some(circumference),
            Factor::Line { .. } => None,
        }
    }

    /// `c/4` for a circle of circumference `c`, infinite for a line.
    ///
    /// A ball of radius `r` on the circle is an arc of length `2r`; it is
    /// geodesically convex iff `2r < c/2`.
    pub fn convexity_radius(&self) -> f64 {
        match *self {
            Factor::Circle { circumference } => circumference / 4.0,
            Factor::Line { .. } => f64::INFINITY,
        }
    }

    fn validate(&self, index: usize) -> Result<(), ManifoldError> {
        match *self {
            Factor::Circle { circumference } => {
                if !(circumference.is_finite() && circumference > 0.0) {
                    return Err(ManifoldError::InvalidFactor {
                        index,
                        reason: format!("circumference must be positive, got {circumference}"),
                    });
                }
            }
            Factor::Line { lo, hi } => {
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return Err(ManifoldError::InvalidFactor {
                        index,
                        reason: format!("line bounds must satisfy lo < hi, got [{lo}, {hi}]"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Ordered product of circle and line factors with the flat product metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Factor>", into = "Vec<Factor>")]
pub struct FlatManifold {
    factors: Vec<Factor>,
}

impl TryFrom<Vec<Factor>> for FlatManifold {
    type Error = ManifoldError;

    fn try_from(factors: Vec<Factor>) -> Result<Self, Self::Error> {
        FlatManifold::new(factors)
    }
}

impl From<FlatManifold> for Vec<Factor> {
    fn from(m: FlatManifold) -> Self {
        m.factors
    }
}

impl FlatManifold {
    pub fn new(factors: Vec<Factor>) -> Result<Self, ManifoldError> {
        if factors.is_empty() {
            return Err(ManifoldError::Empty);
        }
        for (i, f) in factors.iter().enumerate() {
            f.validate(i)?;
        }
        Ok(Self { factors })
    }

    /// The flat torus with `dim` unit circles.
    pub fn unit_torus(dim: usize) -> Self {
        Self::new(vec![Factor::circle(1.0); dim.max(1)]).expect("unit circles are valid")
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, i: usize) -> &Factor {
        &self.factors[i]
    }

    /// Indices of the circle factors, in order.
    pub fn circle_dims(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.factors[i].is_circle())
            .collect()
    }

    /// Per-dimension period (0 on line factors), i.e. the translation of a unit offset.
    pub fn periods(&self) -> Vec<f64> {
        self.factors
            .iter()
            .map(|f| f.period().unwrap_or(0.0))
            .collect()
    }

    pub fn convexity_radii(&self) -> Vec<f64> {
        self.factors.iter().map(Factor::convexity_radius).collect()
    }

    /// Smallest circumference among circle factors, if any.
    pub fn min_circumference(&self) -> Option<f64> {
        self.factors
            .iter()
            .filter_map(Factor::period)
            .fold(None, |acc, c| Some(acc.map_or(c, |a: f64| a.min(c))))
    }

    fn check_dim(&self, len: usize) -> Result<(), ManifoldError> {
        if len != self.dim() {
            return Err(ManifoldError::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Wraps circle coordinates into `[0, c)`; line coordinates must already be in bounds.
    pub fn canonicalize(&self, raw: &[f64]) -> Result<MPoint, ManifoldError> {
        self.check_dim(raw.len())?;
        let mut coords = Vec::with_capacity(raw.len());
        for (i, (&x, f)) in raw.iter().zip(&self.factors).enumerate() {
            if !x.is_finite() {
                return Err(ManifoldError::NonFinite { index: i });
            }
            match *f {
                Factor::Circle { circumference } => coords.push(wrap(x, circumference)),
                Factor::Line { lo, hi } => {
                    if x < lo || x > hi {
                        return Err(ManifoldError::LineOutOfBounds {
                            index: i,
                            value: x,
                            lo,
                            hi,
                        });
                    }
                    coords.push(x);
                }
            }
        }
        Ok(MPoint { coords })
    }

    /// Per-dimension signed displacement of the shortest wrap from `p` to `q`.
    ///
    /// Returns `Err(index)` when a circle coordinate pair is antipodal within
    /// [`ANTIPODAL_TOL`].
    fn minimal_delta(&self, p: &MPoint, q: &MPoint) -> Result<Vec<f64>, ManifoldError> {
        self.check_dim(p.dim())?;
        self.check_dim(q.dim())?;
        let mut delta = Vec::with_capacity(self.dim());
        for (i, f) in self.factors.iter().enumerate() {
            let d = q.coords[i] - p.coords[i];
            match *f {
                Factor::Circle { circumference: c } => {
                    let w = wrap(d, c);
                    // w in [0, c): go forward by w or backward by c - w
                    if (w - 0.5 * c).abs() <= ANTIPODAL_TOL * c.max(1.0) {
                        return Err(ManifoldError::AntipodalAmbiguity { index: i });
                    }
                    delta.push(if w < 0.5 * c { w } else { w - c });
                }
                Factor::Line { .. } => delta.push(d),
            }
        }
        Ok(delta)
    }

    /// Length of the shortest curve between `p` and `q` under the flat product metric.
    pub fn geodesic_distance(&self, p: &MPoint, q: &MPoint) -> Result<f64, ManifoldError> {
        self.check_dim(p.dim())?;
        self.check_dim(q.dim())?;
        let sq: f64 = self
            .factors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let d = (q.coords[i] - p.coords[i]).abs();
                let d = match *f {
                    Factor::Circle { circumference: c } => {
                        let w = wrap(d, c);
                        w.min(c - w)
                    }
                    Factor::Line { .. } => d,
                };
                d * d
            })
            .sum();
        Ok(sq.sqrt())
    }

    /// Point at fraction `t` along the unique minimizing geodesic from `p` to `q`.
    pub fn geodesic_interpolate(
        &self,
        p: &MPoint,
        q: &MPoint,
        t: f64,
    ) -> Result<MPoint, ManifoldError> {
        let delta = self.minimal_delta(p, q)?;
        if t == 1.0 {
            return Ok(q.clone());
        }
        let raw: Vec<f64> = p
            .coords
            .iter()
            .zip(&delta)
            .map(|(x, d)| x + t * d)
            .collect();
        self.canonicalize_clamped(&raw)
    }

    /// Signed displacement of the minimizing geodesic from `p` to `q`.
    pub fn log(&self, p: &MPoint, q: &MPoint) -> Result<Vec<f64>, ManifoldError> {
        self.minimal_delta(p, q)
    }

    /// Chart representative `p + k∘c`; line components are left untouched.
    pub fn lift(&self, p: &MPoint, k: &Offset) -> Vec<f64> {
        p.coords
            .iter()
            .zip(&self.factors)
            .zip(&k.0)
            .map(|((x, f), &ki)| match f.period() {
                Some(c) => x + ki as f64 * c,
                None => *x,
            })
            .collect()
    }

    /// Translation vector `k∘c` of an offset.
    pub fn translation(&self, k: &Offset) -> Vec<f64> {
        self.factors
            .iter()
            .zip(&k.0)
            .map(|(f, &ki)| f.period().map_or(0.0, |c| ki as f64 * c))
            .collect()
    }

    /// Offset `k` with `raw = canonical + k∘c` on circle dimensions.
    pub fn offset_of(&self, raw: &[f64]) -> Offset {
        Offset(
            raw.iter()
                .zip(&self.factors)
                .map(|(&x, f)| match f.period() {
                    Some(c) => (x / c).floor() as i64,
                    None => 0,
                })
                .collect(),
        )
    }

    /// Replaces circle factor `i` by the interval `[cut, cut + c]`.
    pub fn unroll_factor(&self, i: usize, cut: f64) -> Result<FlatManifold, ManifoldError> {
        if i >= self.dim() {
            return Err(ManifoldError::DimensionMismatch {
                expected: self.dim(),
                got: i + 1,
            });
        }
        let c = self.factors[i]
            .period()
            .ok_or(ManifoldError::NotACircle { index: i })?;
        let mut factors = self.factors.clone();
        factors[i] = Factor::line(cut, cut + c);
        FlatManifold::new(factors)
    }

    /// Like [`Self::canonicalize`] but clamps line coordinates that drift
    /// outside their bounds by rounding.
    pub(crate) fn canonicalize_clamped(&self, raw: &[f64]) -> Result<MPoint, ManifoldError> {
        let clamped: Vec<f64> = raw
            .iter()
            .zip(&self.factors)
            .map(|(&x, f)| match *f {
                Factor::Line { lo, hi } => x.clamp(lo, hi),
                Factor::Circle { .. } => x,
            })
            .collect();
        self.canonicalize(&clamped)
    }
}

/// Wraps `x` into `[0, c)`.
pub(crate) fn wrap(x: f64, c: f64) -> f64 {
    let w = x.rem_euclid(c);
    // rem_euclid can round up to exactly c for tiny negative inputs
    if w >= c {
        0.0
    } else {
        w
    }
}

/// Canonical representative of a manifold point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MPoint {
    pub coords: Vec<f64>,
}

impl MPoint {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }
}

/// Integer lift offset per dimension; always zero on line factors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Offset(pub Vec<i64>);

impl Offset {
    pub fn zero(dim: usize) -> Self {
        Offset(vec![0; dim])
    }

    pub fn neg(&self) -> Self {
        Offset(self.0.iter().map(|k| -k).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// All offsets in `{-1, 0, 1}` on the circle dimensions of `m`, zero elsewhere.
    pub fn neighborhood(m: &FlatManifold) -> Vec<Offset> {
        let circles = m.circle_dims();
        let mut out = Vec::with_capacity(3usize.pow(circles.len() as u32));
        let n = 3usize.pow(circles.len() as u32);
        for code in 0..n {
            let mut k = vec![0i64; m.dim()];
            let mut c = code;
            for &d in &circles {
                k[d] = (c % 3) as i64 - 1;
                c /= 3;
            }
            out.push(Offset(k));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn torus() -> FlatManifold {
        FlatManifold::unit_torus(2)
    }

    fn pt(m: &FlatManifold, c: &[f64]) -> MPoint {
        m.canonicalize(c).unwrap()
    }

    #[test]
    fn canonicalize_examples() {
        let c1 = FlatManifold::new(vec![Factor::circle(1.0)]).unwrap();
        assert!((c1.canonicalize(&[1.25]).unwrap().coords[0] - 0.25).abs() < 1e-15);

        let cl = FlatManifold::new(vec![Factor::circle(1.0), Factor::line(0.0, 1.0)]).unwrap();
        assert_eq!(cl.canonicalize(&[0.0, 0.5]).unwrap().coords, vec![0.0, 0.5]);

        let cc = FlatManifold::new(vec![Factor::circle(1.0), Factor::circle(2.0)]).unwrap();
        let p = cc.canonicalize(&[-0.1, 2.3]).unwrap();
        assert!((p.coords[0] - 0.9).abs() < 1e-12);
        assert!((p.coords[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn canonicalize_errors() {
        let cl = FlatManifold::new(vec![Factor::circle(1.0), Factor::line(0.0, 1.0)]).unwrap();
        assert!(matches!(
            cl.canonicalize(&[0.1]),
            Err(ManifoldError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            cl.canonicalize(&[0.1, 1.5]),
            Err(ManifoldError::LineOutOfBounds { index: 1, .. })
        ));
    }

    #[test]
    fn tiny_negative_wraps_below_period() {
        let w = wrap(-1e-18, 1.0);
        assert!((0.0..1.0).contains(&w));
    }

    #[test]
    fn distance_examples() {
        let m = torus();
        let p = pt(&m, &[0.1, 0.5]);
        assert_eq!(m.geodesic_distance(&p, &p).unwrap(), 0.0);
        let q = pt(&m, &[0.9, 0.5]);
        assert!((m.geodesic_distance(&p, &q).unwrap() - 0.2).abs() < 1e-12);

        let s = FlatManifold::new(vec![Factor::circle(2.0 * PI)]).unwrap();
        let a = pt(&s, &[0.1]);
        let b = pt(&s, &[PI + 0.1]);
        assert!((s.geodesic_distance(&a, &b).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn interpolate_examples() {
        let m = torus();
        let p = pt(&m, &[0.9, 0.0]);
        let q = pt(&m, &[0.1, 0.0]);
        assert_eq!(m.geodesic_interpolate(&p, &q, 0.0).unwrap(), p);
        assert_eq!(m.geodesic_interpolate(&p, &q, 1.0).unwrap(), q);
        let mid = m.geodesic_interpolate(&p, &q, 0.5).unwrap();
        assert!(m.geodesic_distance(&mid, &pt(&m, &[0.0, 0.0])).unwrap() < 1e-12);

        let s = FlatManifold::new(vec![Factor::circle(2.0 * PI)]).unwrap();
        let err = s.geodesic_interpolate(&pt(&s, &[0.0]), &pt(&s, &[PI]), 0.5);
        assert_eq!(err, Err(ManifoldError::AntipodalAmbiguity { index: 0 }));
    }

    #[test]
    fn lift_examples() {
        let c1 = FlatManifold::new(vec![Factor::circle(1.0)]).unwrap();
        let p = pt(&c1, &[0.9]);
        assert_eq!(c1.lift(&p, &Offset::zero(1)), vec![0.9]);
        assert!((c1.lift(&p, &Offset(vec![-1]))[0] + 0.1).abs() < 1e-12);

        let cl = FlatManifold::new(vec![Factor::circle(1.0), Factor::unbounded_line()]).unwrap();
        let p = pt(&cl, &[0.25, 0.5]);
        assert_eq!(cl.lift(&p, &Offset(vec![2, 0])), vec![2.25, 0.5]);
    }

    #[test]
    fn unroll_examples() {
        let c1 = FlatManifold::new(vec![Factor::circle(1.0)]).unwrap();
        assert_eq!(
            c1.unroll_factor(0, 0.0).unwrap().factors(),
            &[Factor::line(0.0, 1.0)]
        );
        let m = FlatManifold::new(vec![Factor::circle(2.0 * PI), Factor::line(0.0, 1.0)]).unwrap();
        let u = m.unroll_factor(0, -PI).unwrap();
        assert_eq!(u.factors(), &[Factor::line(-PI, PI), Factor::line(0.0, 1.0)]);
        assert_eq!(
            m.unroll_factor(1, 0.0),
            Err(ManifoldError::NotACircle { index: 1 })
        );
    }

    #[test]
    fn convexity_radius_is_quarter_circumference() {
        assert_eq!(Factor::circle(2.0).convexity_radius(), 0.5);
        assert!(Factor::line(0.0, 1.0).convexity_radius().is_infinite());
    }

    #[test]
    fn invalid_factors_rejected() {
        assert!(FlatManifold::new(vec![]).is_err());
        assert!(FlatManifold::new(vec![Factor::circle(0.0)]).is_err());
        assert!(FlatManifold::new(vec![Factor::line(1.0, 1.0)]).is_err());
    }

    #[test]
    fn serde_shape() {
        let m = FlatManifold::new(vec![Factor::circle(1.0), Factor::line(0.0, 2.0)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(
            s,
            r#"[{"kind":"circle","circumference":1.0},{"kind":"line","lo":0.0,"hi":2.0}]"#
        );
        let back: FlatManifold = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let unb: FlatManifold = serde_json::from_str(r#"[{"kind":"line"}]"#).unwrap();
        assert_eq!(unb.factors(), &[Factor::unbounded_line()]);
        assert!(serde_json::from_str::<FlatManifold>("[]").is_err());
    }

    #[test]
    fn neighborhood_offsets() {
        let m = FlatManifold::new(vec![Factor::circle(1.0), Factor::line(0.0, 1.0)]).unwrap();
        let ks = Offset::neighborhood(&m);
        assert_eq!(ks.len(), 3);
        assert!(ks.iter().all(|k| k.0[1] == 0));
    }
}
