//! Globally optimal shortest paths on flat configuration spaces.
//!
//! Configuration spaces that are products of circles and intervals (tori,
//! cylinders, revolute-joint arms) are covered by geodesically convex
//! polytopic regions expressed in one globally aligned chart. Overlapping
//! regions become graph edges carrying a lattice translation, the shortest
//! path problem over that graph is solved exactly as a convex program per
//! candidate path, and the optimum is lifted back to a piecewise geodesic
//! on the manifold.

pub mod conic;
pub mod ggcs;
pub mod manifold;
pub mod oracle;
pub mod polytope;
pub mod regions;
pub mod scenario;

pub use manifold::{Factor, FlatManifold, MPoint, ManifoldError, Offset};
pub use polytope::{Ellipsoid, Polytope, PolytopeError};
