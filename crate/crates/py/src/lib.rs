//! Python bindings: manifolds, scenarios, planning and the oracles.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use geoplan_core::oracle::{grid_shortest_path as grid_path, sphere_parallelogramoid as parallelogramoid, Connectivity, GridSpec};
use geoplan_core::regions::{check_gconvex as gconvex, RegionSet};
use geoplan_core::scenario::{self, PlanMode, PlanOptions, PlanOutput, ScenarioError, Unroll};
use geoplan_core::{FlatManifold, MPoint};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn plan_err(e: ScenarioError) -> PyErr {
    match e {
        ScenarioError::Ggcs(_) => PyRuntimeError::new_err(e.to_string()),
        e => value_err(e),
    }
}

fn parse_unroll(spec: Option<&str>) -> PyResult<Option<Unroll>> {
    spec.map(|s| s.parse::<Unroll>().map_err(PyValueError::new_err)).transpose()
}

/// Product of circles and intervals with the flat metric.
#[pyclass(name = "Manifold", module = "geoplan", from_py_object)]
#[derive(Clone)]
struct PyManifold {
    inner: FlatManifold,
}

#[pymethods]
impl PyManifold {
    /// Parses the JSON list of factors used in scenario files.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: FlatManifold = serde_json::from_str(text).map_err(value_err)?;
        Ok(PyManifold { inner })
    }

    #[staticmethod]
    fn torus(dim: usize) -> Self {
        PyManifold {
            inner: FlatManifold::unit_torus(dim),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn canonicalize(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.canonicalize(&x).map_err(value_err)?.coords)
    }

    fn distance(&self, p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
        let (p, q) = (self.point(&p)?, self.point(&q)?);
        self.inner.geodesic_distance(&p, &q).map_err(value_err)
    }

    fn interpolate(&self, p: Vec<f64>, q: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        let (p, q) = (self.point(&p)?, self.point(&q)?);
        Ok(self.inner.geodesic_interpolate(&p, &q, t).map_err(value_err)?.coords)
    }

    /// Replaces circle `dim` by the interval `[cut, cut + circumference]`.
    fn unroll(&self, dim: usize, cut: f64) -> PyResult<Self> {
        Ok(PyManifold {
            inner: self.inner.unroll_factor(dim, cut).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("serializable")
    }

    fn __repr__(&self) -> String {
        format!("Manifold({})", self.to_json())
    }
}

impl PyManifold {
    fn point(&self, x: &[f64]) -> PyResult<MPoint> {
        self.inner.canonicalize(x).map_err(value_err)
    }
}

/// Result of planning one scenario.
#[pyclass(name = "Plan", module = "geoplan", skip_from_py_object)]
struct PyPlan {
    out: PlanOutput,
}

#[pymethods]
impl PyPlan {
    #[getter]
    fn objective(&self) -> f64 {
        self.out.metadata.objective
    }

    #[getter]
    fn optimal(&self) -> bool {
        self.out.metadata.optimal
    }

    /// Region ids along the path.
    #[getter]
    fn path(&self) -> Vec<String> {
        self.out.metadata.path.clone()
    }

    #[getter]
    fn path_indices(&self) -> Vec<usize> {
        self.out.metadata.path_indices.clone()
    }

    /// Canonical waypoints.
    #[getter]
    fn waypoints(&self) -> Vec<Vec<f64>> {
        self.out.trajectory.waypoints.iter().map(|p| p.coords.clone()).collect()
    }

    /// The same path as one continuous polyline in covering coordinates.
    fn unwrapped(&self) -> Vec<Vec<f64>> {
        self.out.trajectory.unwrapped(&self.out.workspace.manifold)
    }

    #[getter]
    fn equivalence_residual(&self) -> f64 {
        self.out.metadata.equivalence_residual
    }

    fn trajectory_csv(&self) -> String {
        let mut buf = Vec::new();
        self.out.trajectory.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii csv")
    }

    fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.out.metadata).expect("serializable")
    }

    /// Regions used for this plan, in the regions-file format.
    fn regions_json(&self) -> String {
        let set = RegionSet::new(self.out.workspace.manifold.clone(), &self.out.graph.regions);
        serde_json::to_string(&set).expect("serializable")
    }

    /// Sampled g-convexity check of every region; returns the violation count per region.
    #[pyo3(signature = (samples=1000, seed=0))]
    fn check_gconvex(&self, samples: usize, seed: u64) -> Vec<usize> {
        let m = &self.out.workspace.manifold;
        self.out
            .graph
            .regions
            .iter()
            .map(|r| gconvex(r, m, samples, seed).violations)
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Plan(objective={:.9}, path={:?})", self.objective(), self.path())
    }
}

/// A planning problem: manifold, obstacles, seeds, start and goal.
#[pyclass(name = "Scenario", module = "geoplan", skip_from_py_object)]
struct PyScenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: scenario::Scenario::from_json(text).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyScenario {
            inner: scenario::Scenario::load(&path).map_err(value_err)?,
        })
    }

    #[getter]
    fn manifold(&self) -> PyManifold {
        PyManifold {
            inner: self.inner.manifold.clone(),
        }
    }

    /// `path` lists region indices and switches to fixed-path mode;
    /// `unroll` is `"<dim>:<cut>"`.
    #[pyo3(signature = (path=None, unroll=None, time_budget_ms=None))]
    fn plan(&self, py: Python<'_>, path: Option<Vec<usize>>, unroll: Option<&str>, time_budget_ms: Option<u64>) -> PyResult<PyPlan> {
        let opts = PlanOptions {
            mode: path.map_or(PlanMode::Exact, PlanMode::FixedPath),
            unroll: parse_unroll(unroll)?,
            time_budget: time_budget_ms.map(std::time::Duration::from_millis),
            audit: false,
        };
        let out = py.detach(|| scenario::plan(&self.inner, &opts)).map_err(plan_err)?;
        Ok(PyPlan { out })
    }

    /// Length of the grid shortest path between start and goal.
    #[pyo3(signature = (resolution=512, connectivity=16, unroll=None))]
    fn grid_length(&self, py: Python<'_>, resolution: usize, connectivity: u8, unroll: Option<&str>) -> PyResult<f64> {
        let conn = match connectivity {
            8 => Connectivity::Eight,
            16 => Connectivity::Sixteen,
            n => return Err(PyValueError::new_err(format!("connectivity must be 8 or 16, got {n}"))),
        };
        let ws = self.inner.workspace(parse_unroll(unroll)?).map_err(value_err)?;
        let spec = GridSpec::for_manifold(&ws.manifold, resolution, conn);
        py.detach(|| grid_path(&ws.obstacles, &ws.manifold, &ws.start, &ws.goal, &spec))
            .map(|p| p.length)
            .map_err(value_err)
    }
}

/// `(d_base, d_supra, d_sub)` for the small quadrilateral on the unit sphere.
#[pyfunction]
fn sphere_parallelogramoid(epsilon: f64) -> PyResult<(f64, f64, f64)> {
    let pg = parallelogramoid(epsilon).map_err(value_err)?;
    Ok((pg.d_base, pg.d_supra, pg.d_sub))
}

#[pymodule]
fn geoplan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManifold>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(sphere_parallelogramoid, m)?)?;
    Ok(())
}
