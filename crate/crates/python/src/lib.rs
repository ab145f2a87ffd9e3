//! Python bindings: load a building once, then plan, query, rasterize and
//! check progress from Python.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use birs_core::config::{self, Config};
use birs_core::grid::{self, Cell, OccupancyGrid};
use birs_core::pipeline::{self, Artifacts, PipelineError};
use birs_core::progress;
use birs_core::service::{Handler, RequestError};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::{json, Value};

create_exception!(birs, BirsError, PyException, "Raised with a `code: message` string.");

fn fail(code: &str, message: impl std::fmt::Display) -> PyErr {
    BirsError::new_err(format!("{code}: {message}"))
}

fn pipeline_err(e: PipelineError) -> PyErr {
    fail(e.code(), e)
}

fn grid_err(e: grid::GridError) -> PyErr {
    fail("grid", e)
}

fn request_err(e: RequestError) -> PyErr {
    fail(e.code, e.message)
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    match v {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_bound_py_any(py),
            None => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            Ok(list.into_any())
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            Ok(dict.into_any())
        }
    }
}

/// A loaded building with its site, ontology and topological map.
#[pyclass(frozen, module = "birs")]
struct Site {
    handler: Handler,
}

impl Site {
    fn artifacts(&self) -> &Artifacts {
        self.handler.artifacts()
    }

    fn call<'py>(&self, py: Python<'py>, op: &str, payload: Value) -> PyResult<Bound<'py, PyAny>> {
        let v = self.handler.handle(op, &payload).map_err(request_err)?;
        to_py(py, &v)
    }
}

#[pymethods]
impl Site {
    /// Load from a TOML config; keyword paths override its inputs.
    #[new]
    #[pyo3(signature = (config=None, *, ifc=None, site=None, schedule=None, visibility=None, function_tags=None, built_map=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        config: Option<PathBuf>,
        ifc: Option<PathBuf>,
        site: Option<PathBuf>,
        schedule: Option<PathBuf>,
        visibility: Option<PathBuf>,
        function_tags: Option<PathBuf>,
        built_map: Option<PathBuf>,
    ) -> PyResult<Site> {
        let mut cfg = match config {
            Some(p) => Config::load(&p).map_err(|e| pipeline_err(e.into()))?,
            None => Config::default(),
        };
        let input = &mut cfg.input;
        for (slot, v) in [
            (&mut input.ifc, ifc),
            (&mut input.site, site),
            (&mut input.schedule, schedule),
            (&mut input.visibility, visibility),
            (&mut input.function_tags, function_tags),
            (&mut input.built_map, built_map),
        ] {
            if v.is_some() {
                *slot = v;
            }
        }
        let a = Artifacts::load(&cfg).map_err(pipeline_err)?;
        Ok(Site {
            handler: Handler::new(Arc::new(a)),
        })
    }

    /// Spaces as dicts with global_id, name, centroid, storey and tags.
    #[getter]
    fn spaces<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rows: Vec<Value> = self
            .artifacts()
            .model()
            .spaces
            .iter()
            .map(|s| {
                json!({
                    "global_id": s.global_id,
                    "name": s.long_name,
                    "centroid": [s.centroid.x, s.centroid.y],
                    "storey": s.storey,
                    "function_tags": s.function_tags,
                })
            })
            .collect();
        to_py(py, &Value::Array(rows))
    }

    /// Entities the extractor skipped, as `(entity_id, reason)`.
    #[getter]
    fn issues(&self) -> Vec<(u64, String)> {
        self.artifacts()
            .issues
            .iter()
            .map(|i| (i.entity, i.error.to_string()))
            .collect()
    }

    fn room_info<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
        self.call(py, "room_info", json!({ "name": name }))
    }

    /// Shortest route between two spaces, by name or GlobalId.
    fn path<'py>(&self, py: Python<'py>, start: &str, goal: &str) -> PyResult<Bound<'py, PyAny>> {
        self.call(py, "path", json!({ "from": start, "to": goal }))
    }

    /// The same route as the tab-separated report the CLI prints.
    fn route_report(&self, start: &str, goal: &str) -> PyResult<String> {
        let topo = &self.artifacts().topo;
        let resolve = |k: &str| {
            topo.resolve(k)
                .map(|n| n.id.clone())
                .map_err(|e| pipeline_err(e.into()))
        };
        let route = topo
            .plan_path(&resolve(start)?, &resolve(goal)?)
            .map_err(|e| pipeline_err(e.into()))?;
        Ok(topo.route_report(&route))
    }

    fn locate<'py>(&self, py: Python<'py>, x: f64, y: f64) -> PyResult<Bound<'py, PyAny>> {
        self.call(py, "locate", json!({ "x": x, "y": y }))
    }

    fn material<'py>(&self, py: Python<'py>, global_id: &str) -> PyResult<Bound<'py, PyAny>> {
        self.call(py, "material", json!({ "element_global_id": global_id }))
    }

    /// Triple-pattern query; returns a list of variable -> value dicts.
    fn query<'py>(&self, py: Python<'py>, pattern: &str) -> PyResult<Bound<'py, PyAny>> {
        let v = self.handler.query(pattern).map_err(request_err)?;
        to_py(py, &v["bindings"])
    }

    /// Findings for the configured as-built map on `as_of` (YYYY-MM-DD).
    fn progress_report<'py>(&self, py: Python<'py>, as_of: &str) -> PyResult<Bound<'py, PyAny>> {
        let v = self.handler.progress_report(as_of).map_err(request_err)?;
        to_py(py, &v["findings"])
    }

    fn topo_document(&self) -> String {
        self.artifacts().topo.to_document()
    }

    fn ntriples(&self) -> String {
        self.artifacts().store.to_ntriples()
    }

    /// Rasterize the site. With `as_of`, elements scheduled later are left out.
    #[pyo3(signature = (resolution=None, bounds=None, as_of=None))]
    fn grid(&self, resolution: Option<f64>, bounds: Option<[f64; 4]>, as_of: Option<&str>) -> PyResult<Grid> {
        let a = self.artifacts();
        let mut cfg = a.config.clone();
        if let Some(r) = resolution {
            cfg.grid.resolution = r;
        }
        if bounds.is_some() {
            cfg.grid.bounds = bounds;
        }
        cfg.validate().map_err(|e| pipeline_err(e.into()))?;
        let site = match as_of {
            Some(d) => {
                let d = config::parse_date(d).map_err(|m| fail("bad_request", m))?;
                progress::planned_site(&a.site, &a.schedule.clone().unwrap_or_default(), d)
            }
            None => a.site.clone(),
        };
        let inner = grid::rasterize(&site, &cfg.raster_options()).map_err(grid_err)?;
        Ok(Grid { inner })
    }

    fn __repr__(&self) -> String {
        let m = self.artifacts().model();
        format!(
            "Site({} spaces, {} landmarks, {} doors)",
            m.spaces.len(),
            m.landmarks.len(),
            m.doors.len()
        )
    }
}

fn cell_name(c: Cell) -> &'static str {
    match c {
        Cell::Free => "free",
        Cell::Occupied => "occupied",
        Cell::Unknown => "unknown",
    }
}

/// An occupancy grid; row 0 is the southern edge.
#[pyclass(frozen, module = "birs")]
struct Grid {
    inner: OccupancyGrid,
}

#[pymethods]
impl Grid {
    /// Read a map from its YAML file (the image sits next to it).
    #[staticmethod]
    fn load(meta_path: PathBuf) -> PyResult<Grid> {
        let inner = grid::import_map_from_meta(&meta_path).map_err(grid_err)?;
        Ok(Grid { inner })
    }

    /// Write `<name>.pgm` and the YAML file `meta_path`.
    fn save(&self, meta_path: PathBuf) -> PyResult<()> {
        let image = meta_path.with_extension("pgm");
        grid::export_map(&self.inner, &image, &meta_path).map_err(grid_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn resolution(&self) -> f64 {
        self.inner.resolution()
    }

    /// `(x, y, yaw)` of the lower-left corner.
    #[getter]
    fn origin(&self) -> (f64, f64, f64) {
        let o = self.inner.origin();
        (o.x, o.y, o.theta)
    }

    fn get(&self, col: usize, row: usize) -> PyResult<&'static str> {
        if col >= self.inner.width() || row >= self.inner.height() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!(
                "cell ({col}, {row}) out of range"
            )));
        }
        Ok(cell_name(self.inner.get(col, row)))
    }

    fn counts(&self) -> std::collections::BTreeMap<&'static str, usize> {
        [Cell::Free, Cell::Occupied, Cell::Unknown]
            .into_iter()
            .map(|c| (cell_name(c), self.inner.count(c)))
            .collect()
    }

    /// The binary PGM image.
    fn pgm<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &grid::encode_pgm(&self.inner))
    }

    /// Clusters of cells that differ from `built`, treating self as the plan.
    #[pyo3(signature = (built, min_area=0.05))]
    fn diff<'py>(&self, py: Python<'py>, built: &Grid, min_area: f64) -> PyResult<Bound<'py, PyAny>> {
        let d = grid::diff_grids(&self.inner, &built.inner).map_err(grid_err)?;
        let clusters: Vec<Value> = grid::cluster_diff(&d, min_area)
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "kind": c.kind.name(),
                    "cells": c.cells.len(),
                    "area": c.area,
                    "centroid": [c.centroid.x, c.centroid.y],
                })
            })
            .collect();
        to_py(py, &Value::Array(clusters))
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid({}x{} at {} m)",
            self.inner.width(),
            self.inner.height(),
            self.inner.resolution()
        )
    }
}

/// Entity counts by type for an IFC/STEP file.
#[pyfunction]
fn census(path: PathBuf) -> PyResult<std::collections::BTreeMap<String, usize>> {
    let g = pipeline::parse_graph(Path::new(&path)).map_err(pipeline_err)?;
    Ok(g.census().into_iter().map(|(k, n)| (k.to_string(), n)).collect())
}

#[pymodule]
fn birs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Site>()?;
    m.add_class::<Grid>()?;
    m.add_function(wrap_pyfunction!(census, m)?)?;
    m.add("BirsError", m.py().get_type::<BirsError>())?;
    Ok(())
}
