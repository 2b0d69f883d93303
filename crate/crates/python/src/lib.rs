//! Python bindings for the projsynth library.
//!
//! Exposes the main types (`Geometry`, `Volume`, `Projection`) and the core
//! operations (phantom generation, forward/back projection, view synthesis,
//! metrics, losses) as the extension module `projsynth_py`. Data crosses the
//! boundary as plain Python lists of floats; shapes follow the library
//! conventions (volumes slice-major `(z, y, x)`, projections channel-major
//! `(channel, row, col)`).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use projsynth as core;
use projsynth::losses;
use projsynth::projector;
use projsynth::synthesis;

fn to_py_err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn grid_from(dims: [usize; 3], spacing: [f64; 3]) -> PyResult<core::GridSpec> {
    core::GridSpec::centered(dims, spacing).map_err(to_py_err)
}

/// Circular cone-beam acquisition geometry.
#[pyclass(name = "Geometry", from_py_object)]
#[derive(Clone)]
pub struct PyGeometry {
    inner: core::ConeBeamGeometry,
}

#[pymethods]
impl PyGeometry {
    #[new]
    #[pyo3(signature = (sad, sdd, det_rows, det_cols, pixel_pitch, det_offset=[0.0, 0.0]))]
    fn new(
        sad: f64,
        sdd: f64,
        det_rows: usize,
        det_cols: usize,
        pixel_pitch: [f64; 2],
        det_offset: [f64; 2],
    ) -> PyResult<Self> {
        let inner = core::ConeBeamGeometry {
            sad,
            sdd,
            det_rows,
            det_cols,
            pixel_pitch,
            det_offset,
        };
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn sad(&self) -> f64 {
        self.inner.sad
    }

    #[getter]
    fn sdd(&self) -> f64 {
        self.inner.sdd
    }

    #[getter]
    fn det_rows(&self) -> usize {
        self.inner.det_rows
    }

    #[getter]
    fn det_cols(&self) -> usize {
        self.inner.det_cols
    }

    #[getter]
    fn pixel_pitch(&self) -> [f64; 2] {
        self.inner.pixel_pitch
    }

    #[getter]
    fn det_offset(&self) -> [f64; 2] {
        self.inner.det_offset
    }

    /// World position of the source at `angle_deg`, as an (x, y, z) tuple.
    fn source_position(&self, angle_deg: f64) -> (f64, f64, f64) {
        let p = self.inner.source_position(angle_deg);
        (p.x, p.y, p.z)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::ConeBeamGeometry::load(&path).map_err(to_py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Geometry(sad={}, sdd={}, det_rows={}, det_cols={}, pixel_pitch={:?}, det_offset={:?})",
            self.inner.sad,
            self.inner.sdd,
            self.inner.det_rows,
            self.inner.det_cols,
            self.inner.pixel_pitch,
            self.inner.det_offset,
        )
    }
}

/// Dense attenuation volume on a centered grid, slice-major `(z, y, x)`.
#[pyclass(name = "Volume", from_py_object)]
#[derive(Clone)]
pub struct PyVolume {
    inner: core::Volume,
}

#[pymethods]
impl PyVolume {
    #[new]
    #[pyo3(signature = (dims, spacing, values=None))]
    fn new(dims: [usize; 3], spacing: [f64; 3], values: Option<Vec<f32>>) -> PyResult<Self> {
        let grid = grid_from(dims, spacing)?;
        let inner = match values {
            Some(v) => core::Volume::new(grid, v).map_err(to_py_err)?,
            None => core::Volume::zeros(grid).map_err(to_py_err)?,
        };
        Ok(Self { inner })
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.grid.dims
    }

    #[getter]
    fn spacing(&self) -> [f64; 3] {
        self.inner.grid.spacing
    }

    /// All samples as a flat list in `(z, y, x)` order.
    fn values(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    fn at(&self, z: usize, y: usize, x: usize) -> PyResult<f32> {
        let d = self.inner.grid.dims;
        if z >= d[0] || y >= d[1] || x >= d[2] {
            return Err(PyIndexError::new_err(format!(
                "index ({z}, {y}, {x}) out of {d:?}"
            )));
        }
        Ok(self.inner.at(z, y, x))
    }

    fn min_max(&self) -> (f32, f32) {
        self.inner.min_max()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::Volume::load(&path).map_err(to_py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.data.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Volume(dims={:?}, spacing={:?})",
            self.inner.grid.dims, self.inner.grid.spacing
        )
    }
}

/// Detector image tagged with its acquisition angle, channel-major
/// `(channel, row, col)`.
#[pyclass(name = "Projection", from_py_object)]
#[derive(Clone)]
pub struct PyProjection {
    inner: core::Projection,
}

#[pymethods]
impl PyProjection {
    #[new]
    #[pyo3(signature = (rows, cols, angle_deg, values=None, channels=1))]
    fn new(
        rows: usize,
        cols: usize,
        angle_deg: f64,
        values: Option<Vec<f32>>,
        channels: usize,
    ) -> PyResult<Self> {
        let inner = match values {
            Some(v) => {
                core::Projection::new(rows, cols, channels, angle_deg, v).map_err(to_py_err)?
            }
            None => core::Projection::zeros(rows, cols, channels, angle_deg).map_err(to_py_err)?,
        };
        Ok(Self { inner })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels
    }

    #[getter]
    fn angle_deg(&self) -> f64 {
        self.inner.angle_deg
    }

    /// All samples as a flat list in `(channel, row, col)` order.
    fn values(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    fn at(&self, channel: usize, row: usize, col: usize) -> PyResult<f32> {
        if channel >= self.inner.channels || row >= self.inner.rows || col >= self.inner.cols {
            return Err(PyIndexError::new_err(format!(
                "index ({channel}, {row}, {col}) out of ({}, {}, {})",
                self.inner.channels, self.inner.rows, self.inner.cols
            )));
        }
        Ok(self.inner.at(channel, row, col))
    }

    fn min_max(&self) -> (f32, f32) {
        self.inner.min_max()
    }

    /// Copy rescaled per image so the samples span [0, 1].
    fn normalized_unit(&self) -> Self {
        Self {
            inner: self.inner.normalized_unit(),
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::Projection::load(&path).map_err(to_py_err)?,
        })
    }

    fn write_pgm(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_pgm(&path).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.data.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Projection(rows={}, cols={}, channels={}, angle_deg={})",
            self.inner.rows, self.inner.cols, self.inner.channels, self.inner.angle_deg
        )
    }
}

/// Rasterize a random seeded phantom of axis-aligned-or-rotated ellipsoids.
#[pyfunction]
#[pyo3(signature = (seed, dims, spacing, ellipsoids=3))]
fn random_phantom(
    seed: u64,
    dims: [usize; 3],
    spacing: [f64; 3],
    ellipsoids: usize,
) -> PyResult<PyVolume> {
    let grid = grid_from(dims, spacing)?;
    let spec = core::PhantomSpec::random(seed, ellipsoids, grid).map_err(to_py_err)?;
    Ok(PyVolume {
        inner: spec.rasterize().map_err(to_py_err)?,
    })
}

/// Render the cone-beam line-integral image of `volume` at `angle_deg`.
/// `step_mm` defaults to half the smallest voxel pitch.
#[pyfunction]
#[pyo3(signature = (volume, geometry, angle_deg, step_mm=None))]
fn forward_project(
    volume: PyRef<'_, PyVolume>,
    geometry: PyRef<'_, PyGeometry>,
    angle_deg: f64,
    step_mm: Option<f64>,
) -> PyResult<PyProjection> {
    let features = core::FeatureVolume::from_volume(&volume.inner);
    let step = step_mm.unwrap_or_else(|| projector::default_step(&volume.inner.grid));
    let inner = projector::forward_project(&features, &geometry.inner, angle_deg, step)
        .map_err(to_py_err)?;
    Ok(PyProjection { inner })
}

/// Smear `projection` back along its rays onto a centered grid; the exact
/// transpose of `forward_project`.
#[pyfunction]
#[pyo3(signature = (projection, geometry, dims, spacing, step_mm=None))]
fn back_project(
    projection: PyRef<'_, PyProjection>,
    geometry: PyRef<'_, PyGeometry>,
    dims: [usize; 3],
    spacing: [f64; 3],
    step_mm: Option<f64>,
) -> PyResult<PyVolume> {
    let grid = grid_from(dims, spacing)?;
    let step = step_mm.unwrap_or_else(|| projector::default_step(&grid));
    let features = projector::back_project(&projection.inner, &geometry.inner, &grid, step)
        .map_err(to_py_err)?;
    Ok(PyVolume {
        inner: features.into_volume().map_err(to_py_err)?,
    })
}

/// Synthesize views at `target_angles` from the source projections.
///
/// Returns `(targets, cycle_views, texture_code)`: the synthesized target
/// views, the regenerated source-angle views (the cycle path), and the fused
/// texture code. Stage keys are the same as in run configs (`identity`,
/// `smoothing:<sigma_mm>`, `passthrough`, ...).
#[pyfunction]
#[pyo3(signature = (sources, target_angles, geometry, dims, spacing, step_mm=None,
                    encoder="identity", refiner="identity", generator="passthrough"))]
#[allow(clippy::too_many_arguments)]
fn synthesize_views(
    sources: Vec<PyProjection>,
    target_angles: Vec<f64>,
    geometry: PyRef<'_, PyGeometry>,
    dims: [usize; 3],
    spacing: [f64; 3],
    step_mm: Option<f64>,
    encoder: &str,
    refiner: &str,
    generator: &str,
) -> PyResult<(Vec<PyProjection>, Vec<PyProjection>, Vec<f64>)> {
    let grid = grid_from(dims, spacing)?;
    let step = step_mm.unwrap_or_else(|| projector::default_step(&grid));
    let encoder = synthesis::encoder_from_key(encoder).map_err(to_py_err)?;
    let refiner = synthesis::refiner_from_key(refiner).map_err(to_py_err)?;
    let generator = synthesis::generator_from_key(generator).map_err(to_py_err)?;
    let pipeline = synthesis::Pipeline {
        encoder: &*encoder,
        refiner: &*refiner,
        generator: &*generator,
        geometry: &geometry.inner,
        grid,
        step,
    };
    let inputs: Vec<core::Projection> = sources.into_iter().map(|p| p.inner).collect();
    let result = pipeline
        .synthesize(&inputs, &target_angles)
        .map_err(to_py_err)?;
    let wrap =
        |v: Vec<core::Projection>| v.into_iter().map(|inner| PyProjection { inner }).collect();
    Ok((
        wrap(result.target_views),
        wrap(result.source_views),
        result.texture.0,
    ))
}

/// All image metrics of `pred` against `reference` as a dict with keys
/// `mae`, `nrmse`, `psnr`, `ssim`.
#[pyfunction]
fn metric_report<'py>(
    py: Python<'py>,
    pred: PyRef<'py, PyProjection>,
    reference: PyRef<'py, PyProjection>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = core::MetricReport::compute(&pred.inner, &reference.inner).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("mae", r.mae)?;
    d.set_item("nrmse", r.nrmse)?;
    d.set_item("psnr", r.psnr)?;
    d.set_item("ssim", r.ssim)?;
    Ok(d)
}

/// Mean absolute difference between a synthesized view and its reference.
#[pyfunction]
fn reconstruction_loss(
    pred: PyRef<'_, PyProjection>,
    reference: PyRef<'_, PyProjection>,
) -> PyResult<f64> {
    losses::reconstruction_loss(&pred.inner, &reference.inner).map_err(to_py_err)
}

/// Weighted sum of the three training terms. Weights default to
/// (cycle, reconstruction, adversarial) = (1, 10, 1).
#[pyfunction]
#[pyo3(signature = (cycle, reconstruction, adversarial,
                    lambda_cyc=1.0, lambda_rec=10.0, lambda_adv=1.0))]
fn total_loss(
    cycle: f64,
    reconstruction: f64,
    adversarial: f64,
    lambda_cyc: f64,
    lambda_rec: f64,
    lambda_adv: f64,
) -> PyResult<f64> {
    let weights = core::LossWeights {
        lambda_cyc,
        lambda_rec,
        lambda_adv,
    };
    losses::total_loss(cycle, reconstruction, adversarial, &weights).map_err(to_py_err)
}

#[pymodule]
fn projsynth_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyVolume>()?;
    m.add_class::<PyProjection>()?;
    m.add_function(wrap_pyfunction!(random_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(forward_project, m)?)?;
    m.add_function(wrap_pyfunction!(back_project, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_views, m)?)?;
    m.add_function(wrap_pyfunction!(metric_report, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    Ok(())
}
