use nalgebra::Matrix4;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use dynreg::config::Config as CoreConfig;
use dynreg::geometry::{self, AxisAngle, PointCloud as CoreCloud, RigidTransform as CoreTransform, Vec3};
use dynreg::pipeline::RegistrationReport as CoreReport;
use dynreg::robust::X84Rule;
use dynreg::synth::{OutlierDist, Perturbation};
use dynreg::{bench, features, graph, io, pipeline, report, robust, synth, voxel, Error};

fn to_py(e: Error) -> PyErr {
    match e.root() {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vecs(points: Vec<[f64; 3]>) -> Vec<Vec3> {
    points.into_iter().map(Vec3::from).collect()
}

fn arrays(points: &[Vec3]) -> Vec<[f64; 3]> {
    points.iter().map(|p| [p.x, p.y, p.z]).collect()
}

#[pyclass(name = "PointCloud", module = "dynreg", from_py_object)]
#[derive(Clone)]
struct PointCloud {
    inner: CoreCloud,
}

#[pymethods]
impl PointCloud {
    #[new]
    #[pyo3(signature = (points, normals=None))]
    fn new(points: Vec<[f64; 3]>, normals: Option<Vec<[f64; 3]>>) -> PyResult<Self> {
        let mut inner = CoreCloud::new(vecs(points)).map_err(to_py)?;
        if let Some(n) = normals {
            inner = inner.with_normals(vecs(n)).map_err(to_py)?;
        }
        Ok(Self { inner })
    }

    /// PLY (text or binary little-endian) or whitespace XYZ.
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        io::read_cloud(path).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Binary PLY for `.ply`, XYZ text otherwise.
    fn write(&self, path: &str) -> PyResult<()> {
        io::write_cloud(&self.inner, path).map_err(to_py)
    }

    fn points(&self) -> Vec<[f64; 3]> {
        arrays(self.inner.positions())
    }

    fn normals(&self) -> Option<Vec<[f64; 3]>> {
        self.inner.normals().map(arrays)
    }

    fn bbox_diagonal(&self) -> f64 {
        self.inner.bbox_diagonal()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("PointCloud({} points)", self.inner.len())
    }
}

#[pyclass(name = "RigidTransform", module = "dynreg", from_py_object)]
#[derive(Clone)]
struct RigidTransform {
    inner: CoreTransform,
}

#[pymethods]
impl RigidTransform {
    /// From a row-major 4x4 homogeneous matrix.
    #[new]
    fn new(matrix: [[f64; 4]; 4]) -> PyResult<Self> {
        let m = Matrix4::from_fn(|r, c| matrix[r][c]);
        CoreTransform::from_homogeneous(&m)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn identity() -> Self {
        Self {
            inner: CoreTransform::identity(),
        }
    }

    /// Rotation of `angle` radians about `axis` (any non-zero direction),
    /// then `translation`.
    #[staticmethod]
    #[pyo3(signature = (axis, angle, translation=[0.0; 3]))]
    fn from_axis_angle(axis: [f64; 3], angle: f64, translation: [f64; 3]) -> PyResult<Self> {
        let axis = Vec3::from(axis);
        if !(axis.norm() > 0.0 && axis.norm().is_finite() && angle.is_finite()) {
            return Err(PyValueError::new_err("axis must be a finite non-zero vector and angle finite"));
        }
        let aa = AxisAngle::wrapped(axis, angle);
        Ok(Self {
            inner: CoreTransform::from_axis_angle(&aa, Vec3::from(translation)),
        })
    }

    fn matrix(&self) -> [[f64; 4]; 4] {
        let m = self.inner.to_homogeneous();
        std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
    }

    fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            inner: self.inner.apply(&cloud.inner),
        }
    }

    fn compose(&self, inner: &RigidTransform) -> Self {
        Self {
            inner: self.inner.compose(&inner.inner),
        }
    }

    fn inverse(&self) -> Self {
        Self {
            inner: self.inner.inverse(),
        }
    }

    /// Rotation angle in degrees.
    fn angle_deg(&self) -> f64 {
        AxisAngle::from_matrix(self.inner.rotation()).angle().to_degrees()
    }

    fn __repr__(&self) -> String {
        report::format_transform(&self.inner)
    }
}

#[pyclass(name = "Config", module = "dynreg", from_py_object)]
#[derive(Clone)]
struct Config {
    inner: CoreConfig,
}

#[pymethods]
impl Config {
    /// `key = value` text over the defaults, or over the literal preset.
    #[new]
    #[pyo3(signature = (text="", literal=false))]
    fn new(text: &str, literal: bool) -> PyResult<Self> {
        let base = if literal { CoreConfig::literal() } else { CoreConfig::default() };
        base.overlay(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn __repr__(&self) -> String {
        self.inner.to_toml()
    }
}

#[pyclass(name = "RegistrationReport", module = "dynreg", frozen)]
struct RegistrationReport {
    inner: CoreReport,
}

#[pymethods]
impl RegistrationReport {
    #[getter]
    fn transform(&self) -> RigidTransform {
        RigidTransform {
            inner: self.inner.transform,
        }
    }

    /// Degrees; `None` without a ground truth.
    #[getter]
    fn ang_err(&self) -> Option<f64> {
        self.inner.ang_err
    }

    #[getter]
    fn rmsd(&self) -> Option<f64> {
        self.inner.rmsd
    }

    /// Seconds.
    #[getter]
    fn runtime(&self) -> f64 {
        self.inner.runtime
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    /// (source, target).
    #[getter]
    fn outliers_removed(&self) -> (usize, usize) {
        self.inner.outliers_removed
    }

    #[getter]
    fn resampled_sizes(&self) -> (usize, usize) {
        self.inner.resampled_sizes
    }

    #[getter]
    fn energies(&self) -> Vec<f64> {
        self.inner.trace.records.iter().map(|r| r.energy).collect()
    }

    #[getter]
    fn temperatures(&self) -> Vec<f64> {
        self.inner.trace.records.iter().map(|r| r.temperature).collect()
    }

    fn write(&self, path: &str) -> PyResult<()> {
        report::write_report(&self.inner, path).map_err(to_py)
    }

    fn __str__(&self) -> String {
        report::format_report(&self.inner)
    }
}

fn config_or_default(config: Option<&Config>) -> CoreConfig {
    config.map_or_else(CoreConfig::default, |c| c.inner.clone())
}

/// Registers `source` onto `target`; the report's transform maps source
/// coordinates into the target frame.
#[pyfunction]
#[pyo3(signature = (source, target, config=None, ground_truth=None))]
fn register(
    py: Python<'_>,
    source: &PointCloud,
    target: &PointCloud,
    config: Option<&Config>,
    ground_truth: Option<&RigidTransform>,
) -> PyResult<RegistrationReport> {
    let cfg = config_or_default(config);
    let gt = ground_truth.map(|g| g.inner);
    let (s, t) = (source.inner.clone(), target.inner.clone());
    py.detach(|| pipeline::run(&s, &t, &cfg, gt.as_ref()))
        .map(|inner| RegistrationReport { inner })
        .map_err(to_py)
}

/// Point-to-point ICP baseline.
#[pyfunction]
#[pyo3(signature = (source, target, config=None, ground_truth=None))]
fn icp(
    py: Python<'_>,
    source: &PointCloud,
    target: &PointCloud,
    config: Option<&Config>,
    ground_truth: Option<&RigidTransform>,
) -> PyResult<RegistrationReport> {
    let cfg = config_or_default(config);
    let gt = ground_truth.map(|g| g.inner);
    let (s, t) = (source.inner.clone(), target.inner.clone());
    py.detach(|| pipeline::icp_baseline(&s, &t, &cfg, gt.as_ref()))
        .map(|inner| RegistrationReport { inner })
        .map_err(to_py)
}

/// Returns `(source, target, ground_truth, outlier_labels)`.
#[pyfunction]
#[pyo3(signature = (cloud, angle_max_deg=0.0, noise=0.0, outliers=0.0, dist="gaussian", seed=0, translation=0.0))]
fn synthesize_pair(
    cloud: &PointCloud,
    angle_max_deg: f64,
    noise: f64,
    outliers: f64,
    dist: &str,
    seed: u64,
    translation: f64,
) -> PyResult<(PointCloud, PointCloud, RigidTransform, Vec<bool>)> {
    let dist = match dist {
        "gaussian" => OutlierDist::Gaussian,
        "uniform" => OutlierDist::Uniform,
        other => return Err(PyValueError::new_err(format!("unknown outlier distribution `{other}`"))),
    };
    let spec = Perturbation {
        angle_max_deg,
        translation,
        noise,
        outliers,
        dist,
    };
    spec.validate().map_err(to_py)?;
    let pair = synth::synthesize_pair(&cloud.inner, &spec, seed).map_err(to_py)?;
    Ok((
        PointCloud { inner: pair.source },
        PointCloud { inner: pair.target },
        RigidTransform {
            inner: pair.ground_truth,
        },
        pair.source_outliers,
    ))
}

#[pyfunction]
#[pyo3(signature = (n, seed=0))]
fn blob(n: usize, seed: u64) -> PointCloud {
    PointCloud {
        inner: synth::blob(n, seed),
    }
}

#[pyfunction]
#[pyo3(signature = (n, bumps=10, seed=0))]
fn bumpy_sphere(n: usize, bumps: usize, seed: u64) -> PointCloud {
    PointCloud {
        inner: synth::bumpy_sphere(n, bumps, seed),
    }
}

/// Per-point graph response intensity on the k-NN graph.
#[pyfunction]
#[pyo3(signature = (cloud, k=graph::DEFAULT_K))]
fn response_intensity(cloud: &PointCloud, k: usize) -> PyResult<Vec<f64>> {
    let g = graph::build_graph(&cloud.inner, k).map_err(to_py)?;
    graph::response_intensity(&cloud.inner, &g).map_err(to_py)
}

/// Per-point `V_g` with PCA normals and curvatures estimated from `k`
/// neighbours.
#[pyfunction]
#[pyo3(signature = (cloud, k=graph::DEFAULT_K))]
fn geometric_invariant(cloud: &PointCloud, k: usize) -> PyResult<Vec<f64>> {
    let g = graph::build_graph(&cloud.inner, k).map_err(to_py)?;
    let with_normals = features::estimate_normals_curvatures(&cloud.inner, k).map_err(to_py)?;
    features::geometric_invariant(&with_normals, &g).map_err(to_py)
}

#[pyfunction]
fn median(values: Vec<f64>) -> PyResult<f64> {
    robust::median(&values).map_err(to_py)
}

#[pyfunction]
fn mad(values: Vec<f64>) -> PyResult<f64> {
    robust::mad(&values).map_err(to_py)
}

/// Returns `(kept_indices, removed_indices, threshold)`.
#[pyfunction]
#[pyo3(signature = (values, alpha=robust::DEFAULT_ALPHA, literal=false))]
fn x84_filter(values: Vec<f64>, alpha: f64, literal: bool) -> PyResult<(Vec<usize>, Vec<usize>, f64)> {
    let rule = if literal { X84Rule::Literal } else { X84Rule::MedianCentered };
    let rep = robust::x84_filter(&values, alpha, rule).map_err(to_py)?;
    Ok((rep.kept_indices, rep.removed_indices, rep.threshold))
}

/// Keeps the `ceil(rate * N)` points of highest intensity.
#[pyfunction]
#[pyo3(signature = (cloud, rate, k=graph::DEFAULT_K))]
fn resample(cloud: &PointCloud, rate: f64, k: usize) -> PyResult<PointCloud> {
    let intensity = response_intensity(cloud, k)?;
    let (inner, _) = features::resample(&cloud.inner, &intensity, rate).map_err(to_py)?;
    Ok(PointCloud { inner })
}

#[pyfunction]
fn voxel_downsample(cloud: &PointCloud, step: f64) -> PyResult<PointCloud> {
    voxel::voxel_downsample(&cloud.inner, step)
        .map(|inner| PointCloud { inner })
        .map_err(to_py)
}

/// Angle of `R_hat^T R_true` in degrees.
#[pyfunction]
fn ang_err(estimate: &RigidTransform, truth: &RigidTransform) -> PyResult<f64> {
    geometry::ang_err(estimate.inner.rotation(), truth.inner.rotation()).map_err(to_py)
}

#[pyfunction]
fn rmsd(estimate: &RigidTransform, truth: &RigidTransform, cloud: &PointCloud) -> PyResult<f64> {
    geometry::rmsd(&estimate.inner, &truth.inner, &cloud.inner).map_err(to_py)
}

/// Runs a benchmark cases file and returns the results table as text and
/// the number of failed runs.
#[pyfunction]
#[pyo3(signature = (cases_path, config=None))]
fn run_bench(py: Python<'_>, cases_path: &str, config: Option<&Config>) -> PyResult<(String, usize)> {
    let cfg = config_or_default(config);
    let cases = bench::load_cases(cases_path).map_err(to_py)?;
    let table = py.detach(|| bench::run_bench(&cases, &cfg));
    Ok((table.to_text(), table.failures()))
}

#[pymodule]
#[pyo3(name = "dynreg")]
fn dynreg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PointCloud>()?;
    m.add_class::<RigidTransform>()?;
    m.add_class::<Config>()?;
    m.add_class::<RegistrationReport>()?;
    m.add_function(wrap_pyfunction!(register, m)?)?;
    m.add_function(wrap_pyfunction!(icp, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_pair, m)?)?;
    m.add_function(wrap_pyfunction!(blob, m)?)?;
    m.add_function(wrap_pyfunction!(bumpy_sphere, m)?)?;
    m.add_function(wrap_pyfunction!(response_intensity, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_invariant, m)?)?;
    m.add_function(wrap_pyfunction!(median, m)?)?;
    m.add_function(wrap_pyfunction!(mad, m)?)?;
    m.add_function(wrap_pyfunction!(x84_filter, m)?)?;
    m.add_function(wrap_pyfunction!(resample, m)?)?;
    m.add_function(wrap_pyfunction!(voxel_downsample, m)?)?;
    m.add_function(wrap_pyfunction!(ang_err, m)?)?;
    m.add_function(wrap_pyfunction!(rmsd, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
