//! Python module `epivo_py`: poses, essential matrices, the five-point/RANSAC
//! estimator, synthetic scenes, the photometric loss, direct optimization and
//! evaluation metrics. Images cross the boundary as flat row-major float lists
//! wrapped in `Field`.

use epivo::eval;
use epivo::field::{ScalarField, ValidityMask};
use epivo::fivepoint;
use epivo::geometry::{self, CameraIntrinsics, Correspondence, EssentialMatrix, NormalizedCoord, Pose};
use epivo::losses::{self, LossConfig, LossReport};
use epivo::optim::{self, AdamConfig, OptimizeOptions};
use epivo::synth;
use nalgebra::{Matrix3, Vector3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: epivo::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Row4 = (f64, f64, f64, f64);

fn correspondences(rows: &[Row4]) -> PyResult<Vec<Correspondence>> {
    rows.iter()
        .map(|&(tx, ty, sx, sy)| Correspondence::new(NormalizedCoord::new(tx, ty), NormalizedCoord::new(sx, sy)).map_err(err))
        .collect()
}

fn mat3(m: &Matrix3<f64>) -> Vec<Vec<f64>> {
    (0..3).map(|r| (0..3).map(|c| m[(r, c)]).collect()).collect()
}

fn to_mat3(rows: &[Vec<f64>]) -> PyResult<Matrix3<f64>> {
    if rows.len() != 3 || rows.iter().any(|r| r.len() != 3) {
        return Err(PyValueError::new_err("expected a 3x3 nested list"));
    }
    Ok(Matrix3::from_fn(|r, c| rows[r][c]))
}

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

/// Image or depth map: `width × height × channels`, row-major, channel-interleaved.
#[pyclass(name = "Field", module = "epivo_py", from_py_object)]
#[derive(Clone)]
pub struct PyField(ScalarField);

#[pymethods]
impl PyField {
    #[new]
    #[pyo3(signature = (width, height, data, channels = 1))]
    fn new(width: usize, height: usize, data: Vec<f64>, channels: usize) -> PyResult<Self> {
        ScalarField::new(width, height, channels, data).map(PyField).map_err(err)
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        epivo::io::read_field(std::path::Path::new(path)).map(PyField).map_err(err)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        epivo::io::write_field(std::path::Path::new(path), &self.0).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.0.channels()
    }

    fn get(&self, x: usize, y: usize, c: usize) -> PyResult<f64> {
        if x >= self.0.width() || y >= self.0.height() || c >= self.0.channels() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.0.get(x, y, c))
    }

    fn to_list(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn __repr__(&self) -> String {
        format!("Field({})", self.0.shape_string())
    }
}

/// Rigid transform mapping target-camera points into the source camera.
#[pyclass(name = "Pose", module = "epivo_py", from_py_object)]
#[derive(Clone)]
pub struct PyPose(Pose);

#[pymethods]
impl PyPose {
    #[new]
    #[pyo3(signature = (rotation = None, translation = [0.0; 3]))]
    fn new(rotation: Option<Vec<Vec<f64>>>, translation: [f64; 3]) -> PyResult<Self> {
        let r = match rotation {
            Some(rows) => to_mat3(&rows)?,
            None => Matrix3::identity(),
        };
        Pose::new(r, vec3(translation)).map(PyPose).map_err(err)
    }

    #[staticmethod]
    fn from_axis_angle(omega: [f64; 3], translation: [f64; 3]) -> Self {
        PyPose(Pose::from_axis_angle(vec3(omega), vec3(translation)))
    }

    /// `exp` of the twist `[ω, v]`.
    #[staticmethod]
    fn exp(xi: [f64; 6]) -> Self {
        PyPose(Pose::exp(&geometry::PoseTangent(xi)))
    }

    fn log(&self) -> [f64; 6] {
        self.0.log().0
    }

    #[getter]
    fn rotation(&self) -> Vec<Vec<f64>> {
        mat3(&self.0.rotation)
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        let t = self.0.translation;
        [t.x, t.y, t.z]
    }

    fn compose(&self, other: &PyPose) -> Self {
        PyPose(self.0.compose(&other.0))
    }

    fn inverse(&self) -> Self {
        PyPose(self.0.inverse())
    }

    fn transform_point(&self, x: [f64; 3]) -> [f64; 3] {
        let p = self.0.transform_point(&vec3(x));
        [p.x, p.y, p.z]
    }

    fn rotation_angle(&self) -> f64 {
        self.0.rotation_angle()
    }

    fn rotation_distance(&self, other: &PyPose) -> f64 {
        self.0.rotation_distance(&other.0)
    }

    fn essential(&self) -> PyResult<PyEssential> {
        geometry::essential_from_pose(&self.0).map(PyEssential).map_err(err)
    }

    /// One KITTI-style line (row-major 3×4).
    fn to_kitti(&self) -> String {
        epivo::io::format_pose(&self.0).trim_end().to_string()
    }

    fn __repr__(&self) -> String {
        let t = self.0.translation;
        format!(
            "Pose(angle={:.6} rad, t=[{:.6}, {:.6}, {:.6}])",
            self.0.rotation_angle(),
            t.x,
            t.y,
            t.z
        )
    }
}

/// Unit-Frobenius essential matrix.
#[pyclass(name = "EssentialMatrix", module = "epivo_py", from_py_object)]
#[derive(Clone)]
pub struct PyEssential(EssentialMatrix);

#[pymethods]
impl PyEssential {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        EssentialMatrix::from_matrix(to_mat3(&rows)?).map(PyEssential).map_err(err)
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        mat3(self.0.matrix())
    }

    /// Frobenius distance up to sign.
    fn distance(&self, other: &PyEssential) -> f64 {
        self.0.distance(&other.0)
    }

    fn singular_values(&self) -> [f64; 3] {
        self.0.singular_values()
    }

    fn residual(&self, corr: Row4) -> PyResult<f64> {
        let c = correspondences(&[corr])?;
        Ok(geometry::epipolar_residual(&c[0], &self.0))
    }

    fn __repr__(&self) -> String {
        format!("EssentialMatrix({:?})", self.matrix())
    }
}

#[pyclass(name = "Intrinsics", module = "epivo_py", from_py_object)]
#[derive(Clone)]
pub struct PyIntrinsics(CameraIntrinsics);

#[pymethods]
impl PyIntrinsics {
    #[new]
    fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> PyResult<Self> {
        CameraIntrinsics::new(fx, fy, cx, cy).map(PyIntrinsics).map_err(err)
    }

    #[getter]
    fn values(&self) -> [f64; 4] {
        [self.0.fx, self.0.fy, self.0.cx, self.0.cy]
    }

    fn __repr__(&self) -> String {
        format!("Intrinsics(fx={}, fy={}, cx={}, cy={})", self.0.fx, self.0.fy, self.0.cx, self.0.cy)
    }
}

/// All essential-matrix solutions for five `(tx, ty, sx, sy)` correspondences.
#[pyfunction]
fn five_point(corrs: Vec<Row4>) -> PyResult<Vec<PyEssential>> {
    let cs = correspondences(&corrs)?;
    let arr: [Correspondence; 5] = cs
        .try_into()
        .map_err(|_| PyValueError::new_err("five_point needs exactly five correspondences"))?;
    Ok(fivepoint::five_point(&arr).map_err(err)?.0.into_iter().map(PyEssential).collect())
}

/// RANSAC over the five-point solver; returns `(E, inlier_mask)`.
#[pyfunction]
#[pyo3(signature = (corrs, threshold = 1e-6, max_iters = 1000, seed = 0))]
fn ransac_essential(corrs: Vec<Row4>, threshold: f64, max_iters: usize, seed: u64) -> PyResult<(PyEssential, Vec<bool>)> {
    let cs = correspondences(&corrs)?;
    let r = fivepoint::ransac_essential(&cs, threshold, max_iters, seed).map_err(err)?;
    Ok((PyEssential(r.best), r.inlier_mask))
}

/// Cheirality-selected pose for `e`; returns `(pose, votes)`.
#[pyfunction]
fn decompose_essential(e: &PyEssential, corrs: Vec<Row4>) -> PyResult<(PyPose, usize)> {
    let cs = correspondences(&corrs)?;
    let h = fivepoint::decompose_essential(&e.0, &cs).map_err(err)?;
    Ok((PyPose(h.pose), h.cheirality_votes))
}

/// Renders a scene description (`key = value` lines) into a dict of fields and
/// ground truth; `n_corr` correspondences are sampled with the given noise.
#[pyfunction]
#[pyo3(signature = (scene, n_corr = 200, noise = 0.0, outliers = 0.0, seed = 0))]
fn render_scene<'py>(
    py: Python<'py>,
    scene: &str,
    n_corr: usize,
    noise: f64,
    outliers: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = synth::parse_scene(scene).map_err(err)?;
    let pair = synth::render_pair(&spec).map_err(err)?;
    let samples = synth::sample_correspondences(&pair, n_corr, noise, outliers, seed).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("target", PyField(pair.target.clone()))?;
    d.set_item("source", PyField(pair.source.clone()))?;
    d.set_item("depth", PyField(pair.depth.clone()))?;
    d.set_item("inv_depth", PyField(pair.inv_depth.clone()))?;
    d.set_item("intrinsics", PyIntrinsics(spec.intrinsics))?;
    d.set_item("pose", PyPose(spec.pose))?;
    d.set_item("pose_normalized", PyPose(pair.normalized_pose()))?;
    d.set_item("essential", pair.essential.map(PyEssential))?;
    let rows: Vec<Row4> = samples
        .correspondences
        .iter()
        .map(|c| (c.target.x, c.target.y, c.source.x, c.source.y))
        .collect();
    d.set_item("correspondences", rows)?;
    d.set_item("inlier_labels", samples.is_inlier)?;
    d.set_item("mover_mask", pair.mover_mask.data().to_vec())?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &LossReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("total", r.total)?;
    d.set_item("warp", r.warp_loss.clone())?;
    d.set_item("smooth", r.smooth_loss.clone())?;
    d.set_item("lambda", r.lambda.clone())?;
    d.set_item("valid_pixels", r.valid_pixel_counts.clone())?;
    Ok(d)
}

fn loss_config(scales: usize, lambda_smooth: f64, essential: Option<&PyEssential>, stop_grad_weight: bool) -> LossConfig {
    let mut cfg = LossConfig {
        num_scales: scales,
        lambda_smooth_base: lambda_smooth,
        stop_grad_weight,
        ..Default::default()
    };
    if let Some(e) = essential {
        cfg = cfg.with_epipolar(e.0);
    }
    cfg
}

/// Multi-scale photometric + smoothness loss; `essential` enables the
/// epipolar weight.
#[pyfunction]
#[pyo3(signature = (target, source, inv_depth, pose, intrinsics, essential = None, scales = 4, lambda_smooth = 0.2))]
#[allow(clippy::too_many_arguments)]
fn total_loss<'py>(
    py: Python<'py>,
    target: &PyField,
    source: &PyField,
    inv_depth: &PyField,
    pose: &PyPose,
    intrinsics: &PyIntrinsics,
    essential: Option<&PyEssential>,
    scales: usize,
    lambda_smooth: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = loss_config(scales, lambda_smooth, essential, false);
    let r = losses::total_loss(&target.0, &source.0, &inv_depth.0, &pose.0, &intrinsics.0, &cfg).map_err(err)?;
    report_dict(py, &r)
}

/// Per-pixel epipolar weight map for a depth map and pose.
#[pyfunction]
fn epipolar_weight_map(depth: &PyField, intrinsics: &PyIntrinsics, pose: &PyPose, essential: &PyEssential) -> PyField {
    PyField(losses::epipolar_weight_map(&depth.0, &intrinsics.0, &pose.0, &essential.0))
}

/// Adam-driven direct optimization; returns a dict with `pose`, `inv_depth`,
/// `trace` (total loss per iteration) and `final`.
#[pyfunction]
#[pyo3(signature = (
    target, source, inv_depth, pose, intrinsics, essential = None, iters = 500, lr = 2e-4,
    scales = 4, lambda_smooth = 0.2, optimize_depth = true, stop_grad_weight = false
))]
#[allow(clippy::too_many_arguments)]
fn optimize<'py>(
    py: Python<'py>,
    target: &PyField,
    source: &PyField,
    inv_depth: &PyField,
    pose: &PyPose,
    intrinsics: &PyIntrinsics,
    essential: Option<&PyEssential>,
    iters: usize,
    lr: f64,
    scales: usize,
    lambda_smooth: f64,
    optimize_depth: bool,
    stop_grad_weight: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = loss_config(scales, lambda_smooth, essential, stop_grad_weight);
    let opts = OptimizeOptions {
        iters,
        adam: AdamConfig {
            learning_rate: lr,
            ..Default::default()
        },
        optimize_pose: true,
        optimize_depth,
    };
    let res = py
        .detach(|| optim::optimize_direct(&target.0, &source.0, &inv_depth.0, &pose.0, &intrinsics.0, &cfg, &opts))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("pose", PyPose(res.pose))?;
    d.set_item("inv_depth", PyField(res.inv_depth))?;
    d.set_item("trace", res.trace.iter().map(|r| r.total).collect::<Vec<_>>())?;
    d.set_item("final", report_dict(py, &res.final_report)?)?;
    Ok(d)
}

/// Median-scaled depth metrics; `mask` defaults to `gt > 0`.
#[pyfunction]
#[pyo3(signature = (pred, gt, cap = 80.0, mask = None))]
fn depth_metrics<'py>(
    py: Python<'py>,
    pred: &PyField,
    gt: &PyField,
    cap: f64,
    mask: Option<Vec<bool>>,
) -> PyResult<Bound<'py, PyDict>> {
    let (w, h) = (gt.0.width(), gt.0.height());
    let mask = match mask {
        Some(m) => ValidityMask::new(w, h, m).map_err(err)?,
        None => ValidityMask::new(w, h, gt.0.data().iter().map(|&v| v > 0.0).collect()).map_err(err)?,
    };
    let m = eval::depth_metrics(&pred.0, &gt.0, &mask, cap).map_err(err)?;
    let d = PyDict::new(py);
    for (k, v) in [
        ("abs_rel", m.abs_rel),
        ("sq_rel", m.sq_rel),
        ("rmse", m.rmse),
        ("rmse_log", m.rmse_log),
        ("delta1", m.delta1),
        ("delta2", m.delta2),
        ("delta3", m.delta3),
    ] {
        d.set_item(k, v)?;
    }
    Ok(d)
}

/// Angle between translation directions, in radians.
#[pyfunction]
fn atde(pred: [f64; 3], gt: [f64; 3]) -> PyResult<f64> {
    eval::atde(&vec3(pred), &vec3(gt)).map_err(err)
}

/// Scale-aligned mean translation error of one snippet of absolute poses.
#[pyfunction]
fn ate(pred: Vec<PyPose>, gt: Vec<PyPose>) -> PyResult<f64> {
    let p: Vec<Pose> = pred.into_iter().map(|p| p.0).collect();
    let g: Vec<Pose> = gt.into_iter().map(|p| p.0).collect();
    let ps = eval::TrajectorySnippet::from_absolute(&p).map_err(err)?;
    let gs = eval::TrajectorySnippet::from_absolute(&g).map_err(err)?;
    eval::ate(&ps, &gs).map_err(err)
}

/// `λ_smooth` at pyramid level `level`.
#[pyfunction]
#[pyo3(signature = (level, base = losses::DEFAULT_LAMBDA_SMOOTH))]
fn lambda_smooth(level: usize, base: f64) -> f64 {
    losses::lambda_smooth(base, level)
}

/// Runs the command-line interface with the given arguments; returns the exit code.
#[pyfunction]
fn cli(args: Vec<String>) -> i32 {
    epivo::cli::run_from(std::iter::once("epivo".to_string()).chain(args))
}

#[pymodule]
fn epivo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyPose>()?;
    m.add_class::<PyEssential>()?;
    m.add_class::<PyIntrinsics>()?;
    m.add_function(wrap_pyfunction!(five_point, m)?)?;
    m.add_function(wrap_pyfunction!(ransac_essential, m)?)?;
    m.add_function(wrap_pyfunction!(decompose_essential, m)?)?;
    m.add_function(wrap_pyfunction!(render_scene, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(epipolar_weight_map, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(depth_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(atde, m)?)?;
    m.add_function(wrap_pyfunction!(ate, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_smooth, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
