//! Python module `wrmlab`: model parameters, windows, samplers, kernels and probes.
//!
//! Reports come back as plain dicts (decoded from the JSON the core crate writes).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wrm::kernels::{self, Budget, Observable, ObservableKind};
use wrm::probes::{self, Arms, PercolationSettings};
use wrm::render::{render_svg, Scene};
use wrm::report::ProbeReport;
use wrm::sampler::{self, BoundaryCondition, McmcSchedule};
use wrm::{ColoredConfiguration, GreyConfiguration, Horizon, Point, RngStream, Spin, Time};

fn err(e: wrm::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn time_of(t: Option<f64>) -> Time {
    t.map_or(Time::Infinite, Time::from_f64)
}

fn time_out(t: Time) -> f64 {
    t.as_f64()
}

fn point(c: &[f64]) -> PyResult<Point> {
    Point::new(c).map_err(err)
}

fn to_points(cs: &[Vec<f64>]) -> PyResult<Vec<Point>> {
    cs.iter().map(|c| point(c)).collect()
}

fn spin_of(s: i64) -> PyResult<Spin> {
    match s {
        1 => Ok(Spin::Plus),
        -1 => Ok(Spin::Minus),
        _ => Err(PyValueError::new_err(format!("spin must be +1 or -1, got {s}"))),
    }
}

fn from_json<'py>(py: Python<'py>, s: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (s,))
}

fn report<'py>(py: Python<'py>, r: &ProbeReport) -> PyResult<Bound<'py, PyAny>> {
    from_json(py, &r.to_json())
}

fn to_boundary(name: &str) -> PyResult<BoundaryCondition> {
    match name {
        "plus" => Ok(BoundaryCondition::AllPlus),
        "minus" => Ok(BoundaryCondition::AllMinus),
        "empty" => Ok(BoundaryCondition::Empty),
        _ => Err(PyValueError::new_err(format!("boundary must be plus, minus or empty, got {name:?}"))),
    }
}

fn to_observable(name: &str, window: &Window, cap: usize) -> PyResult<Observable> {
    let kind = match name {
        "indicator_empty" => ObservableKind::IndicatorEmpty,
        "indicator_all_plus" => ObservableKind::IndicatorAllPlus,
        "window_magnetization" => ObservableKind::WindowMagnetization,
        "point_count" => ObservableKind::PointCount { cap },
        "one" => ObservableKind::Constant { value: 1.0 },
        _ => return Err(PyValueError::new_err(format!("unknown observable {name:?}"))),
    };
    Ok(Observable::new(kind, window.inner.clone()))
}

/// Parameters `(d, a, λ+, λ-, t)`; `t=None` means `t = ∞`.
#[pyclass(module = "wrmlab", frozen, from_py_object)]
#[derive(Clone)]
struct ModelParams {
    inner: wrm::ModelParams,
}

#[pymethods]
impl ModelParams {
    #[new]
    #[pyo3(signature = (d, a, lambda_plus, lambda_minus, t=None))]
    fn new(d: usize, a: f64, lambda_plus: f64, lambda_minus: f64, t: Option<f64>) -> PyResult<Self> {
        Ok(Self { inner: wrm::ModelParams::new(d, a, lambda_plus, lambda_minus, time_of(t)).map_err(err)? })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.dim()
    }
    #[getter]
    fn a(&self) -> f64 {
        self.inner.a()
    }
    #[getter]
    fn lambda_plus(&self) -> f64 {
        self.inner.lambda_plus()
    }
    #[getter]
    fn lambda_minus(&self) -> f64 {
        self.inner.lambda_minus()
    }
    #[getter]
    fn t(&self) -> f64 {
        time_out(self.inner.t())
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }
    #[getter]
    fn swapped(&self) -> bool {
        self.inner.swapped()
    }

    #[pyo3(signature = (t=None))]
    fn with_time(&self, t: Option<f64>) -> PyResult<Self> {
        Ok(Self { inner: self.inner.with_time(time_of(t)).map_err(err)? })
    }

    fn critical_time(&self) -> f64 {
        time_out(self.inner.critical_time())
    }

    fn g(&self, m: f64) -> f64 {
        self.inner.g(m)
    }

    fn decay_length(&self) -> PyResult<f64> {
        self.inner.decay_length().map_err(err)
    }

    fn inverse_decay_length(&self) -> PyResult<f64> {
        self.inner.inverse_decay_length().map_err(err)
    }

    fn regime(&self) -> String {
        serde_json::to_value(self.inner.regime()).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    }

    fn warnings(&self) -> Vec<String> {
        self.inner.warnings()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("ModelParams(d={}, a={}, lambda_plus={}, lambda_minus={}, t={})", p.dim(), p.a(), p.lambda_plus(), p.lambda_minus(), time_out(p.t()))
    }
}

/// Ball or axis-parallel box.
#[pyclass(module = "wrmlab", frozen, from_py_object)]
#[derive(Clone)]
struct Window {
    inner: wrm::Window,
}

#[pymethods]
impl Window {
    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        Ok(Self { inner: wrm::Window::ball(point(&center)?, radius).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(name = "box")]
    fn cuboid(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: wrm::Window::cuboid(point(&lower)?, point(&upper)?).map_err(err)? })
    }

    #[staticmethod]
    fn cube(d: usize, half_width: f64) -> PyResult<Self> {
        Ok(Self { inner: wrm::Window::centered_cube(d, half_width).map_err(err)? })
    }

    #[staticmethod]
    fn interval(lo: f64, hi: f64) -> PyResult<Self> {
        Ok(Self { inner: wrm::Window::interval(lo, hi).map_err(err)? })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.dim()
    }

    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    fn contains(&self, p: Vec<f64>) -> PyResult<bool> {
        Ok(self.inner.contains(&point(&p)?))
    }

    fn __repr__(&self) -> String {
        format!("Window({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

/// Coloured configuration: `points` as coordinate lists, `spins` as ±1.
#[pyclass(module = "wrmlab", frozen, from_py_object)]
#[derive(Clone)]
struct Configuration {
    inner: ColoredConfiguration,
}

#[pymethods]
impl Configuration {
    /// `d` is only needed for an empty configuration.
    #[new]
    #[pyo3(signature = (points, spins, d=None))]
    fn new(points: Vec<Vec<f64>>, spins: Vec<i64>, d: Option<usize>) -> PyResult<Self> {
        let d = d.or(points.first().map(Vec::len)).unwrap_or(1);
        let sp = spins.into_iter().map(spin_of).collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: ColoredConfiguration::new(d, to_points(&points)?, sp).map_err(err)? })
    }

    /// All points share one spin.
    #[staticmethod]
    #[pyo3(signature = (points, spin=1, d=None))]
    fn uniform(points: Vec<Vec<f64>>, spin: i64, d: Option<usize>) -> PyResult<Self> {
        let d = d.or(points.first().map(Vec::len)).unwrap_or(1);
        let grey = GreyConfiguration::new(d, to_points(&points)?).map_err(err)?;
        Ok(Self { inner: ColoredConfiguration::uniform(grey, spin_of(spin)?) })
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points().iter().map(|p| p.coords().to_vec()).collect()
    }

    #[getter]
    fn spins(&self) -> Vec<i64> {
        self.inner.spins().iter().map(|s| s.value()).collect()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn magnetization(&self) -> PyResult<f64> {
        wrm::model::magnetization(&self.inner).map_err(err)
    }

    fn to_text(&self) -> String {
        wrm::io::write_colored_text(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Configuration(d={}, n={}, spin_sum={})", self.inner.dim(), self.inner.len(), self.inner.spin_sum())
    }
}

/// MCMC samples from the WRM in `window` with a `plus`/`minus`/`empty` boundary.
#[pyfunction]
#[pyo3(signature = (params, window, seed, n_samples=10, burn_in=1000, thinning=1, boundary="empty", stream=0))]
#[allow(clippy::too_many_arguments)]
fn sample_mcmc(
    params: &ModelParams,
    window: &Window,
    seed: u64,
    n_samples: usize,
    burn_in: u64,
    thinning: u64,
    boundary: &str,
    stream: u64,
) -> PyResult<Vec<Configuration>> {
    let sched = McmcSchedule { burn_in, thinning, n_samples };
    let mut rng = RngStream::new(seed, stream).generator();
    let run = sampler::sample_wrm_mcmc(&window.inner, &params.inner, &to_boundary(boundary)?, &sched, &mut rng).map_err(err)?;
    Ok(run.samples.into_iter().map(|inner| Configuration { inner }).collect())
}

/// One exact draw by rejection.
#[pyfunction]
#[pyo3(signature = (params, window, seed, boundary="empty", max_attempts=1_000_000, stream=0))]
fn sample_exact(params: &ModelParams, window: &Window, seed: u64, boundary: &str, max_attempts: u64, stream: u64) -> PyResult<Configuration> {
    let mut rng = RngStream::new(seed, stream).generator();
    let d = sampler::sample_wrm_exact(&window.inner, &params.inner, &to_boundary(boundary)?, &mut rng, max_attempts).map_err(err)?;
    Ok(Configuration { inner: d.config })
}

/// Independent spin flips up to time `t`; positions are untouched.
#[pyfunction]
#[pyo3(signature = (config, t, seed, stream=0))]
fn evolve(config: &Configuration, t: Option<f64>, seed: u64, stream: u64) -> PyResult<Configuration> {
    let mut rng = RngStream::new(seed, stream).generator();
    Ok(Configuration { inner: sampler::evolve_spinflip(&config.inner, time_of(t), &mut rng).map_err(err)? })
}

/// Log colour weight of a grey configuration, optionally next to a coloured boundary configuration.
#[pyfunction]
#[pyo3(signature = (points, params, boundary=None))]
fn log_color_weight(points: Vec<Vec<f64>>, params: &ModelParams, boundary: Option<&Configuration>) -> PyResult<f64> {
    let grey = GreyConfiguration::new(params.inner.dim(), to_points(&points)?).map_err(err)?;
    Ok(sampler::color_weight_grey(&grey, boundary.map(|b| &b.inner), &params.inner))
}

/// Disc-graph clusters (connection distance `2a`) as lists of point indices.
#[pyfunction]
fn clusters(points: Vec<Vec<f64>>, a: f64) -> PyResult<Vec<Vec<usize>>> {
    let d = points.first().map_or(1, Vec::len);
    let grey = GreyConfiguration::new(d, to_points(&points)?).map_err(err)?;
    Ok(wrm::cluster_decompose(&grey, a).clusters.into_iter().map(|c| c.indices).collect())
}

/// Monte Carlo estimate of a conditional kernel.
///
/// `kind` is `infinity`, `free`, `plus`, `minus` (conditioning outside
/// `target`) or `finite_volume` (conditioning inside `outer`, time-zero
/// `fixed` outside it).
#[pyfunction]
#[pyo3(signature = (
    kind, params, target, conditioning, seed,
    observable="indicator_empty", count_cap=10, n_samples=100_000,
    outer=None, fixed=None, horizon=None, horizon_shell=None, replicas=1
))]
#[allow(clippy::too_many_arguments)]
fn kernel<'py>(
    py: Python<'py>,
    kind: &str,
    params: &ModelParams,
    target: &Window,
    conditioning: &Configuration,
    seed: u64,
    observable: &str,
    count_cap: usize,
    n_samples: u64,
    outer: Option<&Window>,
    fixed: Option<&Configuration>,
    horizon: Option<&Window>,
    horizon_shell: Option<f64>,
    replicas: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let p = &params.inner;
    let f = to_observable(observable, target, count_cap)?;
    let budget = Budget::new(n_samples).with_replicas(replicas);
    let rng = RngStream::new(seed, 3);
    let hz = match horizon {
        Some(w) => Some(Horizon::new(w.inner.clone(), horizon_shell.unwrap_or(2.0 * p.a())).map_err(err)?),
        None => None,
    };
    let cond = &conditioning.inner;
    let est = py
        .detach(|| match kind {
            "finite_volume" => {
                let outer = outer.ok_or_else(|| wrm::Error::Invalid("finite_volume needs `outer`".into()))?;
                let empty = ColoredConfiguration::empty(p.dim());
                kernels::eval_kernel_finite_volume(&f, &target.inner, &outer.inner, cond, fixed.map_or(&empty, |c| &c.inner), p, &budget, rng)
            }
            "infinity" => kernels::eval_gamma_infinity(&f, &target.inner, cond, hz.as_ref(), p, &budget, rng),
            "free" => kernels::eval_gamma_f(&f, &target.inner, cond, hz.as_ref(), p, &budget, rng),
            "plus" => kernels::eval_gamma_pm(&f, &target.inner, cond, hz.as_ref(), Spin::Plus, p, &budget, rng),
            "minus" => kernels::eval_gamma_pm(&f, &target.inner, cond, hz.as_ref(), Spin::Minus, p, &budget, rng),
            other => Err(wrm::Error::Invalid(format!("unknown kernel kind {other:?}"))),
        })
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("value", est.value)?;
    out.set_item("std_error", est.std_error)?;
    out.set_item("n_samples", est.n_samples)?;
    out.set_item("ess", est.ess)?;
    out.set_item("warnings", est.warnings)?;
    Ok(out)
}

/// Decay of boundary influence on `B` with the distance of a plus/minus shell.
#[pyfunction]
#[pyo3(signature = (params, b, distances, inner_conditioning, seed, observable="indicator_empty", count_cap=10, n_samples=100_000))]
#[allow(clippy::too_many_arguments)]
fn probe_decay<'py>(
    py: Python<'py>,
    params: &ModelParams,
    b: &Window,
    distances: Vec<f64>,
    inner_conditioning: &Configuration,
    seed: u64,
    observable: &str,
    count_cap: usize,
    n_samples: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let f = to_observable(observable, b, count_cap)?;
    let r = py
        .detach(|| probes::probe_decay(&params.inner, &b.inner, &distances, &inner_conditioning.inner, &f, &Budget::new(n_samples), RngStream::new(seed, 10)))
        .map_err(err)?;
    report(py, &r)
}

/// Colour-perturbation discontinuity along a one-arm channel.
#[pyfunction]
#[pyo3(signature = (params, b, lambda_window, n, seed, observable="indicator_empty", cap=20, count_cap=10, jitter=false, n_samples=100_000))]
#[allow(clippy::too_many_arguments)]
fn probe_color<'py>(
    py: Python<'py>,
    params: &ModelParams,
    b: &Window,
    lambda_window: &Window,
    n: Vec<f64>,
    seed: u64,
    observable: &str,
    cap: usize,
    count_cap: usize,
    jitter: bool,
    n_samples: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let f = to_observable(observable, b, count_cap)?;
    let r = py
        .detach(|| {
            probes::probe_color_discontinuity(&params.inner, &b.inner, &lambda_window.inner, cap, &n, &f, jitter, &Budget::new(n_samples), RngStream::new(seed, 11))
        })
        .map_err(err)?;
    report(py, &r)
}

/// Truncated-vs-horizon discontinuity at `t = ∞` (symmetric model).
#[pyfunction]
#[pyo3(signature = (params, b, n, seed, arms=2, n_samples=100_000))]
fn probe_spatial<'py>(py: Python<'py>, params: &ModelParams, b: &Window, n: Vec<f64>, seed: u64, arms: u8, n_samples: u64) -> PyResult<Bound<'py, PyAny>> {
    let arms = match arms {
        1 => Arms::One,
        2 => Arms::Two,
        _ => return Err(PyValueError::new_err("arms must be 1 or 2")),
    };
    let r = py
        .detach(|| probes::probe_spatial_discontinuity(&params.inner, &b.inner, &n, arms, &Budget::new(n_samples), RngStream::new(seed, 12)))
        .map_err(err)?;
    report(py, &r)
}

/// Connection probability `B_r ↔ rim of B_n` against the two Poisson comparators.
#[pyfunction]
#[pyo3(signature = (params, r, n, seed, burn_in=200, thinning=5, n_samples=100, boundary="plus", intensity_scale=1.0))]
#[allow(clippy::too_many_arguments)]
fn probe_percolation<'py>(
    py: Python<'py>,
    params: &ModelParams,
    r: f64,
    n: Vec<f64>,
    seed: u64,
    burn_in: u64,
    thinning: u64,
    n_samples: usize,
    boundary: &str,
    intensity_scale: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut s = PercolationSettings::new(r, n, McmcSchedule { burn_in, thinning, n_samples });
    s.intensity_scale = intensity_scale;
    let bc = to_boundary(boundary)?;
    let rep = py.detach(|| probes::probe_percolation(&params.inner, &s, &bc, RngStream::new(seed, 13))).map_err(err)?;
    report(py, &rep)
}

/// Magnetisation of an evolved all-plus chain against `e^{-2t}`.
#[pyfunction]
#[pyo3(signature = (params, n, times, seed))]
fn dynamics_lln<'py>(py: Python<'py>, params: &ModelParams, n: usize, times: Vec<Option<f64>>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let times: Vec<Time> = times.into_iter().map(time_of).collect();
    let rows = probes::dynamics_lln(&params.inner, n, &times, RngStream::new(seed, 0)).map_err(err)?;
    from_json(py, &serde_json::to_string(&rows).map_err(|e| PyValueError::new_err(e.to_string()))?)
}

/// SVG of a configuration with labelled window outlines (`d ≤ 2`).
#[pyfunction]
#[pyo3(signature = (config, a, windows=Vec::new()))]
fn render(config: &Configuration, a: f64, windows: Vec<(String, Window)>) -> PyResult<String> {
    let mut scene = Scene::colored(&config.inner, a);
    for (label, w) in windows {
        scene = scene.with_window(&label, w.inner);
    }
    render_svg(&scene).map_err(err)
}

/// Intensity-thinning constant of the lower percolation comparator.
#[pyfunction]
fn zeta(d: usize) -> f64 {
    wrm::model::zeta_thinning(d)
}

#[pymodule]
fn wrmlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ModelParams>()?;
    m.add_class::<Window>()?;
    m.add_class::<Configuration>()?;
    m.add_function(wrap_pyfunction!(sample_mcmc, m)?)?;
    m.add_function(wrap_pyfunction!(sample_exact, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(log_color_weight, m)?)?;
    m.add_function(wrap_pyfunction!(clusters, m)?)?;
    m.add_function(wrap_pyfunction!(kernel, m)?)?;
    m.add_function(wrap_pyfunction!(probe_decay, m)?)?;
    m.add_function(wrap_pyfunction!(probe_color, m)?)?;
    m.add_function(wrap_pyfunction!(probe_spatial, m)?)?;
    m.add_function(wrap_pyfunction!(probe_percolation, m)?)?;
    m.add_function(wrap_pyfunction!(dynamics_lln, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(zeta, m)?)?;
    Ok(())
}
