//! Python bindings: trust dynamics, event sampling, synthetic cohorts,
//! identification and clustering.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use trustbench::cluster::{classify_response_style, kmeans_replicated, DEFAULT_K_RANGE, DEFAULT_REPLICATES};
use trustbench::sampler::{SamplerConfig, SamplerState};
use trustbench::store::{Cohort, SessionSeries, TRAIN_SESSION};
use trustbench::synth::{generate_cohort, CohortSpec};
use trustbench::sysid::{IdentifiedGroup, NQ_GRID_SECONDS};
use trustbench::trust::{DomainConfig, ModeId, PerformanceWindow, TrustModelParams, TrustState};

create_exception!(pytrustbench, TrustbenchError, PyException);

/// Error message carries the class, e.g. `[identification] ...`.
fn err(e: trustbench::Error) -> PyErr {
    TrustbenchError::new_err(format!("[{}] {e}", e.class()))
}

fn json_err(e: serde_json::Error) -> PyErr {
    TrustbenchError::new_err(format!("[format] {e}"))
}

fn domain_or_default(domain: Option<PyRef<'_, Domain>>) -> DomainConfig {
    domain.map(|d| d.inner).unwrap_or_default()
}

/// Trust and performance domain: bounds, thresholds and step length.
#[pyclass(name = "DomainConfig", module = "pytrustbench", frozen)]
struct Domain {
    inner: DomainConfig,
}

#[pymethods]
impl Domain {
    #[new]
    #[pyo3(signature = (*, dt=None, p_star=None, tau1=None, tau2=None, epsilon=None, w=None))]
    fn new(
        dt: Option<f64>,
        p_star: Option<f64>,
        tau1: Option<f64>,
        tau2: Option<f64>,
        epsilon: Option<f64>,
        w: Option<f64>,
    ) -> PyResult<Self> {
        let d = DomainConfig::default();
        let inner = DomainConfig {
            dt: dt.unwrap_or(d.dt),
            p_star: p_star.unwrap_or(d.p_star),
            tau1: tau1.unwrap_or(d.tau1),
            tau2: tau2.unwrap_or(d.tau2),
            epsilon: epsilon.unwrap_or(d.epsilon),
            w: w.unwrap_or(d.w),
            ..d
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn p_star(&self) -> f64 {
        self.inner.p_star
    }

    #[getter]
    fn tau1(&self) -> f64 {
        self.inner.tau1
    }

    #[getter]
    fn tau2(&self) -> f64 {
        self.inner.tau2
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[getter]
    fn w(&self) -> f64 {
        self.inner.w
    }

    #[getter]
    fn trust_bounds(&self) -> (f64, f64) {
        (self.inner.t_min, self.inner.t_max)
    }

    #[getter]
    fn performance_bounds(&self) -> (f64, f64) {
        (self.inner.p_min, self.inner.p_max)
    }

    fn __repr__(&self) -> String {
        let d = &self.inner;
        format!(
            "DomainConfig(dt={}, p_star={}, tau1={}, tau2={}, epsilon={}, w={})",
            d.dt, d.p_star, d.tau1, d.tau2, d.epsilon, d.w
        )
    }
}

/// Switched-linear trust model parameters.
#[pyclass(name = "TrustModelParams", module = "pytrustbench", frozen)]
struct Params {
    inner: TrustModelParams,
}

#[pymethods]
impl Params {
    /// `alpha` and `beta` hold one coefficient per lag; their length sets the
    /// model order. `c` and `h` default to a constant default radius output.
    #[new]
    #[pyo3(signature = (alpha, beta, gamma, delta, kappa, q, *, c=None, h=None, domain=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: f64,
        delta: f64,
        kappa: f64,
        q: f64,
        c: Option<[f64; 6]>,
        h: Option<[f64; 6]>,
        domain: Option<PyRef<'_, Domain>>,
    ) -> PyResult<Self> {
        let mut inner = TrustModelParams::first_order(0.0, 0.0, gamma, delta, kappa, q);
        inner.order = alpha.len();
        inner.alpha = alpha;
        inner.beta = beta;
        if let Some(c) = c {
            inner.c = c;
        }
        if let Some(h) = h {
            inner.h = h;
        }
        inner.domain = domain_or_default(domain);
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.clone()
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta.clone()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q
    }

    #[getter]
    fn c(&self) -> [f64; 6] {
        self.inner.c
    }

    #[getter]
    fn h(&self) -> [f64; 6] {
        self.inner.h
    }

    #[getter]
    fn domain(&self) -> Domain {
        Domain {
            inner: self.inner.domain,
        }
    }

    /// `"quick-to-lose-slow-to-gain"`, `"quick-to-gain-slow-to-lose"` or `"symmetric"`.
    fn response_style(&self) -> PyResult<String> {
        classify_response_style(&self.inner).map(|s| s.to_string()).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: TrustModelParams = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "TrustModelParams(alpha={:?}, beta={:?}, gamma={}, delta={}, kappa={}, q={})",
            self.inner.alpha, self.inner.beta, self.inner.gamma, self.inner.delta, self.inner.kappa, self.inner.q
        )
    }
}

/// Mode (1-6) for performance `p` and trust `t`.
#[pyfunction]
#[pyo3(signature = (p, t, domain=None))]
fn select_mode(p: f64, t: f64, domain: Option<PyRef<'_, Domain>>) -> PyResult<u8> {
    trustbench::trust::select_mode(p, t, &domain_or_default(domain))
        .map(ModeId::get)
        .map_err(err)
}

/// One trust step. `history` is newest first with one entry per lag; returns
/// the new history and the mode used.
#[pyfunction]
fn step_trust(history: Vec<f64>, p: f64, params: PyRef<'_, Params>) -> PyResult<(Vec<f64>, u8)> {
    if history.len() != params.inner.order {
        return Err(err(trustbench::Error::Config(format!(
            "history has {} entries, model order is {}",
            history.len(),
            params.inner.order
        ))));
    }
    let state = TrustState { history, k: 0 };
    let (next, mode) = trustbench::trust::step_trust_with_mode(&state, p, &params.inner).map_err(err)?;
    Ok((next.history, mode.get()))
}

/// Simulate trust over a performance sequence; returns one value per input.
#[pyfunction]
fn simulate_trust(initial: f64, performance: Vec<f64>, params: PyRef<'_, Params>) -> PyResult<Vec<f64>> {
    let mut state = TrustState::new(initial, params.inner.order);
    performance
        .iter()
        .map(|&p| {
            state = trustbench::trust::step_trust(&state, p, &params.inner)?;
            Ok(state.current())
        })
        .collect::<trustbench::Result<_>>()
        .map_err(err)
}

/// Commanded radius for trust `t` in `mode`.
#[pyfunction]
fn intervention_output(t: f64, mode: u8, params: PyRef<'_, Params>) -> PyResult<f64> {
    let mode = ModeId::new(mode).map_err(err)?;
    Ok(trustbench::trust::intervention_output(t, mode, &params.inner))
}

/// Performance at step `k` (1-based) of a non-decreasing held status series.
#[pyfunction]
#[pyo3(signature = (status, n_q, k, domain=None))]
fn performance_metric(status: Vec<f64>, n_q: usize, k: usize, domain: Option<PyRef<'_, Domain>>) -> PyResult<f64> {
    let window = PerformanceWindow::from_history(n_q, &status).map_err(err)?;
    trustbench::trust::performance_metric(&window, k, &domain_or_default(domain)).map_err(err)
}

/// Performance at every step of a held status series.
#[pyfunction]
#[pyo3(signature = (status, n_q, domain=None))]
fn performance_series(status: Vec<f64>, n_q: usize, domain: Option<PyRef<'_, Domain>>) -> PyResult<Vec<f64>> {
    trustbench::trust::performance_series(&status, n_q, &domain_or_default(domain)).map_err(err)
}

/// Initial trust from survey scores in [0, 100]; `None` marks an unanswered item.
#[pyfunction]
fn initial_trust_from_survey(scores: Vec<Option<f64>>) -> PyResult<f64> {
    trustbench::trust::initial_trust_from_survey(&scores).map_err(err)
}

/// Event-triggered sampler with zero-order hold.
#[pyclass(name = "EventSampler", module = "pytrustbench")]
struct EventSampler {
    cfg: SamplerConfig,
    state: SamplerState,
}

#[pymethods]
impl EventSampler {
    /// Starts with an event transmitting `y0` at `t0`.
    #[new]
    #[pyo3(signature = (y0, t0=0.0, *, tau=None, w_gain=None, min_interval=None))]
    fn new(y0: f64, t0: f64, tau: Option<f64>, w_gain: Option<f64>, min_interval: Option<f64>) -> PyResult<Self> {
        let d = SamplerConfig::default();
        let cfg = SamplerConfig {
            tau: tau.unwrap_or(d.tau),
            w_gain: w_gain.unwrap_or(d.w_gain),
            min_interval: min_interval.unwrap_or(d.min_interval),
            ..d
        };
        cfg.validate().map_err(err)?;
        let state = SamplerState::init(y0, t0).map_err(err)?;
        Ok(Self { cfg, state })
    }

    /// Offer `y` at time `t`; returns whether an event fired.
    fn poll(&mut self, y: f64, t: f64) -> PyResult<bool> {
        self.state.poll(y, t, &self.cfg).map_err(err)
    }

    #[getter]
    fn held(&self) -> f64 {
        self.state.held_signal()
    }

    #[getter]
    fn event_count(&self) -> u64 {
        self.state.event_count
    }

    #[getter]
    fn last_event_time(&self) -> f64 {
        self.state.last_event_time
    }
}

/// Session logs of a cohort, keyed by member.
#[pyclass(name = "Cohort", module = "pytrustbench", frozen)]
struct PyCohort {
    inner: Cohort,
}

#[pymethods]
impl PyCohort {
    #[staticmethod]
    fn load(py: Python<'_>, dir: PathBuf) -> PyResult<Self> {
        let inner = py.detach(|| Cohort::load_dir(&dir)).map_err(err)?;
        Ok(Self { inner })
    }

    fn save(&self, py: Python<'_>, dir: PathBuf) -> PyResult<()> {
        py.detach(|| self.inner.save_dir(&dir)).map_err(err)
    }

    fn member_ids(&self) -> Vec<String> {
        self.inner.member_ids()
    }

    fn __len__(&self) -> usize {
        self.inner.members.len()
    }

    /// Steps in each session of `member`, ordered by session index.
    fn session_lengths(&self, member: &str) -> Vec<(u8, usize)> {
        self.inner
            .members
            .get(member)
            .map(|logs| logs.iter().map(|l| (l.session_index, l.steps())).collect())
            .unwrap_or_default()
    }
}

/// Synthetic cohort from the default parameter blobs. Returns the cohort and
/// one dict of ground truth per member.
#[pyfunction]
#[pyo3(signature = (members_per_blob=8, seed=0, *, noise_sd=0.002, fuel=600.0, domain=None))]
fn simulate_cohort<'py>(
    py: Python<'py>,
    members_per_blob: usize,
    seed: u64,
    noise_sd: f64,
    fuel: f64,
    domain: Option<PyRef<'py, Domain>>,
) -> PyResult<(PyCohort, Vec<Bound<'py, PyDict>>)> {
    let mut spec = CohortSpec {
        members_per_blob,
        noise_sd,
        seed,
        domain: domain_or_default(domain),
        ..CohortSpec::default()
    };
    spec.world.fuel_seconds = fuel;
    let (cohort, members) = py.detach(|| generate_cohort(&spec)).map_err(err)?;
    let truth = members
        .into_iter()
        .map(|m| {
            let d = PyDict::new(py);
            d.set_item("member_id", m.member_id)?;
            d.set_item("blob", m.blob)?;
            d.set_item("params", Params { inner: m.params })?;
            d.set_item("n_q_seconds", m.n_q_seconds)?;
            d.set_item("initial_trust", m.initial_trust)?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    Ok((PyCohort { inner: cohort }, truth))
}

/// Identified model of one group.
#[pyclass(name = "IdentifiedGroup", module = "pytrustbench", frozen)]
struct Group {
    inner: IdentifiedGroup,
}

#[pymethods]
impl Group {
    #[getter]
    fn params(&self) -> Params {
        Params {
            inner: self.inner.params(),
        }
    }

    #[getter]
    fn n_q_seconds(&self) -> f64 {
        self.inner.n_q_seconds
    }

    #[getter]
    fn train_error(&self) -> f64 {
        self.inner.train_error
    }

    #[getter]
    fn member_ids(&self) -> Vec<String> {
        self.inner.member_ids.clone()
    }

    #[getter]
    fn mode_rows(&self) -> [usize; 6] {
        self.inner.mode_rows
    }

    /// `(n_q seconds, training error or None)` for every grid point.
    #[getter]
    fn grid_errors(&self) -> Vec<(f64, Option<f64>)> {
        self.inner.grid_errors.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(|inner| Self { inner }).map_err(json_err)
    }
}

fn training_sessions(
    cohort: &Cohort,
    members: Option<Vec<String>>,
    cfg: &DomainConfig,
) -> trustbench::Result<Vec<SessionSeries>> {
    let ids = members.unwrap_or_else(|| cohort.member_ids());
    ids.iter()
        .map(|id| {
            cohort
                .members
                .get(id)
                .and_then(|logs| logs.iter().find(|l| l.session_index == TRAIN_SESSION))
                .ok_or_else(|| trustbench::Error::IncompleteMember {
                    member: id.clone(),
                    session: TRAIN_SESSION,
                })?
                .to_series(cfg)
        })
        .collect()
}

/// Fit one model to the training sessions of `members` (all members by
/// default), sweeping the memory-length grid in seconds.
#[pyfunction]
#[pyo3(signature = (cohort, members=None, *, order=1, nq_grid=None, domain=None))]
fn find_model_parameters(
    py: Python<'_>,
    cohort: PyRef<'_, PyCohort>,
    members: Option<Vec<String>>,
    order: usize,
    nq_grid: Option<Vec<f64>>,
    domain: Option<PyRef<'_, Domain>>,
) -> PyResult<Group> {
    let cfg = domain_or_default(domain);
    let grid = nq_grid.unwrap_or_else(|| NQ_GRID_SECONDS.to_vec());
    let cohort = &cohort.inner;
    let inner = py
        .detach(|| {
            let sessions = training_sessions(cohort, members, &cfg)?;
            trustbench::sysid::find_model_parameters(&sessions, &grid, order, &cfg)
        })
        .map_err(err)?;
    Ok(Group { inner })
}

/// Best of `replicates` seeded k-means++ / Lloyd runs.
#[pyclass(name = "KMeansResult", module = "pytrustbench", frozen, get_all)]
struct KMeansResult {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    within_ss: f64,
    history: Vec<f64>,
}

#[pyfunction]
#[pyo3(signature = (points, k, replicates=DEFAULT_REPLICATES, seed=0))]
fn kmeans(py: Python<'_>, points: Vec<Vec<f64>>, k: usize, replicates: usize, seed: u64) -> PyResult<KMeansResult> {
    let s = py
        .detach(|| kmeans_replicated(&points, k, replicates, seed))
        .map_err(err)?;
    Ok(KMeansResult {
        labels: s.labels,
        centroids: s.centroids,
        within_ss: s.within_ss,
        history: s.history,
    })
}

/// `(k, within_ss, has_singleton)` for one candidate.
type SweepRow = (usize, f64, bool);

/// Chosen `k` and the sweep.
#[pyfunction]
#[pyo3(signature = (points, k_range=None, replicates=DEFAULT_REPLICATES, seed=0, singleton_forbidden=true))]
fn select_k(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    k_range: Option<Vec<usize>>,
    replicates: usize,
    seed: u64,
    singleton_forbidden: bool,
) -> PyResult<(usize, Vec<SweepRow>)> {
    let ks = k_range.unwrap_or_else(|| DEFAULT_K_RANGE.collect());
    let sel = py
        .detach(|| trustbench::cluster::select_k(&points, &ks, replicates, seed, singleton_forbidden))
        .map_err(err)?;
    let sweep = sel.sweep.iter().map(|c| (c.k, c.within_ss, c.has_singleton)).collect();
    Ok((sel.k, sweep))
}

#[pymodule]
fn pytrustbench(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("TrustbenchError", m.py().get_type::<TrustbenchError>())?;
    m.add_class::<Domain>()?;
    m.add_class::<Params>()?;
    m.add_class::<EventSampler>()?;
    m.add_class::<PyCohort>()?;
    m.add_class::<Group>()?;
    m.add_class::<KMeansResult>()?;
    m.add_function(wrap_pyfunction!(select_mode, m)?)?;
    m.add_function(wrap_pyfunction!(step_trust, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_trust, m)?)?;
    m.add_function(wrap_pyfunction!(intervention_output, m)?)?;
    m.add_function(wrap_pyfunction!(performance_metric, m)?)?;
    m.add_function(wrap_pyfunction!(performance_series, m)?)?;
    m.add_function(wrap_pyfunction!(initial_trust_from_survey, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(find_model_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    Ok(())
}
