//! Switched-linear trust dynamics.
//!
//! Trust `T` lives in `[t_min, t_max]` and is driven by a scalar performance
//! signal `P` and a constant environmental input `w`. The `(P, T)` plane is cut
//! into six modes by the performance threshold `p_star` and the soft trust
//! boundaries `tau1 < tau2`. Modes 2 and 5 carry the identified interior
//! dynamics; modes 1, 3, 4 and 6 pull trust back towards `[tau1, tau2]` with a
//! performance gain that tapers linearly to zero at the hard bounds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trust change registered by a single self-report.
pub const TRUST_REPORT_STEP: f64 = 0.05;

/// Number of items on the pre-session trust survey.
pub const SURVEY_ITEMS: usize = 14;

/// Trust value used when every survey item is left unanswered.
pub const DEFAULT_INITIAL_TRUST: f64 = 0.5;

/// Range of the intervention actuator (formation radius, km).
pub const ACTUATOR_RANGE: (f64, f64) = (1.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub p_star: f64,
    /// Pull-back rate of the saturation modes.
    pub epsilon: f64,
    /// Exogenous environmental input.
    pub w: f64,
    /// Step length in seconds.
    pub dt: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            t_min: 0.0,
            t_max: 1.0,
            p_min: -100.0,
            p_max: 100.0,
            tau1: 0.001,
            tau2: 0.999,
            p_star: 0.0,
            epsilon: 1e-2,
            w: 1.0,
            dt: 0.5,
        }
    }
}

impl DomainConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.t_min,
            self.t_max,
            self.p_min,
            self.p_max,
            self.tau1,
            self.tau2,
            self.p_star,
            self.epsilon,
            self.w,
            self.dt,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("domain configuration value"));
        }
        if !(self.t_min < self.tau1 && self.tau1 < self.tau2 && self.tau2 < self.t_max) {
            return Err(Error::Config(format!(
                "trust bounds must satisfy t_min < tau1 < tau2 < t_max, got {} {} {} {}",
                self.t_min, self.tau1, self.tau2, self.t_max
            )));
        }
        if !(self.p_min <= self.p_star && self.p_star <= self.p_max) {
            return Err(Error::Config(format!(
                "performance bounds must satisfy p_min <= p_star <= p_max, got {} {} {}",
                self.p_min, self.p_star, self.p_max
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.dt <= 0.0 {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn check_trust(&self, t: f64) -> Result<()> {
        check_bounds("trust", t, self.t_min, self.t_max)
    }

    pub fn check_performance(&self, p: f64) -> Result<()> {
        check_bounds("performance", p, self.p_min, self.p_max)
    }

    pub fn clamp_trust(&self, t: f64) -> f64 {
        t.clamp(self.t_min, self.t_max)
    }

    pub fn clamp_performance(&self, p: f64) -> f64 {
        p.clamp(self.p_min, self.p_max)
    }

    /// Memory length in steps for a window given in seconds.
    pub fn steps_for_seconds(&self, seconds: f64) -> usize {
        ((seconds / self.dt).round() as usize).max(1)
    }
}

fn check_bounds(quantity: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    if value.is_nan() {
        return Err(Error::NonFinite(quantity));
    }
    let bound = if value < min {
        "lower"
    } else if value > max {
        "upper"
    } else {
        return Ok(());
    };
    Err(Error::Domain {
        quantity,
        value,
        min,
        max,
        bound,
    })
}

/// One of the six regions of the `(P, T)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ModeId(u8);

impl ModeId {
    pub const ALL: [ModeId; 6] = [ModeId(1), ModeId(2), ModeId(3), ModeId(4), ModeId(5), ModeId(6)];
    /// Interior mode under below-threshold performance.
    pub const LOW_PERFORMANCE: ModeId = ModeId(2);
    /// Interior mode under at-or-above-threshold performance.
    pub const HIGH_PERFORMANCE: ModeId = ModeId(5);

    pub fn new(value: u8) -> Result<Self> {
        if (1..=6).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Range(format!("mode must be in 1..=6, got {value}")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based position, for per-mode arrays.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    /// True for modes 1, 2 and 3 (performance below `p_star`).
    pub fn below_threshold(self) -> bool {
        self.0 <= 3
    }

    pub fn is_interior(self) -> bool {
        self.0 == 2 || self.0 == 5
    }
}

impl TryFrom<u8> for ModeId {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ModeId> for u8 {
    fn from(mode: ModeId) -> u8 {
        mode.0
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Mode of the point `(p, t)`.
///
/// Interval closures: the interior band `[tau1, tau2]` is closed, the upper
/// saturation band `(tau2, t_max]` is open below, the lower band
/// `[t_min, tau1)` is open above, and `p == p_star` counts as high performance.
pub fn select_mode(p: f64, t: f64, cfg: &DomainConfig) -> Result<ModeId> {
    cfg.check_trust(t)?;
    cfg.check_performance(p)?;
    let band = if t > cfg.tau2 {
        0
    } else if t >= cfg.tau1 {
        1
    } else {
        2
    };
    let offset = if p < cfg.p_star { 1 } else { 4 };
    Ok(ModeId(offset + band))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustModelParams {
    /// Model memory `n_T`, 1 or 2.
    pub order: usize,
    /// Low-performance trust coefficients, one per lag.
    pub alpha: Vec<f64>,
    /// High-performance trust coefficients, one per lag.
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub delta: f64,
    pub kappa: f64,
    pub q: f64,
    /// Per-mode intervention gain.
    pub c: [f64; 6],
    /// Per-mode intervention offset.
    pub h: [f64; 6],
    #[serde(default)]
    pub domain: DomainConfig,
}

impl TrustModelParams {
    /// First-order model with neutral intervention output (`C = 0`, `H = 5.5`).
    pub fn first_order(alpha: f64, beta: f64, gamma: f64, delta: f64, kappa: f64, q: f64) -> Self {
        Self {
            order: 1,
            alpha: vec![alpha],
            beta: vec![beta],
            gamma,
            delta,
            kappa,
            q,
            c: [0.0; 6],
            h: [crate::sim::DEFAULT_RADIUS; 6],
            domain: DomainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.order != 1 && self.order != 2 {
            return Err(Error::Config(format!("model order must be 1 or 2, got {}", self.order)));
        }
        if self.alpha.len() != self.order || self.beta.len() != self.order {
            return Err(Error::Config(format!(
                "expected {} trust coefficients per interior mode, got {} and {}",
                self.order,
                self.alpha.len(),
                self.beta.len()
            )));
        }
        let scalars = self
            .alpha
            .iter()
            .chain(&self.beta)
            .chain([&self.gamma, &self.delta, &self.kappa, &self.q])
            .chain(&self.c)
            .chain(&self.h);
        if scalars.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameter"));
        }
        for (name, coeffs) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            let worst = spectral_radius(coeffs);
            if worst > 1.0 + ROOT_TOLERANCE {
                return Err(Error::Config(format!(
                    "{name} has a characteristic root of magnitude {worst} > 1"
                )));
            }
        }
        Ok(())
    }

    /// Interior-mode coefficient list for `mode`'s performance half.
    pub fn interior_coefficients(&self, mode: ModeId) -> &[f64] {
        if mode.below_threshold() {
            &self.alpha
        } else {
            &self.beta
        }
    }
}

/// Slack on the unit-circle constraint when validating identified models.
pub const ROOT_TOLERANCE: f64 = 1e-9;

/// Magnitudes of the roots of `λ − Σ_j a_j λ^{1−j} = 0`, i.e. of
/// `λ^n − a_1 λ^{n−1} − … − a_n` for `n = coeffs.len()` (at most 2).
pub fn characteristic_root_magnitudes(coeffs: &[f64]) -> Vec<f64> {
    match *coeffs {
        [] => Vec::new(),
        [a] => vec![a.abs()],
        [_, a2] => match characteristic_real_roots(coeffs) {
            Some(roots) => {
                let mut out: Vec<f64> = roots.iter().map(|r| r.abs()).collect();
                out.sort_by(|x, y| y.total_cmp(x));
                out
            }
            None => {
                // Complex pair: |λ|² equals the product of roots, −a2.
                let m = (-a2).sqrt();
                vec![m, m]
            }
        },
        _ => panic!("only first- and second-order models are supported"),
    }
}

/// Signed real roots (largest magnitude first) when both roots are real.
pub fn characteristic_real_roots(coeffs: &[f64]) -> Option<Vec<f64>> {
    match *coeffs {
        [a] => Some(vec![a]),
        [a1, a2] => {
            let disc = a1 * a1 + 4.0 * a2;
            if disc < 0.0 {
                return None;
            }
            // Pair the larger root with Vieta's product to avoid cancellation.
            let s = disc.sqrt();
            let big = if a1 >= 0.0 { 0.5 * (a1 + s) } else { 0.5 * (a1 - s) };
            let small = if big != 0.0 { -a2 / big } else { 0.0 };
            Some(vec![big, small])
        }
        _ => None,
    }
}

/// Largest characteristic-root magnitude.
pub fn spectral_radius(coeffs: &[f64]) -> f64 {
    characteristic_root_magnitudes(coeffs).into_iter().fold(0.0, f64::max)
}

/// Coefficients of the linear update active in one mode at one trust level.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    /// Weights on `T[k], T[k−1], …`.
    pub a: Vec<f64>,
    /// Performance gain.
    pub b: f64,
    /// Environmental gain.
    pub g: f64,
}

/// Active coefficients of the trust update for `mode` at trust level `t`.
pub fn effective_coefficients(mode: ModeId, t: f64, params: &TrustModelParams) -> Coefficients {
    let d = &params.domain;
    let gain = if mode.below_threshold() {
        params.gamma
    } else {
        params.delta
    };
    let mut a = vec![0.0; params.order];
    match mode.get() {
        2 | 5 => {
            a.copy_from_slice(params.interior_coefficients(mode));
            let g = if mode.get() == 2 { params.kappa } else { params.q };
            Coefficients { a, b: gain, g }
        }
        1 | 4 => {
            a[0] = 1.0 - d.epsilon;
            let taper = 1.0 - (t - d.tau2) / (d.t_max - d.tau2);
            Coefficients {
                a,
                b: gain * taper,
                g: 0.0,
            }
        }
        _ => {
            a[0] = 1.0 + d.epsilon;
            let taper = 1.0 - (d.tau1 - t) / (d.tau1 - d.t_min);
            Coefficients {
                a,
                b: gain * taper,
                g: 0.0,
            }
        }
    }
}

/// Recent trust values, newest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustState {
    pub history: Vec<f64>,
    pub k: u64,
}

impl TrustState {
    /// State whose whole memory equals `initial`.
    pub fn new(initial: f64, order: usize) -> Self {
        Self {
            history: vec![initial; order.max(1)],
            k: 0,
        }
    }

    pub fn current(&self) -> f64 {
        self.history[0]
    }
}

/// Advance trust by one step. Returns the new state and the mode used.
pub fn step_trust_with_mode(state: &TrustState, p: f64, params: &TrustModelParams) -> Result<(TrustState, ModeId)> {
    if !p.is_finite() {
        return Err(Error::NonFinite("performance"));
    }
    if state.history.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trust"));
    }
    if state.history.len() < params.order {
        return Err(Error::Config(format!(
            "trust history holds {} values but the model needs {}",
            state.history.len(),
            params.order
        )));
    }
    let d = &params.domain;
    let t = state.current();
    let mode = select_mode(p, t, d)?;
    let coeffs = effective_coefficients(mode, t, params);
    let mut next = coeffs.b * p + coeffs.g * d.w;
    for (a, past) in coeffs.a.iter().zip(&state.history) {
        next += a * past;
    }
    if !next.is_finite() {
        return Err(Error::NonFinite("trust update"));
    }
    let next = d.clamp_trust(next);
    let mut history = Vec::with_capacity(state.history.len());
    history.push(next);
    history.extend_from_slice(&state.history[..state.history.len() - 1]);
    Ok((
        TrustState {
            history,
            k: state.k + 1,
        },
        mode,
    ))
}

pub fn step_trust(state: &TrustState, p: f64, params: &TrustModelParams) -> Result<TrustState> {
    step_trust_with_mode(state, p, params).map(|(s, _)| s)
}

/// Intervention (formation radius) emitted at trust `t` in `mode`.
pub fn intervention_output(t: f64, mode: ModeId, params: &TrustModelParams) -> f64 {
    let m = mode.index();
    let raw = params.c[m] * t + params.h[m] * params.domain.w;
    raw.clamp(ACTUATOR_RANGE.0, ACTUATOR_RANGE.1)
}

/// Held status history feeding the performance metric.
///
/// Entry `i` is the held status at step `k = i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceWindow {
    n_q: usize,
    status: Vec<f64>,
}

impl PerformanceWindow {
    pub fn new(n_q: usize) -> Result<Self> {
        if n_q == 0 {
            return Err(Error::Config("memory length n_q must be at least 1".into()));
        }
        Ok(Self {
            n_q,
            status: Vec::new(),
        })
    }

    pub fn from_history(n_q: usize, history: &[f64]) -> Result<Self> {
        let mut window = Self::new(n_q)?;
        for &v in history {
            window.push(v)?;
        }
        Ok(window)
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn len(&self) -> usize {
        self.status.len()
    }

    pub fn is_empty(&self) -> bool {
        self.status.is_empty()
    }

    pub fn push(&mut self, held_status: f64) -> Result<()> {
        if !held_status.is_finite() {
            return Err(Error::NonFinite("status"));
        }
        if let Some(&last) = self.status.last() {
            if held_status < last {
                return Err(Error::Monotonicity {
                    previous: last,
                    next: held_status,
                });
            }
        }
        self.status.push(held_status);
        Ok(())
    }

    /// Status held at step `k` (1-based).
    pub fn status_at(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.status.get(i).copied())
    }
}

/// Short-term minus long-term rate of survivors found at step `k`:
/// `(Ŷs[k] − Ŷs[k−n_q]) / n_q − Ŷs[k] / (2k)`, clamped to the performance range.
///
/// Steps before the first recorded one take the first recorded value.
pub fn performance_metric(window: &PerformanceWindow, k: usize, cfg: &DomainConfig) -> Result<f64> {
    if k == 0 {
        return Err(Error::UndefinedRate);
    }
    let now = window.status_at(k).ok_or_else(|| {
        Error::InsufficientData(format!(
            "step {k} requested but only {} status values recorded",
            window.len()
        ))
    })?;
    let earlier_index = k.saturating_sub(window.n_q).max(1);
    let earlier = window.status[earlier_index - 1];
    let n_q = window.n_q as f64;
    let short = (now - earlier) / n_q;
    let long = now / (2.0 * k as f64);
    Ok(cfg.clamp_performance(short - long))
}

/// Performance at every step `1..=status.len()` of a held status series.
pub fn performance_series(status: &[f64], n_q: usize, cfg: &DomainConfig) -> Result<Vec<f64>> {
    let window = PerformanceWindow::from_history(n_q, status)?;
    (1..=status.len())
        .map(|k| performance_metric(&window, k, cfg))
        .collect()
}

/// Initial trust from the pre-session survey: mean of answered items over 100,
/// or [`DEFAULT_INITIAL_TRUST`] when nothing was answered.
pub fn initial_trust_from_survey(scores: &[Option<f64>]) -> Result<f64> {
    if scores.len() != SURVEY_ITEMS {
        return Err(Error::Schema(format!(
            "survey has {} items, expected {SURVEY_ITEMS}",
            scores.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for score in scores.iter().flatten() {
        if !(0.0..=100.0).contains(score) {
            return Err(Error::Range(format!("survey score {score} outside [0, 100]")));
        }
        sum += score;
        n += 1;
    }
    if n == 0 {
        Ok(DEFAULT_INITIAL_TRUST)
    } else {
        Ok(sum / n as f64 / 100.0)
    }
}

/// A relative trust self-report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustReport {
    pub t: f64,
    pub delta: i8,
}

/// Piecewise-constant trust reconstructed from self-reports.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustSignal {
    pub initial: f64,
    /// `(time, level)` after each report, in time order.
    pub levels: Vec<(f64, f64)>,
}

impl TrustSignal {
    /// Level holding at time `t` (reports at exactly `t` included).
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.levels.partition_point(|&(ti, _)| ti <= t);
        if n == 0 {
            self.initial
        } else {
            self.levels[n - 1].1
        }
    }

    /// Sample at `k·dt` for `k = 1..=steps`.
    pub fn sample(&self, dt: f64, steps: usize) -> Vec<f64> {
        (1..=steps).map(|k| self.value_at(k as f64 * dt)).collect()
    }
}

/// Accumulate ±[`TRUST_REPORT_STEP`] reports from `initial`, clamping to the
/// trust bounds after every report.
pub fn reconstruct_trust(initial: f64, reports: &[TrustReport], cfg: &DomainConfig) -> Result<TrustSignal> {
    cfg.check_trust(initial)?;
    let mut level = initial;
    let mut levels = Vec::with_capacity(reports.len());
    let mut last_t = f64::NEG_INFINITY;
    for report in reports {
        if !report.t.is_finite() {
            return Err(Error::NonFinite("report time"));
        }
        if report.t < last_t {
            return Err(Error::Ordering(format!(
                "trust report at {} precedes report at {last_t}",
                report.t
            )));
        }
        if !(-1..=1).contains(&report.delta) {
            return Err(Error::Range(format!(
                "trust report delta must be -1, 0 or 1, got {}",
                report.delta
            )));
        }
        last_t = report.t;
        level = cfg.clamp_trust(level + f64::from(report.delta) * TRUST_REPORT_STEP);
        levels.push((report.t, level));
    }
    Ok(TrustSignal { initial, levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> DomainConfig {
        DomainConfig::default()
    }

    fn params_mode2() -> TrustModelParams {
        TrustModelParams::first_order(0.97, 0.92, 10.0, 8.0, 0.02, 0.03)
    }

    #[test]
    fn mode_examples() {
        let cfg = defaults();
        assert_eq!(select_mode(-0.05, 0.5, &cfg).unwrap().get(), 2);
        assert_eq!(select_mode(0.2, 0.9995, &cfg).unwrap().get(), 4);
        assert_eq!(select_mode(0.0, 0.0005, &cfg).unwrap().get(), 6);
        assert_eq!(select_mode(0.0, cfg.tau1, &cfg).unwrap().get(), 5);
    }

    #[test]
    fn mode_boundaries() {
        let cfg = defaults();
        assert_eq!(select_mode(-1e-12, cfg.tau2, &cfg).unwrap().get(), 2);
        assert_eq!(select_mode(-1e-12, cfg.t_max, &cfg).unwrap().get(), 1);
        assert_eq!(select_mode(-1e-12, cfg.t_min, &cfg).unwrap().get(), 3);
        assert_eq!(select_mode(cfg.p_max, cfg.t_max, &cfg).unwrap().get(), 4);
        assert_eq!(select_mode(cfg.p_min, 0.5, &cfg).unwrap().get(), 2);
    }

    #[test]
    fn mode_rejects_out_of_domain() {
        let cfg = defaults();
        match select_mode(0.0, 1.2, &cfg) {
            Err(Error::Domain { quantity, bound, .. }) => {
                assert_eq!(quantity, "trust");
                assert_eq!(bound, "upper");
            }
            other => panic!("unexpected {other:?}"),
        }
        match select_mode(-500.0, 0.5, &cfg) {
            Err(Error::Domain { quantity, bound, .. }) => {
                assert_eq!(quantity, "performance");
                assert_eq!(bound, "lower");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(select_mode(f64::NAN, 0.5, &cfg), Err(Error::NonFinite(_))));
    }

    #[test]
    fn taper_examples() {
        let mut p = params_mode2();
        let c = effective_coefficients(ModeId::new(1).unwrap(), 0.9995, &p);
        assert!((c.a[0] - 0.99).abs() < 1e-15);
        assert!((c.b - 5.0).abs() < 1e-9);
        assert_eq!(c.g, 0.0);

        let c = effective_coefficients(ModeId::new(2).unwrap(), 0.5, &p);
        assert_eq!(c.a, vec![0.97]);
        assert_eq!(c.b, 10.0);
        assert_eq!(c.g, 0.02);

        let c = effective_coefficients(ModeId::new(6).unwrap(), 0.0, &p);
        assert_eq!(c.b, 0.0);
        assert!((c.a[0] - 1.01).abs() < 1e-15);

        p.order = 2;
        p.alpha = vec![0.9, 0.05];
        p.beta = vec![0.9, 0.05];
        let c = effective_coefficients(ModeId::new(3).unwrap(), 0.0005, &p);
        assert_eq!(c.a.len(), 2);
        assert_eq!(c.a[1], 0.0);
    }

    #[test]
    fn step_examples() {
        let p = TrustModelParams::first_order(1.0, 1.0, 13.6, 11.1, 2.32e-2, 2.56e-2);
        let s = step_trust(&TrustState::new(0.5, 1), 0.001, &p).unwrap();
        assert!((s.current() - 0.5367).abs() < 1e-12);
        assert_eq!(s.k, 1);

        let still = TrustModelParams::first_order(1.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        let s = step_trust(&TrustState::new(0.42, 1), 0.0, &still).unwrap();
        assert_eq!(s.current(), 0.42);

        let loud = TrustModelParams::first_order(0.9, 0.9, 1e6, 1e6, 0.0, 0.0);
        let s = step_trust(&TrustState::new(0.5, 1), -0.5, &loud).unwrap();
        assert_eq!(s.current(), 0.0);
        let s = step_trust(&TrustState::new(0.5, 1), 0.5, &loud).unwrap();
        assert_eq!(s.current(), 1.0);
    }

    #[test]
    fn step_shifts_history() {
        let mut p = params_mode2();
        p.order = 2;
        p.alpha = vec![0.5, 0.4];
        p.beta = vec![0.5, 0.4];
        p.gamma = 0.0;
        p.kappa = 0.0;
        let s = TrustState {
            history: vec![0.6, 0.2],
            k: 3,
        };
        let next = step_trust(&s, -0.01, &p).unwrap();
        assert!((next.history[0] - (0.5 * 0.6 + 0.4 * 0.2)).abs() < 1e-15);
        assert_eq!(next.history[1], 0.6);
    }

    #[test]
    fn step_rejects_non_finite() {
        let p = params_mode2();
        assert!(matches!(
            step_trust(&TrustState::new(0.5, 1), f64::INFINITY, &p),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn intervention_examples() {
        let mut p = params_mode2();
        p.c[1] = 4.0;
        p.h[1] = 2.0;
        assert_eq!(intervention_output(0.5, ModeId::new(2).unwrap(), &p), 4.0);
        p.c[1] = 0.0;
        p.h[1] = 5.5;
        assert_eq!(intervention_output(0.1, ModeId::new(2).unwrap(), &p), 5.5);
        p.c[1] = 20.0;
        p.h[1] = 0.0;
        assert_eq!(intervention_output(0.9, ModeId::new(2).unwrap(), &p), 10.0);
        p.c[1] = -20.0;
        assert_eq!(intervention_output(0.9, ModeId::new(2).unwrap(), &p), 1.0);
    }

    #[test]
    fn performance_examples() {
        let cfg = defaults();
        // Ŷs[k] = k/10 so that Ŷs[100] = 10 and Ŷs[80] = 8.
        let status: Vec<f64> = (1..=100).map(|k| k as f64 / 10.0).collect();
        let w = PerformanceWindow::from_history(20, &status).unwrap();
        let p = performance_metric(&w, 100, &cfg).unwrap();
        assert!((p - 0.05).abs() < 1e-15);

        let zeros = PerformanceWindow::from_history(5, &[0.0; 10]).unwrap();
        assert_eq!(performance_metric(&zeros, 7, &cfg).unwrap(), 0.0);

        let c = 40.0;
        let flat = PerformanceWindow::from_history(5, &[c; 30]).unwrap();
        for k in 1..=30 {
            let p = performance_metric(&flat, k, &cfg).unwrap();
            assert_eq!(p, -c / (2.0 * k as f64));
        }

        assert!(matches!(performance_metric(&flat, 0, &cfg), Err(Error::UndefinedRate)));
    }

    #[test]
    fn performance_pads_short_history() {
        let cfg = defaults();
        let w = PerformanceWindow::from_history(10, &[2.0, 3.0, 5.0]).unwrap();
        // Window reaches before step 1, so the first value is used.
        let p = performance_metric(&w, 3, &cfg).unwrap();
        assert_eq!(p, (5.0 - 2.0) / 10.0 - 5.0 / 6.0);
    }

    #[test]
    fn window_rejects_decreasing_status() {
        let mut w = PerformanceWindow::new(3).unwrap();
        w.push(50.0).unwrap();
        assert!(matches!(w.push(40.0), Err(Error::Monotonicity { .. })));
    }

    #[test]
    fn survey_examples() {
        assert_eq!(initial_trust_from_survey(&[None; 14]).unwrap(), 0.5);
        let mut s = [None; 14];
        s[0] = Some(80.0);
        s[1] = Some(60.0);
        assert!((initial_trust_from_survey(&s).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(initial_trust_from_survey(&[Some(100.0); 14]).unwrap(), 1.0);
        assert!(matches!(initial_trust_from_survey(&[None; 13]), Err(Error::Schema(_))));
        s[2] = Some(101.0);
        assert!(initial_trust_from_survey(&s).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let cfg = defaults();
        let reports = [
            TrustReport { t: 1.0, delta: 1 },
            TrustReport { t: 2.0, delta: 1 },
            TrustReport { t: 3.0, delta: -1 },
        ];
        let sig = reconstruct_trust(0.5, &reports, &cfg).unwrap();
        let levels: Vec<f64> = sig.levels.iter().map(|l| l.1).collect();
        assert!((levels[0] - 0.55).abs() < 1e-12);
        assert!((levels[1] - 0.60).abs() < 1e-12);
        assert!((levels[2] - 0.55).abs() < 1e-12);
        assert_eq!(sig.value_at(0.5), 0.5);
        assert_eq!(sig.value_at(2.5), levels[1]);

        let top = reconstruct_trust(1.0, &[TrustReport { t: 0.0, delta: 1 }], &cfg).unwrap();
        assert_eq!(top.value_at(1.0), 1.0);

        let none = reconstruct_trust(0.3, &[], &cfg).unwrap();
        assert_eq!(none.sample(0.5, 4), vec![0.3; 4]);

        let unordered = [TrustReport { t: 2.0, delta: 1 }, TrustReport { t: 1.0, delta: 1 }];
        assert!(matches!(
            reconstruct_trust(0.5, &unordered, &cfg),
            Err(Error::Ordering(_))
        ));
    }

    #[test]
    fn second_order_roots() {
        // λ² − 0.9λ − 0.05 = 0 → (0.9 ± sqrt(1.01)) / 2
        let s = (0.81f64 + 0.2).sqrt();
        let roots = characteristic_real_roots(&[0.9, 0.05]).unwrap();
        assert!((roots[0] - (0.9 + s) / 2.0).abs() < 1e-12);
        assert!((roots[1] - (0.9 - s) / 2.0).abs() < 1e-12);
        assert!((roots[0] - 0.9525).abs() < 1e-4);
        assert!((roots[1] + 0.0525).abs() < 1e-4);
        let mags = characteristic_root_magnitudes(&[0.9, 0.05]);
        assert!(mags.iter().all(|m| *m <= 1.0));
        // Complex pair λ² − λ + 0.5: |λ|² = 0.5.
        let mags = characteristic_root_magnitudes(&[1.0, -0.5]);
        assert!((mags[0] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_unstable() {
        let p = TrustModelParams::first_order(1.2, 0.9, 1.0, 1.0, 0.0, 0.0);
        assert!(p.validate().is_err());
        let ok = TrustModelParams::first_order(1.0, -1.0, 1.0, 1.0, 0.0, 0.0);
        ok.validate().unwrap();
    }
}
