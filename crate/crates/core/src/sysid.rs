//! Identification of switched-linear trust models from session data.
//!
//! Steps are labelled with their mode and grouped into per-mode regression
//! rows. The interior-mode trust coefficients are fitted by least squares
//! subject to all characteristic roots lying in the closed unit disc; the
//! intervention output is an ordinary per-mode least-squares fit. The memory
//! length of the performance metric is chosen by sweeping a grid and keeping
//! the fit with the smallest one-step training error.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::DEFAULT_RADIUS;
use crate::store::SessionSeries;
use crate::trust::{
    performance_series, select_mode, spectral_radius, DomainConfig, ModeId, TrustModelParams, ROOT_TOLERANCE,
};

/// Memory-length grid swept by [`find_model_parameters`], seconds.
pub const NQ_GRID_SECONDS: [f64; 10] = [5.0, 10.0, 15.0, 20.0, 30.0, 45.0, 60.0, 75.0, 90.0, 120.0];

/// Relative determinant below which the excitation matrix counts as singular.
pub const EXCITATION_TOLERANCE: f64 = 1e-10;

const SVD_EPS: f64 = 1e-13;

/// One transition `T[k] → T[k+1]` with its regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub performance: f64,
    /// `T[k], T[k−1], …` (newest first, one entry per lag).
    pub lags: Vec<f64>,
    pub next: f64,
    /// Held intervention at step `k`.
    pub intervention: f64,
    /// `next` sits on a trust bound, so the clamp rather than the mode's
    /// linear law produced it. Excluded from dynamics fits.
    #[serde(default)]
    pub censored: bool,
}

impl RegressionRow {
    pub fn trust(&self) -> f64 {
        self.lags[0]
    }
}

/// Per-session aligned input/output signals on the step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSignal {
    pub performance: Vec<f64>,
    pub trust: Vec<f64>,
    pub intervention: Vec<f64>,
}

impl TrainingSignal {
    pub fn from_series(series: &SessionSeries, n_q: usize, cfg: &DomainConfig) -> Result<Self> {
        Ok(Self {
            performance: performance_series(&series.status, n_q, cfg)?,
            trust: series.trust.clone(),
            intervention: series.intervention.clone(),
        })
    }
}

/// Regression rows grouped by mode, concatenated over sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePartition {
    pub order: usize,
    pub rows: [Vec<RegressionRow>; 6],
    /// Mode label of every step that produced a row, per session.
    pub labels: Vec<Vec<ModeId>>,
    /// Trust bounds `(t_min, t_max)` the data were clamped to.
    pub bounds: (f64, f64),
}

impl Default for ModePartition {
    fn default() -> Self {
        let d = DomainConfig::default();
        Self {
            order: 1,
            rows: Default::default(),
            labels: Vec::new(),
            bounds: (d.t_min, d.t_max),
        }
    }
}

impl ModePartition {
    pub fn mode_rows(&self, mode: ModeId) -> &[RegressionRow] {
        &self.rows[mode.index()]
    }

    /// Uncensored rows of `mode`, the ones its dynamics are fitted on.
    pub fn dynamics_rows(&self, mode: ModeId) -> Vec<RegressionRow> {
        self.rows[mode.index()]
            .iter()
            .filter(|r| !r.censored)
            .cloned()
            .collect()
    }

    pub fn row_counts(&self) -> [usize; 6] {
        std::array::from_fn(|i| self.rows[i].len())
    }

    pub fn total_rows(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Label and group transitions of already-computed signals. Rows never span
/// two sessions; lags before a session's first step repeat its first value.
pub fn partition_signals(sessions: &[TrainingSignal], order: usize, cfg: &DomainConfig) -> Result<ModePartition> {
    if order != 1 && order != 2 {
        return Err(Error::Config(format!("model order must be 1 or 2, got {order}")));
    }
    let mut partition = ModePartition {
        order,
        bounds: (cfg.t_min, cfg.t_max),
        ..Default::default()
    };
    for s in sessions {
        let n = s.trust.len();
        if s.performance.len() != n || s.intervention.len() != n {
            return Err(Error::Schema(format!(
                "misaligned session signals: {} performance, {} trust, {} intervention",
                s.performance.len(),
                n,
                s.intervention.len()
            )));
        }
        let mut labels = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n.saturating_sub(1) {
            let mode = select_mode(s.performance[i], s.trust[i], cfg)?;
            labels.push(mode);
            let lags = (0..order).map(|j| s.trust[i.saturating_sub(j)]).collect();
            let next = s.trust[i + 1];
            partition.rows[mode.index()].push(RegressionRow {
                performance: s.performance[i],
                lags,
                next,
                intervention: s.intervention[i],
                censored: next <= cfg.t_min || next >= cfg.t_max,
            });
        }
        partition.labels.push(labels);
    }
    if partition.total_rows() == 0 {
        return Err(Error::EmptyPartition);
    }
    Ok(partition)
}

/// Compute performance with memory `n_q` for each session and partition.
pub fn partition_by_mode(
    sessions: &[SessionSeries],
    n_q: usize,
    order: usize,
    cfg: &DomainConfig,
) -> Result<ModePartition> {
    if sessions.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let signals = sessions
        .iter()
        .map(|s| TrainingSignal::from_series(s, n_q, cfg))
        .collect::<Result<Vec<_>>>()?;
    partition_signals(&signals, order, cfg)
}

/// Whether `[P_m, T_m, w]` has a numerically non-singular Gram matrix.
/// Censored rows are left out.
pub fn check_excitation(partition: &ModePartition, mode: ModeId, w: f64) -> Result<bool> {
    let rows = partition.dynamics_rows(mode);
    if rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "mode {mode} has {} uncensored rows, at least 3 needed",
            rows.len()
        )));
    }
    Ok(excitation_ratio(&rows, w) > EXCITATION_TOLERANCE)
}

/// `det(MᵀM)` divided by the product of its diagonal (1 for orthogonal
/// columns, 0 for collinear ones).
pub fn excitation_ratio(rows: &[RegressionRow], w: f64) -> f64 {
    let m = DMatrix::from_fn(rows.len(), 3, |i, j| match j {
        0 => rows[i].performance,
        1 => rows[i].trust(),
        _ => w,
    });
    let gram = m.transpose() * &m;
    let scale: f64 = (0..3).map(|i| gram[(i, i)]).product();
    if scale <= 0.0 {
        return 0.0;
    }
    gram.determinant() / scale
}

/// Identified coefficients of one interior mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorFit {
    /// Trust coefficients per lag.
    pub coeffs: Vec<f64>,
    /// Performance gain.
    pub gain: f64,
    /// Environmental gain.
    pub env: f64,
    /// Residual sum of squares on the training rows.
    pub sse: f64,
    pub rows: usize,
    /// True when the unit-disc constraint is active.
    pub constrained: bool,
}

impl InteriorFit {
    pub fn predict(&self, row: &RegressionRow, w: f64) -> f64 {
        self.coeffs.iter().zip(&row.lags).map(|(a, t)| a * t).sum::<f64>() + self.gain * row.performance + self.env * w
    }
}

/// Fit the low-performance interior mode (`α`, `γ`, `κ`).
pub fn fit_theta(partition: &ModePartition, w: f64) -> Result<InteriorFit> {
    fit_interior(partition, ModeId::LOW_PERFORMANCE, w)
}

/// Fit the high-performance interior mode (`β`, `δ`, `q`).
pub fn fit_phi(partition: &ModePartition, w: f64) -> Result<InteriorFit> {
    fit_interior(partition, ModeId::HIGH_PERFORMANCE, w)
}

/// Rows whose fitted next value lies within this many residual standard
/// deviations of a trust bound are dropped and the fit repeated.
pub const BOUND_MARGIN_SIGMAS: f64 = 3.0;

const MAX_MARGIN_PASSES: usize = 10;

fn fit_interior(partition: &ModePartition, mode: ModeId, w: f64) -> Result<InteriorFit> {
    if !check_excitation(partition, mode, w)? {
        return Err(Error::InsufficientData(format!(
            "mode {mode} data are not persistently exciting"
        )));
    }
    let all = partition.dynamics_rows(mode);
    let order = partition.order;
    let (lo, hi) = partition.bounds;
    let mut kept = vec![true; all.len()];
    let mut fit = solve_interior(&all, order, w)?;
    // Selection is on the regressors only, through the fitted prediction.
    for _ in 0..MAX_MARGIN_PASSES {
        let dof = fit.rows.saturating_sub(order + 2).max(1);
        let margin = BOUND_MARGIN_SIGMAS * (fit.sse / dof as f64).sqrt();
        let next_kept: Vec<bool> = all
            .iter()
            .map(|r| {
                let p = fit.predict(r, w);
                p > lo + margin && p < hi - margin
            })
            .collect();
        if next_kept == kept {
            break;
        }
        let rows: Vec<RegressionRow> = all
            .iter()
            .zip(&next_kept)
            .filter(|(_, &k)| k)
            .map(|(r, _)| r.clone())
            .collect();
        if rows.len() < order + 3 || excitation_ratio(&rows, w) <= EXCITATION_TOLERANCE {
            break;
        }
        fit = solve_interior(&rows, order, w)?;
        kept = next_kept;
    }
    debug_assert!(spectral_radius(&fit.coeffs) <= 1.0 + ROOT_TOLERANCE);
    Ok(fit)
}

fn solve_interior(rows: &[RegressionRow], order: usize, w: f64) -> Result<InteriorFit> {
    let n = rows.len();
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.next));
    let x = DMatrix::from_fn(n, order + 2, |i, j| {
        if j < order {
            rows[i].lags[j]
        } else if j == order {
            rows[i].performance
        } else {
            w
        }
    });
    let theta = least_squares(&x, &y)?;
    let coeffs: Vec<f64> = theta.iter().take(order).copied().collect();
    let mut fit = InteriorFit {
        coeffs,
        gain: theta[order],
        env: theta[order + 1],
        sse: 0.0,
        rows: n,
        constrained: false,
    };
    if spectral_radius(&fit.coeffs) > 1.0 {
        fit = match order {
            1 => project_first_order(rows, w, fit.coeffs[0].signum())?,
            _ => project_second_order(rows, w)?,
        };
        fit.constrained = true;
    }
    fit.sse = rows.iter().map(|r| (r.next - fit.predict(r, w)).powi(2)).sum();
    Ok(fit)
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    x.clone()
        .svd(true, true)
        .solve(y, SVD_EPS)
        .map_err(|e| Error::InsufficientData(format!("least squares failed: {e}")))
}

/// Fix the single root at `sign·1` and refit the gains.
fn project_first_order(rows: &[RegressionRow], w: f64, sign: f64) -> Result<InteriorFit> {
    let a = if sign < 0.0 { -1.0 } else { 1.0 };
    let n = rows.len();
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.next - a * r.lags[0]));
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { rows[i].performance } else { w });
    let g = least_squares(&x, &y)?;
    Ok(InteriorFit {
        coeffs: vec![a],
        gain: g[0],
        env: g[1],
        sse: 0.0,
        rows: n,
        constrained: true,
    })
}

/// Boundary edges of the second-order stability triangle, each written as
/// `(α₁, α₂) = base + r·dir` for `r` in `[lo, hi]`.
const SECOND_ORDER_EDGES: [([f64; 2], [f64; 2], f64, f64); 3] = [
    // Root at +1, other root r.
    ([1.0, 0.0], [1.0, -1.0], -1.0, 1.0),
    // Root at −1, other root r.
    ([-1.0, 0.0], [1.0, 1.0], -1.0, 1.0),
    // Complex pair on the unit circle (root product 1).
    ([0.0, -1.0], [1.0, 0.0], -2.0, 2.0),
];

/// Minimize the residual on the boundary of the stability region. The
/// objective is convex, so an infeasible unconstrained minimum puts the
/// constrained one on this boundary; along each edge the profile in `r` is a
/// convex quadratic, so clamping its minimizer is exact.
fn project_second_order(rows: &[RegressionRow], w: f64) -> Result<InteriorFit> {
    let n = rows.len();
    let mut best: Option<(f64, InteriorFit)> = None;
    for (base, dir, lo, hi) in SECOND_ORDER_EDGES {
        let offset = |r: &RegressionRow| base[0] * r.lags[0] + base[1] * r.lags[1];
        let slope = |r: &RegressionRow| dir[0] * r.lags[0] + dir[1] * r.lags[1];
        let y = DVector::from_iterator(n, rows.iter().map(|r| r.next - offset(r)));
        let x = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => slope(&rows[i]),
            1 => rows[i].performance,
            _ => w,
        });
        let sol = least_squares(&x, &y)?;
        let (r, gain, env) = if (lo..=hi).contains(&sol[0]) {
            (sol[0], sol[1], sol[2])
        } else {
            let r = sol[0].clamp(lo, hi);
            let y = DVector::from_iterator(n, rows.iter().map(|row| row.next - offset(row) - r * slope(row)));
            let g = least_squares(&x.columns(1, 2).into_owned(), &y)?;
            (r, g[0], g[1])
        };
        let fit = InteriorFit {
            coeffs: vec![base[0] + r * dir[0], base[1] + r * dir[1]],
            gain,
            env,
            sse: 0.0,
            rows: n,
            constrained: true,
        };
        let sse: f64 = rows.iter().map(|row| (row.next - fit.predict(row, w)).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, fit));
        }
    }
    Ok(best.expect("three edges evaluated").1)
}

/// Per-mode intervention output `Yc = C·T + H·w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFit {
    pub c: [f64; 6],
    pub h: [f64; 6],
}

/// Ordinary least squares of the held intervention on `(T, w)` per mode.
/// Modes without rows get `C = 0`, `H = default_radius / w`; modes whose
/// trust never varies get an intercept-only fit.
pub fn fit_psi(partition: &ModePartition, w: f64, default_radius: f64) -> Result<OutputFit> {
    let mut out = OutputFit {
        c: [0.0; 6],
        h: [default_radius / w; 6],
    };
    for mode in ModeId::ALL {
        let rows = partition.mode_rows(mode);
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        let mean_t = rows.iter().map(RegressionRow::trust).sum::<f64>() / n;
        let spread = rows.iter().map(|r| (r.trust() - mean_t).abs()).fold(0.0, f64::max);
        let i = mode.index();
        if spread <= 1e-12 * mean_t.abs().max(1.0) {
            out.c[i] = 0.0;
            out.h[i] = rows.iter().map(|r| r.intervention).sum::<f64>() / n / w;
            continue;
        }
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.intervention));
        let x = DMatrix::from_fn(rows.len(), 2, |k, j| if j == 0 { rows[k].trust() } else { w });
        let sol = least_squares(&x, &y)?;
        out.c[i] = sol[0];
        out.h[i] = sol[1];
    }
    Ok(out)
}

/// Identified parameters of one group of supervisors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedGroup {
    pub order: usize,
    pub theta: InteriorFit,
    pub phi: InteriorFit,
    pub psi: OutputFit,
    /// Chosen memory length, steps.
    pub n_q_star: usize,
    pub n_q_seconds: f64,
    /// One-step mean squared error over interior-mode rows.
    pub train_error: f64,
    pub member_ids: Vec<String>,
    /// Training rows per mode at the chosen memory length.
    pub mode_rows: [usize; 6],
    /// Training error at every grid point (`None` where the fit failed).
    pub grid_errors: Vec<(f64, Option<f64>)>,
    pub domain: DomainConfig,
}

impl IdentifiedGroup {
    pub fn params(&self) -> TrustModelParams {
        TrustModelParams {
            order: self.order,
            alpha: self.theta.coeffs.clone(),
            beta: self.phi.coeffs.clone(),
            gamma: self.theta.gain,
            delta: self.phi.gain,
            kappa: self.theta.env,
            q: self.phi.env,
            c: self.psi.c,
            h: self.psi.h,
            domain: self.domain,
        }
    }
}

/// Everything fitted at a single memory length.
#[derive(Debug, Clone)]
pub struct GridFit {
    pub n_q: usize,
    pub theta: InteriorFit,
    pub phi: InteriorFit,
    pub psi: OutputFit,
    pub error: f64,
    pub mode_rows: [usize; 6],
}

/// Fit all parameters at memory length `n_q` (steps).
pub fn fit_at_memory(sessions: &[SessionSeries], n_q: usize, order: usize, cfg: &DomainConfig) -> Result<GridFit> {
    let partition = partition_by_mode(sessions, n_q, order, cfg)?;
    let theta = fit_theta(&partition, cfg.w)?;
    let phi = fit_phi(&partition, cfg.w)?;
    let psi = fit_psi(&partition, cfg.w, DEFAULT_RADIUS)?;
    let rows = theta.rows + phi.rows;
    let error = (theta.sse + phi.sse) / rows as f64;
    Ok(GridFit {
        n_q,
        theta,
        phi,
        psi,
        error,
        mode_rows: partition.row_counts(),
    })
}

/// Sweep the memory-length grid (seconds) and keep the fit with the smallest
/// training error; earlier grid points win ties.
pub fn find_model_parameters(
    sessions: &[SessionSeries],
    grid_seconds: &[f64],
    order: usize,
    cfg: &DomainConfig,
) -> Result<IdentifiedGroup> {
    if sessions.is_empty() {
        return Err(Error::EmptyPartition);
    }
    if grid_seconds.is_empty() {
        return Err(Error::Config("memory-length grid is empty".into()));
    }
    let fits: Vec<(f64, Result<GridFit>)> = grid_seconds
        .par_iter()
        .map(|&s| (s, fit_at_memory(sessions, cfg.steps_for_seconds(s), order, cfg)))
        .collect();

    let mut best: Option<(f64, GridFit)> = None;
    let mut grid_errors = Vec::with_capacity(fits.len());
    let mut last_err = None;
    for (seconds, fit) in fits {
        match fit {
            Ok(fit) => {
                grid_errors.push((seconds, Some(fit.error)));
                if best.as_ref().is_none_or(|(_, b)| fit.error < b.error) {
                    best = Some((seconds, fit));
                }
            }
            Err(e) => {
                grid_errors.push((seconds, None));
                last_err = Some(e);
            }
        }
    }
    let (n_q_seconds, fit) = best.ok_or_else(|| {
        Error::IdentificationFailed(format!(
            "no memory length in the grid produced a fit (last error: {})",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        ))
    })?;
    let mut member_ids: Vec<String> = sessions.iter().map(|s| s.member_id.clone()).collect();
    member_ids.sort();
    member_ids.dedup();
    Ok(IdentifiedGroup {
        order,
        theta: fit.theta,
        phi: fit.phi,
        psi: fit.psi,
        n_q_star: fit.n_q,
        n_q_seconds,
        train_error: fit.error,
        member_ids,
        mode_rows: fit.mode_rows,
        grid_errors,
        domain: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trust::{step_trust, TrustState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> DomainConfig {
        DomainConfig::default()
    }

    /// Noise-free rollout of `params` under performance `p`.
    fn rollout(params: &TrustModelParams, p: &[f64], initial: f64) -> Vec<f64> {
        let mut state = TrustState::new(initial, params.order);
        let mut out = Vec::with_capacity(p.len());
        for &pk in p {
            out.push(state.current());
            state = step_trust(&state, pk, params).unwrap();
        }
        out
    }

    fn exciting_performance(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1e-3..1e-3)).collect()
    }

    fn signal(params: &TrustModelParams, p: Vec<f64>) -> TrainingSignal {
        let trust = rollout(params, &p, 0.5);
        let intervention = vec![5.5; p.len()];
        TrainingSignal {
            performance: p,
            trust,
            intervention,
        }
    }

    #[test]
    fn single_region_goes_to_mode_two() {
        let s = TrainingSignal {
            performance: vec![-0.01; 20],
            trust: (0..20).map(|i| 0.3 + 0.01 * i as f64).collect(),
            intervention: vec![5.5; 20],
        };
        let part = partition_signals(std::slice::from_ref(&s), 1, &cfg()).unwrap();
        assert_eq!(part.row_counts(), [0, 19, 0, 0, 0, 0]);
        let two = partition_signals(&[s.clone(), s], 1, &cfg()).unwrap();
        assert_eq!(two.total_rows(), 38);
        // No row pairs the last step of one session with the first of the next.
        assert!(two.rows[1].iter().all(|r| r.next > r.trust()));
    }

    #[test]
    fn crossing_tau2_splits_modes() {
        let c = cfg();
        let trust = vec![0.99, 0.995, 0.998, 0.9995, 0.9999, 1.0];
        let s = TrainingSignal {
            performance: vec![-0.01; 6],
            trust: trust.clone(),
            intervention: vec![5.5; 6],
        };
        let part = partition_signals(&[s], 1, &c).unwrap();
        for (i, label) in part.labels[0].iter().enumerate() {
            assert_eq!(*label, select_mode(-0.01, trust[i], &c).unwrap());
        }
        assert_eq!(part.row_counts(), [2, 3, 0, 0, 0, 0]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            partition_by_mode(&[], 10, 1, &cfg()),
            Err(Error::EmptyPartition)
        ));
    }

    #[test]
    fn excitation_checks() {
        let constant = TrainingSignal {
            performance: vec![-0.01; 10],
            trust: vec![0.5; 10],
            intervention: vec![5.5; 10],
        };
        let part = partition_signals(&[constant], 1, &cfg()).unwrap();
        assert!(!check_excitation(&part, ModeId::LOW_PERFORMANCE, 1.0).unwrap());

        let three = TrainingSignal {
            performance: vec![-0.01, -0.02, -0.05, -0.01],
            trust: vec![0.2, 0.6, 0.3, 0.4],
            intervention: vec![5.5; 4],
        };
        let part = partition_signals(&[three], 1, &cfg()).unwrap();
        // Independent oracle: determinant of the 3×3 regressor matrix itself.
        let m = DMatrix::<f64>::from_row_slice(3, 3, &[-0.01, 0.2, 1.0, -0.02, 0.6, 1.0, -0.05, 0.3, 1.0]);
        assert!(m.determinant().abs() > 1e-6);
        assert!(check_excitation(&part, ModeId::LOW_PERFORMANCE, 1.0).unwrap());

        assert!(matches!(
            check_excitation(&part, ModeId::HIGH_PERFORMANCE, 1.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn recovers_first_order_parameters() {
        let truth = TrustModelParams::first_order(0.97, 0.92, 10.0, 8.0, 0.02, 0.03);
        let s = signal(&truth, exciting_performance(2000, 1));
        let part = partition_signals(&[s], 1, &cfg()).unwrap();
        let theta = fit_theta(&part, 1.0).unwrap();
        let phi = fit_phi(&part, 1.0).unwrap();
        assert!((theta.coeffs[0] - 0.97).abs() < 1e-6);
        assert!((theta.gain - 10.0).abs() < 1e-6);
        assert!((theta.env - 0.02).abs() < 1e-6);
        assert!((phi.coeffs[0] - 0.92).abs() < 1e-6);
        assert!(!theta.constrained);
    }

    #[test]
    fn marginal_process_hits_boundary() {
        // α = 1 with measurement rounding pushes the free estimate above 1.
        let truth = TrustModelParams::first_order(1.0, 1.0, 5.0, 5.0, 0.0, 0.0);
        let p = exciting_performance(400, 3);
        let mut s = signal(&truth, p);
        for (i, t) in s.trust.iter_mut().enumerate() {
            *t += 1e-4 * i as f64 / 400.0;
        }
        let part = partition_signals(&[s], 1, &cfg()).unwrap();
        let theta = fit_theta(&part, 1.0).unwrap();
        assert!(theta.coeffs[0].abs() <= 1.0);
        if theta.constrained {
            assert_eq!(theta.coeffs[0], 1.0);
        }
        let exact = signal(&truth, exciting_performance(400, 3));
        let part = partition_signals(&[exact], 1, &cfg()).unwrap();
        let theta = fit_theta(&part, 1.0).unwrap();
        assert!((theta.coeffs[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn second_order_fit_recovers_admissible_model() {
        let mut truth = TrustModelParams::first_order(0.9, 0.9, 10.0, 8.0, 0.05, 0.05);
        truth.order = 2;
        truth.alpha = vec![0.9, 0.05];
        truth.beta = vec![0.85, 0.1];
        let s = signal(&truth, exciting_performance(3000, 4));
        let part = partition_signals(&[s], 2, &cfg()).unwrap();
        let theta = fit_theta(&part, 1.0).unwrap();
        assert!((theta.coeffs[0] - 0.9).abs() < 1e-6);
        assert!((theta.coeffs[1] - 0.05).abs() < 1e-6);
        let roots = crate::trust::characteristic_real_roots(&theta.coeffs).unwrap();
        assert!((roots[0] - 0.9525).abs() < 1e-3);
        assert!((roots[1] + 0.0525).abs() < 1e-3);
    }

    #[test]
    fn boundary_projection_beats_any_feasible_grid_point() {
        // Explosive data: the free second-order fit is infeasible.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<RegressionRow> = (0..200)
            .map(|_| {
                let t0: f64 = rng.random_range(0.1..0.9);
                let t1: f64 = rng.random_range(0.1..0.9);
                let p: f64 = rng.random_range(-0.01..0.01);
                RegressionRow {
                    performance: p,
                    lags: vec![t0, t1],
                    next: 1.3 * t0 + 0.2 * t1 + 2.0 * p + rng.random_range(-0.01..0.01),
                    intervention: 5.5,
                    censored: false,
                }
            })
            .collect();
        let fit = project_second_order(&rows, 1.0).unwrap();
        assert!(spectral_radius(&fit.coeffs) <= 1.0 + 1e-9);
        let sse = |a1: f64, a2: f64, g: f64, k: f64| -> f64 {
            rows.iter()
                .map(|r| (r.next - a1 * r.lags[0] - a2 * r.lags[1] - g * r.performance - k).powi(2))
                .sum()
        };
        let best = sse(fit.coeffs[0], fit.coeffs[1], fit.gain, fit.env);
        // Brute-force oracle over the stability triangle with the gains refit.
        let mut oracle = f64::INFINITY;
        for i in 0..=80 {
            for j in 0..=40 {
                let a2 = -1.0 + 2.0 * j as f64 / 40.0;
                let a1 = -2.0 + 4.0 * i as f64 / 80.0;
                if spectral_radius(&[a1, a2]) > 1.0 + 1e-12 {
                    continue;
                }
                let y = DVector::from_iterator(
                    rows.len(),
                    rows.iter().map(|r| r.next - a1 * r.lags[0] - a2 * r.lags[1]),
                );
                let x = DMatrix::from_fn(rows.len(), 2, |k, c| if c == 0 { rows[k].performance } else { 1.0 });
                let g = least_squares(&x, &y).unwrap();
                oracle = oracle.min(sse(a1, a2, g[0], g[1]));
            }
        }
        assert!(best <= oracle + 1e-9, "projection {best} vs grid {oracle}");
    }

    #[test]
    fn output_fits() {
        let trust: Vec<f64> = (0..50).map(|i| 0.2 + 0.01 * i as f64).collect();
        let s = TrainingSignal {
            performance: vec![-0.01; 50],
            intervention: trust.iter().map(|t| 4.0 * t + 2.0).collect(),
            trust: trust.clone(),
        };
        let part = partition_signals(&[s], 1, &cfg()).unwrap();
        let psi = fit_psi(&part, 1.0, 5.5).unwrap();
        assert!((psi.c[1] - 4.0).abs() < 1e-9);
        assert!((psi.h[1] - 2.0).abs() < 1e-9);
        assert_eq!((psi.c[3], psi.h[3]), (0.0, 5.5));

        let s = TrainingSignal {
            performance: vec![-0.01; 50],
            intervention: vec![5.5; 50],
            trust,
        };
        let part = partition_signals(&[s], 1, &cfg()).unwrap();
        let psi = fit_psi(&part, 1.0, 5.5).unwrap();
        assert!(psi.c[1].abs() < 1e-9);
        assert!((psi.h[1] - 5.5).abs() < 1e-9);
    }

    fn status_walk(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = 0.0;
        (0..n)
            .map(|_| {
                if rng.random_bool(0.03) {
                    y += rng.random_range(0.1..1.0);
                }
                y
            })
            .collect()
    }

    fn series_from(params: &TrustModelParams, status: Vec<f64>, n_q: usize) -> SessionSeries {
        let c = cfg();
        let p = performance_series(&status, n_q, &c).unwrap();
        let trust = rollout(params, &p, 0.5);
        let n = status.len();
        SessionSeries {
            member_id: "m".into(),
            session_index: 1,
            dt: c.dt,
            initial_trust: 0.5,
            status,
            trust,
            intervention: vec![5.5; n],
            status_event: vec![false; n],
        }
    }

    #[test]
    fn sweep_selects_generating_memory() {
        let truth = TrustModelParams::first_order(0.95, 0.9, 0.3, 0.2, 0.025, 0.05);
        let series = series_from(&truth, status_walk(1500, 5), 60);
        let group = find_model_parameters(&[series], &NQ_GRID_SECONDS, 1, &cfg()).unwrap();
        assert_eq!(group.n_q_seconds, 30.0);
        assert_eq!(group.n_q_star, 60);
        assert_eq!(group.grid_errors.len(), 10);
        assert!(group.train_error < 1e-20);
    }

    #[test]
    fn single_point_grid() {
        let truth = TrustModelParams::first_order(0.95, 0.9, 0.3, 0.2, 0.025, 0.05);
        let series = series_from(&truth, status_walk(800, 6), 20);
        let group = find_model_parameters(&[series], &[45.0], 1, &cfg()).unwrap();
        assert_eq!(group.n_q_seconds, 45.0);
        assert_eq!(group.grid_errors.len(), 1);
    }

    #[test]
    fn flat_data_fails_identification() {
        let c = cfg();
        let n = 100;
        let series = SessionSeries {
            member_id: "flat".into(),
            session_index: 1,
            dt: c.dt,
            initial_trust: 0.5,
            status: vec![0.0; n],
            trust: vec![0.5; n],
            intervention: vec![5.5; n],
            status_event: vec![false; n],
        };
        assert!(matches!(
            find_model_parameters(&[series], &[5.0, 10.0], 1, &c),
            Err(Error::IdentificationFailed(_))
        ));
    }
}
