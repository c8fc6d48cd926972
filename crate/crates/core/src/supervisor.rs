//! Synthetic supervisors that stand in for human participants.
//!
//! A policy carries a ground-truth trust model. Each step it reads the held
//! status, computes performance, reports ±5 % trust changes whenever its
//! latent trust has drifted a full increment from what it last reported, and
//! requests a formation radius from the model's intervention output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{SamplerConfig, SamplerState};
use crate::sim::{init_world, session_score, ScoreWeights, TickOutcome, WorldConfig};
use crate::store::{Record, SessionLog};
use crate::trust::{
    initial_trust_from_survey, intervention_output, performance_metric, select_mode, step_trust, DomainConfig, ModeId,
    PerformanceWindow, TrustModelParams, TrustState, SURVEY_ITEMS, TRUST_REPORT_STEP,
};

/// Longest gap between trust reports before the study pauses for one.
pub const TRUST_PROMPT_SECONDS: f64 = 45.0;

/// Minimum gap between side-task answers.
pub const SIDE_TASK_COOLDOWN: f64 = 10.0;

/// What the policy did at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStep {
    pub performance: f64,
    /// Mode of the latent model at this step.
    pub mode: ModeId,
    pub latent_trust: f64,
    pub report: Option<i8>,
    /// Level of the self-reported trust signal after this step's report.
    pub reported_trust: f64,
    pub requested_radius: f64,
}

#[derive(Debug, Clone)]
pub struct SupervisorPolicy {
    params: TrustModelParams,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    latent: TrustState,
    reported: f64,
    last_report_t: f64,
    window: PerformanceWindow,
}

/// Closed-loop policy driven by `params`, with Gaussian trust perturbation of
/// standard deviation `noise_sd`.
pub fn synthetic_supervisor(
    params: &TrustModelParams,
    noise_sd: f64,
    n_q: usize,
    initial_trust: f64,
    rng_seed: u64,
) -> Result<SupervisorPolicy> {
    params.validate()?;
    params.domain.check_trust(initial_trust)?;
    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).map_err(|e| Error::Config(e.to_string()))?)
    } else if noise_sd == 0.0 {
        None
    } else {
        return Err(Error::Config(format!("noise_sd must be >= 0, got {noise_sd}")));
    };
    Ok(SupervisorPolicy {
        params: params.clone(),
        noise,
        rng: ChaCha8Rng::seed_from_u64(rng_seed),
        latent: TrustState::new(initial_trust, params.order),
        reported: initial_trust,
        last_report_t: 0.0,
        window: PerformanceWindow::new(n_q)?,
    })
}

impl SupervisorPolicy {
    pub fn params(&self) -> &TrustModelParams {
        &self.params
    }

    pub fn latent_trust(&self) -> f64 {
        self.latent.current()
    }

    /// Act at step `k` (time `t`) given the held status.
    pub fn step(&mut self, k: usize, t: f64, held_status: f64) -> Result<PolicyStep> {
        let d = self.params.domain;
        self.window.push(held_status)?;
        let p = performance_metric(&self.window, k, &d)?;
        let latent = self.latent.current();

        let drift = latent - self.reported;
        let increment = TRUST_REPORT_STEP - 1e-12;
        let report = if drift >= increment {
            Some(1)
        } else if drift <= -increment {
            Some(-1)
        } else if t - self.last_report_t >= TRUST_PROMPT_SECONDS {
            Some(0)
        } else {
            None
        };
        if let Some(delta) = report {
            self.reported = d.clamp_trust(self.reported + f64::from(delta) * TRUST_REPORT_STEP);
            self.last_report_t = t;
        }

        let mode = select_mode(p, latent, &d)?;
        let requested_radius = intervention_output(latent, mode, &self.params);

        let mut next = step_trust(&self.latent, p, &self.params)?;
        if let Some(noise) = &self.noise {
            next.history[0] = d.clamp_trust(next.history[0] + noise.sample(&mut self.rng));
        }
        self.latent = next;

        Ok(PolicyStep {
            performance: p,
            mode,
            latent_trust: latent,
            report,
            reported_trust: self.reported,
            requested_radius,
        })
    }
}

/// Settings for one synthetic session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub member_id: String,
    pub session_index: u8,
    /// Session length in seconds; `None` runs until the fuel is exhausted.
    pub duration: Option<f64>,
    pub world: WorldConfig,
    pub status_sampler: SamplerConfig,
    pub intervention_sampler: SamplerConfig,
    pub domain: DomainConfig,
    /// Probability that a side-task answer is correct.
    pub side_task_accuracy: f64,
    pub side_task_seed: u64,
}

/// Signals observed live during a session, step grid `k = 1..=K`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LiveTrace {
    pub status: Vec<f64>,
    pub intervention: Vec<f64>,
    /// Self-reported trust level.
    pub trust: Vec<f64>,
    pub latent_trust: Vec<f64>,
    pub performance: Vec<f64>,
    /// Modes of `(performance, reported trust)`.
    pub modes: Vec<ModeId>,
}

/// Survey answers whose mean is `trust` (all 14 items answered).
pub fn survey_for_trust(trust: f64) -> Vec<Option<f64>> {
    vec![Some((trust * 100.0).clamp(0.0, 100.0)); SURVEY_ITEMS]
}

/// Run one session of the foraging task with a synthetic supervisor.
pub fn run_synthetic_session(
    plan: &SessionPlan,
    params: &TrustModelParams,
    noise_sd: f64,
    n_q: usize,
    initial_trust: f64,
    policy_seed: u64,
) -> Result<(SessionLog, LiveTrace)> {
    let d = plan.domain;
    d.validate()?;
    plan.status_sampler.validate()?;
    plan.intervention_sampler.validate()?;
    let mut world = init_world(&plan.world)?;
    let mut log = SessionLog::new(plan.member_id.clone(), plan.session_index, d.dt);
    let survey = survey_for_trust(initial_trust);
    let initial = initial_trust_from_survey(&survey)?;
    log.append(Record::Survey { scores: survey })?;

    let mut policy = synthetic_supervisor(params, noise_sd, n_q, initial, policy_seed)?;
    let mut side_rng = ChaCha8Rng::seed_from_u64(plan.side_task_seed);

    let mut status = SamplerState::init(world.status_percent(), 0.0)?;
    log.append(Record::StatusSample {
        t: 0.0,
        value: status.held_signal(),
    })?;
    let mut radius = SamplerState::init(world.state.radius, 0.0)?;
    log.append(Record::Intervention {
        t: 0.0,
        radius: radius.held_signal(),
        requested: None,
    })?;

    let budget = plan.duration.unwrap_or(plan.world.fuel_seconds);
    let steps = (budget.min(plan.world.fuel_seconds) / d.dt + 1e-9).floor() as usize;
    let mut trace = LiveTrace::default();
    let mut side_cooldown = SIDE_TASK_COOLDOWN;

    for k in 1..=steps {
        let t = k as f64 * d.dt;
        let outcome = world.tick(d.dt)?;

        if status.poll(world.status_percent(), t, &plan.status_sampler)? {
            log.append(Record::StatusSample {
                t,
                value: status.held_signal(),
            })?;
        }

        let act = policy.step(k, t, status.held_signal())?;
        if let Some(delta) = act.report {
            log.append(Record::TrustReport { t, delta })?;
        }

        if t >= side_cooldown {
            let a: i64 = side_rng.random_range(10..100);
            let b: i64 = side_rng.random_range(10..=a);
            let correct = side_rng.random_bool(plan.side_task_accuracy.clamp(0.0, 1.0));
            let answer = if correct { a - b } else { a - b + 1 };
            if correct {
                world.add_side_points(1);
            }
            log.append(Record::SideTask {
                t,
                question: format!("{a}-{b}"),
                answer,
                correct,
            })?;
            side_cooldown = t + SIDE_TASK_COOLDOWN;
        }

        if radius.poll(act.requested_radius, t, &plan.intervention_sampler)? {
            let applied = world.set_radius(radius.held_signal())?;
            log.append(Record::Intervention {
                t,
                radius: applied,
                requested: None,
            })?;
        }

        trace.status.push(status.held_signal());
        trace.intervention.push(radius.held_signal());
        trace.trust.push(act.reported_trust);
        trace.latent_trust.push(act.latent_trust);
        trace.performance.push(act.performance);
        trace.modes.push(select_mode(act.performance, act.reported_trust, &d)?);

        if outcome == TickOutcome::FuelExhausted {
            break;
        }
    }
    let end_t = trace.status.len() as f64 * d.dt;
    log.append(Record::SessionEnd {
        t: end_t,
        score: session_score(&world.state, ScoreWeights::default()),
        aborted: false,
    })?;
    Ok((log, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trust::performance_series;

    fn truth() -> TrustModelParams {
        let mut p = TrustModelParams::first_order(0.97, 0.95, 0.4, 0.3, 0.012, 0.02);
        p.c = [2.0; 6];
        p.h = [2.0; 6];
        p
    }

    fn plan(seed: u64) -> SessionPlan {
        SessionPlan {
            member_id: "syn".into(),
            session_index: 1,
            duration: None,
            world: WorldConfig {
                rng_seed: seed,
                ..Default::default()
            },
            status_sampler: SamplerConfig::default(),
            intervention_sampler: SamplerConfig::default(),
            domain: DomainConfig::default(),
            side_task_accuracy: 0.9,
            side_task_seed: seed,
        }
    }

    #[test]
    fn noiseless_latent_matches_free_run() {
        let params = truth();
        let (_, trace) = run_synthetic_session(&plan(3), &params, 0.0, 60, 0.5, 1).unwrap();
        let mut state = TrustState::new(0.5, 1);
        for (i, &p) in trace.performance.iter().enumerate() {
            assert_eq!(state.current(), trace.latent_trust[i]);
            state = step_trust(&state, p, &params).unwrap();
        }
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let params = truth();
        let a = run_synthetic_session(&plan(5), &params, 0.01, 60, 0.5, 9).unwrap();
        let b = run_synthetic_session(&plan(5), &params, 0.01, 60, 0.5, 9).unwrap();
        let c = run_synthetic_session(&plan(5), &params, 0.01, 60, 0.5, 10).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_ne!(a.1.latent_trust, c.1.latent_trust);
    }

    #[test]
    fn positive_gains_never_report_loss_under_positive_performance() {
        let params = crate::fixtures::population();
        let mut policy = synthetic_supervisor(&params, 0.0, 10, 0.3, 0).unwrap();
        // Status rising one point per step gives positive performance once
        // the memory window is past the padded start.
        for k in 1..=60 {
            let step = policy.step(k, k as f64 * 0.5, k as f64).unwrap();
            if k > 10 {
                assert!(step.performance > 0.0);
                assert_ne!(step.report, Some(-1));
            }
        }
    }

    #[test]
    fn session_length_follows_fuel() {
        let (log, trace) = run_synthetic_session(&plan(1), &truth(), 0.0, 60, 0.5, 1).unwrap();
        assert_eq!(trace.status.len(), 1200);
        assert_eq!(log.steps(), 1200);
        let mut practice = plan(1);
        practice.duration = Some(60.0);
        let (_, trace) = run_synthetic_session(&practice, &truth(), 0.0, 60, 0.5, 1).unwrap();
        assert_eq!(trace.status.len(), 120);
    }

    #[test]
    fn replay_matches_live_trace() {
        let d = DomainConfig::default();
        let (log, trace) = run_synthetic_session(&plan(2), &truth(), 0.005, 60, 0.5, 4).unwrap();
        let series = log.to_series(&d).unwrap();
        assert_eq!(series.status, trace.status);
        assert_eq!(series.intervention, trace.intervention);
        assert_eq!(series.trust, trace.trust);
        let p = performance_series(&series.status, 60, &d).unwrap();
        assert_eq!(p, trace.performance);
    }
}
