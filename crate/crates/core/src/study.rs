//! Study protocol for one participant, independent of any transport.
//!
//! The participant moves through
//! `survey → practice → rest → survey → full1 → rest → survey → full2 → done`.
//! Running sessions advance only through [`StudySession::tick`]; inbound
//! messages are applied between ticks at the current session time. While
//! paused for a trust report the session clock does not advance.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{SamplerConfig, SamplerState};
use crate::sim::{init_world, session_score, ForageSim, ScoreWeights, SurvivorStatus, TickOutcome, WorldConfig};
use crate::store::{Record, SessionLog, PRACTICE_SESSION, TEST_SESSION, TRAIN_SESSION};
use crate::supervisor::{SIDE_TASK_COOLDOWN, TRUST_PROMPT_SECONDS};
use crate::trust::{DomainConfig, ACTUATOR_RANGE};

pub const PRACTICE_SECONDS: f64 = 60.0;
pub const REST_SECONDS: f64 = 30.0;
/// Default rate of outbound state updates, Hz.
pub const DISPLAY_RATE_HZ: f64 = 10.0;
/// Centroid positions kept for the trail display.
pub const TRAIL_LENGTH: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Survey,
    Practice,
    Full1,
    Rest,
    Full2,
    Done,
}

impl Phase {
    pub fn is_running(self) -> bool {
        matches!(self, Phase::Practice | Phase::Full1 | Phase::Full2)
    }

    fn session_index(self) -> Option<u8> {
        match self {
            Phase::Practice => Some(PRACTICE_SESSION),
            Phase::Full1 => Some(TRAIN_SESSION),
            Phase::Full2 => Some(TEST_SESSION),
            _ => None,
        }
    }

    fn for_session(index: u8) -> Phase {
        match index {
            PRACTICE_SESSION => Phase::Practice,
            TRAIN_SESSION => Phase::Full1,
            _ => Phase::Full2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    Start,
    AckRest,
}

/// Messages from the participant's browser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    SetRadius { value: f64 },
    TrustReport { delta: i8 },
    TaskAnswer { value: i64 },
    SurveySubmit { scores: Vec<Option<f64>> },
    Control { action: ControlAction },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivorView {
    pub x: f64,
    pub y: f64,
    pub status: SurvivorStatus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PromptFlags {
    /// A trust report is required before the session resumes.
    pub trust_report_due: bool,
    pub survey_required: bool,
    /// The participant may send `control{start}`.
    pub can_start: bool,
    /// Seconds of rest left; zero once `control{ack_rest}` is accepted.
    pub rest_remaining: Option<f64>,
    /// Pending side-task question.
    pub question: Option<String>,
}

/// Messages to the participant's browser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    StateUpdate {
        t: f64,
        phase: Phase,
        session_index: Option<u8>,
        agents: Vec<[f64; 2]>,
        centroid_trail: Vec<[f64; 2]>,
        radius: f64,
        /// Suspected and confirmed survivors only.
        survivors: Vec<SurvivorView>,
        fuel: f64,
        score: f64,
        paused: bool,
        prompt_flags: PromptFlags,
    },
    SideTask {
        question: String,
    },
    AnswerResult {
        accepted: bool,
        correct: bool,
        reason: Option<String>,
    },
    SessionComplete {
        session_index: u8,
        score: f64,
        aborted: bool,
    },
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub member_id: String,
    pub domain: DomainConfig,
    pub world: WorldConfig,
    pub status_sampler: SamplerConfig,
    pub intervention_sampler: SamplerConfig,
    pub practice_seconds: f64,
    pub rest_seconds: f64,
    pub seed: u64,
}

impl StudyConfig {
    pub fn new(member_id: impl Into<String>) -> Self {
        Self {
            member_id: member_id.into(),
            domain: DomainConfig::default(),
            world: WorldConfig::default(),
            status_sampler: SamplerConfig::default(),
            intervention_sampler: SamplerConfig::default(),
            practice_seconds: PRACTICE_SECONDS,
            rest_seconds: REST_SECONDS,
            seed: 0,
        }
    }
}

/// Held signals observed live on the step grid `k = 1..=K`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeldTrace {
    pub status: Vec<f64>,
    pub intervention: Vec<f64>,
}

/// State of the session currently being run.
#[derive(Debug, Clone)]
struct Running {
    index: u8,
    k: usize,
    world: ForageSim,
    status: SamplerState,
    radius: SamplerState,
    /// Latest clamped radius request, re-polled every tick until it is sent.
    requested: Option<(f64, Option<f64>)>,
    last_report_t: f64,
    paused: bool,
    side_cooldown_until: f64,
    question: Option<(i64, i64)>,
    log: SessionLog,
    trail: VecDeque<[f64; 2]>,
    trace: HeldTrace,
    duration: Option<f64>,
}

impl Running {
    fn t(&self, dt: f64) -> f64 {
        self.k as f64 * dt
    }
}

#[derive(Debug, Clone)]
pub struct StudySession {
    cfg: StudyConfig,
    phase: Phase,
    /// Session that the next survey and start belong to.
    next_session: u8,
    survey: Option<Vec<Option<f64>>>,
    rest_elapsed: f64,
    running: Option<Running>,
    completed: Vec<(SessionLog, HeldTrace)>,
    rng: ChaCha8Rng,
}

impl StudySession {
    pub fn new(cfg: StudyConfig) -> Result<Self> {
        cfg.domain.validate()?;
        cfg.world.validate()?;
        cfg.status_sampler.validate()?;
        cfg.intervention_sampler.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            cfg,
            phase: Phase::Survey,
            next_session: PRACTICE_SESSION,
            survey: None,
            rest_elapsed: 0.0,
            running: None,
            completed: Vec::new(),
            rng,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn paused(&self) -> bool {
        self.running.as_ref().is_some_and(|r| r.paused)
    }

    /// Session time of the running session.
    pub fn session_time(&self) -> Option<f64> {
        self.running.as_ref().map(|r| r.t(self.cfg.domain.dt))
    }

    pub fn config(&self) -> &StudyConfig {
        &self.cfg
    }

    /// Finished session logs with the held signals seen live, oldest first.
    pub fn take_completed(&mut self) -> Vec<(SessionLog, HeldTrace)> {
        std::mem::take(&mut self.completed)
    }

    /// The log being written, if a session is running.
    pub fn current_log(&self) -> Option<&SessionLog> {
        self.running.as_ref().map(|r| &r.log)
    }

    /// Apply one inbound message. Rejections are reported to the client
    /// rather than returned as errors.
    pub fn handle(&mut self, msg: ClientMessage) -> Result<Vec<ServerMessage>> {
        let out = match msg {
            ClientMessage::SurveySubmit { scores } => self.on_survey(scores),
            ClientMessage::Control {
                action: ControlAction::Start,
            } => self.on_start()?,
            ClientMessage::Control {
                action: ControlAction::AckRest,
            } => self.on_ack_rest(),
            ClientMessage::TrustReport { delta } => self.on_trust_report(delta)?,
            ClientMessage::SetRadius { value } => self.on_set_radius(value)?,
            ClientMessage::TaskAnswer { value } => self.on_answer(value)?,
        };
        Ok(out)
    }

    fn reject(message: impl Into<String>) -> Vec<ServerMessage> {
        vec![ServerMessage::Error {
            message: message.into(),
        }]
    }

    fn on_survey(&mut self, scores: Vec<Option<f64>>) -> Vec<ServerMessage> {
        if self.phase != Phase::Survey {
            return Self::reject("survey is only accepted before a session");
        }
        let mut probe = SessionLog::new("", 0, self.cfg.domain.dt);
        if let Err(e) = probe.append(Record::Survey { scores: scores.clone() }) {
            return Self::reject(e.to_string());
        }
        self.survey = Some(scores);
        Vec::new()
    }

    fn on_start(&mut self) -> Result<Vec<ServerMessage>> {
        if self.phase != Phase::Survey {
            return Ok(Self::reject("start is only accepted after the survey"));
        }
        let Some(scores) = self.survey.take() else {
            return Ok(Self::reject("submit the survey before starting"));
        };
        let index = self.next_session;
        let dt = self.cfg.domain.dt;
        let world = init_world(&WorldConfig {
            rng_seed: self.cfg.world.rng_seed.wrapping_add(u64::from(index)),
            ..self.cfg.world.clone()
        })?;
        let mut log = SessionLog::new(self.cfg.member_id.clone(), index, dt);
        log.append(Record::Survey { scores })?;
        let status = SamplerState::init(world.status_percent(), 0.0)?;
        log.append(Record::StatusSample {
            t: 0.0,
            value: status.held_signal(),
        })?;
        let radius = SamplerState::init(world.state.radius, 0.0)?;
        log.append(Record::Intervention {
            t: 0.0,
            radius: radius.held_signal(),
            requested: None,
        })?;
        let mut trail = VecDeque::with_capacity(TRAIL_LENGTH);
        trail.push_back([world.state.centroid.0, world.state.centroid.1]);
        self.running = Some(Running {
            index,
            k: 0,
            world,
            status,
            radius,
            requested: None,
            last_report_t: 0.0,
            paused: false,
            side_cooldown_until: 0.0,
            question: None,
            log,
            trail,
            trace: HeldTrace::default(),
            duration: (index == PRACTICE_SESSION).then_some(self.cfg.practice_seconds),
        });
        self.phase = Phase::for_session(index);
        Ok(Vec::new())
    }

    fn on_ack_rest(&mut self) -> Vec<ServerMessage> {
        if self.phase != Phase::Rest {
            return Self::reject("not resting");
        }
        if self.rest_elapsed + 1e-9 < self.cfg.rest_seconds {
            return Self::reject(format!(
                "rest continues for {:.1} s",
                self.cfg.rest_seconds - self.rest_elapsed
            ));
        }
        self.phase = Phase::Survey;
        Vec::new()
    }

    fn on_trust_report(&mut self, delta: i8) -> Result<Vec<ServerMessage>> {
        let dt = self.cfg.domain.dt;
        let Some(run) = self.running.as_mut() else {
            return Ok(Self::reject("trust reports are only accepted during a session"));
        };
        if !(-1..=1).contains(&delta) {
            return Ok(Self::reject(format!(
                "trust report delta must be -1, 0 or 1, got {delta}"
            )));
        }
        let t = run.t(dt);
        run.log.append(Record::TrustReport { t, delta })?;
        run.last_report_t = t;
        run.paused = false;
        Ok(Vec::new())
    }

    fn on_set_radius(&mut self, value: f64) -> Result<Vec<ServerMessage>> {
        let Some(run) = self.running.as_mut() else {
            return Ok(Self::reject("radius changes are only accepted during a session"));
        };
        if !value.is_finite() {
            return Ok(Self::reject("radius must be a finite number"));
        }
        let (lo, hi) = ACTUATOR_RANGE;
        let clamped = value.clamp(lo, hi);
        run.requested = Some((clamped, (clamped != value).then_some(value)));
        poll_intervention(run, &self.cfg)?;
        Ok(Vec::new())
    }

    fn on_answer(&mut self, value: i64) -> Result<Vec<ServerMessage>> {
        let dt = self.cfg.domain.dt;
        let Some(run) = self.running.as_mut() else {
            return Ok(Self::reject("no side task outside a session"));
        };
        let t = run.t(dt);
        let Some((a, b)) = run.question.take() else {
            return Ok(vec![ServerMessage::AnswerResult {
                accepted: false,
                correct: false,
                reason: Some(format!(
                    "next question in {:.1} s",
                    (run.side_cooldown_until - t).max(0.0)
                )),
            }]);
        };
        let correct = value == a - b;
        if correct {
            run.world.add_side_points(1);
        }
        run.log.append(Record::SideTask {
            t,
            question: format!("{a}-{b}"),
            answer: value,
            correct,
        })?;
        run.side_cooldown_until = t + SIDE_TASK_COOLDOWN;
        Ok(vec![ServerMessage::AnswerResult {
            accepted: true,
            correct,
            reason: None,
        }])
    }

    /// Advance by one step of `dt` (session time) or `dt` of rest.
    pub fn tick(&mut self) -> Result<Vec<ServerMessage>> {
        let dt = self.cfg.domain.dt;
        if self.phase == Phase::Rest {
            self.rest_elapsed = (self.rest_elapsed + dt).min(self.cfg.rest_seconds);
            return Ok(Vec::new());
        }
        let Some(run) = self.running.as_mut() else {
            return Ok(Vec::new());
        };
        if run.paused {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        // Held values for step k are final only once messages handled at
        // its time have been applied, so they are recorded one tick later.
        record_held(run);
        run.k += 1;
        let t = run.t(dt);
        let outcome = run.world.tick(dt)?;
        if run
            .status
            .poll(run.world.status_percent(), t, &self.cfg.status_sampler)?
        {
            run.log.append(Record::StatusSample {
                t,
                value: run.status.held_signal(),
            })?;
        }
        poll_intervention(run, &self.cfg)?;
        if run.trail.len() == TRAIL_LENGTH {
            run.trail.pop_front();
        }
        run.trail
            .push_back([run.world.state.centroid.0, run.world.state.centroid.1]);
        if run.question.is_none() && t >= run.side_cooldown_until {
            let a = self.rng.random_range(10..100);
            let b = self.rng.random_range(10..=a);
            run.question = Some((a, b));
            out.push(ServerMessage::SideTask {
                question: format!("{a} - {b}"),
            });
        }
        let over = outcome == TickOutcome::FuelExhausted || run.duration.is_some_and(|d| t >= d - 1e-9);
        if t - run.last_report_t >= TRUST_PROMPT_SECONDS - 1e-9 {
            run.paused = true;
        }
        if over {
            out.extend(self.finish(false)?);
        }
        Ok(out)
    }

    /// Close the running session (if any) as aborted, e.g. on disconnect.
    pub fn abort(&mut self) -> Result<Vec<ServerMessage>> {
        if self.running.is_some() {
            self.finish(true)
        } else {
            Ok(Vec::new())
        }
    }

    fn finish(&mut self, aborted: bool) -> Result<Vec<ServerMessage>> {
        let Some(mut run) = self.running.take() else {
            return Ok(Vec::new());
        };
        record_held(&mut run);
        let t = run.t(self.cfg.domain.dt);
        let score = session_score(&run.world.state, ScoreWeights::default());
        run.log.append(Record::SessionEnd { t, score, aborted })?;
        let index = run.index;
        self.completed.push((run.log, run.trace));
        if aborted || index == TEST_SESSION {
            self.phase = Phase::Done;
        } else {
            self.next_session = index + 1;
            self.phase = Phase::Rest;
            self.rest_elapsed = 0.0;
        }
        Ok(vec![ServerMessage::SessionComplete {
            session_index: index,
            score,
            aborted,
        }])
    }

    /// Snapshot for the display; hidden survivors are omitted.
    pub fn state_update(&self) -> ServerMessage {
        let dt = self.cfg.domain.dt;
        let mut flags = PromptFlags {
            survey_required: self.phase == Phase::Survey && self.survey.is_none(),
            can_start: self.phase == Phase::Survey && self.survey.is_some(),
            rest_remaining: (self.phase == Phase::Rest).then(|| (self.cfg.rest_seconds - self.rest_elapsed).max(0.0)),
            ..Default::default()
        };
        let Some(run) = self.running.as_ref() else {
            return ServerMessage::StateUpdate {
                t: 0.0,
                phase: self.phase,
                session_index: None,
                agents: Vec::new(),
                centroid_trail: Vec::new(),
                radius: self.cfg.world.default_radius,
                survivors: Vec::new(),
                fuel: self.cfg.world.fuel_seconds,
                score: 0.0,
                paused: false,
                prompt_flags: flags,
            };
        };
        let s = &run.world.state;
        flags.trust_report_due = run.paused;
        flags.question = run.question.map(|(a, b)| format!("{a} - {b}"));
        ServerMessage::StateUpdate {
            t: run.t(dt),
            phase: self.phase,
            session_index: self.phase.session_index(),
            agents: s.agent_positions.iter().map(|&(x, y)| [x, y]).collect(),
            centroid_trail: run.trail.iter().copied().collect(),
            radius: s.radius,
            survivors: s
                .survivors
                .iter()
                .filter(|v| v.status != SurvivorStatus::Hidden)
                .map(|v| SurvivorView {
                    x: v.position.0,
                    y: v.position.1,
                    status: v.status,
                })
                .collect(),
            fuel: s.fuel,
            score: session_score(s, ScoreWeights::default()),
            paused: run.paused,
            prompt_flags: flags,
        }
    }
}

fn record_held(run: &mut Running) {
    if run.trace.status.len() < run.k {
        run.trace.status.push(run.status.held_signal());
        run.trace.intervention.push(run.radius.held_signal());
    }
}

fn poll_intervention(run: &mut Running, cfg: &StudyConfig) -> Result<()> {
    let Some((value, raw)) = run.requested else {
        return Ok(());
    };
    let t = run.t(cfg.domain.dt);
    if run.radius.poll(value, t, &cfg.intervention_sampler)? {
        let applied = run.world.set_radius(run.radius.held_signal())?;
        run.log.append(Record::Intervention {
            t,
            radius: applied,
            requested: raw,
        })?;
    }
    if run.radius.held_signal() == value {
        run.requested = None;
    }
    Ok(())
}

impl std::str::FromStr for ClientMessage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn survey() -> ClientMessage {
        ClientMessage::SurveySubmit {
            scores: vec![Some(50.0); 14],
        }
    }

    fn started() -> StudySession {
        let mut s = StudySession::new(StudyConfig::new("p1")).unwrap();
        s.handle(survey()).unwrap();
        s.handle(ClientMessage::Control {
            action: ControlAction::Start,
        })
        .unwrap();
        s
    }

    fn ticks(s: &mut StudySession, n: usize) -> Vec<ServerMessage> {
        (0..n).flat_map(|_| s.tick().unwrap()).collect()
    }

    #[test]
    fn start_requires_survey() {
        let mut s = StudySession::new(StudyConfig::new("p1")).unwrap();
        let out = s
            .handle(ClientMessage::Control {
                action: ControlAction::Start,
            })
            .unwrap();
        assert!(matches!(out[0], ServerMessage::Error { .. }));
        let bad = s
            .handle(ClientMessage::SurveySubmit {
                scores: vec![Some(101.0); 14],
            })
            .unwrap();
        assert!(matches!(bad[0], ServerMessage::Error { .. }));
        let all_na = s
            .handle(ClientMessage::SurveySubmit { scores: vec![None; 14] })
            .unwrap();
        assert!(all_na.is_empty());
    }

    #[test]
    fn pauses_after_45_seconds_without_report() {
        let mut s = started();
        assert_eq!(s.phase(), Phase::Practice);
        ticks(&mut s, 89);
        assert!(!s.paused());
        ticks(&mut s, 1);
        assert!(s.paused());
        let ServerMessage::StateUpdate {
            paused, prompt_flags, ..
        } = s.state_update()
        else {
            panic!()
        };
        assert!(paused && prompt_flags.trust_report_due);
        // The clock stands still while paused.
        ticks(&mut s, 10);
        assert_eq!(s.session_time(), Some(45.0));
        s.handle(ClientMessage::TrustReport { delta: 0 }).unwrap();
        assert!(!s.paused());
        ticks(&mut s, 1);
        assert_eq!(s.session_time(), Some(45.5));
    }

    #[test]
    fn practice_then_rest_then_full_sessions() {
        let mut s = started();
        let mut done = Vec::new();
        for _ in 0..120 {
            s.handle(ClientMessage::TrustReport { delta: 0 }).unwrap();
            done.extend(s.tick().unwrap());
        }
        assert!(done
            .iter()
            .any(|m| matches!(m, ServerMessage::SessionComplete { session_index: 0, .. })));
        assert_eq!(s.phase(), Phase::Rest);
        let early = s
            .handle(ClientMessage::Control {
                action: ControlAction::AckRest,
            })
            .unwrap();
        assert!(matches!(early[0], ServerMessage::Error { .. }));
        ticks(&mut s, 60);
        assert!(s
            .handle(ClientMessage::Control {
                action: ControlAction::AckRest
            })
            .unwrap()
            .is_empty());
        assert_eq!(s.phase(), Phase::Survey);
        s.handle(survey()).unwrap();
        s.handle(ClientMessage::Control {
            action: ControlAction::Start,
        })
        .unwrap();
        assert_eq!(s.phase(), Phase::Full1);
        let logs = s.take_completed();
        assert_eq!(logs.len(), 1);
        assert_eq!(logs[0].0.steps(), 120);
    }

    #[test]
    fn intervention_goes_through_sampler() {
        let mut s = started();
        ticks(&mut s, 4);
        s.handle(ClientMessage::SetRadius { value: 5.5 }).unwrap();
        let count = |s: &StudySession| {
            s.current_log()
                .unwrap()
                .records()
                .iter()
                .filter(|r| matches!(r, Record::Intervention { .. }))
                .count()
        };
        // Same value as held: no event beyond the initial one.
        assert_eq!(count(&s), 1);
        s.handle(ClientMessage::SetRadius { value: 3.0 }).unwrap();
        assert_eq!(count(&s), 2);
        // Within the minimum interval: deferred, then sent on a later tick.
        s.handle(ClientMessage::SetRadius { value: 2.0 }).unwrap();
        assert_eq!(count(&s), 2);
        ticks(&mut s, 2);
        assert_eq!(count(&s), 3);
        s.handle(ClientMessage::SetRadius { value: 25.0 }).unwrap();
        ticks(&mut s, 2);
        let last = s.current_log().unwrap().records().iter().rev().find_map(|r| match r {
            Record::Intervention { radius, requested, .. } => Some((*radius, *requested)),
            _ => None,
        });
        assert_eq!(last, Some((10.0, Some(25.0))));
    }

    #[test]
    fn side_task_cooldown() {
        let mut s = started();
        let out = ticks(&mut s, 1);
        let q = out
            .iter()
            .find_map(|m| match m {
                ServerMessage::SideTask { question } => Some(question.clone()),
                _ => None,
            })
            .unwrap();
        let (a, b) = q.split_once(" - ").unwrap();
        let answer = a.parse::<i64>().unwrap() - b.parse::<i64>().unwrap();
        let r = s.handle(ClientMessage::TaskAnswer { value: answer }).unwrap();
        assert!(matches!(
            r[0],
            ServerMessage::AnswerResult {
                accepted: true,
                correct: true,
                ..
            }
        ));
        let ServerMessage::StateUpdate { score, .. } = s.state_update() else {
            panic!()
        };
        assert!((score - 0.1).abs() < 1e-12);
        // Early answer: rejected, nothing logged, score unchanged.
        ticks(&mut s, 18);
        let before = s.current_log().unwrap().len();
        let r = s.handle(ClientMessage::TaskAnswer { value: answer }).unwrap();
        assert!(matches!(r[0], ServerMessage::AnswerResult { accepted: false, .. }));
        assert_eq!(s.current_log().unwrap().len(), before);
        let out = ticks(&mut s, 2);
        assert!(out.iter().any(|m| matches!(m, ServerMessage::SideTask { .. })));
    }

    #[test]
    fn state_update_hides_hidden_survivors() {
        let mut s = started();
        for _ in 0..120 {
            s.handle(ClientMessage::TrustReport { delta: 1 }).unwrap();
            s.tick().unwrap();
            if let ServerMessage::StateUpdate { survivors, .. } = s.state_update() {
                assert!(survivors.iter().all(|v| v.status != SurvivorStatus::Hidden));
            }
        }
    }

    #[test]
    fn log_replays_live_held_signals() {
        let mut s = started();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..120 {
            if rng.random_bool(0.2) {
                let r: f64 = rng.random_range(1.0..6.0);
                s.handle(ClientMessage::SetRadius { value: r }).unwrap();
            }
            if rng.random_bool(0.05) {
                s.handle(ClientMessage::TrustReport { delta: 1 }).unwrap();
            }
            s.tick().unwrap();
        }
        let (log, live) = s.take_completed().remove(0);
        let series = log.to_series(&DomainConfig::default()).unwrap();
        assert_eq!(series.status, live.status);
        assert_eq!(series.intervention, live.intervention);
    }

    #[test]
    fn abort_closes_log() {
        let mut s = started();
        ticks(&mut s, 3);
        s.abort().unwrap();
        let logs = s.take_completed();
        assert!(logs[0].0.end().unwrap().2);
        assert_eq!(s.phase(), Phase::Done);
    }

    #[test]
    fn wire_format() {
        let m: ClientMessage = r#"{"type":"set_radius","value":7.2}"#.parse().unwrap();
        assert_eq!(m, ClientMessage::SetRadius { value: 7.2 });
        let m: ClientMessage = r#"{"type":"control","action":"ack_rest"}"#.parse().unwrap();
        assert_eq!(
            m,
            ClientMessage::Control {
                action: ControlAction::AckRest
            }
        );
        let m: ClientMessage = r#"{"type":"survey_submit","scores":[null,50]}"#.parse().unwrap();
        assert_eq!(
            m,
            ClientMessage::SurveySubmit {
                scores: vec![None, Some(50.0)]
            }
        );
        assert!("{\"type\":\"fly\"}".parse::<ClientMessage>().is_err());
        let v = serde_json::to_value(StudySession::new(StudyConfig::new("x")).unwrap().state_update()).unwrap();
        assert_eq!(v["type"], "state_update");
        assert_eq!(v["phase"], "survey");
    }
}
