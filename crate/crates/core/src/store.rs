//! Session logs: typed, time-ordered event records persisted as JSON lines.
//!
//! File layout: the first line is a header object
//! `{"schema":"trustbench.session","version":1,"member_id":…,"session_index":…,"dt":…}`
//! and every following line is one [`Record`] tagged by `"type"`. A cohort is
//! a directory of such files named `<member_id>_s<session_index>.jsonl`.
//!
//! Dense held signals are not stored; [`SessionLog::to_series`] rebuilds them
//! by zero-order hold over the recorded events.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trust::{
    initial_trust_from_survey, reconstruct_trust, DomainConfig, TrustReport, TrustSignal, ACTUATOR_RANGE, SURVEY_ITEMS,
};

pub const SCHEMA_NAME: &str = "trustbench.session";
pub const SCHEMA_VERSION: u32 = 1;

/// Session index of the practice run.
pub const PRACTICE_SESSION: u8 = 0;
pub const TRAIN_SESSION: u8 = 1;
pub const TEST_SESSION: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    StatusSample {
        t: f64,
        value: f64,
    },
    Intervention {
        t: f64,
        radius: f64,
        /// Requested value when it had to be clamped into range.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        requested: Option<f64>,
    },
    TrustReport {
        t: f64,
        delta: i8,
    },
    SideTask {
        t: f64,
        question: String,
        answer: i64,
        correct: bool,
    },
    Survey {
        scores: Vec<Option<f64>>,
    },
    SessionEnd {
        t: f64,
        score: f64,
        #[serde(default)]
        aborted: bool,
    },
}

impl Record {
    pub fn time(&self) -> Option<f64> {
        match *self {
            Record::StatusSample { t, .. }
            | Record::Intervention { t, .. }
            | Record::TrustReport { t, .. }
            | Record::SideTask { t, .. }
            | Record::SessionEnd { t, .. } => Some(t),
            Record::Survey { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    member_id: String,
    session_index: u8,
    dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub member_id: String,
    pub session_index: u8,
    pub dt: f64,
    records: Vec<Record>,
    last_t: f64,
    last_status: Option<f64>,
}

impl SessionLog {
    pub fn new(member_id: impl Into<String>, session_index: u8, dt: f64) -> Self {
        Self {
            member_id: member_id.into(),
            session_index,
            dt,
            records: Vec::new(),
            last_t: f64::NEG_INFINITY,
            last_status: None,
        }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Append a record after checking ordering and value invariants.
    pub fn append(&mut self, record: Record) -> Result<()> {
        if let Some(t) = record.time() {
            if !t.is_finite() {
                return Err(Error::NonFinite("record time"));
            }
            if t < self.last_t {
                return Err(Error::Ordering(format!(
                    "record at t = {t} precedes previous record at {}",
                    self.last_t
                )));
            }
        }
        match &record {
            Record::StatusSample { value, .. } => {
                if !value.is_finite() {
                    return Err(Error::NonFinite("status sample"));
                }
                if let Some(prev) = self.last_status {
                    if *value < prev {
                        return Err(Error::Monotonicity {
                            previous: prev,
                            next: *value,
                        });
                    }
                }
            }
            Record::Intervention { radius, .. } => {
                let (lo, hi) = ACTUATOR_RANGE;
                if !(lo..=hi).contains(radius) {
                    return Err(Error::Range(format!(
                        "intervention radius {radius} outside [{lo}, {hi}]"
                    )));
                }
            }
            Record::TrustReport { delta, .. } => {
                if !(-1..=1).contains(delta) {
                    return Err(Error::Range(format!(
                        "trust report delta must be -1, 0 or 1, got {delta}"
                    )));
                }
            }
            Record::Survey { scores } => {
                if scores.len() != SURVEY_ITEMS {
                    return Err(Error::Schema(format!(
                        "survey has {} items, expected {SURVEY_ITEMS}",
                        scores.len()
                    )));
                }
                if let Some(bad) = scores.iter().flatten().find(|s| !(0.0..=100.0).contains(*s)) {
                    return Err(Error::Range(format!("survey score {bad} outside [0, 100]")));
                }
            }
            Record::SideTask { .. } | Record::SessionEnd { .. } => {}
        }
        if let Some(t) = record.time() {
            self.last_t = t;
        }
        if let Record::StatusSample { value, .. } = record {
            self.last_status = Some(value);
        }
        self.records.push(record);
        Ok(())
    }

    pub fn survey(&self) -> Option<&[Option<f64>]> {
        self.records.iter().find_map(|r| match r {
            Record::Survey { scores } => Some(scores.as_slice()),
            _ => None,
        })
    }

    pub fn end(&self) -> Option<(f64, f64, bool)> {
        self.records.iter().rev().find_map(|r| match *r {
            Record::SessionEnd { t, score, aborted } => Some((t, score, aborted)),
            _ => None,
        })
    }

    pub fn trust_reports(&self) -> Vec<TrustReport> {
        self.records
            .iter()
            .filter_map(|r| match *r {
                Record::TrustReport { t, delta } => Some(TrustReport { t, delta }),
                _ => None,
            })
            .collect()
    }

    /// Survey-derived initial trust (0.5 if the log has no survey).
    pub fn initial_trust(&self) -> Result<f64> {
        match self.survey() {
            Some(scores) => initial_trust_from_survey(scores),
            None => initial_trust_from_survey(&[None; SURVEY_ITEMS]),
        }
    }

    pub fn trust_signal(&self, cfg: &DomainConfig) -> Result<TrustSignal> {
        reconstruct_trust(self.initial_trust()?, &self.trust_reports(), cfg)
    }

    /// Number of whole steps covered by the session.
    pub fn steps(&self) -> usize {
        let end = self
            .end()
            .map(|e| e.0)
            .or_else(|| self.records.iter().rev().find_map(Record::time))
            .unwrap_or(0.0);
        (end / self.dt + 1e-9).floor() as usize
    }

    /// Held signals sampled on the step grid `k·dt`, `k = 1..=steps`.
    pub fn to_series(&self, cfg: &DomainConfig) -> Result<SessionSeries> {
        let steps = self.steps();
        let signal = self.trust_signal(cfg)?;
        let mut status_events = Vec::new();
        let mut intervention_events = Vec::new();
        for r in &self.records {
            match *r {
                Record::StatusSample { t, value } => status_events.push((t, value)),
                Record::Intervention { t, radius, .. } => intervention_events.push((t, radius)),
                _ => {}
            }
        }
        let mut status = Vec::with_capacity(steps);
        let mut intervention = Vec::with_capacity(steps);
        let mut status_event = Vec::with_capacity(steps);
        let mut trust = Vec::with_capacity(steps);
        let (mut si, mut ii) = (0usize, 0usize);
        let mut held_status = 0.0;
        let mut held_radius = crate::sim::DEFAULT_RADIUS;
        // Events at t <= 0 are the initialization samples, not status changes.
        let mut prev_t = 0.0;
        for k in 1..=steps {
            let t = k as f64 * self.dt;
            let mut fired = false;
            while si < status_events.len() && status_events[si].0 <= t {
                if status_events[si].0 > prev_t {
                    fired = true;
                }
                held_status = status_events[si].1;
                si += 1;
            }
            while ii < intervention_events.len() && intervention_events[ii].0 <= t {
                held_radius = intervention_events[ii].1;
                ii += 1;
            }
            status.push(held_status);
            intervention.push(held_radius);
            status_event.push(fired);
            trust.push(signal.value_at(t));
            prev_t = t;
        }
        Ok(SessionSeries {
            member_id: self.member_id.clone(),
            session_index: self.session_index,
            dt: self.dt,
            initial_trust: signal.initial,
            status,
            trust,
            intervention,
            status_event,
        })
    }

    pub fn file_name(&self) -> String {
        session_file_name(&self.member_id, self.session_index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut out = std::io::BufWriter::new(fs::File::create(&tmp)?);
            self.write_to(&mut out)?;
            out.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let header = Header {
            schema: SCHEMA_NAME.into(),
            version: SCHEMA_VERSION,
            member_id: self.member_id.clone(),
            session_index: self.session_index,
            dt: self.dt,
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut *out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        Self::read_from(BufReader::new(file), path)
    }

    pub fn read_from(reader: impl BufRead, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = reader.lines().enumerate();
        let header: Header = loop {
            match lines.next() {
                None => return Err(Error::MissingHeader(path.to_path_buf())),
                Some((i, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line).map_err(|e| parse_err(i + 1, format!("bad header: {e}")))?;
                }
            }
        };
        if header.schema != SCHEMA_NAME {
            return Err(parse_err(1, format!("unknown schema {:?}", header.schema)));
        }
        if header.version != SCHEMA_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: header.version,
                expected: SCHEMA_VERSION,
            });
        }
        let mut log = SessionLog::new(header.member_id, header.session_index, header.dt);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
            log.append(record).map_err(|e| parse_err(i + 1, e.to_string()))?;
        }
        Ok(log)
    }
}

pub fn session_file_name(member_id: &str, session_index: u8) -> String {
    format!("{member_id}_s{session_index}.jsonl")
}

/// Dense per-step view of one session.
///
/// Index `i` of every vector is step `k = i + 1` (time `k·dt`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSeries {
    pub member_id: String,
    pub session_index: u8,
    pub dt: f64,
    pub initial_trust: f64,
    /// Held status (percent found).
    pub status: Vec<f64>,
    /// Reconstructed self-reported trust.
    pub trust: Vec<f64>,
    /// Held intervention (formation radius).
    pub intervention: Vec<f64>,
    /// Whether a status sample was transmitted during the step.
    pub status_event: Vec<bool>,
}

impl SessionSeries {
    pub fn len(&self) -> usize {
        self.trust.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trust.is_empty()
    }
}

/// Train (first full session) and test (second full session) logs.
pub fn split_train_test(member_logs: &[SessionLog]) -> Result<(SessionLog, SessionLog)> {
    let member = member_logs.first().map(|l| l.member_id.clone()).unwrap_or_default();
    let find = |idx: u8| {
        member_logs
            .iter()
            .find(|l| l.session_index == idx)
            .cloned()
            .ok_or_else(|| Error::IncompleteMember {
                member: member.clone(),
                session: idx,
            })
    };
    Ok((find(TRAIN_SESSION)?, find(TEST_SESSION)?))
}

/// All session logs in a directory, grouped by member and sorted by session.
#[derive(Debug, Clone, Default)]
pub struct Cohort {
    pub members: BTreeMap<String, Vec<SessionLog>>,
}

impl Cohort {
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        let mut cohort = Cohort::default();
        for p in paths {
            cohort.insert(SessionLog::load(&p)?);
        }
        Ok(cohort)
    }

    pub fn insert(&mut self, log: SessionLog) {
        let logs = self.members.entry(log.member_id.clone()).or_default();
        logs.push(log);
        logs.sort_by_key(|l| l.session_index);
    }

    pub fn member_ids(&self) -> Vec<String> {
        self.members.keys().cloned().collect()
    }

    pub fn split(&self, member: &str) -> Result<(SessionLog, SessionLog)> {
        let logs = self.members.get(member).map(Vec::as_slice).unwrap_or(&[]);
        if logs.is_empty() {
            return Err(Error::IncompleteMember {
                member: member.to_string(),
                session: TRAIN_SESSION,
            });
        }
        split_train_test(logs)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for log in self.members.values().flatten() {
            log.save(&dir.join(log.file_name()))?;
        }
        Ok(())
    }
}
