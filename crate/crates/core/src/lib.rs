//! Switched-linear models of human trust in a supervised search task.
//!
//! The crate covers the trust model itself, the event-triggered sampler used
//! to throttle status and intervention updates, a deterministic search
//! simulator, session logging, system identification, clustering of
//! identified parameters, evaluation, and the study protocol state machine
//! served to participants.

pub mod cluster;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod pipeline;
pub mod sampler;
pub mod sim;
pub mod store;
pub mod study;
pub mod supervisor;
pub mod synth;
pub mod sysid;
pub mod trust;

pub use error::{Error, Result};
pub use sampler::{SamplerConfig, SamplerState};
pub use sim::{ForageSim, SimState, WorldConfig};
pub use store::{Cohort, Record, SessionLog, SessionSeries};
pub use sysid::{find_model_parameters, IdentifiedGroup, ModePartition};
pub use trust::{select_mode, step_trust, DomainConfig, ModeId, TrustModelParams, TrustState};
