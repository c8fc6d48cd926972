//! Event-triggered zero-order-hold samplers.
//!
//! A sample is transmitted when the squared hold error, weighted by
//! `w_gain`, reaches `tau` times `V(y, e) = a·y² + b·e²`, and the minimum
//! inter-event interval has elapsed. Between events the held value is
//! constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub v_quadratic_weight: f64,
    pub v_error_weight: f64,
    pub w_gain: f64,
    pub tau: f64,
    /// Minimum time between events, seconds.
    pub min_interval: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            v_quadratic_weight: 1.0,
            v_error_weight: 1.0 / 100.0,
            w_gain: 1e3,
            tau: 0.5,
            min_interval: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.v_quadratic_weight,
            self.v_error_weight,
            self.w_gain,
            self.tau,
            self.min_interval,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sampler configuration value"));
        }
        if self.w_gain <= 0.0 || self.tau <= 0.0 || self.min_interval < 0.0 {
            return Err(Error::Config(format!(
                "sampler needs w_gain > 0, tau > 0, min_interval >= 0; got {}, {}, {}",
                self.w_gain, self.tau, self.min_interval
            )));
        }
        Ok(())
    }

    /// `V(y, e)`.
    pub fn storage(&self, y: f64, e: f64) -> f64 {
        self.v_quadratic_weight * y * y + self.v_error_weight * e * e
    }

    /// `W(e)`.
    pub fn error_weight(&self, e: f64) -> f64 {
        self.w_gain * e * e
    }

    /// Trigger inequality `W(e) ≥ τ·V(y, e)`, ignoring the waiting period.
    pub fn triggers(&self, held: f64, y: f64) -> bool {
        let e = held - y;
        self.error_weight(e) >= self.tau * self.storage(y, e) && e != 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    pub held_value: f64,
    pub last_event_time: f64,
    pub event_count: u64,
}

impl SamplerState {
    /// Initialization event transmitting `y0` at time `t0`.
    pub fn init(y0: f64, t0: f64) -> Result<Self> {
        if !y0.is_finite() || !t0.is_finite() {
            return Err(Error::NonFinite("sampler initial value"));
        }
        Ok(Self {
            held_value: y0,
            last_event_time: t0,
            event_count: 1,
        })
    }

    /// Offer the current signal value; returns whether an event fired.
    pub fn poll(&mut self, y: f64, t: f64, cfg: &SamplerConfig) -> Result<bool> {
        if !y.is_finite() {
            return Err(Error::NonFinite("sampled signal"));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("sample time"));
        }
        if t < self.last_event_time {
            return Err(Error::Ordering(format!(
                "poll at t = {t} precedes last event at {}",
                self.last_event_time
            )));
        }
        let fire = t - self.last_event_time >= cfg.min_interval && cfg.triggers(self.held_value, y);
        if fire {
            self.held_value = y;
            self.last_event_time = t;
            self.event_count += 1;
        }
        Ok(fire)
    }

    pub fn held_signal(&self) -> f64 {
        self.held_value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_intervention_example() {
        let cfg = SamplerConfig::default();
        let (held, y) = (5.7, 5.5);
        let e: f64 = held - y;
        let w = cfg.error_weight(e);
        let v = cfg.storage(y, e);
        assert!((w - 40.0).abs() < 1e-9);
        assert!((v - 30.2504).abs() < 1e-9);
        assert!((cfg.tau * v - 15.1252).abs() < 1e-9);

        let mut s = SamplerState::init(held, 0.0).unwrap();
        assert!(s.poll(y, 2.0, &cfg).unwrap());
        assert_eq!(s.held_signal(), 5.5);
        assert_eq!(s.last_event_time, 2.0);
        assert_eq!(s.event_count, 2);
    }

    #[test]
    fn zero_error_never_fires() {
        let cfg = SamplerConfig {
            min_interval: 0.0,
            ..Default::default()
        };
        let mut s = SamplerState::init(3.0, 0.0).unwrap();
        assert!(!s.poll(3.0, 10.0, &cfg).unwrap());
        let mut zero = SamplerState::init(0.0, 0.0).unwrap();
        assert!(!zero.poll(0.0, 1.0, &cfg).unwrap());
    }

    #[test]
    fn waiting_period_blocks_event() {
        let cfg = SamplerConfig {
            min_interval: 2.0,
            ..Default::default()
        };
        let mut s = SamplerState::init(1.0, 0.0).unwrap();
        assert!(!s.poll(9.0, 1.5, &cfg).unwrap());
        assert_eq!(s.held_signal(), 1.0);
        assert!(s.poll(9.0, 2.0, &cfg).unwrap());
    }

    #[test]
    fn hold_between_events() {
        let cfg = SamplerConfig {
            min_interval: 0.0,
            ..Default::default()
        };
        let mut s = SamplerState::init(0.0, 0.0).unwrap();
        assert_eq!(s.held_signal(), 0.0);
        assert!(s.poll(10.0, 1.0, &cfg).unwrap());
        assert!(!s.poll(10.01, 2.0, &cfg).unwrap());
        assert_eq!(s.held_signal(), 10.0);
    }

    #[test]
    fn rejects_time_regression() {
        let cfg = SamplerConfig::default();
        let mut s = SamplerState::init(0.0, 5.0).unwrap();
        assert!(matches!(s.poll(1.0, 4.0, &cfg), Err(Error::Ordering(_))));
        assert!(matches!(s.poll(f64::NAN, 6.0, &cfg), Err(Error::NonFinite(_))));
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        let bad = SamplerConfig {
            tau: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
