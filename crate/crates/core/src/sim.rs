//! Foraging-task world: a ring formation of agents sweeps a square region for
//! survivors while burning fuel at a constant rate.
//!
//! The centroid follows a sinusoidal boustrophedon across the region at a
//! speed proportional to the formation radius. A survivor's detection
//! confidence grows only while at least two agents are within the detection
//! radius, so narrow formations detect more per pass but cover less ground.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trust::ACTUATOR_RANGE;

pub const DEFAULT_RADIUS: f64 = 5.5;

const PATH_SAMPLES: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    /// Horizontal wavelength of the sweep, km.
    pub wavelength: f64,
    /// Vertical amplitude of the sweep, km; `None` spans the full side.
    pub amplitude: Option<f64>,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            wavelength: 2.0 * DEFAULT_RADIUS,
            amplitude: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub side_length: f64,
    pub n_survivors: usize,
    pub n_agents: usize,
    pub detect_radius: f64,
    pub radius_bounds: (f64, f64),
    pub default_radius: f64,
    /// Centroid speed per km of formation radius (km/s per km). `None`
    /// calibrates it so the default radius completes one lap on a full tank.
    pub speed_per_radius: Option<f64>,
    pub fuel_seconds: f64,
    /// Confidence gained per second per extra agent in range.
    pub detection_rate: f64,
    pub trajectory: TrajectoryConfig,
    pub rng_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            side_length: 50.0,
            n_survivors: 30,
            n_agents: 6,
            detect_radius: 2.0,
            radius_bounds: ACTUATOR_RANGE,
            default_radius: DEFAULT_RADIUS,
            speed_per_radius: None,
            fuel_seconds: 600.0,
            detection_rate: 0.25,
            trajectory: TrajectoryConfig::default(),
            rng_seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.radius_bounds;
        if !(lo > 0.0 && lo <= hi && hi < self.side_length / 2.0) {
            return Err(Error::Config(format!(
                "radius bounds [{lo}, {hi}] must lie inside (0, side_length/2)"
            )));
        }
        if self.n_survivors == 0 {
            return Err(Error::Config("n_survivors must be positive".into()));
        }
        if self.n_agents == 0 {
            return Err(Error::Config("n_agents must be positive".into()));
        }
        if !(self.default_radius >= lo && self.default_radius <= hi) {
            return Err(Error::Config(format!(
                "default radius {} outside [{lo}, {hi}]",
                self.default_radius
            )));
        }
        let positive = [
            ("side_length", self.side_length),
            ("detect_radius", self.detect_radius),
            ("fuel_seconds", self.fuel_seconds),
            ("detection_rate", self.detection_rate),
            ("trajectory.wavelength", self.trajectory.wavelength),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(s) = self.speed_per_radius {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("speed_per_radius must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Arc-length parameterized sweep path.
#[derive(Debug, Clone)]
struct SweepPath {
    side: f64,
    amplitude: f64,
    wavelength: f64,
    /// Cumulative arc length at `x = side·i/(PATH_SAMPLES−1)`.
    cumulative: Vec<f64>,
}

impl SweepPath {
    fn new(side: f64, traj: &TrajectoryConfig) -> Self {
        let amplitude = traj.amplitude.unwrap_or(side / 2.0);
        let mut path = Self {
            side,
            amplitude,
            wavelength: traj.wavelength,
            cumulative: Vec::with_capacity(PATH_SAMPLES),
        };
        let mut total = 0.0;
        let mut prev = path.point_at_x(0.0);
        path.cumulative.push(0.0);
        for i in 1..PATH_SAMPLES {
            let x = side * i as f64 / (PATH_SAMPLES - 1) as f64;
            let p = path.point_at_x(x);
            total += (p.0 - prev.0).hypot(p.1 - prev.1);
            path.cumulative.push(total);
            prev = p;
        }
        path
    }

    fn point_at_x(&self, x: f64) -> (f64, f64) {
        let y = self.side / 2.0 - self.amplitude * (2.0 * PI * x / self.wavelength).cos();
        (x, y)
    }

    fn lap_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Position after travelling `distance` km; odd laps run in reverse.
    fn position(&self, distance: f64) -> (f64, f64) {
        let lap_len = self.lap_length();
        let lap = (distance / lap_len).floor();
        let mut s = distance - lap * lap_len;
        if lap as u64 % 2 == 1 {
            s = lap_len - s;
        }
        let i = self.cumulative.partition_point(|&c| c < s).min(PATH_SAMPLES - 1);
        let x = if i == 0 {
            0.0
        } else {
            let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
            let frac = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
            self.side * ((i - 1) as f64 + frac) / (PATH_SAMPLES - 1) as f64
        };
        self.point_at_x(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivorStatus {
    Hidden,
    Suspected,
    Confirmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Survivor {
    pub position: (f64, f64),
    pub confidence: f64,
    pub status: SurvivorStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    /// Distance travelled by the centroid along the sweep, km.
    pub travelled: f64,
    pub centroid: (f64, f64),
    pub agent_positions: Vec<(f64, f64)>,
    pub radius: f64,
    pub fuel: f64,
    pub survivors: Vec<Survivor>,
    pub found_count: usize,
    pub side_score: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickOutcome {
    Running,
    /// Fuel ran out; the session is over.
    FuelExhausted,
}

/// World plus the fixed configuration needed to advance it.
#[derive(Debug, Clone)]
pub struct ForageSim {
    cfg: WorldConfig,
    path: SweepPath,
    speed_per_radius: f64,
    pub state: SimState,
}

/// Build a world: survivors uniform in the square, agents on the
/// default-radius ring, full tank.
pub fn init_world(cfg: &WorldConfig) -> Result<ForageSim> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let survivors = (0..cfg.n_survivors)
        .map(|_| Survivor {
            position: (
                rng.random_range(0.0..cfg.side_length),
                rng.random_range(0.0..cfg.side_length),
            ),
            confidence: 0.0,
            status: SurvivorStatus::Hidden,
        })
        .collect();
    let path = SweepPath::new(cfg.side_length, &cfg.trajectory);
    let speed_per_radius = cfg
        .speed_per_radius
        .unwrap_or_else(|| path.lap_length() / (cfg.fuel_seconds * cfg.default_radius));
    let centroid = path.position(0.0);
    let mut sim = ForageSim {
        cfg: cfg.clone(),
        path,
        speed_per_radius,
        state: SimState {
            t: 0.0,
            travelled: 0.0,
            centroid,
            agent_positions: Vec::new(),
            radius: cfg.default_radius,
            fuel: cfg.fuel_seconds,
            survivors,
            found_count: 0,
            side_score: 0,
        },
    };
    sim.place_agents();
    Ok(sim)
}

impl ForageSim {
    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn speed_per_radius(&self) -> f64 {
        self.speed_per_radius
    }

    /// Current centroid speed, km/s.
    pub fn speed(&self) -> f64 {
        self.state.radius * self.speed_per_radius
    }

    pub fn lap_length(&self) -> f64 {
        self.path.lap_length()
    }

    /// Set the formation radius, clamped to the configured bounds. Returns the
    /// radius actually applied.
    pub fn set_radius(&mut self, r: f64) -> Result<f64> {
        if !r.is_finite() {
            return Err(Error::NonFinite("formation radius"));
        }
        let (lo, hi) = self.cfg.radius_bounds;
        self.state.radius = r.clamp(lo, hi);
        self.place_agents();
        Ok(self.state.radius)
    }

    fn place_agents(&mut self) {
        let n = self.cfg.n_agents;
        let (cx, cy) = self.state.centroid;
        let r = self.state.radius;
        self.state.agent_positions = (0..n)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / n as f64;
                (cx + r * theta.cos(), cy + r * theta.sin())
            })
            .collect();
    }

    /// Advance the world by `dt` seconds (truncated to the remaining fuel).
    pub fn tick(&mut self, dt: f64) -> Result<TickOutcome> {
        if !dt.is_finite() || dt < 0.0 {
            return Err(Error::Config(format!("tick length must be >= 0, got {dt}")));
        }
        if self.state.fuel <= 0.0 {
            return Ok(TickOutcome::FuelExhausted);
        }
        if dt == 0.0 {
            return Ok(TickOutcome::Running);
        }
        let dt = dt.min(self.state.fuel);
        self.state.travelled += self.speed() * dt;
        self.state.centroid = self.path.position(self.state.travelled);
        self.place_agents();
        self.detect(dt);
        self.state.fuel = (self.state.fuel - dt).max(0.0);
        self.state.t += dt;
        Ok(if self.state.fuel <= 0.0 {
            TickOutcome::FuelExhausted
        } else {
            TickOutcome::Running
        })
    }

    fn detect(&mut self, dt: f64) {
        let r2 = self.cfg.detect_radius * self.cfg.detect_radius;
        let gain_per_extra = self.cfg.detection_rate * dt;
        for s in self
            .state
            .survivors
            .iter_mut()
            .filter(|s| s.status != SurvivorStatus::Confirmed)
        {
            let m = self
                .state
                .agent_positions
                .iter()
                .filter(|a| {
                    let dx = a.0 - s.position.0;
                    let dy = a.1 - s.position.1;
                    dx * dx + dy * dy <= r2
                })
                .count();
            if m < 2 {
                continue;
            }
            s.confidence = (s.confidence + gain_per_extra * (m - 1) as f64).min(1.0);
            if s.confidence >= 1.0 {
                s.status = SurvivorStatus::Confirmed;
                self.state.found_count += 1;
            } else if s.confidence > 0.0 {
                s.status = SurvivorStatus::Suspected;
            }
        }
    }

    /// Percentage of survivors found.
    pub fn status_percent(&self) -> f64 {
        status_percent(&self.state, self.cfg.n_survivors)
    }

    pub fn add_side_points(&mut self, points: i64) {
        self.state.side_score += points;
    }
}

pub fn status_percent(state: &SimState, n_survivors: usize) -> f64 {
    100.0 * state.found_count as f64 / n_survivors as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub found: f64,
    pub side: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { found: 1.0, side: 0.1 }
    }
}

/// Weighted sum of survivors found and side-task points.
pub fn session_score(state: &SimState, weights: ScoreWeights) -> f64 {
    weights.found * state.found_count as f64 + weights.side * state.side_score as f64
}
