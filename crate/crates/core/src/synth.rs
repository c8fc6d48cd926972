//! Synthetic cohorts drawn from labelled parameter blobs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ResponseStyle;
use crate::error::{Error, Result};
use crate::sampler::SamplerConfig;
use crate::sim::WorldConfig;
use crate::store::{Cohort, SessionLog, PRACTICE_SESSION, TEST_SESSION, TRAIN_SESSION};
use crate::supervisor::{run_synthetic_session, SessionPlan};
use crate::trust::{DomainConfig, TrustModelParams};

/// Length of the practice session, seconds.
pub const PRACTICE_SECONDS: f64 = 60.0;

/// A family of supervisors sharing a response style.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub name: String,
    pub style: ResponseStyle,
    pub center: TrustModelParams,
    /// Standard deviation of the interior-mode poles across members.
    pub pole_sd: f64,
    /// Relative standard deviation of the gains across members.
    pub gain_rel_sd: f64,
    pub n_q_seconds: f64,
    pub initial_trust: f64,
}

impl BlobSpec {
    /// Draw one member's parameters, redrawing until they are admissible.
    pub fn draw(&self, rng: &mut impl Rng) -> Result<TrustModelParams> {
        let pole = Normal::new(0.0, self.pole_sd).map_err(|e| Error::Config(e.to_string()))?;
        let rel = Normal::new(1.0, self.gain_rel_sd).map_err(|e| Error::Config(e.to_string()))?;
        for _ in 0..1000 {
            let mut p = self.center.clone();
            p.alpha[0] += pole.sample(rng);
            p.beta[0] += pole.sample(rng);
            p.gamma *= rel.sample(rng);
            p.delta *= rel.sample(rng);
            p.kappa *= rel.sample(rng);
            p.q *= rel.sample(rng);
            if p.validate().is_ok() {
                return Ok(p);
            }
        }
        Err(Error::Config(format!(
            "blob {} never produced admissible parameters",
            self.name
        )))
    }
}

fn blob(
    name: &str,
    style: ResponseStyle,
    (alpha, beta): (f64, f64),
    (gamma, delta): (f64, f64),
    (kappa, q): (f64, f64),
) -> BlobSpec {
    let mut center = TrustModelParams::first_order(alpha, beta, gamma, delta, kappa, q);
    // Radius requests of 1.5–3 km keep neighbouring agents close enough to
    // confirm survivors.
    center.c = [1.5; 6];
    center.h = [1.5; 6];
    BlobSpec {
        name: name.into(),
        style,
        center,
        pole_sd: 0.002,
        gain_rel_sd: 0.05,
        n_q_seconds: 30.0,
        initial_trust: 0.5,
    }
}

/// Three well-separated response styles. Each blob's equilibrium trust in
/// both interior modes sits at a different level.
pub fn default_blobs() -> Vec<BlobSpec> {
    vec![
        blob(
            "ambivalent",
            ResponseStyle::Symmetric,
            (0.97, 0.97),
            (0.3, 0.3),
            (0.015, 0.015),
        ),
        blob(
            "pessimistic",
            ResponseStyle::QuickToLoseSlowToGain,
            (0.94, 0.99),
            (0.3, 0.1),
            (0.012, 0.003),
        ),
        blob(
            "optimistic",
            ResponseStyle::QuickToGainSlowToLose,
            (0.99, 0.94),
            (0.1, 0.3),
            (0.006, 0.042),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub blobs: Vec<BlobSpec>,
    pub members_per_blob: usize,
    /// Standard deviation of per-step latent trust noise.
    pub noise_sd: f64,
    pub seed: u64,
    pub domain: DomainConfig,
    pub world: WorldConfig,
    pub status_sampler: SamplerConfig,
    pub intervention_sampler: SamplerConfig,
    pub side_task_accuracy: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            blobs: default_blobs(),
            members_per_blob: 8,
            noise_sd: 0.002,
            seed: 0,
            domain: DomainConfig::default(),
            world: WorldConfig::default(),
            status_sampler: SamplerConfig::default(),
            intervention_sampler: SamplerConfig::default(),
            side_task_accuracy: 0.9,
        }
    }
}

/// Ground truth for one generated member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMember {
    pub member_id: String,
    pub blob: usize,
    pub params: TrustModelParams,
    pub n_q_seconds: f64,
    pub initial_trust: f64,
}

fn derived_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 16);
    rng.random()
}

/// Draw member parameters blob by blob; members are named `syn00`, `syn01`, …
pub fn draw_members(spec: &CohortSpec) -> Result<Vec<SyntheticMember>> {
    let mut out = Vec::new();
    for (b, blob) in spec.blobs.iter().enumerate() {
        for _ in 0..spec.members_per_blob {
            let i = out.len();
            let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(spec.seed, 1, i as u64));
            let mut params = blob.draw(&mut rng)?;
            params.domain = spec.domain;
            out.push(SyntheticMember {
                member_id: format!("syn{i:02}"),
                blob: b,
                params,
                n_q_seconds: blob.n_q_seconds,
                initial_trust: blob.initial_trust,
            });
        }
    }
    Ok(out)
}

/// Practice, training and test sessions for one member.
pub fn simulate_member(spec: &CohortSpec, index: usize, member: &SyntheticMember) -> Result<Vec<SessionLog>> {
    let n_q = spec.domain.steps_for_seconds(member.n_q_seconds);
    [PRACTICE_SESSION, TRAIN_SESSION, TEST_SESSION]
        .into_iter()
        .map(|session| {
            let key = index as u64 * 4 + u64::from(session);
            let plan = SessionPlan {
                member_id: member.member_id.clone(),
                session_index: session,
                duration: (session == PRACTICE_SESSION).then_some(PRACTICE_SECONDS),
                world: WorldConfig {
                    rng_seed: derived_seed(spec.seed, 2, key),
                    ..spec.world.clone()
                },
                status_sampler: spec.status_sampler,
                intervention_sampler: spec.intervention_sampler,
                domain: spec.domain,
                side_task_accuracy: spec.side_task_accuracy,
                side_task_seed: derived_seed(spec.seed, 3, key),
            };
            run_synthetic_session(
                &plan,
                &member.params,
                spec.noise_sd,
                n_q,
                member.initial_trust,
                derived_seed(spec.seed, 4, key),
            )
            .map(|(log, _)| log)
        })
        .collect()
}

/// Draw members and simulate all their sessions.
pub fn generate_cohort(spec: &CohortSpec) -> Result<(Cohort, Vec<SyntheticMember>)> {
    if spec.blobs.is_empty() || spec.members_per_blob == 0 {
        return Err(Error::Config(
            "a cohort needs at least one blob and one member per blob".into(),
        ));
    }
    let members = draw_members(spec)?;
    let logs = members
        .par_iter()
        .enumerate()
        .map(|(i, m)| simulate_member(spec, i, m))
        .collect::<Result<Vec<_>>>()?;
    let mut cohort = Cohort::default();
    for log in logs.into_iter().flatten() {
        cohort.insert(log);
    }
    Ok((cohort, members))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::classify_response_style;

    #[test]
    fn blob_centres_have_their_styles() {
        for b in default_blobs() {
            assert_eq!(classify_response_style(&b.center).unwrap(), b.style, "{}", b.name);
        }
    }

    #[test]
    fn members_are_reproducible() {
        let spec = CohortSpec {
            members_per_blob: 2,
            ..Default::default()
        };
        let a = draw_members(&spec).unwrap();
        let b = draw_members(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert_ne!(a[0].params, a[1].params);
        assert_eq!(a[5].blob, 2);
    }

    #[test]
    fn small_cohort_has_three_sessions_each() {
        let spec = CohortSpec {
            members_per_blob: 1,
            ..Default::default()
        };
        let (cohort, members) = generate_cohort(&spec).unwrap();
        assert_eq!(cohort.members.len(), 3);
        for m in &members {
            let logs = &cohort.members[&m.member_id];
            assert_eq!(logs.len(), 3);
            assert_eq!(logs[0].steps(), 120);
            assert_eq!(logs[1].steps(), 1200);
        }
    }
}
