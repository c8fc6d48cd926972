//! Replicated k-means over identified trust coefficients.
//!
//! Members are embedded by their interior-mode trust coefficients
//! `[α; β]`. The objective is the sum of squared Euclidean distances to the
//! cluster means. Every replicate is seeded with k-means++ from its own
//! stream of a single seed, so results do not depend on thread scheduling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysid::IdentifiedGroup;
use crate::trust::{TrustModelParams, ROOT_TOLERANCE};

/// Share of the total sum of squares below which adding a cluster no longer
/// pays.
pub const ELBOW_THRESHOLD: f64 = 0.15;

/// `k` values swept by default.
pub const DEFAULT_K_RANGE: std::ops::RangeInclusive<usize> = 2..=10;

pub const DEFAULT_REPLICATES: usize = 1000;

const MAX_LLOYD_ITERATIONS: usize = 500;

/// A member's position in coefficient space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub member_id: String,
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn from_params(member_id: impl Into<String>, params: &TrustModelParams) -> Self {
        let mut vector = params.alpha.clone();
        vector.extend_from_slice(&params.beta);
        Self {
            member_id: member_id.into(),
            vector,
        }
    }

    pub fn from_group(member_id: impl Into<String>, group: &IdentifiedGroup) -> Self {
        Self::from_params(member_id, &group.params())
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index of the nearest centroid; the lowest index wins ties.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Sum of squared distances from each point to the mean of its cluster.
pub fn partition_cost(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let centroids = means(points, labels, k, &vec![vec![0.0; dim(points)]; k]);
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]))
        .sum()
}

fn dim(points: &[Vec<f64>]) -> usize {
    points.first().map_or(0, Vec::len)
}

/// Cluster means; empty clusters keep their previous centroid.
fn means(points: &[Vec<f64>], labels: &[usize], k: usize, previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = dim(points);
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(j, (s, n))| {
            if n == 0 {
                previous[j].clone()
            } else {
                s.into_iter().map(|x| x / n as f64).collect()
            }
        })
        .collect()
}

/// Outcome of one Lloyd run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansSolution {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub within_ss: f64,
    /// Objective after every assignment step.
    pub history: Vec<f64>,
}

impl KMeansSolution {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn has_singleton(&self) -> bool {
        self.cluster_sizes().contains(&1)
    }
}

/// k-means++ seeding: each new centre is drawn with probability
/// proportional to the squared distance to the nearest existing one.
pub fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            // Rounding can leave `chosen` on a zero-weight point.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &points[pick]));
        }
    }
    centroids
}

/// Lloyd iterations from the given centres until the labels stop changing.
/// An empty cluster is moved onto the point farthest from its centroid among
/// clusters with more than one member.
pub fn lloyd(points: &[Vec<f64>], initial: Vec<Vec<f64>>) -> KMeansSolution {
    let k = initial.len();
    let mut centroids = initial;
    let mut labels: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        reseed_empty(points, &mut next, &mut centroids);
        history.push(
            points
                .iter()
                .zip(&next)
                .map(|(p, &l)| squared_distance(p, &centroids[l]))
                .sum(),
        );
        let converged = next == labels;
        labels = next;
        if converged {
            break;
        }
        centroids = means(points, &labels, k, &centroids);
    }
    let within_ss = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]))
        .sum();
    KMeansSolution {
        labels,
        centroids,
        within_ss,
        history,
    }
}

fn reseed_empty(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .map(|i| (i, squared_distance(&points[i], &centroids[labels[i]])))
            .filter(|&(_, d)| d > 0.0)
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = donor else {
            // Every remaining point coincides with its centroid.
            return;
        };
        centroids[empty] = points[i].clone();
        labels[i] = empty;
    }
}

/// Best of `replicates` seeded Lloyd runs; the lowest replicate index wins
/// ties.
pub fn kmeans_replicated(points: &[Vec<f64>], k: usize, replicates: usize, seed: u64) -> Result<KMeansSolution> {
    if k == 0 || k > points.len() {
        return Err(Error::Cardinality {
            k,
            points: points.len(),
        });
    }
    if replicates == 0 {
        return Err(Error::Config("at least one k-means replicate is required".into()));
    }
    let d = dim(points);
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Schema("embeddings have different lengths".into()));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("embedding"));
    }
    let best = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            (r, lloyd(points, kmeans_plus_plus(points, k, &mut rng)))
        })
        .reduce_with(|a, b| {
            if b.1.within_ss < a.1.within_ss || (b.1.within_ss == a.1.within_ss && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .expect("at least one replicate");
    Ok(best.1)
}

/// Diagnostics for one `k` in a selection sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCandidate {
    pub k: usize,
    pub within_ss: f64,
    pub has_singleton: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    pub sweep: Vec<KCandidate>,
}

/// Smallest admissible `k` at which one more cluster explains less than
/// [`ELBOW_THRESHOLD`] of the total sum of squares about the grand mean. A
/// zero objective, or a `k` with no evaluable successor, counts as an elbow.
/// Without an elbow the largest admissible `k` is returned.
pub fn select_k(
    points: &[Vec<f64>],
    k_range: &[usize],
    replicates: usize,
    seed: u64,
    singleton_forbidden: bool,
) -> Result<KSelection> {
    let mut ks: Vec<usize> = k_range.iter().copied().filter(|&k| k >= 1).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut evaluate: Vec<usize> = ks.clone();
    evaluate.extend(ks.iter().map(|k| k + 1));
    evaluate.sort_unstable();
    evaluate.dedup();
    evaluate.retain(|&k| k <= points.len());

    let mut solved = BTreeMap::new();
    for k in evaluate {
        solved.insert(k, kmeans_replicated(points, k, replicates, seed)?);
    }
    let sweep: Vec<KCandidate> = ks
        .iter()
        .filter_map(|k| solved.get(k).map(|s| (k, s)))
        .map(|(&k, s)| KCandidate {
            k,
            within_ss: s.within_ss,
            has_singleton: s.has_singleton(),
        })
        .collect();
    let admissible: Vec<&KCandidate> = sweep
        .iter()
        .filter(|c| !(singleton_forbidden && c.has_singleton))
        .collect();
    let total = total_sum_of_squares(points);
    for c in &admissible {
        let elbow = match solved.get(&(c.k + 1)) {
            _ if c.within_ss <= 0.0 => true,
            None => true,
            Some(next) => (c.within_ss - next.within_ss) / total < ELBOW_THRESHOLD,
        };
        if elbow {
            return Ok(KSelection { k: c.k, sweep });
        }
    }
    match admissible.last() {
        Some(c) => Ok(KSelection { k: c.k, sweep }),
        None => Err(Error::Selection(format!(
            "no admissible k among {:?}; sweep: {}",
            ks,
            sweep
                .iter()
                .map(|c| format!("k={} W={:.6e} singleton={}", c.k, c.within_ss, c.has_singleton))
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

/// Sum of squared distances to the grand mean (the one-cluster objective).
pub fn total_sum_of_squares(points: &[Vec<f64>]) -> f64 {
    partition_cost(points, &vec![0; points.len()], 1)
}

/// Per-mode weights from training-row counts.
pub fn row_weights(rows: [usize; 6]) -> [f64; 6] {
    rows.map(|r| r as f64)
}

fn weighted_mean(values: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let total: f64 = values.clone().map(|(_, w)| w).sum();
    if total > 0.0 {
        values.map(|(v, w)| v * w).sum::<f64>() / total
    } else {
        let n = values.clone().count() as f64;
        values.map(|(v, _)| v).sum::<f64>() / n
    }
}

/// Weighted mean of member parameters. Mode-2 coefficients use the mode-2
/// weights, mode-5 coefficients the mode-5 weights, and each output pair its
/// own mode's weight. A mode whose weights are all zero falls back to the
/// unweighted mean.
pub fn centroid_params(members: &[(TrustModelParams, [f64; 6])]) -> Result<TrustModelParams> {
    let (first, _) = members.first().ok_or(Error::EmptyPartition)?;
    for (p, w) in members {
        p.validate()?;
        if p.order != first.order {
            return Err(Error::Config("centroid members have different model orders".into()));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config(format!(
                "centroid weights must be non-negative, got {w:?}"
            )));
        }
    }
    let by = |mode: usize, f: &dyn Fn(&TrustModelParams) -> f64| {
        weighted_mean(members.iter().map(move |(p, w)| (f(p), w[mode])))
    };
    let low = 1;
    let high = 4;
    let out = TrustModelParams {
        order: first.order,
        alpha: (0..first.order).map(|j| by(low, &|p| p.alpha[j])).collect(),
        beta: (0..first.order).map(|j| by(high, &|p| p.beta[j])).collect(),
        gamma: by(low, &|p| p.gamma),
        delta: by(high, &|p| p.delta),
        kappa: by(low, &|p| p.kappa),
        q: by(high, &|p| p.q),
        c: std::array::from_fn(|m| by(m, &|p| p.c[m])),
        h: std::array::from_fn(|m| by(m, &|p| p.h[m])),
        domain: first.domain,
    };
    out.validate()?;
    Ok(out)
}

/// Result of clustering a cohort of identified members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub member_ids: Vec<String>,
    /// Cluster of each member, aligned with `member_ids`.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub centroid_params: Vec<TrustModelParams>,
    /// Memory length used with each centroid model, seconds.
    pub centroid_n_q_seconds: Vec<f64>,
    pub within_ss: f64,
    /// Per-mode weight of each member, aligned with `member_ids`.
    pub weights: Vec<[f64; 6]>,
}

impl ClusterModel {
    pub fn assignment_map(&self) -> BTreeMap<&str, usize> {
        self.member_ids
            .iter()
            .map(String::as_str)
            .zip(self.assignments.iter().copied())
            .collect()
    }

    pub fn members_of(&self, cluster: usize) -> Vec<&str> {
        self.member_ids
            .iter()
            .zip(&self.assignments)
            .filter(|(_, &c)| c == cluster)
            .map(|(m, _)| m.as_str())
            .collect()
    }
}

/// Cluster identified members into `k` groups and average their models.
/// Each centroid model uses the memory length most common among its members
/// (shorter wins ties).
pub fn build_cluster_model(
    members: &[(String, IdentifiedGroup)],
    k: usize,
    replicates: usize,
    seed: u64,
) -> Result<ClusterModel> {
    let points: Vec<Vec<f64>> = members
        .iter()
        .map(|(id, g)| Embedding::from_group(id.clone(), g).vector)
        .collect();
    let solution = kmeans_replicated(&points, k, replicates, seed)?;
    let weights: Vec<[f64; 6]> = members.iter().map(|(_, g)| row_weights(g.mode_rows)).collect();
    let mut centroid_params = Vec::with_capacity(k);
    let mut centroid_n_q_seconds = Vec::with_capacity(k);
    for c in 0..k {
        let idx: Vec<usize> = (0..members.len()).filter(|&i| solution.labels[i] == c).collect();
        if idx.is_empty() {
            return Err(Error::Selection(format!("cluster {c} of {k} is empty")));
        }
        let group: Vec<(TrustModelParams, [f64; 6])> =
            idx.iter().map(|&i| (members[i].1.params(), weights[i])).collect();
        centroid_params.push(centroid_params_checked(&group)?);
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for &i in &idx {
            *counts.entry(members[i].1.n_q_seconds.to_bits()).or_default() += 1;
        }
        let mut tally: Vec<(f64, usize)> = counts.into_iter().map(|(b, n)| (f64::from_bits(b), n)).collect();
        tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.total_cmp(&b.0)));
        centroid_n_q_seconds.push(tally[0].0);
    }
    Ok(ClusterModel {
        k,
        member_ids: members.iter().map(|(id, _)| id.clone()).collect(),
        assignments: solution.labels,
        centroids: solution.centroids,
        centroid_params,
        centroid_n_q_seconds,
        within_ss: solution.within_ss,
        weights,
    })
}

fn centroid_params_checked(group: &[(TrustModelParams, [f64; 6])]) -> Result<TrustModelParams> {
    let p = centroid_params(group)?;
    debug_assert!(crate::trust::spectral_radius(&p.alpha) <= 1.0 + ROOT_TOLERANCE);
    Ok(p)
}

/// Nearest centroid; ties go to the lower cluster id.
pub fn assign(embedding: &Embedding, model: &ClusterModel) -> Result<usize> {
    if model.centroids.is_empty() {
        return Err(Error::Config("cluster model has no centroids".into()));
    }
    if embedding.vector.len() != model.centroids[0].len() {
        return Err(Error::Schema(format!(
            "embedding has {} components, centroids have {}",
            embedding.vector.len(),
            model.centroids[0].len()
        )));
    }
    Ok(nearest(&embedding.vector, &model.centroids))
}

/// Asymmetry of a first-order response across the two interior modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseStyle {
    QuickToLoseSlowToGain,
    QuickToGainSlowToLose,
    Symmetric,
}

impl std::fmt::Display for ResponseStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::QuickToLoseSlowToGain => "quick-to-lose-slow-to-gain",
            Self::QuickToGainSlowToLose => "quick-to-gain-slow-to-lose",
            Self::Symmetric => "symmetric",
        })
    }
}

/// Tolerance on `|α − β|` for a symmetric response.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// A low-performance pole below the high-performance pole means trust
/// relaxes faster after losses than after gains.
pub fn classify_response_style(params: &TrustModelParams) -> Result<ResponseStyle> {
    if params.order != 1 {
        return Err(Error::Config(format!(
            "response style needs a first-order model, got order {}",
            params.order
        )));
    }
    let (a, b) = (params.alpha[0], params.beta[0]);
    Ok(if (a - b).abs() <= SYMMETRY_TOLERANCE {
        ResponseStyle::Symmetric
    } else if a < b {
        ResponseStyle::QuickToLoseSlowToGain
    } else {
        ResponseStyle::QuickToGainSlowToLose
    })
}
