//! Identify, cluster and evaluate a whole cohort.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{build_cluster_model, select_k, ClusterModel, Embedding, KSelection};
use crate::error::{Error, Result};
use crate::eval::{compare_models, ComparisonReport, FittedModel, ModelSet};
use crate::store::{Cohort, SessionSeries};
use crate::sysid::{find_model_parameters, IdentifiedGroup};
use crate::trust::DomainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub nq_grid_seconds: Vec<f64>,
    /// Also fit second-order individual models.
    pub second_order: bool,
    /// Fixed cluster count; `None` selects one from `k_range`.
    pub k: Option<usize>,
    pub k_range: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub singleton_forbidden: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            nq_grid_seconds: crate::sysid::NQ_GRID_SECONDS.to_vec(),
            second_order: false,
            k: None,
            k_range: crate::cluster::DEFAULT_K_RANGE.collect(),
            replicates: crate::cluster::DEFAULT_REPLICATES,
            seed: 0,
            singleton_forbidden: true,
        }
    }
}

/// Training and test series of every member.
#[derive(Debug, Clone)]
pub struct SplitCohort {
    pub train: BTreeMap<String, SessionSeries>,
    pub test: BTreeMap<String, SessionSeries>,
}

pub fn split_cohort(cohort: &Cohort, cfg: &DomainConfig) -> Result<SplitCohort> {
    let mut train = BTreeMap::new();
    let mut test = BTreeMap::new();
    for id in cohort.member_ids() {
        let (tr, te) = cohort.split(&id)?;
        train.insert(id.clone(), tr.to_series(cfg)?);
        test.insert(id, te.to_series(cfg)?);
    }
    if train.is_empty() {
        return Err(Error::EmptyPartition);
    }
    Ok(SplitCohort { train, test })
}

/// Fit one model per member on its training session.
pub fn identify_individuals(
    train: &BTreeMap<String, SessionSeries>,
    grid: &[f64],
    order: usize,
    cfg: &DomainConfig,
) -> Result<BTreeMap<String, IdentifiedGroup>> {
    train
        .par_iter()
        .map(|(id, s)| {
            find_model_parameters(std::slice::from_ref(s), grid, order, cfg)
                .map(|g| (id.clone(), g))
                .map_err(|e| Error::IdentificationFailed(format!("member {id}: {e}")))
        })
        .collect()
}

/// Fit one model on the training sessions of all members.
pub fn identify_population(
    train: &BTreeMap<String, SessionSeries>,
    grid: &[f64],
    cfg: &DomainConfig,
) -> Result<IdentifiedGroup> {
    let all: Vec<SessionSeries> = train.values().cloned().collect();
    find_model_parameters(&all, grid, 1, cfg)
}

pub fn fitted(id: impl Into<String>, g: &IdentifiedGroup) -> FittedModel {
    FittedModel {
        id: id.into(),
        params: g.params(),
        n_q: g.n_q_star,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineResult {
    pub individual1: BTreeMap<String, IdentifiedGroup>,
    pub individual2: BTreeMap<String, IdentifiedGroup>,
    pub population: IdentifiedGroup,
    pub selection: Option<KSelection>,
    pub clusters: ClusterModel,
    pub report: ComparisonReport,
}

/// Cluster first-order individual models with a fixed or selected `k`.
pub fn cluster_individuals(
    individuals: &BTreeMap<String, IdentifiedGroup>,
    opts: &PipelineOptions,
) -> Result<(Option<KSelection>, ClusterModel)> {
    let members: Vec<(String, IdentifiedGroup)> = individuals.iter().map(|(id, g)| (id.clone(), g.clone())).collect();
    let (selection, k) = match opts.k {
        Some(k) => (None, k),
        None => {
            let points: Vec<Vec<f64>> = members
                .iter()
                .map(|(id, g)| Embedding::from_group(id.clone(), g).vector)
                .collect();
            let sel = select_k(
                &points,
                &opts.k_range,
                opts.replicates,
                opts.seed,
                opts.singleton_forbidden,
            )?;
            let k = sel.k;
            (Some(sel), k)
        }
    };
    let model = build_cluster_model(&members, k, opts.replicates, opts.seed)?;
    Ok((selection, model))
}

/// Identify individual and population models on the training sessions,
/// cluster the individuals and score every family on the test sessions.
pub fn run_pipeline(cohort: &Cohort, opts: &PipelineOptions, cfg: &DomainConfig) -> Result<PipelineResult> {
    let split = split_cohort(cohort, cfg)?;
    let individual1 = identify_individuals(&split.train, &opts.nq_grid_seconds, 1, cfg)?;
    let individual2 = if opts.second_order {
        identify_individuals(&split.train, &opts.nq_grid_seconds, 2, cfg)?
    } else {
        BTreeMap::new()
    };
    let population = identify_population(&split.train, &opts.nq_grid_seconds, cfg)?;
    let (selection, clusters) = cluster_individuals(&individual1, opts)?;

    let models = ModelSet {
        individual1: individual1
            .iter()
            .map(|(id, g)| (id.clone(), fitted(id.clone(), g)))
            .collect(),
        individual2: individual2
            .iter()
            .map(|(id, g)| (id.clone(), fitted(id.clone(), g)))
            .collect(),
        population: Some(fitted("population", &population)),
        clusters: Some(clusters.clone()),
    };
    let test: Vec<SessionSeries> = split.test.into_values().collect();
    let report = compare_models(&test, &models, cfg)?;
    Ok(PipelineResult {
        individual1,
        individual2,
        population,
        selection,
        clusters,
        report,
    })
}
