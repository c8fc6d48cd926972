//! Free-run prediction, error scoring and model comparison.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{assign, ClusterModel, Embedding};
use crate::error::{Error, Result};
use crate::store::SessionSeries;
use crate::trust::{
    characteristic_root_magnitudes, effective_coefficients, performance_series, select_mode, step_trust_with_mode,
    DomainConfig, ModeId, TrustModelParams, TrustState,
};

/// Measured and predicted trust for one member under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRun {
    pub model_id: String,
    pub member_id: String,
    pub dt: f64,
    pub performance: Vec<f64>,
    pub measured: Vec<f64>,
    pub predicted: Vec<f64>,
    /// Mode active at each step of the prediction.
    pub modes: Vec<ModeId>,
    pub events: Vec<bool>,
}

impl PredictionRun {
    pub fn len(&self) -> usize {
        self.measured.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measured.is_empty()
    }
}

/// Roll the model forward over `p_series` without looking at measured
/// trust. Element `i` is the prediction at step `i + 1`, starting from the
/// current value of `initial`; the mode is the one selected at that step.
pub fn free_run_predict(
    params: &TrustModelParams,
    initial: &TrustState,
    p_series: &[f64],
) -> Result<(Vec<f64>, Vec<ModeId>)> {
    let mut state = initial.clone();
    let mut trust = Vec::with_capacity(p_series.len());
    let mut modes = Vec::with_capacity(p_series.len());
    for &p in p_series {
        trust.push(state.current());
        let (next, mode) = step_trust_with_mode(&state, p, params)?;
        modes.push(mode);
        state = next;
    }
    Ok((trust, modes))
}

/// Predict a session's trust with `params` and memory length `n_q` (steps).
pub fn predict_series(
    model_id: impl Into<String>,
    params: &TrustModelParams,
    n_q: usize,
    series: &SessionSeries,
    cfg: &DomainConfig,
) -> Result<PredictionRun> {
    let performance = performance_series(&series.status, n_q, cfg)?;
    let initial = TrustState::new(series.initial_trust, params.order);
    let (predicted, modes) = free_run_predict(params, &initial, &performance)?;
    Ok(PredictionRun {
        model_id: model_id.into(),
        member_id: series.member_id.clone(),
        dt: series.dt,
        performance,
        measured: series.trust.clone(),
        predicted,
        modes,
        events: series.status_event.clone(),
    })
}

pub fn mse_of(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    if measured.len() != predicted.len() {
        return Err(Error::Schema(format!(
            "series lengths differ: {} measured, {} predicted",
            measured.len(),
            predicted.len()
        )));
    }
    if measured.is_empty() {
        return Err(Error::InsufficientData("mean squared error of an empty series".into()));
    }
    let sum: f64 = measured.iter().zip(predicted).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sum / measured.len() as f64)
}

pub fn mse(run: &PredictionRun) -> Result<f64> {
    mse_of(&run.measured, &run.predicted)
}

/// A trust model together with the memory length it was fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub id: String,
    pub params: TrustModelParams,
    /// Memory length, steps.
    pub n_q: usize,
}

/// Models compared on the test sessions.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    /// First-order individual models, keyed by member.
    pub individual1: BTreeMap<String, FittedModel>,
    /// Second-order individual models, keyed by member.
    pub individual2: BTreeMap<String, FittedModel>,
    pub population: Option<FittedModel>,
    pub clusters: Option<ClusterModel>,
}

pub const FAMILY_IND1: &str = "Ind1";
pub const FAMILY_IND2: &str = "Ind2";
pub const FAMILY_POP: &str = "Pop";
pub const FAMILY_CLUSTER: &str = "Cluster";

/// Per-member test error of one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub name: String,
    pub per_member: BTreeMap<String, f64>,
    pub max: f64,
}

impl FamilyResult {
    fn new(name: impl Into<String>, per_member: BTreeMap<String, f64>) -> Self {
        let max = per_member.values().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            name: name.into(),
            per_member,
            max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub families: Vec<FamilyResult>,
    /// Cluster of each member, when a cluster model was supplied.
    pub assignments: BTreeMap<String, usize>,
    /// Errors of the cluster family restricted to each cluster's members.
    pub per_cluster: Vec<FamilyResult>,
}

impl ComparisonReport {
    pub fn family(&self, name: &str) -> Option<&FamilyResult> {
        self.families.iter().find(|f| f.name == name)
    }
}

/// Test error of every member under every supplied model family. A member
/// takes its cluster from its first-order individual embedding.
pub fn compare_models(test: &[SessionSeries], models: &ModelSet, cfg: &DomainConfig) -> Result<ComparisonReport> {
    if test.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let score = |model: &FittedModel, series: &SessionSeries| -> Result<f64> {
        mse(&predict_series(&model.id, &model.params, model.n_q, series, cfg)?)
    };
    let individual = |set: &BTreeMap<String, FittedModel>, name: &str| -> Result<Option<FamilyResult>> {
        if set.is_empty() {
            return Ok(None);
        }
        let scores = test
            .par_iter()
            .map(|s| {
                let m = set
                    .get(&s.member_id)
                    .ok_or_else(|| Error::Config(format!("no {name} model for member {}", s.member_id)))?;
                Ok((s.member_id.clone(), score(m, s)?))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Some(FamilyResult::new(name, scores)))
    };

    let mut families = Vec::new();
    families.extend(individual(&models.individual1, FAMILY_IND1)?);
    families.extend(individual(&models.individual2, FAMILY_IND2)?);
    if let Some(pop) = &models.population {
        let scores = test
            .par_iter()
            .map(|s| Ok((s.member_id.clone(), score(pop, s)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        families.push(FamilyResult::new(FAMILY_POP, scores));
    }

    let mut assignments = BTreeMap::new();
    let mut per_cluster = Vec::new();
    if let Some(cm) = &models.clusters {
        let rows =
            test.par_iter()
                .map(|s| {
                    let ind = models.individual1.get(&s.member_id).ok_or_else(|| {
                        Error::Config(format!("member {} has no individual model to embed", s.member_id))
                    })?;
                    let c = assign(&Embedding::from_params(&s.member_id, &ind.params), cm)?;
                    let model = FittedModel {
                        id: format!("cluster-{c}"),
                        params: cm.centroid_params[c].clone(),
                        n_q: cfg.steps_for_seconds(cm.centroid_n_q_seconds[c]),
                    };
                    Ok((s.member_id.clone(), c, score(&model, s)?))
                })
                .collect::<Result<Vec<_>>>()?;
        let mut all = BTreeMap::new();
        let mut by_cluster = vec![BTreeMap::new(); cm.k];
        for (member, c, e) in rows {
            assignments.insert(member.clone(), c);
            by_cluster[c].insert(member.clone(), e);
            all.insert(member, e);
        }
        families.push(FamilyResult::new(FAMILY_CLUSTER, all));
        per_cluster = by_cluster
            .into_iter()
            .enumerate()
            .filter(|(_, m)| !m.is_empty())
            .map(|(c, m)| FamilyResult::new(format!("cluster-{c}"), m))
            .collect();
    }
    Ok(ComparisonReport {
        families,
        assignments,
        per_cluster,
    })
}

fn num(x: f64) -> String {
    // `Display` for f64 prints the shortest string that round-trips.
    x.to_string()
}

/// Columns `time, P, T, T_hat, mode, events`, one row per step.
pub fn write_run_csv(run: &PredictionRun, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "P", "T", "T_hat", "mode", "events"])?;
    for i in 0..run.len() {
        w.write_record([
            num((i + 1) as f64 * run.dt),
            num(run.performance[i]),
            num(run.measured[i]),
            num(run.predicted[i]),
            run.modes[i].get().to_string(),
            u8::from(run.events.get(i).copied().unwrap_or(false)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One point of a scatter export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    /// `pole`, `embedding` or `centroid`.
    pub kind: String,
    pub id: String,
    pub cluster: Option<usize>,
    pub values: Vec<f64>,
}

/// Dominant interior-mode pole magnitudes `(|λ₂|, |λ₅|)` of a model.
pub fn pole_pair(params: &TrustModelParams) -> (f64, f64) {
    let dominant = |c: &[f64]| {
        if c.len() == 1 {
            c[0]
        } else {
            characteristic_root_magnitudes(c).into_iter().fold(0.0, f64::max)
        }
    };
    (dominant(&params.alpha), dominant(&params.beta))
}

/// Scatter data for identified members and a cluster model.
pub fn scatter_points(members: &[(String, TrustModelParams)], clusters: Option<&ClusterModel>) -> Vec<ScatterPoint> {
    let cluster_of = |id: &str| clusters.and_then(|cm| cm.assignment_map().get(id).copied());
    let mut out = Vec::new();
    for (id, p) in members {
        let (a, b) = pole_pair(p);
        out.push(ScatterPoint {
            kind: "pole".into(),
            id: id.clone(),
            cluster: cluster_of(id),
            values: vec![a, b],
        });
        out.push(ScatterPoint {
            kind: "embedding".into(),
            id: id.clone(),
            cluster: cluster_of(id),
            values: Embedding::from_params(id.clone(), p).vector,
        });
    }
    if let Some(cm) = clusters {
        for (c, v) in cm.centroids.iter().enumerate() {
            out.push(ScatterPoint {
                kind: "centroid".into(),
                id: format!("cluster-{c}"),
                cluster: Some(c),
                values: v.clone(),
            });
        }
    }
    out
}

/// Columns `kind, id, cluster, v0, v1, …`; short rows are padded with empty
/// fields.
pub fn write_scatter_csv(points: &[ScatterPoint], out: impl Write) -> Result<()> {
    let width = points.iter().map(|p| p.values.len()).max().unwrap_or(2);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["kind".to_string(), "id".into(), "cluster".into()];
    header.extend((0..width).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![
            p.kind.clone(),
            p.id.clone(),
            p.cluster.map(|c| c.to_string()).unwrap_or_default(),
        ];
        row.extend(p.values.iter().map(|&v| num(v)));
        row.resize(3 + width, String::new());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One sample of the performance gain as a function of trust.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperSample {
    pub t: f64,
    pub mode: ModeId,
    pub b: f64,
}

/// Effective performance gain over an evenly spaced trust grid, on the side
/// of the performance threshold selected by `high_performance`.
pub fn taper_curve(params: &TrustModelParams, high_performance: bool, points: usize) -> Result<Vec<TaperSample>> {
    if points < 2 {
        return Err(Error::Config("a taper curve needs at least two points".into()));
    }
    let d = &params.domain;
    let p = if high_performance { d.p_star } else { d.p_star - 1.0 };
    (0..points)
        .map(|i| {
            let t = d.t_min + (d.t_max - d.t_min) * i as f64 / (points - 1) as f64;
            let mode = select_mode(p, t, d)?;
            Ok(TaperSample {
                t,
                mode,
                b: effective_coefficients(mode, t, params).b,
            })
        })
        .collect()
}

pub fn write_taper_csv(samples: &[TaperSample], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["T", "mode", "B"])?;
    for s in samples {
        w.write_record([num(s.t), s.mode.get().to_string(), num(s.b)])?;
    }
    w.flush()?;
    Ok(())
}

/// Write with any of the exporters to a file. The file appears complete or
/// not at all.
pub fn export_to_path(path: &Path, write: impl FnOnce(std::fs::File) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let file = std::fs::File::create(&tmp)?;
    if let Err(e) = write(file) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e);
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn cfg() -> DomainConfig {
        DomainConfig::default()
    }

    #[test]
    fn frozen_dynamics_stay_constant() {
        let mut p = TrustModelParams::first_order(1.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        p.domain.tau1 = 0.0;
        p.domain.tau2 = 1.0;
        let (t, _) = free_run_predict(&p, &TrustState::new(0.4, 1), &[0.3, -0.2, 0.0, 5.0]).unwrap();
        assert_eq!(t, vec![0.4; 4]);
    }

    #[test]
    fn population_rises_under_positive_performance() {
        let p = fixtures::population();
        let (t, modes) = free_run_predict(&p, &TrustState::new(0.5, 1), &[0.001; 200]).unwrap();
        let mut i = 0;
        while i + 1 < t.len() && modes[i] == ModeId::HIGH_PERFORMANCE {
            assert!(t[i + 1] > t[i]);
            i += 1;
        }
        assert!(i > 10);
        assert!(t.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn mse_arithmetic() {
        assert!((mse_of(&[0.6], &[0.5]).unwrap() - 0.01).abs() < 1e-15);
        let a = vec![0.3; 17];
        let b: Vec<f64> = a.iter().map(|x| x + 0.05).collect();
        let e = mse_of(&a, &b).unwrap();
        assert!((e - 2.5e-3).abs() < 1e-15);
        assert_eq!(mse_of(&a, &a).unwrap(), 0.0);
        assert!(mse_of(&[], &[]).is_err());
        assert!(mse_of(&[1.0], &[]).is_err());
    }

    fn series(member: &str, status: Vec<f64>, trust: Vec<f64>) -> SessionSeries {
        let n = status.len();
        SessionSeries {
            member_id: member.into(),
            session_index: 2,
            dt: 0.5,
            initial_trust: trust[0],
            status,
            trust,
            intervention: vec![5.5; n],
            status_event: vec![false; n],
        }
    }

    #[test]
    fn self_consistent_prediction_is_exact() {
        let truth = TrustModelParams::first_order(0.95, 0.9, 0.3, 0.2, 0.025, 0.05);
        let status: Vec<f64> = (0..300).map(|i| (i / 20) as f64 * 3.0).collect();
        let p = performance_series(&status, 20, &cfg()).unwrap();
        let (trust, _) = free_run_predict(&truth, &TrustState::new(0.5, 1), &p).unwrap();
        let s = series("a", status, trust);
        let run = predict_series("truth", &truth, 20, &s, &cfg()).unwrap();
        assert_eq!(mse(&run).unwrap(), 0.0);

        let mut models = ModelSet::default();
        models.individual1.insert(
            "a".into(),
            FittedModel {
                id: "a".into(),
                params: truth.clone(),
                n_q: 20,
            },
        );
        models.population = Some(FittedModel {
            id: "pop".into(),
            params: fixtures::population(),
            n_q: 60,
        });
        let report = compare_models(&[s], &models, &cfg()).unwrap();
        let ind = report.family(FAMILY_IND1).unwrap();
        assert_eq!(ind.per_member["a"], 0.0);
        assert!(ind.max <= report.family(FAMILY_POP).unwrap().max);
    }

    #[test]
    fn run_export_rows() {
        let status: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let s = series("a", status, vec![0.5; 7]);
        let run = predict_series("pop", &fixtures::population(), 4, &s, &cfg()).unwrap();
        let mut buf = Vec::new();
        write_run_csv(&run, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time,P,T,T_hat,mode,events");
        assert_eq!(lines.len(), 8);
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.unwrap();
            assert_eq!(rec[3].parse::<f64>().unwrap(), run.predicted[i]);
            assert_eq!(rec[1].parse::<f64>().unwrap(), run.performance[i]);
        }

        let empty = PredictionRun {
            model_id: "m".into(),
            member_id: "a".into(),
            dt: 0.5,
            performance: vec![],
            measured: vec![],
            predicted: vec![],
            modes: vec![],
            events: vec![],
        };
        let mut buf = Vec::new();
        write_run_csv(&empty, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn taper_shape() {
        let p = fixtures::population();
        let curve = taper_curve(&p, true, 2001).unwrap();
        let d = p.domain;
        for s in &curve {
            // Independent piecewise-linear shape: rises from 0 at t_min,
            // flat at δ inside the band, falls to 0 at t_max.
            let expect = if s.t < d.tau1 {
                p.delta * (s.t - d.t_min) / (d.tau1 - d.t_min)
            } else if s.t > d.tau2 {
                p.delta * (d.t_max - s.t) / (d.t_max - d.tau2)
            } else {
                p.delta
            };
            assert!((s.b - expect).abs() < 1e-9, "t={} b={} expect={}", s.t, s.b, expect);
        }
        assert_eq!(curve.first().unwrap().b, 0.0);
        assert!(curve.last().unwrap().b.abs() < 1e-12);
        let mut buf = Vec::new();
        write_taper_csv(&curve, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2002);
    }

    #[test]
    fn scatter_export_pads_rows() {
        let mut second = fixtures::population();
        second.order = 2;
        second.alpha = vec![0.9, 0.05];
        second.beta = vec![0.5, 0.1];
        let pts = scatter_points(&[("a".into(), fixtures::population()), ("b".into(), second)], None);
        let mut buf = Vec::new();
        write_scatter_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kind,id,cluster,v0,v1,v2,v3\n"));
        assert_eq!(text.lines().count(), 5);
        assert_eq!(pole_pair(&fixtures::pessimistic_cluster()), (0.988, 0.997));
    }
}
