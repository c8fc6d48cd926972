use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use trustbench::cluster::{classify_response_style, ClusterModel, KSelection, ResponseStyle};
use trustbench::eval::{
    compare_models, export_to_path, predict_series, scatter_points, taper_curve, write_run_csv, write_scatter_csv,
    write_taper_csv, ComparisonReport, ModelSet, FAMILY_CLUSTER, FAMILY_IND1, FAMILY_IND2, FAMILY_POP,
};
use trustbench::pipeline::{cluster_individuals, fitted, identify_individuals, split_cohort, PipelineOptions};
use trustbench::store::{Cohort, SessionSeries, TRAIN_SESSION};
use trustbench::study::StudyConfig;
use trustbench::synth::{generate_cohort, BlobSpec, CohortSpec};
use trustbench::sysid::{find_model_parameters, IdentifiedGroup};
use trustbench::trust::DomainConfig;
use trustbench::{Error, Result};
use trustbench_service::ServiceConfig;

use crate::{ClusterArgs, EvaluateArgs, IdentifyArgs, ServeArgs, SimulateArgs};

const INDIVIDUAL_DIR: &str = "individual";
const INDIVIDUAL2_DIR: &str = "individual2";
const GROUPS_DIR: &str = "groups";
const POPULATION_FILE: &str = "population.json";
const CLUSTER_FILE: &str = "cluster.json";

/// Contents of `cluster.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterFile {
    /// Present when `k` was selected rather than given.
    pub selection: Option<KSelection>,
    pub model: ClusterModel,
    /// Response style of each centroid model.
    pub styles: Vec<ResponseStyle>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    export_to_path(path, |mut f| {
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")?;
        Ok(())
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn safe_name(name: &str) -> Result<&str> {
    if !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        && !name.starts_with('.')
    {
        Ok(name)
    } else {
        Err(Error::Config(format!("{name:?} cannot be used as a file name")))
    }
}

fn validated(domain: DomainConfig) -> Result<DomainConfig> {
    domain.validate()?;
    Ok(domain)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let domain = validated(a.domain.config())?;
    let sampler = a.sampler.config();
    let mut spec = CohortSpec {
        members_per_blob: a.members_per_blob,
        noise_sd: a.noise_sd,
        seed: a.seed,
        domain,
        status_sampler: sampler,
        intervention_sampler: sampler,
        ..CohortSpec::default()
    };
    spec.world.fuel_seconds = a.fuel;
    if let Some(path) = &a.blobs {
        spec.blobs = read_json::<Vec<BlobSpec>>(path)?;
    }
    let (cohort, members) = generate_cohort(&spec)?;
    cohort.save_dir(&a.out)?;
    write_json(&a.out.join("members.json"), &members)?;
    let logs: usize = cohort.members.values().map(Vec::len).sum();
    println!(
        "wrote {logs} session logs for {} members to {}",
        members.len(),
        a.out.display()
    );
    Ok(())
}

fn training_series(cohort: &Cohort, cfg: &DomainConfig) -> Result<BTreeMap<String, SessionSeries>> {
    let mut out = BTreeMap::new();
    for (id, logs) in &cohort.members {
        let log = logs
            .iter()
            .find(|l| l.session_index == TRAIN_SESSION)
            .ok_or_else(|| Error::IncompleteMember {
                member: id.clone(),
                session: TRAIN_SESSION,
            })?;
        out.insert(id.clone(), log.to_series(cfg)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyPartition);
    }
    Ok(out)
}

fn describe(name: &str, g: &IdentifiedGroup) -> String {
    format!(
        "{name}: n_q* = {} s, alpha = {:?}, beta = {:?}, train error {:.3e}",
        g.n_q_seconds, g.theta.coeffs, g.phi.coeffs, g.train_error
    )
}

pub fn identify(a: &IdentifyArgs) -> Result<()> {
    let cfg = validated(a.domain.config())?;
    let order = a.order.get();
    let cohort = Cohort::load_dir(&a.cohort_dir)?;
    let train = training_series(&cohort, &cfg)?;
    if a.grouping.population {
        let all: Vec<SessionSeries> = train.into_values().collect();
        let g = find_model_parameters(&all, &a.nq_grid, order, &cfg)?;
        write_json(&a.out.join(POPULATION_FILE), &g)?;
        println!("{}", describe("population", &g));
    } else if a.grouping.individual {
        let fits = identify_individuals(&train, &a.nq_grid, order, &cfg)?;
        let dir = a.out.join(if order == 1 { INDIVIDUAL_DIR } else { INDIVIDUAL2_DIR });
        for (id, g) in &fits {
            write_json(&dir.join(format!("{}.json", safe_name(id)?)), g)?;
            println!("{}", describe(id, g));
        }
    } else if let Some(path) = &a.grouping.groups {
        let groups: BTreeMap<String, Vec<String>> = read_json(path)?;
        for (name, ids) in &groups {
            let sessions = ids
                .iter()
                .map(|id| {
                    train
                        .get(id)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("group {name} lists unknown member {id}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let g = find_model_parameters(&sessions, &a.nq_grid, order, &cfg)?;
            write_json(&a.out.join(GROUPS_DIR).join(format!("{}.json", safe_name(name)?)), &g)?;
            println!("{}", describe(name, &g));
        }
    }
    Ok(())
}

fn load_models(dir: &Path) -> Result<BTreeMap<String, IdentifiedGroup>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((id, read_json(&p)?))
        })
        .collect()
}

fn parse_k_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("invalid k range {s:?}; use e.g. 2-10 or 2,3,5"));
    let ks: Vec<usize> = if let Some((lo, hi)) = s.split_once('-') {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|k| k.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}

pub fn cluster(a: &ClusterArgs) -> Result<()> {
    let k_range = parse_k_range(&a.k_range)?;
    let individuals = load_models(&a.models.join(INDIVIDUAL_DIR))?;
    if individuals.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let opts = PipelineOptions {
        k: a.k,
        k_range,
        replicates: a.replicates,
        seed: a.seed,
        singleton_forbidden: !a.allow_singletons,
        ..PipelineOptions::default()
    };
    let (selection, model) = cluster_individuals(&individuals, &opts)?;
    let styles = model
        .centroid_params
        .iter()
        .map(classify_response_style)
        .collect::<Result<Vec<_>>>()?;
    for (c, style) in styles.iter().enumerate() {
        println!(
            "cluster {c}: {} members, {style}, alpha = {:?}, beta = {:?}",
            model.members_of(c).len(),
            model.centroid_params[c].alpha,
            model.centroid_params[c].beta
        );
    }
    let out = a.out.clone().unwrap_or_else(|| a.models.join(CLUSTER_FILE));
    write_json(
        &out,
        &ClusterFile {
            selection,
            model,
            styles,
        },
    )?;
    Ok(())
}

fn fitted_set(dir: &Path) -> Result<BTreeMap<String, trustbench::eval::FittedModel>> {
    if !dir.is_dir() {
        return Ok(BTreeMap::new());
    }
    Ok(load_models(dir)?
        .iter()
        .map(|(id, g)| (id.clone(), fitted(id.clone(), g)))
        .collect())
}

fn write_mse_table(report: &ComparisonReport, path: &Path) -> Result<()> {
    export_to_path(path, |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["family", "member", "mse"])?;
        for fam in report.families.iter().chain(&report.per_cluster) {
            for (member, e) in &fam.per_member {
                w.write_record([fam.name.as_str(), member.as_str(), &e.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    })
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = validated(a.domain.config())?;
    let cohort = Cohort::load_dir(&a.cohort_dir)?;
    let split = split_cohort(&cohort, &cfg)?;
    let population_path = a.models.join(POPULATION_FILE);
    let population: Option<IdentifiedGroup> = population_path
        .exists()
        .then(|| read_json(&population_path))
        .transpose()?;
    let cluster_path = a.models.join(CLUSTER_FILE);
    let clusters: Option<ClusterFile> = cluster_path.exists().then(|| read_json(&cluster_path)).transpose()?;
    let set = ModelSet {
        individual1: fitted_set(&a.models.join(INDIVIDUAL_DIR))?,
        individual2: fitted_set(&a.models.join(INDIVIDUAL2_DIR))?,
        population: population.as_ref().map(|g| fitted("population", g)),
        clusters: clusters.as_ref().map(|c| c.model.clone()),
    };
    if set.individual1.is_empty() && set.individual2.is_empty() && set.population.is_none() {
        return Err(Error::Config(format!("no models found in {}", a.models.display())));
    }
    let test: Vec<SessionSeries> = split.test.values().cloned().collect();
    let report = compare_models(&test, &set, &cfg)?;

    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("report.json"), &report)?;
    write_mse_table(&report, &a.out.join("mse.csv"))?;

    // Per-step prediction traces for every member and family.
    for (id, series) in &split.test {
        let mut runs = Vec::new();
        if let Some(m) = set.individual1.get(id) {
            runs.push((FAMILY_IND1, m.params.clone(), m.n_q));
        }
        if let Some(m) = set.individual2.get(id) {
            runs.push((FAMILY_IND2, m.params.clone(), m.n_q));
        }
        if let Some(m) = &set.population {
            runs.push((FAMILY_POP, m.params.clone(), m.n_q));
        }
        if let (Some(cm), Some(&c)) = (&set.clusters, report.assignments.get(id)) {
            runs.push((
                FAMILY_CLUSTER,
                cm.centroid_params[c].clone(),
                cfg.steps_for_seconds(cm.centroid_n_q_seconds[c]),
            ));
        }
        for (family, params, n_q) in runs {
            let run = predict_series(family, &params, n_q, series, &cfg)?;
            let path = a.out.join("runs").join(family).join(format!("{}.csv", safe_name(id)?));
            export_to_path(&path, |f| write_run_csv(&run, f))?;
        }
    }

    let members: Vec<(String, trustbench::trust::TrustModelParams)> = set
        .individual1
        .iter()
        .map(|(id, m)| (id.clone(), m.params.clone()))
        .collect();
    if !members.is_empty() {
        let points = scatter_points(&members, set.clusters.as_ref());
        export_to_path(&a.out.join("scatter.csv"), |f| write_scatter_csv(&points, f))?;
    }
    let taper_source = set
        .population
        .as_ref()
        .map(|m| m.params.clone())
        .or_else(|| members.first().map(|(_, p)| p.clone()));
    if let Some(params) = taper_source {
        for (name, high) in [("taper_low.csv", false), ("taper_high.csv", true)] {
            let samples = taper_curve(&params, high, 201)?;
            export_to_path(&a.out.join(name), |f| write_taper_csv(&samples, f))?;
        }
    }

    for fam in &report.families {
        println!(
            "{:<8} max MSE {:.6e} over {} members",
            fam.name,
            fam.max,
            fam.per_member.len()
        );
    }
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let mut study = StudyConfig::new("");
    study.domain = validated(a.domain.config())?;
    study.world.fuel_seconds = a.fuel;
    study.status_sampler = a.sampler.config();
    study.intervention_sampler = a.sampler.config();
    study.seed = a.seed;
    let cfg = ServiceConfig {
        data_dir: a.data_dir.clone(),
        static_dir: a.static_dir.clone(),
        time_scale: a.time_scale,
        display_rate_hz: a.display_rate,
        study,
    };
    cfg.validate()?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let data_dir = a.data_dir.clone();
    runtime.block_on(trustbench_service::bind_and_serve(a.listen, cfg, |addr| {
        println!("listening on http://{addr} (logs in {})", data_dir.display());
    }))?;
    Ok(())
}
