//! Configuration, stage functions and the end-to-end run.

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{grid_sample_actions, PolarPoint};
use crate::cablesim::{
    read_records, reflect_record, rollout, write_records, SimParams, Source, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::policy::{
    evaluate, is_feasible, make_targets, ArgminPolicy, CandidateSet, CastAndPullPolicy, EvalOptions,
    EvalReport, Policy,
};
use crate::regress::{combine_datasets, gp_fit, nn_train, BackendKind, ForwardModel, RegressionDataset};
use crate::sysid::{subsample_tune_set, tune_bo, tune_de, Optimizer, TuningResult};

pub use config::{
    EvalConfig, ExperimentConfig, GridConfig, GridsConfig, PolicyKind, RangeConfig, TrainConfig, TuneConfig,
    WorkspaceConfig,
};
pub use report::{confidence_ellipse, render_svg, write_error_csv, write_history_csv, write_report, Ellipse};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Which grid and label a generated dataset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Reference,
    Simulated,
}

impl Role {
    fn source(self) -> Source {
        match self {
            Role::Reference => Source::Reference,
            Role::Simulated => Source::Simulated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub grid_actions: usize,
    pub feasible: usize,
    pub unsettled: usize,
}

/// Roll out every feasible action of the role's grid under `params`.
pub fn generate_records(cfg: &ExperimentConfig, role: Role, params: &SimParams) -> Result<(Vec<TrajectoryRecord>, DatasetSummary)> {
    let grid = match role {
        Role::Reference => cfg.grids.reference.to_grid(),
        Role::Simulated => cfg.grids.simulated.to_grid(),
    };
    let opts = cfg.rollout_options();
    let actions = grid_sample_actions(&grid)?;
    let feasible: Vec<_> = actions.par_iter().filter(|a| is_feasible(a, &opts)).copied().collect();
    let mut records = feasible
        .par_iter()
        .map(|a| rollout(a, params, &opts))
        .collect::<Result<Vec<_>>>()?;
    for r in &mut records {
        r.meta.source = role.source();
    }
    let summary = DatasetSummary {
        grid_actions: actions.len(),
        feasible: records.len(),
        unsettled: records.iter().filter(|r| !r.meta.settled).count(),
    };
    log::info!(
        "{role:?} dataset: {} of {} grid actions feasible ({} unsettled)",
        summary.feasible,
        summary.grid_actions,
        summary.unsettled
    );
    Ok((records, summary))
}

/// [`generate_records`] written as JSON lines.
pub fn gen_dataset(cfg: &ExperimentConfig, role: Role, params: &SimParams, out: &Path) -> Result<DatasetSummary> {
    let (records, summary) = generate_records(cfg, role, params)?;
    write_records(out, &records)?;
    Ok(summary)
}

/// Subsample the tuning set and tune the configured parameter space.
pub fn tune_stage(cfg: &ExperimentConfig, reference: &[TrajectoryRecord]) -> Result<TuningResult> {
    let k = cfg.tune.k_subsample.min(reference.len());
    if k < cfg.tune.k_subsample {
        log::warn!("only {k} reference trajectories available for tuning");
    }
    let tune_set = subsample_tune_set(reference, k, cfg.stage_seed(cfg.tune.seed))?;
    let opts = cfg.rollout_options();
    let seed = cfg.stage_seed(cfg.tune.seed.wrapping_add(1));
    let res = match cfg.tune.optimizer {
        Optimizer::De => {
            let s = crate::sysid::DeSettings { seed, ..cfg.tune.de };
            tune_de(&tune_set, &cfg.param_space, &cfg.base_params, &opts, &s)?
        }
        Optimizer::Bo => {
            let s = crate::sysid::BoSettings { seed, ..cfg.tune.bo };
            tune_bo(&tune_set, &cfg.param_space, &cfg.base_params, &opts, &s)?
        }
    };
    log::info!(
        "tuned {:?} to {:?} with waypoint error {:.3e} m after {} evaluations",
        cfg.param_space.names,
        res.best,
        res.best_error,
        res.evaluations
    );
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub policy: PolicyKind,
    pub rows: usize,
    pub final_loss: Option<f64>,
    pub epochs: Option<usize>,
    /// Median distance between prediction and outcome on held-out rows, m.
    pub holdout_median: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(crate::policy::quantile(&v, 0.5))
}

/// Train the forward model of one ablation.
pub fn train_stage(
    cfg: &ExperimentConfig,
    kind: PolicyKind,
    reference: &[TrajectoryRecord],
    simulated: &[TrajectoryRecord],
) -> Result<(ForwardModel, TrainSummary)> {
    let seed = cfg.stage_seed(cfg.train.seed);
    let split = |recs: &[TrajectoryRecord], s: u64| -> Result<(RegressionDataset, RegressionDataset)> {
        RegressionDataset::from_records(recs).split(cfg.train.holdout, s)
    };
    let (real_tr, real_te) = split(reference, seed)?;
    let (sim_tr, sim_te) = split(simulated, seed.wrapping_add(1))?;
    let (train, test) = match kind {
        PolicyKind::Rd => (real_tr, real_te),
        PolicyKind::Sd => (sim_tr, sim_te),
        PolicyKind::R2s2r => {
            let mut test = real_te;
            test.extend(&sim_te);
            (combine_datasets(&real_tr, &sim_tr, &cfg.train.combine, seed.wrapping_add(2))?, test)
        }
    };
    if train.is_empty() {
        return Err(Error::invalid(format!("no training rows for policy {}", kind.name())));
    }
    let (model, loss, epochs) = match cfg.train.backend {
        BackendKind::Nn => {
            let (m, rep) = nn_train(&train, &cfg.train.nn_config(kind, seed.wrapping_add(3)))?;
            (m, Some(rep.final_loss), Some(rep.epochs_run))
        }
        BackendKind::Gp => (gp_fit(&train, None, &cfg.train.gp)?, None, None),
    };
    let errs = test
        .inputs
        .iter()
        .zip(&test.targets)
        .map(|(x, t)| Ok(model.predict(&crate::actions::Action::from_array(*x))?.distance(*t)))
        .collect::<Result<Vec<_>>>()?;
    let summary = TrainSummary {
        policy: kind,
        rows: train.len(),
        final_loss: loss,
        epochs,
        holdout_median: median(errs),
    };
    log::info!("trained {} on {} rows: {summary:?}", kind.name(), train.len());
    Ok((model, summary))
}

/// Targets of the configured evaluation.
pub fn eval_targets(cfg: &ExperimentConfig) -> Result<Vec<PolarPoint>> {
    let e = &cfg.eval;
    make_targets(
        e.n_targets,
        e.annulus,
        (e.sector_deg.0.to_radians(), e.sector_deg.1.to_radians()),
        cfg.stage_seed(e.seed),
    )
}

/// Evaluate `policy` against the hidden truth parameters.
pub fn eval_stage(cfg: &ExperimentConfig, policy: &dyn Policy) -> Result<EvalReport> {
    let targets = eval_targets(cfg)?;
    let noise = (cfg.eval.noise > 0.0).then_some(cfg.eval.noise);
    let opts = EvalOptions {
        rollout: cfg.rollout_options(),
        seed: cfg.stage_seed(cfg.eval.seed.wrapping_add(1)),
    };
    evaluate(policy, &targets, &cfg.truth_params, cfg.eval.trials, noise, &opts)
}

/// Candidate actions of the configured grid.
pub fn candidate_set(cfg: &ExperimentConfig) -> Result<CandidateSet> {
    CandidateSet::from_grid(&cfg.grids.candidates.to_grid(), &cfg.rollout_options())
}

/// Reflect every record of a dataset file across the symmetry axis.
pub fn mirror_dataset(input: &Path, output: &Path) -> Result<usize> {
    let recs = read_records(input)?;
    let out: Vec<_> = recs.iter().map(reflect_record).collect();
    write_records(output, &out)?;
    Ok(out.len())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    /// Model file, absent for cast-and-pull.
    pub model: Option<String>,
    pub report: String,
    pub train: Option<TrainSummary>,
    /// Error quantiles as fractions of the cable length.
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Record of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub config: String,
    pub stages: Vec<StageRecord>,
    pub reference: Option<DatasetSummary>,
    pub simulated: Option<DatasetSummary>,
    pub tuning: Option<String>,
    /// Relative error of each tuned parameter against the hidden truth.
    pub tuned_relative_errors: BTreeMap<String, f64>,
    pub policies: BTreeMap<String, PolicySummary>,
    pub error: Option<String>,
}

impl RunManifest {
    /// True when every listed output exists under `dir`.
    pub fn outputs_exist(&self, dir: &Path) -> bool {
        self.stages.iter().flat_map(|s| &s.outputs).all(|p| dir.join(p).exists())
    }

    /// Same content with wall-clock times zeroed.
    pub fn without_timings(&self) -> Self {
        let mut m = self.clone();
        m.stages.iter_mut().for_each(|s| s.seconds = 0.0);
        m
    }
}

/// Extra inputs of [`run_r2s2r`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Use these reference records instead of generating them from the
    /// hidden truth parameters.
    pub reference_file: Option<PathBuf>,
}

struct Runner<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl Runner<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<(T, Vec<String>)>) -> Result<T> {
        log::info!("stage {name}");
        let t = Instant::now();
        match f(self.dir) {
            Ok((v, outputs)) => {
                self.manifest.stages.push(StageRecord {
                    name: name.to_string(),
                    outputs,
                    seconds: t.elapsed().as_secs_f64(),
                });
                Ok(v)
            }
            Err(e) => {
                let e = e.in_stage(name);
                self.manifest.error = Some(e.to_string());
                let _ = write_json(&self.dir.join("manifest.json"), &self.manifest);
                Err(e)
            }
        }
    }
}

/// Reference data, tuning, simulated data, training, evaluation and report,
/// with every artifact written under `out`.
pub fn run_r2s2r(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_config(cfg, out)?;
    let mut run = Runner {
        dir: out,
        manifest: RunManifest {
            version: VERSION.to_string(),
            config_hash: cfg.hash(),
            config: "config.toml".into(),
            stages: Vec::new(),
            reference: None,
            simulated: None,
            tuning: None,
            tuned_relative_errors: BTreeMap::new(),
            policies: BTreeMap::new(),
            error: None,
        },
    };

    let reference = run.stage("reference", |dir| {
        let recs = match &opts.reference_file {
            Some(p) => read_records(p)?,
            None => generate_records(cfg, Role::Reference, &cfg.truth_params)?.0,
        };
        if recs.is_empty() {
            return Err(Error::invalid("reference dataset is empty"));
        }
        write_records(&dir.join("reference.jsonl"), &recs)?;
        Ok((recs, vec!["reference.jsonl".into()]))
    })?;
    if opts.reference_file.is_none() {
        run.manifest.reference = Some(summary_of(&reference, cfg, Role::Reference)?);
    }

    let tuning = run.stage("tune", |dir| {
        let res = tune_stage(cfg, &reference)?;
        write_json(&dir.join("tuning.json"), &res)?;
        Ok((res, vec!["tuning.json".into()]))
    })?;
    run.manifest.tuning = Some("tuning.json".into());
    for ((n, _), rel) in cfg.param_space.names.iter().zip(&tuning.best).zip(tuning.relative_errors(&cfg.truth_params)) {
        run.manifest.tuned_relative_errors.insert(n.name().to_string(), rel);
    }

    let needs_sim = cfg.train.policies.iter().any(|p| *p != PolicyKind::Rd);
    let simulated = if needs_sim {
        let (recs, summary) = run.stage("simulate", |dir| {
            let (recs, summary) = generate_records(cfg, Role::Simulated, &tuning.best_params)?;
            write_records(&dir.join("simulated.jsonl"), &recs)?;
            Ok(((recs, summary), vec!["simulated.jsonl".into()]))
        })?;
        run.manifest.simulated = Some(summary);
        recs
    } else {
        Vec::new()
    };

    let mut kinds = cfg.train.policies.clone();
    kinds.sort();
    kinds.dedup();
    let models = run.stage("train", |dir| {
        let trained = kinds
            .par_iter()
            .map(|&k| train_stage(cfg, k, &reference, &simulated))
            .collect::<Result<Vec<_>>>()?;
        let mut outputs = Vec::new();
        for (k, (m, _)) in kinds.iter().zip(&trained) {
            let rel = format!("models/{}.json", k.name());
            m.save(&dir.join(&rel))?;
            outputs.push(rel);
        }
        Ok((trained, outputs))
    })?;

    let reports = run.stage("eval", |dir| {
        let cands = candidate_set(cfg)?;
        let mut reports = Vec::new();
        let mut outputs = Vec::new();
        for (k, (m, summary)) in kinds.iter().zip(&models) {
            let policy = ArgminPolicy {
                predictor: m,
                candidates: &cands,
            };
            let rep = eval_stage(cfg, &policy)?;
            let rel = format!("eval/{}.json", k.name());
            write_json(&dir.join(&rel), &rep)?;
            outputs.push(rel.clone());
            reports.push((k.name().to_string(), Some(format!("models/{}.json", k.name())), Some(summary.clone()), rel, rep));
        }
        if cfg.eval.cast_and_pull {
            let rep = eval_stage(cfg, &CastAndPullPolicy)?;
            let rel = "eval/cast_and_pull.json".to_string();
            write_json(&dir.join(&rel), &rep)?;
            outputs.push(rel.clone());
            reports.push(("cast_and_pull".into(), None, None, rel, rep));
        }
        Ok((reports, outputs))
    })?;
    for (name, model, train, path, rep) in &reports {
        let s = rep.stats;
        log::info!("policy {name}: median error {:.1}% of cable length", 100.0 * s.median);
        run.manifest.policies.insert(
            name.clone(),
            PolicySummary {
                model: model.clone(),
                report: path.clone(),
                train: train.clone(),
                median: s.median,
                q1: s.q1,
                q3: s.q3,
                min: s.min,
                max: s.max,
            },
        );
    }

    let manifest_so_far = run.manifest.clone();
    run.stage("report", |dir| Ok(((), write_report(&manifest_so_far, dir, cfg)?)))?;

    write_json(&out.join("manifest.json"), &run.manifest)?;
    Ok(run.manifest)
}

fn summary_of(recs: &[TrajectoryRecord], cfg: &ExperimentConfig, role: Role) -> Result<DatasetSummary> {
    let grid = match role {
        Role::Reference => cfg.grids.reference.to_grid(),
        Role::Simulated => cfg.grids.simulated.to_grid(),
    };
    Ok(DatasetSummary {
        grid_actions: grid.len(),
        feasible: recs.len(),
        unsettled: recs.iter().filter(|r| !r.meta.settled).count(),
    })
}

/// Write the resolved config next to the run outputs.
pub fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))
}
