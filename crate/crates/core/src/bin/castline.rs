use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use castline::cablesim::{read_records, SimParams};
use castline::pipeline::{
    self, read_json, write_json, ExperimentConfig, PolicyKind, Role, RunManifest, RunOptions,
};
use castline::policy::{ArgminPolicy, CastAndPullPolicy};
use castline::regress::ForwardModel;
use castline::sysid::TuningResult;
use castline::{Error, Result};

#[derive(Parser)]
#[command(name = "castline", version, about = "Planar cable casting: tune, learn and evaluate")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Reference,
    Simulated,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Rd,
    Sd,
    R2s2r,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a grid of actions and write JSON-lines records.
    GenDataset {
        #[arg(long, value_enum)]
        role: RoleArg,
        /// Simulator parameters: a tuning result or a SimParams JSON file.
        /// Defaults to the hidden truth for `reference` and the base
        /// parameters for `simulated`.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Fit simulator parameters to reference records.
    Tune {
        #[arg(long)]
        reference: PathBuf,
    },
    /// Train a forward model for one policy.
    Train {
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        simulated: Option<PathBuf>,
    },
    /// Evaluate a trained model, or the cast-and-pull baseline, against the
    /// truth simulator.
    Eval {
        #[arg(long, required_unless_present = "cast_and_pull")]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "model")]
        cast_and_pull: bool,
        /// Also write a scatter plot next to the report.
        #[arg(long)]
        svg: bool,
    },
    /// Full pipeline: reference, tune, simulate, train, eval, report.
    Run {
        /// Use these reference records instead of generating them.
        #[arg(long)]
        reference_file: Option<PathBuf>,
    },
    /// Re-render the plots and CSVs of a finished run.
    Report {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Reflect a dataset across the symmetry axis.
    Mirror {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn load_params(path: &Path) -> Result<SimParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    if let Ok(t) = serde_json::from_str::<TuningResult>(&text) {
        return Ok(t.best_params);
    }
    let p: SimParams = serde_json::from_str(&text)?;
    p.validate()?;
    Ok(p)
}

fn records_or_empty(p: Option<&PathBuf>) -> Result<Vec<castline::cablesim::TrajectoryRecord>> {
    p.map_or(Ok(Vec::new()), |p| read_records(p))
}

fn execute(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    match cmd {
        Command::GenDataset { role, params } => {
            let (role, default) = match role {
                RoleArg::Reference => (Role::Reference, cfg.truth_params),
                RoleArg::Simulated => (Role::Simulated, cfg.base_params),
            };
            let params = params.as_deref().map(load_params).transpose()?.unwrap_or(default);
            let name = match role {
                Role::Reference => "reference.jsonl",
                Role::Simulated => "simulated.jsonl",
            };
            let s = pipeline::gen_dataset(cfg, role, &params, &out.join(name)).map_err(|e| e.in_stage("gen-dataset"))?;
            println!("{} of {} actions feasible ({} unsettled)", s.feasible, s.grid_actions, s.unsettled);
        }
        Command::Tune { reference } => {
            let recs = read_records(&reference).map_err(|e| e.in_stage("tune"))?;
            let res = pipeline::tune_stage(cfg, &recs).map_err(|e| e.in_stage("tune"))?;
            write_json(&out.join("tuning.json"), &res)?;
            println!("best error {:.3e} m after {} evaluations", res.best_error, res.evaluations);
        }
        Command::Train {
            policy,
            reference,
            simulated,
        } => {
            let kind = match policy {
                PolicyArg::Rd => PolicyKind::Rd,
                PolicyArg::Sd => PolicyKind::Sd,
                PolicyArg::R2s2r => PolicyKind::R2s2r,
            };
            let real = records_or_empty(reference.as_ref()).map_err(|e| e.in_stage("train"))?;
            let sim = records_or_empty(simulated.as_ref()).map_err(|e| e.in_stage("train"))?;
            let (model, summary) = pipeline::train_stage(cfg, kind, &real, &sim).map_err(|e| e.in_stage("train"))?;
            model.save(&out.join(format!("models/{}.json", kind.name())))?;
            println!("{summary:?}");
        }
        Command::Eval {
            model,
            cast_and_pull,
            svg,
        } => {
            let (name, rep) = if cast_and_pull {
                ("cast_and_pull".to_string(), pipeline::eval_stage(cfg, &CastAndPullPolicy))
            } else {
                let path = model.expect("clap enforces --model");
                let m = ForwardModel::load(&path).map_err(|e| e.in_stage("eval"))?;
                let cands = pipeline::candidate_set(cfg)?;
                let name = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
                let policy = ArgminPolicy {
                    predictor: &m,
                    candidates: &cands,
                };
                (name, pipeline::eval_stage(cfg, &policy))
            };
            let rep = rep.map_err(|e| e.in_stage("eval"))?;
            write_json(&out.join(format!("eval/{name}.json")), &rep)?;
            if svg {
                let w = &cfg.workspace;
                let arcs = [w.r_min, w.r_max, cfg.eval.annulus.0, cfg.eval.annulus.1];
                let path = out.join(format!("eval/{name}.svg"));
                std::fs::write(&path, pipeline::render_svg(&rep, &name, &arcs)).map_err(|e| Error::Io { path, source: e })?;
            }
            let s = rep.stats;
            println!(
                "{name}: median {:.1}% (IQR {:.1}-{:.1}%) of cable length",
                100.0 * s.median,
                100.0 * s.q1,
                100.0 * s.q3
            );
        }
        Command::Run { reference_file } => {
            let m = pipeline::run_r2s2r(cfg, out, &RunOptions { reference_file })?;
            for (name, p) in &m.policies {
                println!("{name}: median {:.1}% of cable length", 100.0 * p.median);
            }
        }
        Command::Report { manifest } => {
            let m: RunManifest = read_json(&manifest).map_err(|e| e.in_stage("report"))?;
            let dir = manifest.parent().unwrap_or(Path::new("."));
            let run_cfg = ExperimentConfig::load(&dir.join(&m.config)).map_err(|e| e.in_stage("report"))?;
            for p in pipeline::write_report(&m, dir, &run_cfg).map_err(|e| e.in_stage("report"))? {
                println!("{}", dir.join(p).display());
            }
        }
        Command::Mirror { input, output } => {
            let n = pipeline::mirror_dataset(&input, &output).map_err(|e| e.in_stage("mirror"))?;
            println!("mirrored {n} records");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CASTLINE_LOG", "info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.global.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let cfg = match &cli.global.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    };
    let result = cfg.and_then(|mut cfg| {
        if let Some(s) = cli.global.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        execute(cli.cmd, &cfg, &cli.global.out)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
