//! Command-line front end: run scenarios, train and calibrate anomaly
//! models, score rasters, replay incidents and summarize runs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cage_ccc::{CccConfig, CccService, DEFAULT_PORT};
use cage_core::monitor::anomaly::{calibrate_threshold, detect, AnomalyModel, TrainParams};
use cage_core::monitor::knowledge::{load_model, save_model, KnowledgeBase, RasterRecord};
use cage_core::pipeline::{incident_dir, run_cage, CageOptions};
use cage_core::raster::SceneRaster;
use cage_core::record;
use cage_core::recorder::{read_incident_dir, Incident};
use cage_core::replay::replay_incident;
use cage_core::sim::runner::{NoCommands, RunLog};
use cage_core::sim::scenario::Scenario;
use cage_core::summary::summarize;
use cage_core::telemetry::DropOldestQueue;

/// Telemetry frames buffered between the tick loop and the service.
const TELEMETRY_QUEUE: usize = 8;

#[derive(Debug, Parser)]
#[command(
    name = "cage",
    version,
    about = "Dependability cage simulator and runtime-safety monitors"
)]
pub struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overlay merged into the scenario document before validation.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Runs a scenario through the full pipeline.
    Run(RunArgs),
    /// Ingests rasters into a knowledge base and trains the next model version.
    Train(TrainArgs),
    /// Recomputes a model's threshold on the knowledge-base rasters.
    Calibrate(CalibrateArgs),
    /// Scores rasters from raster records, run logs or incidents.
    Score(ScoreArgs),
    /// Re-runs the monitors over recorded incidents and compares verdicts.
    Replay(ReplayArgs),
    /// Prints the summary of a finished run.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct ModelArgs {
    /// Anomaly model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Knowledge base; its latest model is used unless --model is given.
    #[arg(long)]
    pub kb: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Starts the control center service for the duration of the run.
    #[arg(long)]
    pub serve: bool,
    #[arg(long, default_value = "127.0.0.1")]
    pub ccc_host: String,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub ccc_port: u16,
    #[arg(long, default_value = "cage")]
    pub token: String,
    /// Wall-clock seconds per simulated second while serving.
    #[arg(long, default_value_t = 1.0)]
    pub realtime: f64,
    /// Seconds to keep serving after the last tick.
    #[arg(long, default_value_t = 0.0)]
    pub linger: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Run logs, incidents, raster records or directories of them.
    #[arg(long)]
    pub ingest: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// Seed for weight initialization and shuffling; defaults to --seed, then 0.
    #[arg(long)]
    pub train_seed: Option<u64>,
    #[arg(long, default_value_t = 0.99)]
    pub quantile: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Writes the recalibrated model here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Incident files or directories of them.
    #[arg(required = true)]
    pub incidents: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// A run log or the output directory of `cage run`.
    pub path: PathBuf,
}

/// Runs the parsed command, writing results to `out`. Returns the exit code.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Run(a) => cmd_run(&cli, a, out),
        Command::Train(a) => cmd_train(&cli, a, out),
        Command::Calibrate(a) => cmd_calibrate(a, out),
        Command::Score(a) => cmd_score(a, out),
        Command::Replay(a) => cmd_replay(a, out),
        Command::Summarize(a) => cmd_summarize(a, out),
    }
}

pub fn load_scenario(path: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<Scenario> {
    let mut s = Scenario::load(path, config)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

/// The latest model of a knowledge base, refused when it was not trained on
/// the current contents.
pub fn kb_model(kb: &Path) -> Result<AnomalyModel> {
    let kb = KnowledgeBase::open(kb)?;
    let model = kb
        .latest_model()?
        .with_context(|| format!("knowledge base {} has no model", kb.root().display()))?;
    kb.check_digest(&model)?;
    Ok(model)
}

fn resolve_model(args: &ModelArgs, fallback: Option<&Path>) -> Result<Option<AnomalyModel>> {
    if let Some(p) = &args.model {
        let m = load_model(p)?;
        if let Some(kb) = &args.kb {
            KnowledgeBase::open(kb)?.check_digest(&m)?;
        }
        return Ok(Some(m));
    }
    if let Some(kb) = &args.kb {
        return Ok(Some(kb_model(kb)?));
    }
    Ok(match fallback {
        Some(p) => Some(load_model(p)?),
        None => None,
    })
}

fn emit(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_run(cli: &Cli, a: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let scenario = load_scenario(&a.scenario, cli.config.as_deref(), cli.seed)?;
    let model = resolve_model(&a.model, scenario.anomaly_monitor.model.as_deref())?;
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let run_id = scenario.run_id();

    let run = if a.serve {
        let cfg = CccConfig {
            host: a.ccc_host.clone(),
            port: a.ccc_port,
            token: a.token.clone(),
            ..CccConfig::default()
        };
        let (service, mut commands) = CccService::start(&cfg, &run_id)?;
        let queue = Arc::new(DropOldestQueue::new(TELEMETRY_QUEUE));
        let pump = service.hub.pump(queue.clone());
        log::info!("serving {run_id} on ws://{}/ws", service.addr());
        let run = run_cage(
            &scenario,
            CageOptions {
                model,
                out_dir: Some(out_dir.clone()),
                telemetry: Some(queue),
                realtime: Some(a.realtime),
            },
            &mut commands,
        );
        pump.join().ok();
        if run.is_ok() && a.linger > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(a.linger));
        }
        service.shutdown()?;
        run?
    } else {
        run_cage(
            &scenario,
            CageOptions {
                model,
                out_dir: Some(out_dir.clone()),
                ..Default::default()
            },
            &mut NoCommands,
        )?
    };
    emit(out, &serde_json::to_value(&run.summary)?)?;
    Ok(0)
}

/// Every raster found under `path`, labelled by origin.
pub fn collect_rasters(path: &Path) -> Result<Vec<(String, SceneRaster)>> {
    let mut found = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = walkdir::WalkDir::new(path)
            .sort_by_file_name()
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .filter(|p| matches!(p.extension().and_then(|x| x.to_str()), Some("inc" | "rec" | "jsonl")))
            .collect();
        files.sort();
        for f in files {
            found.extend(collect_rasters(&f)?);
        }
        return Ok(found);
    }
    let name = path.display().to_string();
    match path.extension().and_then(|x| x.to_str()) {
        Some("inc") => {
            let inc = Incident::read(path)?;
            found.extend(
                inc.ticks
                    .iter()
                    .map(|t| (format!("{name}#{}", t.tick), t.raster.clone())),
            );
        }
        Some("jsonl") => {
            let log = RunLog::read(path)?;
            found.extend(
                log.ticks
                    .iter()
                    .map(|t| (format!("{name}#{}", t.tick), t.raster.clone())),
            );
        }
        _ => {
            for (n, line) in record::read_raw_lines(path)? {
                let raster = match record::decode::<RasterRecord>(&line) {
                    Ok(r) => r.raster,
                    Err(_) => record::decode_at::<SceneRaster>(path, n, &line)?,
                };
                found.push((format!("{name}:{n}"), raster));
            }
        }
    }
    Ok(found)
}

fn cmd_train(cli: &Cli, a: &TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let kb = KnowledgeBase::open(&a.kb)?;
    let mut added = 0;
    for p in &a.ingest {
        let rasters = collect_rasters(p)?;
        added += kb.add_rasters(rasters.iter().map(|(_, r)| r))?;
    }
    let params = TrainParams {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        hidden: a.hidden,
        seed: a.train_seed.or(cli.seed).unwrap_or(0),
    };
    let (model, curve) = kb.train_next(&params, a.quantile)?;
    emit(
        out,
        &json!({
            "version": model.version,
            "model": kb.model_path(model.version),
            "rasters_added": added,
            "training_set_size": kb.rasters()?.len(),
            "training_set_digest": model.training_set_digest,
            "threshold": model.threshold,
            "initial_loss": curve.first(),
            "final_loss": curve.last(),
        }),
    )?;
    Ok(0)
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> Result<i32> {
    let kb = KnowledgeBase::open(&a.kb)?;
    let mut model = match &a.model {
        Some(p) => load_model(p)?,
        None => kb.latest_model()?.context("knowledge base has no model")?,
    };
    kb.check_digest(&model)?;
    let q = a.quantile.unwrap_or(model.calibration_quantile);
    let tau = calibrate_threshold(&model.autoencoder, &kb.rasters()?, q)?;
    let previous = model.threshold;
    model.threshold = tau;
    model.calibration_quantile = q;
    if let Some(p) = &a.output {
        save_model(p, &model)?;
    }
    emit(
        out,
        &json!({"version": model.version, "quantile": q, "threshold": tau, "previous_threshold": previous}),
    )?;
    Ok(0)
}

fn cmd_score(a: &ScoreArgs, out: &mut dyn Write) -> Result<i32> {
    let Some(model) = resolve_model(&a.model, None)? else {
        bail!("score needs --model or --kb");
    };
    for input in &a.inputs {
        for (label, raster) in collect_rasters(input)? {
            let v = detect(&model, &raster, 0)?;
            writeln!(
                out,
                "{}",
                json!({"input": label, "score": v.score, "threshold": model.threshold, "flag": v.flag})
            )?;
        }
    }
    Ok(0)
}

fn incident_files(path: &Path) -> Vec<PathBuf> {
    if !path.is_dir() {
        return vec![path.to_path_buf()];
    }
    let mut v: Vec<PathBuf> = walkdir::WalkDir::new(path)
        .into_iter()
        .filter_map(|e| e.ok())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|x| x == "inc"))
        .collect();
    v.sort();
    v
}

fn cmd_replay(a: &ReplayArgs, out: &mut dyn Write) -> Result<i32> {
    let mut exact = true;
    for path in a.incidents.iter().flat_map(|p| incident_files(p)) {
        let inc = Incident::read(&path)?;
        let model = match (&inc.header.context.model, &a.model.model, &a.model.kb) {
            (None, _, _) => None,
            (Some(_), Some(p), _) => Some(load_model(p)?),
            (Some(r), None, Some(kb)) => Some(load_model(&KnowledgeBase::open(kb)?.model_path(r.version))?),
            (Some(r), None, None) => bail!(
                "{} was recorded with anomaly model v{}; pass --model or --kb",
                path.display(),
                r.version
            ),
        };
        let report = replay_incident(&inc, model.as_ref())?;
        exact &= report.is_exact();
        writeln!(
            out,
            "{}",
            json!({
                "incident": path,
                "ticks": report.ticks,
                "exact": report.is_exact(),
                "mismatches": report.mismatches,
            })
        )?;
    }
    Ok(if exact { 0 } else { 1 })
}

fn cmd_summarize(a: &SummarizeArgs, out: &mut dyn Write) -> Result<i32> {
    let (log_path, dir) = if a.path.is_dir() {
        (a.path.join("runlog.jsonl"), Some(a.path.clone()))
    } else {
        (a.path.clone(), a.path.parent().map(Path::to_path_buf))
    };
    let log = RunLog::read(&log_path)?;
    let incidents = match dir.map(|d| incident_dir(&d, &log.header.run_id)) {
        Some(d) if d.is_dir() => read_incident_dir(&d)?.len(),
        _ => 0,
    };
    emit(out, &serde_json::to_value(summarize(&log, incidents))?)?;
    Ok(0)
}
