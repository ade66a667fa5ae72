use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde_json::json;
use spinewave_core::cpg::{extract_metrics, simulate};
use spinewave_core::ego::{resume_ego, EgoConfig, EgoError, EgoOutcome, EvaluationDatabase, JsonlSink};
use spinewave_core::export::export_surface_grid;
use spinewave_core::kriging::{fit, TrainingSet};
use spinewave_core::magnetics::torque_curve_csv;
use spinewave_core::plant::ScenarioObjective;

use crate::config::{self, RunConfig, SEED_ENV};
use crate::{Cli, CliError, Command};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DB_FILE: &str = "db.jsonl";

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads", "must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::runtime)?;
    }
    if let Command::Resume = cli.command {
        return resume(&cli);
    }
    let mut cfg = config::load(cli.config.as_deref(), &cli.overrides)?;
    config::resolve_seed(&mut cfg, std::env::var(SEED_ENV).ok(), cli.seed)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Command::Optimize { scenario: Some(kind) } = &cli.command {
        cfg.plant.scenario.kind = *kind;
    }
    cfg.validate()?;
    match &cli.command {
        Command::CpgSim => cpg_sim(&cfg),
        Command::KrigFit { data } => krig_fit(&cfg, data),
        Command::Optimize { .. } => optimize(&cfg),
        Command::MagneticsSweep => magnetics_sweep(&cfg),
        Command::Resume => unreachable!("handled above"),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

/// Creates the output directory and records the resolved config and manifest.
fn start_run(cfg: &RunConfig, subcommand: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    write(&dir, CONFIG_FILE, &(cfg.to_json() + "\n"))?;
    let manifest = json!({
        "subcommand": subcommand,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "versions": {
            "spinewave-core": spinewave_core::VERSION,
            "spinewave-lab": env!("CARGO_PKG_VERSION"),
        },
    });
    write(
        &dir,
        MANIFEST_FILE,
        &(serde_json::to_string_pretty(&manifest).expect("json") + "\n"),
    )?;
    Ok(dir)
}

fn cpg_sim(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.cpg.params();
    let dir = start_run(cfg, "cpg-sim")?;
    let traj = simulate(&params, cfg.cpg.duration, cfg.cpg.dt, &cfg.cpg.initial_state()).map_err(CliError::runtime)?;
    write(&dir, "trajectory.csv", &traj.to_csv())?;
    match extract_metrics(&traj, 0.5) {
        Ok(m) => write(
            &dir,
            "metrics.json",
            &(serde_json::to_string_pretty(&m).expect("json") + "\n"),
        )?,
        Err(e) => warn!("no gait metrics: {e}"),
    }
    Ok(())
}

fn read_dataset(path: &Path) -> Result<TrainingSet, CliError> {
    let bad = |reason: String| CliError::config("--data", reason);
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let (mut rows, mut ys) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let values = record
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        if values.len() < 2 {
            return Err(bad(format!(
                "row {}: need at least one input column and a response",
                line + 1
            )));
        }
        let (x, y) = values.split_at(values.len() - 1);
        rows.push(x.to_vec());
        ys.push(y[0]);
    }
    TrainingSet::new(rows, ys).map_err(|e| bad(e.to_string()))
}

fn krig_fit(cfg: &RunConfig, data: &Path) -> Result<(), CliError> {
    let training = read_dataset(data)?;
    let fit_config = cfg.ego.kriging.clone().with_seed(cfg.seed);
    let dir = start_run(cfg, "krig-fit")?;
    let model = fit(training, &fit_config).map_err(CliError::runtime)?;
    info!("fitted theta {:?}", model.theta());
    write(
        &dir,
        "model.json",
        &(serde_json::to_string_pretty(&model.snapshot()).expect("json") + "\n"),
    )
}

fn magnetics_sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = start_run(cfg, "magnetics-sweep")?;
    let csv = torque_curve_csv(&cfg.ribcage, cfg.output.sweep_samples).map_err(CliError::runtime)?;
    write(&dir, "torque_curve.csv", &csv)
}

fn objective(cfg: &RunConfig) -> Result<ScenarioObjective, CliError> {
    Ok(ScenarioObjective {
        spec: cfg.plant.scenario.clone(),
        geometry: cfg.plant.body().map_err(CliError::runtime)?,
        simulation: cfg.plant.simulation,
    })
}

fn ego_error(e: EgoError, db: &Path) -> CliError {
    match e {
        EgoError::DatabaseMismatch(reason) => CliError::config(DB_FILE, reason),
        other => CliError::runtime(format!("{other} (evaluations so far are in {})", db.display())),
    }
}

fn optimize(cfg: &RunConfig) -> Result<(), CliError> {
    let mut obj = objective(cfg)?;
    let ego = cfg.ego_config();
    let dir = start_run(cfg, "optimize")?;
    let db_path = dir.join(DB_FILE);
    if db_path.exists() {
        fs::remove_file(&db_path).map_err(CliError::runtime)?;
    }
    let mut sink = JsonlSink::append_to(&db_path).map_err(CliError::runtime)?;
    let start = Instant::now();
    info!(
        "optimizing {} over {} variables",
        cfg.plant.scenario.kind.as_str(),
        ego.dim()
    );
    let outcome =
        resume_ego(&mut obj, &ego, EvaluationDatabase::new(), &mut sink).map_err(|e| ego_error(e, &db_path))?;
    finish(&dir, &ego, &outcome, start.elapsed().as_secs_f64())
}

/// Loads a database, dropping a final line cut off mid-write.
fn load_database(path: &Path) -> Result<EvaluationDatabase, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(DB_FILE, format!("cannot read {}: {e}", path.display())))?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let db = EvaluationDatabase::from_jsonl(complete).map_err(|e| CliError::config(DB_FILE, e.to_string()))?;
    if complete.len() != text.len() {
        warn!("dropping an incomplete final record from {}", path.display());
        fs::write(path, complete).map_err(CliError::runtime)?;
    }
    Ok(db)
}

fn resume(cli: &Cli) -> Result<(), CliError> {
    if cli.config.is_some() || cli.seed.is_some() || !cli.overrides.is_empty() {
        return Err(CliError::config(
            "resume",
            "resume uses the configuration saved in the run directory; drop --config, --seed and --set",
        ));
    }
    let dir = cli
        .out
        .clone()
        .ok_or_else(|| CliError::config("--out", "resume needs the run directory"))?;
    let cfg_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path)
        .map_err(|e| CliError::config("--out", format!("cannot read {}: {e}", cfg_path.display())))?;
    let value = serde_json::from_str(&text).map_err(|e| CliError::config(CONFIG_FILE, e.to_string()))?;
    let mut cfg = config::parse(value)?;
    cfg.output.dir = dir.clone();
    let manifest: serde_json::Value = fs::read_to_string(dir.join(MANIFEST_FILE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .ok_or_else(|| CliError::config(MANIFEST_FILE, "missing or unreadable"))?;
    if manifest["config_hash"] != json!(cfg.hash()) {
        return Err(CliError::config(
            CONFIG_FILE,
            "does not match the hash recorded in manifest.json",
        ));
    }
    cfg.validate()?;
    let mut obj = objective(&cfg)?;
    let ego = cfg.ego_config();
    let db_path = dir.join(DB_FILE);
    let prior = load_database(&db_path)?;
    info!("resuming from {} records", prior.len());
    let mut sink = JsonlSink::append_to(&db_path).map_err(CliError::runtime)?;
    let start = Instant::now();
    let outcome = resume_ego(&mut obj, &ego, prior, &mut sink).map_err(|e| ego_error(e, &db_path))?;
    finish(&dir, &ego, &outcome, start.elapsed().as_secs_f64())
}

fn finish(dir: &Path, ego: &EgoConfig, outcome: &EgoOutcome, wall_time_s: f64) -> Result<(), CliError> {
    write(dir, "history.csv", &outcome.database.history_csv(ego.dim()))?;
    let result = json!({
        "best_x": outcome.result.best_x,
        "best_y": outcome.result.best_y,
        "n_evals": outcome.database.len(),
        "wall_time_s": wall_time_s,
    });
    write(
        dir,
        "result.json",
        &(serde_json::to_string_pretty(&result).expect("json") + "\n"),
    )?;
    let sign = if ego.minimize { 1.0 } else { -1.0 };
    let slice = ego.to_unit(&outcome.result.best_x);
    let grid = export_surface_grid(&outcome.model, ego.surface_dims, ego.surface_resolution, &slice, sign)
        .map_err(CliError::runtime)?;
    write(dir, "surface.csv", &grid.to_csv())?;
    write(dir, "surface_incumbent.csv", &grid.incumbent_csv())
}
