//! Command line: `synth`, `derive`, `train`, `evaluate`, `predict`, `simulate`, `serve`.
//!
//! Exit codes: 0 success, 2 invalid arguments or input, 1 runtime failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rescast_core::ingest::{Dataset, JobProfile, LabeledTask, Target};
use rescast_core::nnet::TrainConfig;
use rescast_core::simsynth::{compare, generate, simulate, GeneratorSpec, ScoutAllocation, SimConfig, SimMode, SimReport, SyntheticTask};
use rescast_core::targets::{aggregate_scouts, ResourceConfig};
use rescast_core::{BinSet, ModelSet};

use crate::artifact::{self, ModelArtifact};
use crate::csvio::{self, ParseReport, TargetRow, TaskSchema};
use crate::pipeline::{self, PipelineConfig};
use crate::report::{self, EvaluationReport};
use crate::service::{self, AppState, FeedbackLog};

pub const ARTIFACT_FILE: &str = "model.rsc";
pub const TEST_FILE: &str = "test_tasks.csv";
pub const TRAIN_REPORT_FILE: &str = "train_report.txt";

#[derive(Debug, Parser)]
#[command(name = "rescast", version, about = "Resource-requirement prediction and brokerage simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic workload: tasks.csv, jobs.csv and targets.csv.
    Synth {
        #[arg(long, default_value_t = 10_000)]
        tasks: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Derive continuous targets per task from job profiles.
    Derive {
        #[arg(long)]
        jobs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Aggregate only jobs flagged as scouts.
        #[arg(long)]
        scouts_only: bool,
    },
    /// Fit bins, split, train the four models and write the artifact.
    Train {
        /// Task metadata CSV.
        #[arg(long)]
        data: PathBuf,
        /// Continuous targets CSV (from `derive` or `synth`).
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        max_epochs: usize,
        #[arg(long, default_value_t = 5e-5)]
        learning_rate: f64,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 4)]
        patience: usize,
        /// Hidden layer widths.
        #[arg(long, value_delimiter = ',', default_values_t = [256usize, 128, 64])]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 0.15)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0.15)]
        val_fraction: f64,
    },
    /// Print the evaluation report and write ROC / PR point files.
    Evaluate {
        /// Directory with the artifact; its held-out split is the default data.
        #[arg(long)]
        model_dir: Option<PathBuf>,
        /// Labeled task CSV (with *_CLASS columns).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Evaluate a predictions CSV against --data instead of running a model.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Where report.txt and the curve files go.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Predict classes, probabilities and allocations for a task CSV.
    Predict {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the brokerage simulation in scout, ml or compare mode.
    Simulate {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        jobs: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Compare)]
        mode: ModeArg,
        /// Required for ml and compare modes.
        #[arg(long)]
        model_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50.0)]
        arrivals_per_hour: f64,
        /// Seconds from submission to a model decision.
        #[arg(long, default_value_t = 0.1)]
        ml_latency: f64,
        /// Use true classes for scout-mode allocations.
        #[arg(long)]
        truth_scout_allocation: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve predictions over HTTP (bind address from --bind or RESCAST_BIND).
    Serve {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        feedback_log: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Scout,
    Ml,
    Compare,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unusable input: exit 2.
    Invalid(String),
    /// Failure while doing the work: exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn warn_rows(what: &str, report: &ParseReport) {
    if report.errors.is_empty() {
        return;
    }
    eprintln!("warning: {what}: {} of {} rows rejected", report.errors.len(), report.rows_read);
    for e in report.errors.iter().take(10) {
        eprintln!("  {e}");
    }
}

fn require_file(path: &Path, flag: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{flag}: no such file {}", path.display())))
    }
}

fn read_tasks(path: &Path, flag: &str) -> Result<Dataset, CliError> {
    require_file(path, flag)?;
    let parsed = csvio::parse_task_csv(path, &TaskSchema::default()).map_err(invalid)?;
    warn_rows(&path.display().to_string(), &parsed.report);
    Ok(parsed.dataset)
}

fn read_jobs(path: &Path) -> Result<Vec<JobProfile>, CliError> {
    require_file(path, "--jobs")?;
    let (jobs, report) = csvio::parse_job_csv(path).map_err(invalid)?;
    warn_rows(&path.display().to_string(), &report);
    Ok(jobs)
}

fn load_models(model_dir: &Path) -> Result<ModelSet, CliError> {
    let path = model_dir.join(ARTIFACT_FILE);
    require_file(&path, "--model-dir")?;
    artifact::load_model_set(&path).map_err(invalid)
}

fn bins_of(models: &ModelSet) -> BinSet {
    BinSet::new(Target::ALL.map(|t| models.get(t).bins.clone())).expect("models are in target order")
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { tasks, seed, out_dir } => synth(tasks, seed, &out_dir),
        Command::Derive { jobs, out, scouts_only } => {
            let jobs = read_jobs(&jobs)?;
            let rows = pipeline::derive_targets(&jobs, &ResourceConfig::default(), scouts_only).map_err(invalid)?;
            csvio::write_targets_csv(&out, &rows).map_err(runtime)?;
            println!("derived targets for {} tasks -> {}", rows.len(), out.display());
            Ok(())
        }
        Command::Train {
            data,
            targets,
            model_dir,
            seed,
            max_epochs,
            learning_rate,
            batch_size,
            patience,
            hidden,
            test_fraction,
            val_fraction,
        } => {
            let cfg = PipelineConfig {
                split_seed: seed,
                test_fraction,
                val_fraction,
                hidden,
                train: TrainConfig { seed, max_epochs, learning_rate, batch_size, patience, ..TrainConfig::default() },
                ..PipelineConfig::default()
            };
            cfg.train.validate().map_err(invalid)?;
            if cfg.hidden.is_empty() || cfg.hidden.contains(&0) || cfg.hidden.len() != cfg.train.dropout_rates.len() {
                return Err(invalid(format!("--hidden needs {} positive widths", cfg.train.dropout_rates.len())));
            }
            train(&data, &targets, &model_dir, &cfg)
        }
        Command::Evaluate { model_dir, data, predictions, out_dir } => evaluate(model_dir, data, predictions, out_dir),
        Command::Predict { model_dir, data, out } => {
            let models = load_models(&model_dir)?;
            let ds = read_tasks(&data, "--data")?;
            let tasks: Vec<_> = ds.tasks().cloned().collect();
            let preds = models.predict(&tasks).map_err(runtime)?;
            csvio::write_predictions_csv(&out, &preds).map_err(runtime)?;
            println!("wrote {} predictions -> {}", preds.len(), out.display());
            Ok(())
        }
        Command::Simulate { tasks, jobs, mode, model_dir, seed, arrivals_per_hour, ml_latency, truth_scout_allocation, out } => {
            let cfg = SimConfig {
                seed,
                arrivals_per_hour,
                ml_latency,
                scout_allocation: if truth_scout_allocation { ScoutAllocation::Truth } else { ScoutAllocation::Derived },
                ..SimConfig::default()
            };
            cfg.validate().map_err(invalid)?;
            let text = simulate_cmd(&tasks, &jobs, mode, model_dir.as_deref(), &cfg)?;
            print!("{text}");
            if let Some(out) = out {
                fs::write(&out, &text).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
            }
            Ok(())
        }
        Command::Serve { model_dir, bind, feedback_log } => {
            let models = load_models(&model_dir)?;
            let log = match &feedback_log {
                Some(p) => FeedbackLog::open(p).map_err(|e| invalid(format!("--feedback-log {}: {e}", p.display())))?,
                None => FeedbackLog::in_memory(),
            };
            let state = Arc::new(AppState::new(Some(models), log));
            let bind = bind.unwrap_or_else(service::bind_address);
            service::serve_blocking(state, &bind, |addr| {
                println!("listening on {addr}");
                use std::io::Write;
                let _ = std::io::stdout().flush();
            })
            .map_err(|e| runtime(format!("serve on {bind}: {e}")))
        }
    }
}

fn synth(n: usize, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    let spec = GeneratorSpec::default_with(seed, n);
    spec.validate().map_err(invalid)?;
    let pop = generate(&spec).map_err(runtime)?;
    create_dir(out_dir)?;
    let ds = Dataset::new(pop.tasks.iter().map(|t| LabeledTask { task: t.record.clone(), classes: None }).collect())
        .map_err(runtime)?;
    csvio::write_task_csv(&out_dir.join("tasks.csv"), &ds).map_err(runtime)?;
    csvio::write_job_csv(&out_dir.join("jobs.csv"), pop.jobs()).map_err(runtime)?;
    let rows: Vec<TargetRow> = pop
        .tasks
        .iter()
        .map(|t| TargetRow { task_id: t.record.task_id.clone(), targets: t.targets, cpu_filter_fallback: false })
        .collect();
    csvio::write_targets_csv(&out_dir.join("targets.csv"), &rows).map_err(runtime)?;
    println!("wrote {} tasks and {} jobs -> {}", pop.len(), pop.jobs().count(), out_dir.display());
    Ok(())
}

/// Per-target training summary as plain text.
pub fn train_summary(trained: &pipeline::TrainedPipeline) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "test rows {} (all joint strata kept: {})", trained.test.len(), trained.test_stratified);
    let _ = writeln!(s, "{:<12} {:>6} {:>6} {:>7} {:>5} {:>9} {:>10}", "model", "train", "val", "epochs", "best", "val_acc", "stop");
    for r in &trained.runs {
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>6} {:>7} {:>5} {:>9.4} {:>10}",
            r.target.name(),
            r.train_rows,
            r.val_rows,
            r.report.epochs.len(),
            r.report.best_epoch,
            r.report.best_val_accuracy().unwrap_or(0.0),
            format!("{:?}", r.report.stop_reason)
        );
    }
    s
}

fn train(data: &Path, targets: &Path, model_dir: &Path, cfg: &PipelineConfig) -> Result<(), CliError> {
    let ds = read_tasks(data, "--data")?;
    require_file(targets, "--targets")?;
    let (rows, report) = csvio::parse_targets_csv(targets).map_err(invalid)?;
    warn_rows(&targets.display().to_string(), &report);
    let records: Vec<_> = ds.tasks().cloned().collect();
    let (pairs, missing) = pipeline::join_targets(&records, &rows);
    if !missing.is_empty() {
        eprintln!("warning: {} tasks have no targets and are skipped", missing.len());
    }
    if pairs.is_empty() {
        return Err(invalid("no task in --data has a row in --targets"));
    }
    let trained = pipeline::train_pipeline(&pairs, cfg).map_err(runtime)?;
    create_dir(model_dir)?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let art = ModelArtifact::new(&trained.models, artifact::fingerprint(&cfg.canonical()), created);
    artifact::save_artifact(&model_dir.join(ARTIFACT_FILE), &art).map_err(runtime)?;
    csvio::write_task_csv(&model_dir.join(TEST_FILE), &trained.test).map_err(runtime)?;
    let summary = train_summary(&trained);
    fs::write(model_dir.join(TRAIN_REPORT_FILE), &summary).map_err(runtime)?;
    print!("{summary}");
    println!("artifact -> {}", model_dir.join(ARTIFACT_FILE).display());
    Ok(())
}

fn evaluate(
    model_dir: Option<PathBuf>,
    data: Option<PathBuf>,
    predictions: Option<PathBuf>,
    out_dir: Option<PathBuf>,
) -> Result<(), CliError> {
    let report: EvaluationReport = match (&model_dir, &predictions) {
        (_, Some(pred_path)) => {
            let data = data.as_ref().ok_or_else(|| invalid("--predictions needs --data with class columns"))?;
            let ds = read_tasks(data, "--data")?;
            require_file(pred_path, "--predictions")?;
            let (table, rep) = csvio::parse_predictions_csv(pred_path).map_err(invalid)?;
            warn_rows(&pred_path.display().to_string(), &rep);
            let position: BTreeMap<&str, usize> = table.task_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
            let truth = report::dataset_labels(&ds).map_err(invalid)?;
            // Reorder prediction rows to the data order.
            let mut order = Vec::with_capacity(ds.len());
            for t in ds.tasks() {
                order.push(*position.get(t.task_id.as_str()).ok_or_else(|| invalid(format!("no prediction for task {}", t.task_id)))?);
            }
            let probs = Target::ALL.map(|t| {
                let p = &table.probabilities[t.index()];
                let k = p.n_classes;
                rescast_core::nnet::Probabilities {
                    rows: order.len(),
                    n_classes: k,
                    data: order.iter().flat_map(|&i| p.data[i * k..(i + 1) * k].iter().copied()).collect(),
                }
            });
            report::evaluate_probabilities(&probs, &truth).map_err(invalid)?
        }
        (Some(dir), None) => {
            let models = load_models(dir)?;
            let data = data.clone().unwrap_or_else(|| dir.join(TEST_FILE));
            let ds = read_tasks(&data, "--data")?;
            report::evaluate_models(&models, &ds).map_err(invalid)?
        }
        (None, None) => return Err(invalid("evaluate needs --model-dir or --predictions")),
    };
    let text = report.render();
    print!("{text}");
    let out_dir = out_dir.or_else(|| model_dir.map(|d| d.join("eval")));
    if let Some(dir) = out_dir {
        create_dir(&dir)?;
        fs::write(dir.join("report.txt"), &text).map_err(runtime)?;
        report.write_curves(&dir).map_err(runtime)?;
        println!("report and curves -> {}", dir.display());
    }
    Ok(())
}

/// Tasks for simulation: records joined with their jobs; truth targets
/// aggregate every job. Tasks with fewer than two jobs are skipped.
pub fn simulation_tasks(ds: &Dataset, jobs: Vec<JobProfile>, cfg: &ResourceConfig) -> Result<(Vec<SyntheticTask>, usize), CliError> {
    let mut by_task: BTreeMap<String, Vec<JobProfile>> = BTreeMap::new();
    for j in jobs {
        by_task.entry(j.task_id.clone()).or_default().push(j);
    }
    let mut out = Vec::with_capacity(ds.len());
    let mut skipped = 0;
    for record in ds.tasks() {
        match by_task.remove(&record.task_id) {
            Some(jobs) if jobs.len() >= 2 => {
                let targets = aggregate_scouts(&jobs, cfg).map_err(|e| invalid(format!("task {}: {e}", record.task_id)))?.targets;
                out.push(SyntheticTask { record: record.clone(), jobs, targets });
            }
            _ => skipped += 1,
        }
    }
    Ok((out, skipped))
}

fn render_sim(r: &SimReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode {}: {} tasks, {} jobs", r.mode.name(), r.n_tasks, r.n_jobs);
    for (name, v) in [("turnaround h", &r.turnaround_hours), ("decision h", &r.decision_hours), ("execution h", &r.execution_hours)] {
        let _ = writeln!(s, "  {name:<13} mean {:.4}  median {:.4}  p95 {:.4}  max {:.4}", v.mean, v.median, v.p95, v.max);
    }
    let _ = writeln!(s, "  decisions over 150 h: {:.4}%", 100.0 * r.decisions_over_150h);
    let _ = writeln!(s, "  retries {} (ram failures {}, walltime kills {})", r.retries, r.ram_failures, r.walltime_kills);
    let _ = writeln!(s, "  wasted core-hours {:.3}, wasted RAM GB-hours {:.3}", r.wasted_core_hours, r.wasted_ram_gb_hours);
    s
}

fn simulate_cmd(tasks: &Path, jobs: &Path, mode: ModeArg, model_dir: Option<&Path>, cfg: &SimConfig) -> Result<String, CliError> {
    let ds = read_tasks(tasks, "--tasks")?;
    let jobs = read_jobs(jobs)?;
    let (sim_tasks, skipped) = simulation_tasks(&ds, jobs, &cfg.resource)?;
    if skipped > 0 {
        eprintln!("warning: {skipped} tasks without at least two jobs are skipped");
    }
    if sim_tasks.is_empty() {
        return Err(invalid("no task has at least two jobs"));
    }
    let models = match (mode, model_dir) {
        (ModeArg::Scout, None) => None,
        (_, Some(dir)) => Some(load_models(dir)?),
        (_, None) => return Err(invalid("--model-dir is required for ml and compare modes")),
    };
    let bins = match &models {
        Some(m) => bins_of(m),
        None => BinSet::fit(&sim_tasks.iter().map(|t| t.targets).collect::<Vec<_>>()).map_err(invalid)?,
    };
    let predictor = models.as_ref().map(|m| m as &dyn rescast_core::simsynth::ClassPredictor);
    Ok(match mode {
        ModeArg::Scout => render_sim(&simulate(&sim_tasks, &bins, SimMode::Scout, cfg, None).map_err(runtime)?),
        ModeArg::Ml => render_sim(&simulate(&sim_tasks, &bins, SimMode::Ml, cfg, predictor).map_err(runtime)?),
        ModeArg::Compare => {
            let c = compare(&sim_tasks, &bins, cfg, predictor.expect("model loaded")).map_err(runtime)?;
            let mut s = render_sim(&c.scout);
            s.push_str(&render_sim(&c.ml));
            let _ = writeln!(
                s,
                "turnaround reduction {:.4} h ({:.2}%), retry delta {}, wasted core-hours delta {:.3}",
                c.turnaround_reduction_hours,
                100.0 * c.turnaround_reduction_fraction,
                c.retry_delta,
                c.wasted_core_hours_delta
            );
            s
        }
    })
}
