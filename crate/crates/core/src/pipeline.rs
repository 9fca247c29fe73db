//! End-to-end runs: suite preparation, the learning stream, the success
//! matrix and the artifacts of a run directory.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::engine::{
    evaluate_tasks, run_base_stage, run_lifelong_step, EngineError, EnvFactory, LifelongState, StepReport,
};
use crate::metrics::{compute_lifelong_metrics, LifelongMetrics, MetricsError, SuccessMatrix};
use crate::persist::{load_state, save_state, PersistError};
use crate::segmentation::segment_demo_traced;
use crate::synth::{generate_suite, load_world, SynthError, World};
use crate::trajectory::{load_suite, write_json, Stage, Suite, TaskSpec, TrajectoryError};

/// Failure classes of a run; each maps to a process exit code.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Data(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

impl From<TrajectoryError> for RunError {
    fn from(e: TrajectoryError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<SynthError> for RunError {
    fn from(e: SynthError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<EngineError> for RunError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::MissingDemos(_) | EngineError::UnknownDemo { .. } => RunError::Data(e.to_string()),
            other => RunError::Runtime(other.to_string()),
        }
    }
}

impl From<MetricsError> for RunError {
    fn from(e: MetricsError) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<PersistError> for RunError {
    fn from(e: PersistError) -> Self {
        RunError::Runtime(e.to_string())
    }
}

/// A loaded suite together with the environment used to evaluate it.
pub struct Prepared {
    pub manifest: PathBuf,
    pub suite: Suite,
    pub world: World,
}

/// Loads the configured suite, or generates the bundled one into
/// `<out>/suite` when none is configured.
pub fn prepare_suite(cfg: &RunConfig) -> Result<Prepared, RunError> {
    let manifest = match &cfg.suite {
        Some(path) => {
            if !path.exists() {
                return Err(TrajectoryError::MissingFile(path.clone()).into());
            }
            path.clone()
        }
        None => generate_suite(&cfg.generate, cfg.seed, &cfg.out.join("suite"))?,
    };
    let suite = load_suite(&manifest)?;
    let world_path = cfg
        .world
        .clone()
        .unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).join("world.json"));
    if !world_path.exists() {
        return Err(TrajectoryError::MissingFile(world_path).into());
    }
    let world = load_world(&world_path)?;
    Ok(Prepared { manifest, suite, world })
}

pub struct RunOutcome {
    pub state: LifelongState,
    pub reports: Vec<StepReport>,
    /// Present when evaluation ran.
    pub matrix: Option<SuccessMatrix>,
}

/// Runs the base stage and every lifelong step. With `evaluate`, all tasks
/// learned so far are evaluated after each step. The base stage is one
/// evaluation point covering all base tasks; rows of the matrix for the
/// earlier base tasks repeat that evaluation.
pub fn execute(
    suite: &Suite,
    env: &dyn EnvFactory,
    cfg: &RunConfig,
    evaluate: bool,
) -> Result<RunOutcome, EngineError> {
    let engine = cfg.engine();
    let episodes = cfg.eval.episodes;
    let mut matrix = SuccessMatrix::new(suite.tasks.len(), episodes);
    let (mut state, report) = run_base_stage(suite, &engine)?;
    let mut reports = vec![report];
    info!("base stage learned {} tasks, K = {}", state.step, state.k_c());

    let mut fill = |state: &LifelongState, rows: std::ops::RangeInclusive<usize>| -> Result<(), EngineError> {
        let learned: Vec<&TaskSpec> = suite.tasks.iter().filter(|t| t.order <= state.step).collect();
        let rates = evaluate_tasks(state, &learned, episodes, env, cfg.seed)?;
        for i in rows {
            for (j, rate) in rates.iter().enumerate().take(i) {
                matrix.set(i, j + 1, *rate).expect("index within triangle");
            }
        }
        Ok(())
    };
    if evaluate {
        fill(&state, 1..=state.step as usize)?;
    }
    for task in suite.tasks.iter().filter(|t| t.stage == Stage::Lifelong) {
        let report = run_lifelong_step(&mut state, suite, task, &engine)?;
        info!(
            "step {}: {} -> K_c = {} (new {:?})",
            report.step, task.task_id, report.k_c, report.new_skills
        );
        reports.push(report);
        if evaluate {
            fill(&state, state.step as usize..=state.step as usize)?;
        }
    }
    Ok(RunOutcome {
        state,
        reports,
        matrix: evaluate.then_some(matrix),
    })
}

#[derive(Serialize)]
struct LogLine<'a> {
    #[serde(flatten)]
    report: &'a StepReport,
    success: Vec<f64>,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    task_id: &'a str,
    demo_id: &'a str,
    segments: Vec<(usize, usize)>,
    merge_similarity_trace: Vec<f64>,
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), RunError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).map_err(|e| RunError::Runtime(e.to_string()))?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| RunError::Runtime(format!("{}: {e}", path.display())))
}

/// Writes `metrics.json`, scaled to percent if requested.
pub fn write_metrics(path: &Path, metrics: &LifelongMetrics, percent: bool) -> Result<(), RunError> {
    let shown = if percent { metrics.scaled(100.0) } else { metrics.clone() };
    write_json(path, &shown)?;
    Ok(())
}

pub struct RunSummary {
    pub out: PathBuf,
    pub matrix: SuccessMatrix,
    pub metrics: LifelongMetrics,
    pub reports: Vec<StepReport>,
}

/// Full `run` command: prepare, learn, evaluate and write the run directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| RunError::Runtime(e.to_string()))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    fs::create_dir_all(&cfg.out).map_err(|e| RunError::Runtime(format!("{}: {e}", cfg.out.display())))?;
    let prepared = prepare_suite(cfg)?;
    write_json(&cfg.out.join("config.json"), cfg)?;

    let traces = prepared
        .suite
        .tasks
        .iter()
        .flat_map(|t| t.demos.iter())
        .map(|d| {
            let tr = segment_demo_traced(d, &cfg.segmentation).map_err(|e| RunError::Runtime(e.to_string()))?;
            Ok(TraceLine {
                task_id: &d.task_id,
                demo_id: &d.demo_id,
                segments: tr.segments.iter().map(|s| (s.start, s.end)).collect(),
                merge_similarity_trace: tr.merge_similarities,
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    write_lines(&cfg.out.join("segments.jsonl"), traces)?;

    let outcome = execute(&prepared.suite, &prepared.world, cfg, true)?;
    let matrix = outcome.matrix.expect("evaluation ran");
    let metrics = compute_lifelong_metrics(&matrix, cfg.metrics.nbt_convention)?;

    save_state(&outcome.state, &cfg.out)?;
    write_json(&cfg.out.join("matrix.json"), &matrix)?;
    write_metrics(&cfg.out.join("metrics.json"), &metrics, cfg.metrics.percent)?;
    let lines = outcome.reports.iter().map(|r| {
        let i = r.step as usize;
        LogLine {
            report: r,
            success: (1..=i).filter_map(|j| matrix.get(i, j).ok()).collect(),
        }
    });
    write_lines(&cfg.out.join("log.jsonl"), lines)?;
    Ok(RunSummary {
        out: cfg.out.clone(),
        matrix,
        metrics,
        reports: outcome.reports,
    })
}

impl From<crate::report::ReportError> for RunError {
    fn from(e: crate::report::ReportError) -> Self {
        match e {
            crate::report::ReportError::IncompleteRun { .. } => RunError::Data(e.to_string()),
            other => RunError::Runtime(other.to_string()),
        }
    }
}

/// The config a run directory was produced with.
pub fn run_config(run_dir: &Path) -> Result<RunConfig, RunError> {
    let cfg = RunConfig::load(&run_dir.join("config.json"))?;
    Ok(cfg)
}

/// Evaluates every task the saved learner has seen and writes `eval.json`
/// mapping task id to success rate. `episodes` overrides the run's setting.
pub fn cmd_eval(run_dir: &Path, episodes: Option<usize>, threads: usize) -> Result<Vec<(String, f64)>, RunError> {
    let mut cfg = run_config(run_dir)?;
    cfg.out = run_dir.to_path_buf();
    if cfg.suite.is_none() {
        cfg.suite = Some(run_dir.join("suite").join("suite.json"));
    }
    let prepared = prepare_suite(&cfg)?;
    let state = load_state(run_dir)?;
    let episodes = episodes.unwrap_or(cfg.eval.episodes);
    let learned: Vec<&TaskSpec> = prepared.suite.tasks.iter().filter(|t| t.order <= state.step).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Runtime(e.to_string()))?;
    let rates = pool.install(|| evaluate_tasks(&state, &learned, episodes, &prepared.world, cfg.seed))?;
    let table: Vec<(String, f64)> = learned.iter().map(|t| t.task_id.clone()).zip(rates).collect();
    let json: serde_json::Map<String, serde_json::Value> =
        table.iter().map(|(k, v)| (k.clone(), (*v).into())).collect();
    write_json(&run_dir.join("eval.json"), &json)?;
    Ok(table)
}

/// Recomputes metrics from a run's `matrix.json` with the run's NBT
/// convention.
pub fn cmd_metrics(run_dir: &Path, percent: bool) -> Result<LifelongMetrics, RunError> {
    let matrix = crate::report::read_matrix(run_dir)?;
    let convention = run_config(run_dir).map(|c| c.metrics.nbt_convention).unwrap_or_default();
    let metrics = compute_lifelong_metrics(&matrix, convention)?;
    Ok(if percent { metrics.scaled(100.0) } else { metrics })
}
