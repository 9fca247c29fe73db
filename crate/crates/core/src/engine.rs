//! The two-stage learner: base-stage discovery and training, then one
//! lifelong step per new task, plus closed-loop evaluation.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{incremental_assign, select_k, ClusterError, ClusteringState};
use crate::policy::{
    make_training_rows, MetaController, MetaRow, PolicyError, RowConfig, SegmentView, SkillConfig, SkillPolicy,
    TrainingRow,
};
use crate::replay::{ReplayBuffer, ReplayError};
use crate::segmentation::{segment_demo, Segment, SegmentError, SegmentationConfig};
use crate::trajectory::{Demonstration, Suite, TaskSpec};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("task {0} has no demonstrations")]
    MissingDemos(String),
    #[error("expected task order {expected}, got {found}")]
    OutOfOrderTask { expected: u32, found: u32 },
    #[error("task {task_id} (order {order}) has not been learned yet; current step is {step}")]
    UnlearnedTask { task_id: String, order: u32, step: u32 },
    #[error("episode count must be positive")]
    BadEpisodeCount,
    #[error("segment refers to unknown demo {task_id}/{demo_id}")]
    UnknownDemo { task_id: String, demo_id: String },
    #[error("environment: {0}")]
    Env(String),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// Which learner to run. Everything but `Full` is an ablation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// No exemplars are kept between tasks.
    NoReplay,
    /// Lifelong steps may only reuse skills, never add them.
    FrozenLibrary,
    /// One skill holds every segment.
    Monolithic,
}

/// Default meta-controller weights for the feature, proprio and language
/// blocks. Proprioception carries most of the information about when a skill
/// has finished, so it weighs most.
pub const DEFAULT_META_BLOCK_WEIGHTS: [f64; 3] = [0.3, 10.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub segmentation: SegmentationConfig,
    pub sil_threshold: f64,
    pub k_max_sweep: usize,
    pub rows: RowConfig,
    pub skill: SkillConfig,
    pub alpha: f64,
    /// Weights of the feature, proprio and language blocks in the
    /// meta-controller's distance.
    pub meta_block_weights: [f64; 3],
    pub k_max: usize,
    pub n_save: usize,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            segmentation: SegmentationConfig::default(),
            sil_threshold: 0.1,
            k_max_sweep: 16,
            rows: RowConfig::default(),
            skill: SkillConfig::default(),
            alpha: 10.0,
            meta_block_weights: DEFAULT_META_BLOCK_WEIGHTS,
            k_max: 64,
            n_save: 5,
            variant: Variant::Full,
            seed: 0,
        }
    }
}

impl EngineConfig {
    fn n_save(&self) -> usize {
        if self.variant == Variant::NoReplay {
            0
        } else {
            self.n_save
        }
    }

    fn allow_new(&self) -> bool {
        !matches!(self.variant, Variant::FrozenLibrary | Variant::Monolithic)
    }
}

/// Everything the learner carries from one step to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct LifelongState {
    /// Number of tasks learned so far.
    pub step: u32,
    pub clustering: ClusteringState,
    pub library: BTreeMap<usize, SkillPolicy>,
    pub meta: MetaController,
    pub buffer: ReplayBuffer,
    pub rng_seed: u64,
}

impl LifelongState {
    pub fn k_c(&self) -> usize {
        self.clustering.k()
    }
}

/// Where one segment went and how well it fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub task_id: String,
    pub demo_id: String,
    pub start: usize,
    pub end: usize,
    pub skill: usize,
    pub silhouette: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u32,
    pub tasks: Vec<String>,
    pub k_c: usize,
    pub new_skills: Vec<usize>,
    pub touched_skills: Vec<usize>,
    pub partition_sizes: Vec<usize>,
    /// Mean silhouette per swept K (base stage only).
    pub k_scores: Vec<(usize, f64)>,
    pub segments: Vec<SegmentRecord>,
}

/// An environment episode driven by the learned policy.
pub trait Environment {
    /// Current `(feature, proprio)` observation.
    fn observe(&mut self) -> Result<(Vec<f64>, Vec<f64>), EngineError>;
    fn step(&mut self, action: &[f64]);
    fn success(&self) -> bool;
}

/// Creates seeded episodes for a task: the start state depends on
/// `task.init_seed + episode`, observation noise additionally on `noise_seed`.
pub trait EnvFactory: Sync {
    fn episode(&self, task: &TaskSpec, episode: u64, noise_seed: u64)
        -> Result<Box<dyn Environment + '_>, EngineError>;
}

fn find_demo<'a>(suite: &'a Suite, seg: &Segment) -> Result<&'a Demonstration, EngineError> {
    suite
        .task(&seg.task_id)
        .and_then(|t| t.demos.iter().find(|d| d.demo_id == seg.demo_id))
        .ok_or_else(|| EngineError::UnknownDemo {
            task_id: seg.task_id.clone(),
            demo_id: seg.demo_id.clone(),
        })
}

fn rows_for(suite: &Suite, segments: &[&Segment], cfg: &RowConfig) -> Result<Vec<TrainingRow>, EngineError> {
    let views = segments
        .iter()
        .map(|s| {
            Ok(SegmentView {
                demo: find_demo(suite, s)?,
                start: s.start,
                end: s.end,
            })
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    Ok(make_training_rows(&views, cfg))
}

fn meta_row(row: TrainingRow, label: usize, language: &[f64]) -> MetaRow {
    let mut q = row.feature;
    q.extend_from_slice(&row.proprio);
    q.extend_from_slice(language);
    MetaRow {
        q,
        label,
        subgoal: row.subgoal,
    }
}

/// Segments every demo of `task` in demo-id order.
pub fn segment_task(task: &TaskSpec, cfg: &SegmentationConfig) -> Result<Vec<Segment>, EngineError> {
    if task.demos.is_empty() {
        return Err(EngineError::MissingDemos(task.task_id.clone()));
    }
    let mut demos: Vec<&Demonstration> = task.demos.iter().collect();
    demos.sort_by(|a, b| a.demo_id.cmp(&b.demo_id));
    let per_demo = demos
        .par_iter()
        .map(|d| segment_demo(d, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_demo.into_iter().flatten().collect())
}

fn record(seg: &Segment, skill: usize, silhouette: Option<f64>) -> SegmentRecord {
    SegmentRecord {
        task_id: seg.task_id.clone(),
        demo_id: seg.demo_id.clone(),
        start: seg.start,
        end: seg.end,
        skill,
        silhouette: silhouette.filter(|s| s.is_finite()),
    }
}

/// Meta-controller rows for every frame of `labelled`, plus the buffer.
fn meta_rows(
    suite: &Suite,
    labelled: &[(Segment, usize)],
    buffer: &ReplayBuffer,
    cfg: &RowConfig,
) -> Result<Vec<MetaRow>, EngineError> {
    let mut rows = Vec::new();
    for (seg, skill) in labelled {
        let lang = &suite
            .task(&seg.task_id)
            .ok_or_else(|| EngineError::UnknownDemo {
                task_id: seg.task_id.clone(),
                demo_id: seg.demo_id.clone(),
            })?
            .language_embedding;
        for row in rows_for(suite, &[seg], cfg)? {
            rows.push(meta_row(row, *skill, lang));
        }
    }
    for (row, skill, lang) in buffer.labelled_rows(cfg) {
        rows.push(meta_row(row, skill, lang));
    }
    Ok(rows)
}

/// Discovers the initial library from every base task and trains it.
pub fn run_base_stage(suite: &Suite, cfg: &EngineConfig) -> Result<(LifelongState, StepReport), EngineError> {
    let base: Vec<&TaskSpec> = suite.base_tasks().collect();
    let per_task = base
        .iter()
        .map(|t| segment_task(t, &cfg.segmentation))
        .collect::<Result<Vec<_>, _>>()?;
    let segments: Vec<Segment> = per_task.into_iter().flatten().collect();
    let step = base.len() as u32;

    let (labels, k_scores) = if cfg.variant == Variant::Monolithic {
        (vec![0; segments.len()], Vec::new())
    } else {
        let sel = select_k(&segments, cfg.k_max_sweep, cfg.seed)?;
        let best = sel.scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        if best <= 0.0 {
            warn!("DegenerateClustering: best mean silhouette {best:.3}; keeping K = {}", sel.k);
        }
        info!("base stage: K = {} from {} segments", sel.k, segments.len());
        (sel.labels, sel.scores)
    };
    let clustering = ClusteringState::from_labels(&segments, &labels, step, cfg.sil_threshold)?;

    let library = clustering
        .partitions
        .par_iter()
        .map(|p| {
            let members: Vec<&Segment> = p.members.iter().collect();
            let rows = rows_for(suite, &members, &cfg.rows)?;
            Ok((p.skill_id, SkillPolicy::train(p.skill_id, rows, cfg.skill, step)?))
        })
        .collect::<Result<BTreeMap<_, _>, EngineError>>()?;

    let labelled: Vec<(Segment, usize)> = segments.iter().cloned().zip(labels.iter().copied()).collect();
    let dims = &suite.dims;
    let mut meta = MetaController::new(cfg.k_max, cfg.alpha)
        .weighted([dims.feature, dims.proprio, dims.language], cfg.meta_block_weights);
    let empty = ReplayBuffer::new();
    meta.fit(meta_rows(suite, &labelled, &empty, &cfg.rows)?, clustering.k())?;

    let mut buffer = ReplayBuffer::new();
    for task in &base {
        let mine: Vec<(Segment, usize)> = labelled
            .iter()
            .filter(|(s, _)| s.task_id == task.task_id)
            .cloned()
            .collect();
        buffer.record_task_exemplars(task, &mine, cfg.n_save())?;
    }

    let report = StepReport {
        step,
        tasks: base.iter().map(|t| t.task_id.clone()).collect(),
        k_c: clustering.k(),
        new_skills: (0..clustering.k()).collect(),
        touched_skills: (0..clustering.k()).collect(),
        partition_sizes: clustering.sizes(),
        k_scores,
        segments: labelled.iter().map(|(s, k)| record(s, *k, None)).collect(),
    };
    let state = LifelongState {
        step,
        clustering,
        library,
        meta,
        buffer,
        rng_seed: cfg.seed,
    };
    Ok((state, report))
}

/// Learns one new task: assigns its segments to skills, updates the touched
/// skills, adds new ones, refits the meta-controller and stores exemplars.
pub fn run_lifelong_step(
    state: &mut LifelongState,
    suite: &Suite,
    task: &TaskSpec,
    cfg: &EngineConfig,
) -> Result<StepReport, EngineError> {
    if task.order != state.step + 1 {
        return Err(EngineError::OutOfOrderTask {
            expected: state.step + 1,
            found: task.order,
        });
    }
    let step = task.order;
    let segments = segment_task(task, &cfg.segmentation)?;
    let k_prev = state.k_c();
    let assignments = incremental_assign(&segments, &mut state.clustering, step, cfg.allow_new())?;

    let mut groups: BTreeMap<usize, Vec<&Segment>> = BTreeMap::new();
    for (seg, a) in segments.iter().zip(&assignments) {
        groups.entry(a.skill).or_default().push(seg);
    }
    let updates = groups
        .par_iter()
        .map(|(&k, segs)| {
            let rows = rows_for(suite, segs, &cfg.rows)?;
            match state.library.get(&k) {
                Some(existing) => {
                    let mut policy = existing.clone();
                    let mut all = rows;
                    all.extend(state.buffer.partition_view(k, &cfg.rows));
                    policy.finetune(all, step)?;
                    Ok((k, policy))
                }
                None => Ok((k, SkillPolicy::train(k, rows, cfg.skill, step)?)),
            }
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    for (k, policy) in updates {
        state.library.insert(k, policy);
    }

    let labelled: Vec<(Segment, usize)> = segments
        .iter()
        .cloned()
        .zip(assignments.iter().map(|a| a.skill))
        .collect();
    let k_c = state.k_c().max(state.meta.k_c);
    state
        .meta
        .fit(meta_rows(suite, &labelled, &state.buffer, &cfg.rows)?, k_c)?;
    state
        .buffer
        .record_task_exemplars(task, &labelled, cfg.n_save())?;
    state.step = step;

    let new_skills: Vec<usize> = (k_prev..state.k_c()).collect();
    debug!(
        "step {step}: {} segments, K_c {} -> {}",
        segments.len(),
        k_prev,
        state.k_c()
    );
    Ok(StepReport {
        step,
        tasks: vec![task.task_id.clone()],
        k_c: state.k_c(),
        new_skills,
        touched_skills: groups.keys().copied().collect(),
        partition_sizes: state.clustering.sizes(),
        k_scores: Vec::new(),
        segments: segments
            .iter()
            .zip(&assignments)
            .map(|(s, a)| record(s, a.skill, Some(a.silhouette)))
            .collect(),
    })
}

/// Runs one closed-loop episode: at every step the meta-controller picks a
/// skill and subgoal, the skill picks the action.
pub fn run_episode(state: &LifelongState, env: &mut dyn Environment, task: &TaskSpec) -> Result<bool, EngineError> {
    for _ in 0..task.horizon {
        let (feature, proprio) = env.observe()?;
        let decision = state.meta.predict(&feature, &proprio, &task.language_embedding)?;
        let skill = state
            .library
            .get(&decision.skill)
            .ok_or(PolicyError::Untrained(decision.skill))?;
        let action = skill.predict(&feature, &proprio, &decision.subgoal)?;
        env.step(&action);
        if env.success() {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Success rate on each of `tasks` over `episodes` seeded episodes.
/// Episodes run in parallel; results are combined in index order.
pub fn evaluate_tasks(
    state: &LifelongState,
    tasks: &[&TaskSpec],
    episodes: usize,
    env: &dyn EnvFactory,
    noise_seed: u64,
) -> Result<Vec<f64>, EngineError> {
    if episodes == 0 {
        return Err(EngineError::BadEpisodeCount);
    }
    for task in tasks {
        if task.order > state.step {
            return Err(EngineError::UnlearnedTask {
                task_id: task.task_id.clone(),
                order: task.order,
                step: state.step,
            });
        }
    }
    let jobs: Vec<(usize, u64)> = (0..tasks.len())
        .flat_map(|i| (0..episodes as u64).map(move |e| (i, e)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(i, e)| {
            let mut episode = env.episode(tasks[i], e, noise_seed)?;
            run_episode(state, episode.as_mut(), tasks[i])
        })
        .collect::<Result<Vec<bool>, EngineError>>()?;
    Ok(outcomes
        .chunks(episodes)
        .map(|c| c.iter().filter(|&&s| s).count() as f64 / episodes as f64)
        .collect())
}

pub fn evaluate_policy(
    state: &LifelongState,
    task: &TaskSpec,
    episodes: usize,
    env: &dyn EnvFactory,
    noise_seed: u64,
) -> Result<f64, EngineError> {
    Ok(evaluate_tasks(state, &[task], episodes, env, noise_seed)?[0])
}

/// Distinct skills used by each task's segments, for usage tables.
pub fn skill_usage(reports: &[StepReport]) -> BTreeMap<String, BTreeSet<usize>> {
    let mut usage: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for seg in reports.iter().flat_map(|r| &r.segments) {
        usage.entry(seg.task_id.clone()).or_default().insert(seg.skill);
    }
    usage
}
