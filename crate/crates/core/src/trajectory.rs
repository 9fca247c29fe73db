//! Demonstration data model and the on-disk suite format.
//!
//! A suite is a `suite.json` manifest plus one JSON-Lines file per
//! demonstration, one frame per line:
//!
//! ```text
//! {"t":0,"feature":[..],"proprio":[..],"action":[..],"gt_skill":3,"gt_boundary":false}
//! ```
//!
//! `gt_skill` and `gt_boundary` are oracle labels written by the synthetic
//! benchmark. They are kept behind [`Frame::oracle`] so discovery code has no
//! field to read them from by accident.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{context}: expected {expected} values, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("task orders must form 1..M without gaps, got {0:?}")]
    NonContiguousOrder(Vec<u32>),
    #[error("demo {0} has fewer than two frames")]
    ShortDemo(String),
    #[error("demo {demo_id}: frame t={t} does not increase")]
    NonMonotoneTime { demo_id: String, t: u64 },
    #[error("demo {demo_id} has {len} frames, not below horizon {horizon}")]
    HorizonExceeded {
        demo_id: String,
        len: usize,
        horizon: usize,
    },
    #[error("suite has no base task")]
    NoBaseTask,
    #[error("base task {0} comes after a lifelong task")]
    StageOrder(String),
    #[error("duplicate task id {0}")]
    DuplicateTask(String),
    #[error("malformed {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TrajectoryError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            TrajectoryError::MissingFile(path.to_path_buf())
        } else {
            TrajectoryError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

/// Ground-truth annotations produced by a benchmark generator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleLabels {
    pub skill: Option<u32>,
    pub boundary: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: u64,
    pub feature: Vec<f64>,
    pub proprio: Vec<f64>,
    pub action: Vec<f64>,
    oracle: OracleLabels,
}

impl Frame {
    pub fn new(t: u64, feature: Vec<f64>, proprio: Vec<f64>, action: Vec<f64>) -> Self {
        Self {
            t,
            feature,
            proprio,
            action,
            oracle: OracleLabels::default(),
        }
    }

    pub fn with_oracle(mut self, oracle: OracleLabels) -> Self {
        self.oracle = oracle;
        self
    }

    /// Oracle labels. Only benchmark and scoring code should call this.
    pub fn oracle(&self) -> OracleLabels {
        self.oracle
    }
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    t: u64,
    feature: Vec<f64>,
    proprio: Vec<f64>,
    action: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_skill: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_boundary: Option<bool>,
}

impl From<&Frame> for FrameRecord {
    fn from(f: &Frame) -> Self {
        FrameRecord {
            t: f.t,
            feature: f.feature.clone(),
            proprio: f.proprio.clone(),
            action: f.action.clone(),
            gt_skill: f.oracle.skill,
            gt_boundary: f.oracle.boundary,
        }
    }
}

impl From<FrameRecord> for Frame {
    fn from(r: FrameRecord) -> Self {
        Frame {
            t: r.t,
            feature: r.feature,
            proprio: r.proprio,
            action: r.action,
            oracle: OracleLabels {
                skill: r.gt_skill,
                boundary: r.gt_boundary,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub demo_id: String,
    pub task_id: String,
    pub frames: Vec<Frame>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Base,
    Lifelong,
}

/// Vector widths shared by every frame of a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    #[serde(rename = "F")]
    pub feature: usize,
    #[serde(rename = "P")]
    pub proprio: usize,
    #[serde(rename = "A")]
    pub action: usize,
    #[serde(rename = "L")]
    pub language: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task_id: String,
    pub order: u32,
    pub stage: Stage,
    pub language_embedding: Vec<f64>,
    pub goal_id: String,
    pub init_seed: u64,
    pub horizon: usize,
    pub demos: Vec<Demonstration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub suite_id: String,
    pub dims: Dims,
    pub tasks: Vec<TaskSpec>,
}

impl Suite {
    pub fn base_tasks(&self) -> impl Iterator<Item = &TaskSpec> {
        self.tasks.iter().filter(|t| t.stage == Stage::Base)
    }

    pub fn lifelong_tasks(&self) -> impl Iterator<Item = &TaskSpec> {
        self.tasks.iter().filter(|t| t.stage == Stage::Lifelong)
    }

    pub fn task_by_order(&self, order: u32) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.order == order)
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    /// Number of base tasks, i.e. the step index reached after the base stage.
    pub fn base_len(&self) -> usize {
        self.base_tasks().count()
    }

    /// Checks every suite-level and demo-level invariant.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let mut ids = HashSet::new();
        for task in &self.tasks {
            if !ids.insert(task.task_id.as_str()) {
                return Err(TrajectoryError::DuplicateTask(task.task_id.clone()));
            }
        }
        let orders: Vec<u32> = self.tasks.iter().map(|t| t.order).collect();
        if orders.iter().enumerate().any(|(i, &o)| o as usize != i + 1) {
            return Err(TrajectoryError::NonContiguousOrder(orders));
        }
        if self.base_len() == 0 {
            return Err(TrajectoryError::NoBaseTask);
        }
        let mut seen_lifelong = false;
        for task in &self.tasks {
            match task.stage {
                Stage::Lifelong => seen_lifelong = true,
                Stage::Base if seen_lifelong => {
                    return Err(TrajectoryError::StageOrder(task.task_id.clone()))
                }
                Stage::Base => {}
            }
            check_len(
                &format!("task {} language_embedding", task.task_id),
                self.dims.language,
                task.language_embedding.len(),
            )?;
            for demo in &task.demos {
                validate_demo(demo, &self.dims)?;
                if demo.len() >= task.horizon {
                    return Err(TrajectoryError::HorizonExceeded {
                        demo_id: demo.demo_id.clone(),
                        len: demo.len(),
                        horizon: task.horizon,
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_len(context: &str, expected: usize, found: usize) -> Result<(), TrajectoryError> {
    if expected != found {
        return Err(TrajectoryError::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Confirms a demo has at least two frames, strictly increasing `t` and
/// uniform vector widths.
pub fn validate_demo(demo: &Demonstration, dims: &Dims) -> Result<(), TrajectoryError> {
    if demo.frames.len() < 2 {
        return Err(TrajectoryError::ShortDemo(demo.demo_id.clone()));
    }
    let mut prev: Option<u64> = None;
    for frame in &demo.frames {
        if let Some(p) = prev {
            if frame.t <= p {
                return Err(TrajectoryError::NonMonotoneTime {
                    demo_id: demo.demo_id.clone(),
                    t: frame.t,
                });
            }
        }
        prev = Some(frame.t);
        let ctx = |what: &str| format!("demo {} frame t={} {}", demo.demo_id, frame.t, what);
        check_len(&ctx("feature"), dims.feature, frame.feature.len())?;
        check_len(&ctx("proprio"), dims.proprio, frame.proprio.len())?;
        check_len(&ctx("action"), dims.action, frame.action.len())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub suite_id: String,
    pub dims: Dims,
    pub tasks: Vec<ManifestTask>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestTask {
    pub task_id: String,
    pub order: u32,
    pub stage: Stage,
    pub language_embedding: Vec<f64>,
    pub goal_id: String,
    pub init_seed: u64,
    pub horizon: usize,
    pub demos: Vec<String>,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, TrajectoryError> {
    let file = File::open(path).map_err(|e| TrajectoryError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| TrajectoryError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TrajectoryError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| TrajectoryError::io(parent, e))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| TrajectoryError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| TrajectoryError::io(path, e))
}

/// Reads one demonstration file. The demo id is the file stem.
pub fn read_demo(path: &Path, task_id: &str) -> Result<Demonstration, TrajectoryError> {
    let file = File::open(path).map_err(|e| TrajectoryError::io(path, e))?;
    let mut frames = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| TrajectoryError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FrameRecord =
            serde_json::from_str(&line).map_err(|source| TrajectoryError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        frames.push(record.into());
    }
    let demo_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Demonstration {
        demo_id,
        task_id: task_id.to_string(),
        frames,
    })
}

pub fn write_demo(path: &Path, demo: &Demonstration) -> Result<(), TrajectoryError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| TrajectoryError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| TrajectoryError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for frame in &demo.frames {
        serde_json::to_writer(&mut out, &FrameRecord::from(frame)).map_err(|source| {
            TrajectoryError::Parse {
                path: path.to_path_buf(),
                source,
            }
        })?;
        out.write_all(b"\n").map_err(|e| TrajectoryError::io(path, e))?;
    }
    out.flush().map_err(|e| TrajectoryError::io(path, e))
}

/// Loads and fully validates a suite from its manifest. Tasks come back
/// sorted by `order`.
pub fn load_suite(manifest_path: &Path) -> Result<Suite, TrajectoryError> {
    let manifest: Manifest = read_json(manifest_path)?;
    let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut tasks = Vec::with_capacity(manifest.tasks.len());
    for mt in manifest.tasks {
        let demos = mt
            .demos
            .par_iter()
            .map(|rel| read_demo(&root.join(rel), &mt.task_id))
            .collect::<Result<Vec<_>, _>>()?;
        tasks.push(TaskSpec {
            task_id: mt.task_id,
            order: mt.order,
            stage: mt.stage,
            language_embedding: mt.language_embedding,
            goal_id: mt.goal_id,
            init_seed: mt.init_seed,
            horizon: mt.horizon,
            demos,
        });
    }
    tasks.sort_by_key(|t| t.order);
    let suite = Suite {
        suite_id: manifest.suite_id,
        dims: manifest.dims,
        tasks,
    };
    suite.validate()?;
    Ok(suite)
}

/// Relative path used for a demo inside a suite directory.
pub fn demo_rel_path(task_id: &str, demo_id: &str) -> String {
    format!("demos/{task_id}/{demo_id}.jsonl")
}

/// Writes `suite.json` and all demo files under `dir`; returns the manifest path.
pub fn write_suite(suite: &Suite, dir: &Path) -> Result<PathBuf, TrajectoryError> {
    let manifest = Manifest {
        suite_id: suite.suite_id.clone(),
        dims: suite.dims,
        tasks: suite
            .tasks
            .iter()
            .map(|t| ManifestTask {
                task_id: t.task_id.clone(),
                order: t.order,
                stage: t.stage,
                language_embedding: t.language_embedding.clone(),
                goal_id: t.goal_id.clone(),
                init_seed: t.init_seed,
                horizon: t.horizon,
                demos: t
                    .demos
                    .iter()
                    .map(|d| demo_rel_path(&t.task_id, &d.demo_id))
                    .collect(),
            })
            .collect(),
    };
    for task in &suite.tasks {
        task.demos.par_iter().try_for_each(|d| {
            write_demo(&dir.join(demo_rel_path(&task.task_id, &d.demo_id)), d)
        })?;
    }
    let path = dir.join("suite.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            feature: 2,
            proprio: 1,
            action: 1,
            language: 1,
        }
    }

    fn demo(ts: &[u64]) -> Demonstration {
        Demonstration {
            demo_id: "d0".into(),
            task_id: "t".into(),
            frames: ts
                .iter()
                .map(|&t| Frame::new(t, vec![1.0, 0.0], vec![0.0], vec![0.0]))
                .collect(),
        }
    }

    fn task(id: &str, order: u32, stage: Stage) -> TaskSpec {
        TaskSpec {
            task_id: id.into(),
            order,
            stage,
            language_embedding: vec![1.0],
            goal_id: "g".into(),
            init_seed: 0,
            horizon: 10,
            demos: vec![demo(&[0, 1, 2])],
        }
    }

    #[test]
    fn two_frame_demo_is_valid() {
        assert!(validate_demo(&demo(&[0, 1]), &dims()).is_ok());
    }

    #[test]
    fn repeated_time_is_rejected() {
        assert!(matches!(
            validate_demo(&demo(&[0, 0, 1]), &dims()),
            Err(TrajectoryError::NonMonotoneTime { t: 0, .. })
        ));
    }

    #[test]
    fn single_frame_is_short() {
        assert!(matches!(
            validate_demo(&demo(&[0]), &dims()),
            Err(TrajectoryError::ShortDemo(_))
        ));
    }

    #[test]
    fn feature_width_is_checked() {
        let mut d = demo(&[0, 1]);
        d.frames[1].feature.pop();
        assert!(matches!(
            validate_demo(&d, &dims()),
            Err(TrajectoryError::DimensionMismatch { expected: 2, found: 1, .. })
        ));
    }

    #[test]
    fn suite_order_gap_is_rejected() {
        let suite = Suite {
            suite_id: "s".into(),
            dims: dims(),
            tasks: vec![task("a", 1, Stage::Base), task("b", 3, Stage::Lifelong)],
        };
        assert!(matches!(
            suite.validate(),
            Err(TrajectoryError::NonContiguousOrder(_))
        ));
    }

    #[test]
    fn base_after_lifelong_is_rejected() {
        let suite = Suite {
            suite_id: "s".into(),
            dims: dims(),
            tasks: vec![task("a", 1, Stage::Lifelong), task("b", 2, Stage::Base)],
        };
        assert!(matches!(suite.validate(), Err(TrajectoryError::StageOrder(_))));
    }

    #[test]
    fn horizon_bounds_demo_length() {
        let mut t = task("a", 1, Stage::Base);
        t.horizon = 3;
        let suite = Suite {
            suite_id: "s".into(),
            dims: dims(),
            tasks: vec![t],
        };
        assert!(matches!(
            suite.validate(),
            Err(TrajectoryError::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn oracle_labels_survive_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = demo(&[0, 1]);
        d.frames[1] = d.frames[1].clone().with_oracle(OracleLabels {
            skill: Some(4),
            boundary: Some(true),
        });
        let path = dir.path().join("d0.jsonl");
        write_demo(&path, &d).unwrap();
        let back = read_demo(&path, "t").unwrap();
        assert_eq!(back, d);
        assert_eq!(back.frames[0].oracle(), OracleLabels::default());
    }
}
