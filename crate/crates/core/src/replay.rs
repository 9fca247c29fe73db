//! Exemplar replay buffer: a few stored demonstrations per learned task plus
//! a per-skill index of the segments inside them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{make_training_rows, RowConfig, SegmentView, TrainingRow};
use crate::segmentation::Segment;
use crate::trajectory::{read_demo, read_json, write_demo, write_json, Demonstration, TaskSpec, TrajectoryError};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("segment {demo_id}[{start}..{end}) of a saved demo has no skill label")]
    UnknownSkillLabel {
        demo_id: String,
        start: usize,
        end: usize,
    },
    #[error("buffered segment refers to missing demo {task_id}/{demo_id}")]
    DanglingSegment { task_id: String, demo_id: String },
    #[error(transparent)]
    Store(#[from] TrajectoryError),
}

/// A labelled slice `[start, end)` of one stored exemplar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferedSegment {
    pub task_id: String,
    pub demo_id: String,
    pub start: usize,
    pub end: usize,
    pub skill: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayBuffer {
    pub by_task: BTreeMap<String, Vec<Demonstration>>,
    pub languages: BTreeMap<String, Vec<f64>>,
    pub by_skill: BTreeMap<usize, Vec<BufferedSegment>>,
    pub step: u32,
}

#[derive(Serialize, Deserialize)]
struct IndexTask {
    task_id: String,
    language_embedding: Vec<f64>,
    demos: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Index {
    step: u32,
    tasks: Vec<IndexTask>,
    by_skill: BTreeMap<usize, Vec<BufferedSegment>>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores the first `n_save` demos of `task` (by demo id) and files each
    /// of their segments under its skill label. `labelled` must cover every
    /// segment of the saved demos.
    pub fn record_task_exemplars(
        &mut self,
        task: &TaskSpec,
        labelled: &[(Segment, usize)],
        n_save: usize,
    ) -> Result<(), ReplayError> {
        let mut demos: Vec<&Demonstration> = task.demos.iter().collect();
        demos.sort_by(|a, b| a.demo_id.cmp(&b.demo_id));
        demos.truncate(n_save);

        let mut staged: Vec<BufferedSegment> = Vec::new();
        for demo in &demos {
            let mut mine: Vec<&(Segment, usize)> =
                labelled.iter().filter(|(s, _)| s.demo_id == demo.demo_id).collect();
            mine.sort_by_key(|(s, _)| s.start);
            let mut cursor = 0;
            for (seg, skill) in mine {
                if seg.start != cursor {
                    break;
                }
                cursor = seg.end;
                staged.push(BufferedSegment {
                    task_id: task.task_id.clone(),
                    demo_id: demo.demo_id.clone(),
                    start: seg.start,
                    end: seg.end,
                    skill: *skill,
                });
            }
            if cursor != demo.len() {
                return Err(ReplayError::UnknownSkillLabel {
                    demo_id: demo.demo_id.clone(),
                    start: cursor,
                    end: demo.len(),
                });
            }
        }

        if !demos.is_empty() {
            self.by_task
                .entry(task.task_id.clone())
                .or_default()
                .extend(demos.into_iter().cloned());
            self.languages
                .insert(task.task_id.clone(), task.language_embedding.clone());
        }
        for seg in staged {
            self.by_skill.entry(seg.skill).or_default().push(seg);
        }
        self.step += 1;
        Ok(())
    }

    fn demo(&self, task_id: &str, demo_id: &str) -> Option<&Demonstration> {
        self.by_task
            .get(task_id)?
            .iter()
            .find(|d| d.demo_id == demo_id)
    }

    fn views<'a>(&'a self, segments: &'a [BufferedSegment]) -> Vec<SegmentView<'a>> {
        segments
            .iter()
            .filter_map(|s| {
                self.demo(&s.task_id, &s.demo_id).map(|demo| SegmentView {
                    demo,
                    start: s.start,
                    end: s.end,
                })
            })
            .collect()
    }

    /// Per-frame training rows for every buffered segment of `skill`.
    pub fn partition_view(&self, skill: usize, cfg: &RowConfig) -> Vec<TrainingRow> {
        match self.by_skill.get(&skill) {
            Some(segs) => make_training_rows(&self.views(segs), cfg),
            None => Vec::new(),
        }
    }

    /// All buffered rows with their skill label and task language, ordered by
    /// skill then insertion.
    pub fn labelled_rows(&self, cfg: &RowConfig) -> Vec<(TrainingRow, usize, &[f64])> {
        let mut out = Vec::new();
        for (&skill, segs) in &self.by_skill {
            for (seg, view) in segs.iter().zip(self.views(segs)) {
                let lang = self.languages[&seg.task_id].as_slice();
                for row in make_training_rows(&[view], cfg) {
                    out.push((row, skill, lang));
                }
            }
        }
        out
    }

    pub fn frame_count(&self) -> usize {
        self.by_task.values().flatten().map(Demonstration::len).sum()
    }

    pub fn save(&self, dir: &Path) -> Result<(), ReplayError> {
        let mut tasks = Vec::new();
        for (task_id, demos) in &self.by_task {
            let mut rels = Vec::new();
            for demo in demos {
                let rel = format!("demos/{task_id}/{}.jsonl", demo.demo_id);
                write_demo(&dir.join(&rel), demo)?;
                rels.push(rel);
            }
            tasks.push(IndexTask {
                task_id: task_id.clone(),
                language_embedding: self.languages[task_id].clone(),
                demos: rels,
            });
        }
        let index = Index {
            step: self.step,
            tasks,
            by_skill: self.by_skill.clone(),
        };
        write_json(&dir.join("index.json"), &index)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ReplayError> {
        let index: Index = read_json(&dir.join("index.json"))?;
        let mut buffer = Self {
            step: index.step,
            by_skill: index.by_skill,
            ..Self::default()
        };
        for task in index.tasks {
            let demos = task
                .demos
                .iter()
                .map(|rel| read_demo(&dir.join(rel), &task.task_id))
                .collect::<Result<Vec<_>, _>>()?;
            buffer.languages.insert(task.task_id.clone(), task.language_embedding);
            buffer.by_task.insert(task.task_id, demos);
        }
        for seg in buffer.by_skill.values().flatten() {
            if buffer.demo(&seg.task_id, &seg.demo_id).is_none() {
                return Err(ReplayError::DanglingSegment {
                    task_id: seg.task_id.clone(),
                    demo_id: seg.demo_id.clone(),
                });
            }
        }
        Ok(buffer)
    }
}
