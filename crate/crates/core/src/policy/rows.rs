use serde::{Deserialize, Serialize};

use crate::segmentation::pool_features;
use crate::trajectory::Demonstration;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowConfig {
    /// Look-ahead T in frames.
    pub lookahead: usize,
    /// Width of the pooled subgoal window.
    pub subgoal_window: usize,
}

impl Default for RowConfig {
    fn default() -> Self {
        Self {
            lookahead: 10,
            subgoal_window: 3,
        }
    }
}

/// A slice `[start, end)` of a demonstration, borrowed for row building.
#[derive(Debug, Clone, Copy)]
pub struct SegmentView<'a> {
    pub demo: &'a Demonstration,
    pub start: usize,
    pub end: usize,
}

/// One supervised frame: observation, subgoal embedding and target action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub task_id: String,
    pub demo_id: String,
    pub t: u64,
    pub feature: Vec<f64>,
    pub proprio: Vec<f64>,
    pub subgoal: Vec<f64>,
    pub action: Vec<f64>,
}

impl TrainingRow {
    pub fn key(&self) -> (&str, &str, u64) {
        (&self.task_id, &self.demo_id, self.t)
    }
}

/// Frame indices pooled into the subgoal for the frame at index `t` of the
/// segment `[start, end)`: the window ending at `min(t + T, end - 1)`,
/// clipped to the segment.
pub fn subgoal_range(t: usize, start: usize, end: usize, cfg: &RowConfig) -> std::ops::Range<usize> {
    let last = (t + cfg.lookahead).min(end - 1);
    let first = (last + 1).saturating_sub(cfg.subgoal_window.max(1)).max(start);
    first..last + 1
}

pub fn make_training_rows(views: &[SegmentView<'_>], cfg: &RowConfig) -> Vec<TrainingRow> {
    let mut rows = Vec::new();
    for view in views {
        let frames = &view.demo.frames;
        for t in view.start..view.end {
            let window = subgoal_range(t, view.start, view.end, cfg);
            let subgoal = pool_features(&frames[window]).expect("window is never empty");
            let f = &frames[t];
            rows.push(TrainingRow {
                task_id: view.demo.task_id.clone(),
                demo_id: view.demo.demo_id.clone(),
                t: f.t,
                feature: f.feature.clone(),
                proprio: f.proprio.clone(),
                subgoal,
                action: f.action.clone(),
            });
        }
    }
    rows
}
