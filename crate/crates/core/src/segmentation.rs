//! Temporal segmentation by bottom-up merging of adjacent windows.
//!
//! A demonstration is cut into fixed windows, then the most similar adjacent
//! pair (cosine similarity of mean-pooled features) is merged repeatedly. The
//! returned segmentation is the state reached when the best remaining merge
//! drops below the threshold, clamped to the configured segment-count range
//! and minimum length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{Demonstration, Frame};

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("cannot pool an empty slice of frames")]
    EmptySlice,
    #[error("vector norm below {NORM_EPS}")]
    ZeroNorm,
    #[error("vectors have different lengths ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("demo {demo_id} has {len} frames, need at least 2")]
    DemoTooShort { demo_id: String, len: usize },
    #[error("invalid segmentation config: {0}")]
    BadConfig(String),
}

/// Contiguous slice `[start, end)` of one demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub demo_id: String,
    pub task_id: String,
    pub start: usize,
    pub end: usize,
    pub pooled: Vec<f64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub window: usize,
    pub merge_threshold: f64,
    pub min_segments: usize,
    pub max_segments: usize,
    pub min_length: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            window: 5,
            merge_threshold: 0.85,
            min_segments: 1,
            max_segments: 10,
            min_length: 5,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        let bad = |m: &str| Err(SegmentError::BadConfig(m.to_string()));
        if self.window < 2 {
            return bad("window must be at least 2");
        }
        if !(-1.0..=1.0).contains(&self.merge_threshold) {
            return bad("merge_threshold must lie in [-1, 1]");
        }
        if self.min_segments < 1 {
            return bad("min_segments must be at least 1");
        }
        if self.max_segments < self.min_segments {
            return bad("max_segments must be >= min_segments");
        }
        if self.min_length < 1 {
            return bad("min_length must be at least 1");
        }
        Ok(())
    }
}

/// Component-wise mean of the frames' feature vectors.
pub fn pool_features(frames: &[Frame]) -> Result<Vec<f64>, SegmentError> {
    let first = frames.first().ok_or(SegmentError::EmptySlice)?;
    let mut acc = vec![0.0; first.feature.len()];
    for frame in frames {
        if frame.feature.len() != acc.len() {
            return Err(SegmentError::DimensionMismatch(acc.len(), frame.feature.len()));
        }
        for (a, x) in acc.iter_mut().zip(&frame.feature) {
            *a += x;
        }
    }
    let n = frames.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, SegmentError> {
    if u.len() != v.len() {
        return Err(SegmentError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    let (nu, nv) = (nu.sqrt(), nv.sqrt());
    if nu <= NORM_EPS || nv <= NORM_EPS {
        return Err(SegmentError::ZeroNorm);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Segments plus the similarity of every merge that was performed, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationTrace {
    pub segments: Vec<Segment>,
    pub merge_similarities: Vec<f64>,
}

/// Initial windows `[0,W), [W,2W), ...`. A trailing remainder of one frame
/// is folded into the previous window.
pub fn initial_windows(len: usize, window: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + window).min(len);
        if end - start < 2 && !out.is_empty() {
            let last: &mut (usize, usize) = out.last_mut().unwrap();
            last.1 = end;
        } else {
            out.push((start, end));
        }
        start = end;
    }
    out
}

pub fn segment_demo(
    demo: &Demonstration,
    cfg: &SegmentationConfig,
) -> Result<Vec<Segment>, SegmentError> {
    Ok(segment_demo_traced(demo, cfg)?.segments)
}

pub fn segment_demo_traced(
    demo: &Demonstration,
    cfg: &SegmentationConfig,
) -> Result<SegmentationTrace, SegmentError> {
    cfg.validate()?;
    if demo.len() < 2 {
        return Err(SegmentError::DemoTooShort {
            demo_id: demo.demo_id.clone(),
            len: demo.len(),
        });
    }
    let frames = &demo.frames;
    let mut bounds = initial_windows(frames.len(), cfg.window);
    let mut pooled = bounds
        .iter()
        .map(|&(s, e)| pool_features(&frames[s..e]))
        .collect::<Result<Vec<_>, _>>()?;
    // sims[i] is the similarity between segment i and i + 1
    let mut sims = (0..bounds.len().saturating_sub(1))
        .map(|i| cosine_similarity(&pooled[i], &pooled[i + 1]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut trace = Vec::new();

    loop {
        let n = bounds.len();
        if n <= 1 {
            break;
        }
        let best = argmax_pair(&sims, |_| true).expect("n >= 2");
        let has_short = bounds.iter().any(|&(s, e)| e - s < cfg.min_length);
        let pick = if n > cfg.max_segments
            || (sims[best] >= cfg.merge_threshold && n > cfg.min_segments)
        {
            Some(best)
        } else if has_short {
            argmax_pair(&sims, |i| {
                let short = |j: usize| bounds[j].1 - bounds[j].0 < cfg.min_length;
                short(i) || short(i + 1)
            })
        } else {
            None
        };
        let Some(i) = pick else { break };

        trace.push(sims[i]);
        let merged = (bounds[i].0, bounds[i + 1].1);
        bounds[i] = merged;
        bounds.remove(i + 1);
        pooled[i] = pool_features(&frames[merged.0..merged.1])?;
        pooled.remove(i + 1);
        sims.remove(i);
        if i > 0 {
            sims[i - 1] = cosine_similarity(&pooled[i - 1], &pooled[i])?;
        }
        if i + 1 < bounds.len() {
            sims[i] = cosine_similarity(&pooled[i], &pooled[i + 1])?;
        }
    }

    let segments = bounds
        .into_iter()
        .zip(pooled)
        .map(|((start, end), pooled)| Segment {
            demo_id: demo.demo_id.clone(),
            task_id: demo.task_id.clone(),
            start,
            end,
            pooled,
        })
        .collect();
    Ok(SegmentationTrace {
        segments,
        merge_similarities: trace,
    })
}

/// Highest similarity among admissible pairs; ties go to the earliest pair.
fn argmax_pair(sims: &[f64], admissible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in sims.iter().enumerate() {
        if !admissible(i) {
            continue;
        }
        match best {
            Some(b) if sims[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}
