use serde::{Deserialize, Serialize};

use super::{cosine_distance, ClusterError};
use crate::segmentation::Segment;

/// Segments assigned to one skill. `skill_id`s are never renumbered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub skill_id: usize,
    pub members: Vec<Segment>,
    pub created_at_step: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringState {
    pub partitions: Vec<Partition>,
    pub sil_threshold: f64,
}

impl ClusteringState {
    pub fn new(sil_threshold: f64) -> Self {
        Self {
            partitions: Vec::new(),
            sil_threshold,
        }
    }

    /// Builds partitions `0..k` from base-stage labels.
    pub fn from_labels(
        segments: &[Segment],
        labels: &[usize],
        step: u32,
        sil_threshold: f64,
    ) -> Result<Self, ClusterError> {
        if segments.len() != labels.len() {
            return Err(ClusterError::LabelMismatch {
                labels: labels.len(),
                points: segments.len(),
            });
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut partitions: Vec<Partition> = (0..k)
            .map(|skill_id| Partition {
                skill_id,
                members: Vec::new(),
                created_at_step: step,
            })
            .collect();
        for (seg, &l) in segments.iter().zip(labels) {
            partitions[l].members.push(seg.clone());
        }
        Ok(Self {
            partitions,
            sil_threshold,
        })
    }

    /// Number of partitions, `K_c`.
    pub fn k(&self) -> usize {
        self.partitions.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.partitions.iter().map(|p| p.members.len()).collect()
    }
}

/// Mean cosine distance from `x` to the members of each partition.
fn mean_distances(x: &[f64], state: &ClusteringState) -> Result<Vec<f64>, ClusterError> {
    state
        .partitions
        .iter()
        .map(|p| {
            if p.members.is_empty() {
                return Ok(f64::INFINITY);
            }
            let mut total = 0.0;
            for m in &p.members {
                total += cosine_distance(x, &m.pooled)?;
            }
            Ok(total / p.members.len() as f64)
        })
        .collect()
}

fn silhouette_for(means: &[f64], k: usize) -> f64 {
    let a = means[k];
    let b = if means.len() == 1 {
        1.0
    } else {
        means
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &d)| d)
            .fold(f64::INFINITY, f64::min)
    };
    let m = a.max(b);
    if m > 0.0 {
        (b - a) / m
    } else {
        0.0
    }
}

/// Silhouette of `x` under the hypothesis that it belongs to partition `k`.
/// With a single partition the separation term is fixed at 1.
pub fn candidate_silhouette(x: &[f64], k: usize, state: &ClusteringState) -> Result<f64, ClusterError> {
    match state.partitions.get(k) {
        Some(p) if !p.members.is_empty() => {}
        _ => return Err(ClusterError::UnknownPartition(k)),
    }
    Ok(silhouette_for(&mean_distances(x, state)?, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub skill: usize,
    /// Best candidate silhouette (NaN when no partition existed).
    pub silhouette: f64,
    pub created: bool,
}

/// Serially assigns `new_segments` (already in canonical order). Each
/// segment joins the partition with the highest candidate silhouette when
/// that value reaches the threshold, otherwise it opens partition `K_c`.
/// Partitions opened earlier in the same call are candidates for later
/// segments. With `allow_new == false` every segment joins its best
/// candidate regardless of the threshold.
pub fn incremental_assign(
    new_segments: &[Segment],
    state: &mut ClusteringState,
    step: u32,
    allow_new: bool,
) -> Result<Vec<Assignment>, ClusterError> {
    let mut out = Vec::with_capacity(new_segments.len());
    for seg in new_segments {
        let best = if state.partitions.is_empty() {
            None
        } else {
            let means = mean_distances(&seg.pooled, state)?;
            let mut best: Option<(usize, f64)> = None;
            for k in 0..means.len() {
                if !means[k].is_finite() {
                    continue;
                }
                let s = silhouette_for(&means, k);
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((k, s));
                }
            }
            best
        };
        let assignment = match best {
            Some((k, s)) if s >= state.sil_threshold || !allow_new => {
                state.partitions[k].members.push(seg.clone());
                Assignment {
                    skill: k,
                    silhouette: s,
                    created: false,
                }
            }
            None if !allow_new => return Err(ClusterError::NoPartitions),
            other => {
                let skill_id = state.partitions.len();
                state.partitions.push(Partition {
                    skill_id,
                    members: vec![seg.clone()],
                    created_at_step: step,
                });
                Assignment {
                    skill: skill_id,
                    silhouette: other.map_or(f64::NAN, |(_, s)| s),
                    created: true,
                }
            }
        };
        out.push(assignment);
    }
    Ok(out)
}
