//! Grouping segments into skill partitions.
//!
//! The base stage runs spectral clustering over a sweep of cluster counts and
//! keeps the count with the best mean silhouette. Lifelong steps assign new
//! segments one at a time to the partition with the highest silhouette, or
//! open a new partition when no candidate clears the threshold.

mod agreement;
mod incremental;
mod kmeans;
mod silhouette;
mod spectral;

use thiserror::Error;

use crate::segmentation::{cosine_similarity, SegmentError};

pub use agreement::adjusted_rand_index;
pub use incremental::{
    candidate_silhouette, incremental_assign, Assignment, ClusteringState, Partition,
};
pub use kmeans::{canonicalize_labels, kmeans, KMeansResult};
pub use silhouette::{distance_matrix, mean_silhouette, sample_silhouettes, silhouette_from_distances};
pub use spectral::{select_k, spectral_cluster, spectral_cluster_points, KSelection, SpectralEmbedding};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least 3 segments, got {0}")]
    TooFewSegments(usize),
    #[error("cluster count {k} outside 2..={max}")]
    BadK { k: usize, max: usize },
    #[error("silhouette needs at least two distinct labels")]
    SingleCluster,
    #[error("no partition with skill id {0}")]
    UnknownPartition(usize),
    #[error("labels length {labels} does not match {points} points")]
    LabelMismatch { labels: usize, points: usize },
    #[error("no partitions exist and new partitions are disabled")]
    NoPartitions,
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// `1 - cos(u, v)`, the geometry used for all skill clustering.
    Cosine,
    Euclidean,
}

impl Metric {
    pub fn distance(self, u: &[f64], v: &[f64]) -> Result<f64, ClusterError> {
        match self {
            Metric::Cosine => cosine_distance(u, v),
            Metric::Euclidean => {
                if u.len() != v.len() {
                    return Err(SegmentError::DimensionMismatch(u.len(), v.len()).into());
                }
                Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            }
        }
    }
}

pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, ClusterError> {
    Ok(1.0 - cosine_similarity(u, v)?)
}
