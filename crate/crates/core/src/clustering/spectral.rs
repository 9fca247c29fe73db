use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::kmeans;
use super::silhouette::{distance_matrix, silhouette_from_distances};
use super::{ClusterError, Metric};
use crate::segmentation::Segment;

const KMEANS_RESTARTS: usize = 10;
const SIGMA_FLOOR: f64 = 1e-6;

/// Eigenvectors of the symmetric normalized Laplacian of the cosine
/// affinity graph, columns ordered by ascending eigenvalue.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub eigenvalues: Vec<f64>,
    vectors: DMatrix<f64>,
    order: Vec<usize>,
}

impl SpectralEmbedding {
    pub fn new(points: &[Vec<f64>]) -> Result<Self, ClusterError> {
        let dist = distance_matrix(points, Metric::Cosine)?;
        Ok(Self::from_distances(&dist))
    }

    pub fn from_distances(dist: &[Vec<f64>]) -> Self {
        let n = dist.len();
        let mut upper: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                upper.push(dist[i][j]);
            }
        }
        let sigma = median(&mut upper).max(SIGMA_FLOOR);

        let mut affinity = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    affinity[(i, j)] = (-dist[i][j].max(0.0) / sigma).exp();
                }
            }
        }
        let inv_sqrt_deg: Vec<f64> = (0..n)
            .map(|i| {
                let d: f64 = affinity.row(i).sum();
                if d > 0.0 {
                    1.0 / d.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let mut laplacian = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                laplacian[(i, j)] -= inv_sqrt_deg[i] * affinity[(i, j)] * inv_sqrt_deg[j];
            }
        }
        let eig = SymmetricEigen::new(laplacian);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        Self {
            eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
            vectors: eig.eigenvectors,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of the first `k` eigenvectors, each scaled to unit length.
    pub fn rows(&self, k: usize) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                let mut row: Vec<f64> = self.order[..k]
                    .iter()
                    .map(|&c| self.vectors[(i, c)])
                    .collect();
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|x| *x /= norm);
                }
                row
            })
            .collect()
    }

    pub fn cluster(&self, k: usize, seed: u64) -> Result<Vec<usize>, ClusterError> {
        check_k(self.len(), k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(kmeans(&self.rows(k), k, KMEANS_RESTARTS, &mut rng).labels)
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn check_k(n: usize, k: usize) -> Result<(), ClusterError> {
    if n < 3 {
        return Err(ClusterError::TooFewSegments(n));
    }
    if k < 2 || k > n - 1 {
        return Err(ClusterError::BadK { k, max: n - 1 });
    }
    Ok(())
}

pub fn spectral_cluster_points(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, ClusterError> {
    check_k(points.len(), k)?;
    SpectralEmbedding::new(points)?.cluster(k, seed)
}

/// Spectral clustering of segments on their pooled features.
pub fn spectral_cluster(segments: &[Segment], k: usize, seed: u64) -> Result<Vec<usize>, ClusterError> {
    let points: Vec<Vec<f64>> = segments.iter().map(|s| s.pooled.clone()).collect();
    spectral_cluster_points(&points, k, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    pub labels: Vec<usize>,
    /// `(K, mean silhouette)` for every K tried.
    pub scores: Vec<(usize, f64)>,
    /// Per-segment silhouette under the selected labels.
    pub silhouettes: Vec<f64>,
}

/// Sweeps K over `2..=min(k_max_sweep, n-1)` and keeps the labeling with the
/// highest mean cosine silhouette; ties go to the smaller K.
pub fn select_k(segments: &[Segment], k_max_sweep: usize, seed: u64) -> Result<KSelection, ClusterError> {
    let n = segments.len();
    if n < 3 {
        return Err(ClusterError::TooFewSegments(n));
    }
    let points: Vec<Vec<f64>> = segments.iter().map(|s| s.pooled.clone()).collect();
    let dist = distance_matrix(&points, Metric::Cosine)?;
    let embedding = SpectralEmbedding::from_distances(&dist);
    let upper = k_max_sweep.min(n - 1).max(2);

    let mut best: Option<(f64, KSelection)> = None;
    let mut scores = Vec::new();
    for k in 2..=upper {
        let labels = embedding.cluster(k, seed)?;
        let (score, silhouettes) = match silhouette_from_distances(&dist, &labels) {
            Ok(s) => (s.iter().sum::<f64>() / s.len() as f64, s),
            Err(ClusterError::SingleCluster) => (f64::NEG_INFINITY, vec![0.0; n]),
            Err(e) => return Err(e),
        };
        scores.push((k, score));
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            let sel = KSelection {
                k,
                labels,
                scores: Vec::new(),
                silhouettes,
            };
            best = Some((score, sel));
        }
    }
    let (_, mut best) = best.expect("at least K=2 is tried");
    best.scores = scores;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(i: usize, pooled: Vec<f64>) -> Segment {
        Segment {
            demo_id: format!("d{i}"),
            task_id: "t".into(),
            start: 0,
            end: 5,
            pooled,
        }
    }

    #[test]
    fn two_orthogonal_groups() {
        let mut segs = vec![];
        for i in 0..5 {
            segs.push(seg(i, vec![1.0, 0.0]));
        }
        for i in 5..10 {
            segs.push(seg(i, vec![0.0, 1.0]));
        }
        let labels = spectral_cluster(&segs, 2, 7).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn k_bounds() {
        let segs: Vec<_> = (0..2).map(|i| seg(i, vec![1.0, i as f64])).collect();
        assert!(matches!(
            spectral_cluster(&segs, 2, 0),
            Err(ClusterError::TooFewSegments(2))
        ));
        let segs: Vec<_> = (0..4).map(|i| seg(i, vec![1.0, i as f64])).collect();
        assert!(matches!(spectral_cluster(&segs, 4, 0), Err(ClusterError::BadK { .. })));
        assert!(matches!(spectral_cluster(&segs, 1, 0), Err(ClusterError::BadK { .. })));
    }

    #[test]
    fn identical_segments_are_deterministic() {
        let segs: Vec<_> = (0..6).map(|i| seg(i, vec![0.2, 0.9])).collect();
        let a = spectral_cluster(&segs, 2, 3).unwrap();
        let b = spectral_cluster(&segs, 2, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], 0);
    }

    #[test]
    fn three_segments_only_allow_k2() {
        let segs = vec![seg(0, vec![1.0, 0.0]), seg(1, vec![1.0, 0.1]), seg(2, vec![0.0, 1.0])];
        let sel = select_k(&segs, 8, 0).unwrap();
        assert_eq!(sel.k, 2);
        assert_eq!(sel.scores.len(), 1);
    }
}
