use std::collections::BTreeMap;

use super::{ClusterError, Metric};

pub fn distance_matrix(points: &[Vec<f64>], metric: Metric) -> Result<Vec<Vec<f64>>, ClusterError> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = metric.distance(&points[i], &points[j])?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

/// Per-point silhouette from a precomputed distance matrix. Points in
/// singleton clusters score 0.
pub fn silhouette_from_distances(
    dist: &[Vec<f64>],
    labels: &[usize],
) -> Result<Vec<f64>, ClusterError> {
    if dist.len() != labels.len() {
        return Err(ClusterError::LabelMismatch {
            labels: labels.len(),
            points: dist.len(),
        });
    }
    // dense relabel so sums can be indexed
    let mut index = BTreeMap::new();
    for &l in labels {
        let next = index.len();
        index.entry(l).or_insert(next);
    }
    if index.len() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let dense: Vec<usize> = labels.iter().map(|l| index[l]).collect();
    let k = index.len();
    let mut sizes = vec![0usize; k];
    for &c in &dense {
        sizes[c] += 1;
    }

    let mut out = Vec::with_capacity(labels.len());
    let mut sums = vec![0.0; k];
    for (i, row) in dist.iter().enumerate() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (j, &d) in row.iter().enumerate() {
            if i != j {
                sums[dense[j]] += d;
            }
        }
        let own = dense[i];
        if sizes[own] == 1 {
            out.push(0.0);
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        out.push(if m > 0.0 { (b - a) / m } else { 0.0 });
    }
    Ok(out)
}

pub fn sample_silhouettes(
    points: &[Vec<f64>],
    labels: &[usize],
    metric: Metric,
) -> Result<Vec<f64>, ClusterError> {
    if points.len() != labels.len() {
        return Err(ClusterError::LabelMismatch {
            labels: labels.len(),
            points: points.len(),
        });
    }
    silhouette_from_distances(&distance_matrix(points, metric)?, labels)
}

pub fn mean_silhouette(
    points: &[Vec<f64>],
    labels: &[usize],
    metric: Metric,
) -> Result<f64, ClusterError> {
    let s = sample_silhouettes(points, labels, metric)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn two_tight_groups_on_a_line() {
        let s = mean_silhouette(&pts(&[0.0, 1.0, 10.0, 11.0]), &[0, 0, 1, 1], Metric::Euclidean)
            .unwrap();
        let expected = (9.5 / 10.5 + 8.5 / 9.5) / 2.0;
        assert!((s - expected).abs() < 1e-15);
        assert!((s - 0.8997494).abs() < 1e-7);
    }

    #[test]
    fn single_label_is_an_error() {
        assert_eq!(
            mean_silhouette(&pts(&[0.0, 1.0]), &[3, 3], Metric::Euclidean),
            Err(ClusterError::SingleCluster)
        );
    }

    #[test]
    fn singletons_score_zero() {
        let s = mean_silhouette(&pts(&[0.0, 5.0]), &[0, 1], Metric::Euclidean).unwrap();
        assert_eq!(s, 0.0);
    }
}
