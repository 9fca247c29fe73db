use rand::Rng;
use rand_chacha::ChaCha8Rng;

const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first center uniform, the rest proportional to the
/// squared distance to the nearest chosen center.
fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].clone());
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[idx].clone());
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centers.last().unwrap()));
        }
    }
    centers
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    for p in points {
        let (mut best, mut best_d) = (0, f64::INFINITY);
        for (c, center) in centers.iter().enumerate() {
            let d = sq_dist(p, center);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        labels.push(best);
        dists.push(best_d);
    }
    (labels, dists)
}

/// Moves the farthest point of a multi-member cluster into each empty
/// cluster so every cluster ends up non-empty (when n >= k).
fn fill_empty(labels: &mut [usize], dists: &mut [f64], k: usize) -> bool {
    let mut changed = false;
    for c in 0..k {
        if labels.contains(&c) {
            continue;
        }
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let mut pick: Option<usize> = None;
        for i in 0..labels.len() {
            if counts[labels[i]] < 2 {
                continue;
            }
            if pick.is_none_or(|p| dists[i] > dists[p]) {
                pick = Some(i);
            }
        }
        if let Some(i) = pick {
            labels[i] = c;
            dists[i] = 0.0;
            changed = true;
        }
    }
    changed
}

fn update_centers(points: &[Vec<f64>], labels: &[usize], centers: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let k = centers.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> KMeansResult {
    let k = centers.len();
    let (mut labels, mut dists) = assign(points, &centers);
    fill_empty(&mut labels, &mut dists, k);
    for _ in 0..MAX_ITER {
        update_centers(points, &labels, &mut centers);
        let (mut next, mut next_d) = assign(points, &centers);
        fill_empty(&mut next, &mut next_d, k);
        if next == labels {
            break;
        }
        labels = next;
    }
    update_centers(points, &labels, &mut centers);
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    KMeansResult {
        labels,
        centers,
        inertia,
    }
}

/// Lloyd's algorithm from `restarts` k-means++ seedings drawn from `rng`.
/// Keeps the lowest inertia; the earliest restart wins ties. Labels are
/// canonicalized by first appearance.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    assert!(k >= 1 && k <= points.len(), "k must lie in 1..=n");
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, seed_centers(points, k, rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut best = best.unwrap();
    let (labels, order) = canonical_with_order(&best.labels);
    best.centers = order.iter().map(|&c| best.centers[c].clone()).collect();
    best.labels = labels;
    best
}

fn canonical_with_order(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = Vec::new();
    let out = labels
        .iter()
        .map(|l| match order.iter().position(|o| o == l) {
            Some(p) => p,
            None => {
                order.push(*l);
                order.len() - 1
            }
        })
        .collect();
    (out, order)
}

/// Renames labels to 0, 1, 2, ... in order of first appearance.
pub fn canonicalize_labels(labels: &[usize]) -> Vec<usize> {
    canonical_with_order(labels).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn separates_two_blobs() {
        let mut pts = vec![];
        for i in 0..5 {
            pts.push(vec![0.0 + 0.01 * i as f64, 0.0]);
        }
        for i in 0..5 {
            pts.push(vec![5.0, 5.0 + 0.01 * i as f64]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = kmeans(&pts, 2, 10, &mut rng);
        assert_eq!(r.labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let pts = vec![vec![1.0, 1.0]; 6];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = kmeans(&pts, 3, 10, &mut rng);
        let mut seen = r.labels.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen, vec![0, 1, 2]);
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn canonical_relabel() {
        assert_eq!(canonicalize_labels(&[3, 3, 1, 7, 1]), vec![0, 0, 1, 2, 1]);
    }
}
