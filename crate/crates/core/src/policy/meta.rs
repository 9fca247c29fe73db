use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::skill::Standardizer;
use super::PolicyError;

/// One meta-controller exemplar: query `feature ++ proprio ++ language`,
/// the skill label of its segment, and the subgoal that segment implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRow {
    pub q: Vec<f64>,
    pub label: usize,
    pub subgoal: Vec<f64>,
}

/// Softmax over `z` with entries at index `>= k_c` masked out. Masked
/// entries get probability exactly zero; they are dropped from the
/// normalizer rather than set to `-inf`.
pub fn masked_skill_logits(z: &[f64], k_c: usize) -> Result<Vec<f64>, PolicyError> {
    if k_c == 0 || k_c > z.len() {
        return Err(PolicyError::BadMaskWidth { k_c, k_max: z.len() });
    }
    let live = &z[..k_c];
    let max = live.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = vec![0.0; z.len()];
    if max == f64::NEG_INFINITY {
        p[..k_c].iter_mut().for_each(|x| *x = 1.0 / k_c as f64);
        return Ok(p);
    }
    let mut total = 0.0;
    for (pk, &zk) in p.iter_mut().zip(live) {
        *pk = (zk - max).exp();
        total += *pk;
    }
    p[..k_c].iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

/// Nearest-exemplar skill selector with a `K_max`-wide output head and a
/// mask of width `K_c`. The mask only ever widens.
///
/// With block weighting, queries and exemplars are compared after the same
/// block-balanced standardization the skill policies use, fitted on the
/// exemplars at `fit` time. Without it distances are plain Euclidean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaController {
    pub k_max: usize,
    pub k_c: usize,
    pub alpha: f64,
    /// Widths of the feature, proprio and language blocks and their weights.
    pub weighting: Option<([usize; 3], [f64; 3])>,
    pub standardizer: Option<Standardizer>,
    #[serde(skip)]
    pub rows: Vec<MetaRow>,
    #[serde(skip)]
    cache: OnceLock<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDecision {
    pub skill: usize,
    pub subgoal: Vec<f64>,
    pub probabilities: Vec<f64>,
}

fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut d = 0.0;
    for (x, y) in a.iter().zip(b) {
        d += (x - y) * (x - y);
        if d >= bound {
            break;
        }
    }
    d
}

impl MetaController {
    pub fn new(k_max: usize, alpha: f64) -> Self {
        Self {
            k_max,
            k_c: 0,
            alpha,
            weighting: None,
            standardizer: None,
            rows: Vec::new(),
            cache: OnceLock::new(),
        }
    }

    pub fn weighted(mut self, blocks: [usize; 3], weights: [f64; 3]) -> Self {
        self.weighting = Some((blocks, weights));
        self
    }

    /// Reattaches exemplars after deserialization without refitting.
    pub fn restore_rows(&mut self, rows: Vec<MetaRow>) {
        self.rows = rows;
        self.cache = OnceLock::new();
    }

    fn project(&self, q: &[f64]) -> Vec<f64> {
        match &self.standardizer {
            Some(s) => s.apply(q),
            None => q.to_vec(),
        }
    }

    fn projected_rows(&self) -> &[f64] {
        self.cache
            .get_or_init(|| self.rows.iter().flat_map(|r| self.project(&r.q)).collect())
    }

    /// Replaces the exemplars and widens the mask to `k_c`.
    pub fn fit(&mut self, rows: Vec<MetaRow>, k_c: usize) -> Result<(), PolicyError> {
        if k_c == 0 || k_c > self.k_max {
            return Err(PolicyError::BadMaskWidth {
                k_c,
                k_max: self.k_max,
            });
        }
        if k_c < self.k_c {
            return Err(PolicyError::MaskNarrowing {
                current: self.k_c,
                requested: k_c,
            });
        }
        if let Some(r) = rows.iter().find(|r| r.label >= k_c) {
            return Err(PolicyError::LabelOutOfRange { label: r.label, k_c });
        }
        self.standardizer = match self.weighting {
            Some((blocks, weights)) if !rows.is_empty() => {
                let width: usize = blocks.iter().sum();
                if let Some(r) = rows.iter().find(|r| r.q.len() != width) {
                    return Err(PolicyError::DimensionMismatch {
                        expected: width,
                        found: r.q.len(),
                    });
                }
                let qs: Vec<Vec<f64>> = rows.iter().map(|r| r.q.clone()).collect();
                Some(Standardizer::fit(&qs, blocks, weights))
            }
            _ => None,
        };
        self.rows = rows;
        self.cache = OnceLock::new();
        self.k_c = k_c;
        Ok(())
    }

    /// Logits `z_k = -alpha * d_k` where `d_k` is the distance from the
    /// query to the nearest exemplar labelled `k` (`-inf` when none), plus
    /// the index of that exemplar.
    pub fn logits(&self, q: &[f64]) -> (Vec<f64>, Vec<Option<usize>>) {
        let q = self.project(q);
        let width = q.len().max(1);
        let mut best = vec![f64::INFINITY; self.k_max];
        let mut arg = vec![None; self.k_max];
        for (i, (row, x)) in self.rows.iter().zip(self.projected_rows().chunks_exact(width)).enumerate() {
            let d = sq_dist_bounded(x, &q, best[row.label]);
            if d < best[row.label] {
                best[row.label] = d;
                arg[row.label] = Some(i);
            }
        }
        let z = best
            .iter()
            .map(|&d| if d.is_finite() { -self.alpha * d.sqrt() } else { f64::NEG_INFINITY })
            .collect();
        (z, arg)
    }

    pub fn predict(&self, feature: &[f64], proprio: &[f64], language: &[f64]) -> Result<MetaDecision, PolicyError> {
        if self.rows.is_empty() || self.k_c == 0 {
            return Err(PolicyError::Untrained(usize::MAX));
        }
        let mut q = Vec::with_capacity(feature.len() + proprio.len() + language.len());
        q.extend_from_slice(feature);
        q.extend_from_slice(proprio);
        q.extend_from_slice(language);
        if q.len() != self.rows[0].q.len() {
            return Err(PolicyError::DimensionMismatch {
                expected: self.rows[0].q.len(),
                found: q.len(),
            });
        }
        let (z, arg) = self.logits(&q);
        let probabilities = masked_skill_logits(&z, self.k_c)?;
        let mut skill = 0;
        for (k, &p) in probabilities.iter().enumerate() {
            if p > probabilities[skill] {
                skill = k;
            }
        }
        let row = arg[skill].ok_or(PolicyError::Untrained(skill))?;
        Ok(MetaDecision {
            skill,
            subgoal: self.rows[row].subgoal.clone(),
            probabilities,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_entries_get_zero() {
        let p = masked_skill_logits(&[0.0, 0.0, 5.0, 5.0], 2).unwrap();
        assert_eq!(p, vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn full_width_uniform() {
        let p = masked_skill_logits(&[1.5; 4], 4).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn width_one_is_one_hot() {
        assert_eq!(masked_skill_logits(&[-9.0, 3.0, 100.0], 1).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn bad_widths() {
        assert!(masked_skill_logits(&[0.0, 1.0], 0).is_err());
        assert!(masked_skill_logits(&[0.0, 1.0], 3).is_err());
    }

    fn row(q: Vec<f64>, label: usize, g: f64) -> MetaRow {
        MetaRow { q, label, subgoal: vec![g] }
    }

    #[test]
    fn exact_query_selects_its_label() {
        let mut mc = MetaController::new(8, 1.0);
        mc.fit(vec![row(vec![0.0, 0.0], 1, 1.0), row(vec![1.0, 1.0], 3, 3.0)], 5).unwrap();
        let d = mc.predict(&[1.0], &[1.0], &[]).unwrap();
        assert_eq!(d.skill, 3);
        assert_eq!(d.subgoal, vec![3.0]);
    }

    #[test]
    fn unseen_labels_never_win() {
        let mut mc = MetaController::new(8, 1.0);
        mc.fit(vec![row(vec![0.0], 0, 0.0), row(vec![10.0], 1, 1.0)], 5).unwrap();
        for x in [-3.0, 0.0, 4.0, 50.0] {
            assert!(mc.predict(&[x], &[], &[]).unwrap().skill < 2);
        }
    }

    #[test]
    fn ties_go_to_lower_label() {
        let mut mc = MetaController::new(4, 1.0);
        mc.fit(vec![row(vec![2.0], 2, 2.0), row(vec![-2.0], 1, 1.0)], 3).unwrap();
        assert_eq!(mc.predict(&[0.0], &[], &[]).unwrap().skill, 1);
    }

    #[test]
    fn mask_cannot_narrow() {
        let mut mc = MetaController::new(4, 1.0);
        mc.fit(vec![row(vec![0.0], 0, 0.0)], 3).unwrap();
        assert!(matches!(
            mc.fit(vec![row(vec![0.0], 0, 0.0)], 2),
            Err(PolicyError::MaskNarrowing { .. })
        ));
    }
}
