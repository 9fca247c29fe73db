use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::rows::TrainingRow;
use super::PolicyError;

const EXACT_MATCH: f64 = 1e-9;
const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkillConfig {
    pub knn_k: usize,
    /// Relative weight of the feature, proprio and subgoal blocks in the
    /// k-NN distance. Each block's weight is spread over its dimensions so
    /// wide blocks do not drown narrow ones.
    pub block_weights: [f64; 3],
}

impl Default for SkillConfig {
    fn default() -> Self {
        Self {
            knn_k: 5,
            block_weights: [0.05, 5.0, 0.1],
        }
    }
}

/// Per-dimension affine map `(x - mean) * scale`, frozen at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub(crate) fn fit(xs: &[Vec<f64>], blocks: [usize; 3], weights: [f64; 3]) -> Self {
        let dim = xs[0].len();
        let n = xs.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for x in xs {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut scale = Vec::with_capacity(dim);
        let mut d = 0;
        for (b, &width) in blocks.iter().enumerate() {
            let w = if width > 0 { weights[b] / width as f64 } else { 0.0 };
            for _ in 0..width {
                let std = (var[d] / n).sqrt();
                let std = if std < STD_FLOOR { 1.0 } else { std };
                scale.push(w.sqrt() / std);
                d += 1;
            }
        }
        Self { mean, scale }
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

/// k-NN regression stand-in for a goal-conditioned skill policy. Inputs are
/// `feature ++ proprio ++ subgoal`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkillPolicy {
    pub skill_id: usize,
    pub config: SkillConfig,
    pub trained_at_steps: Vec<u32>,
    pub blocks: [usize; 3],
    pub standardizer: Standardizer,
    #[serde(skip)]
    pub rows: Vec<TrainingRow>,
    #[serde(skip)]
    cache: OnceLock<Vec<f64>>,
}

impl PartialEq for SkillPolicy {
    fn eq(&self, other: &Self) -> bool {
        self.skill_id == other.skill_id
            && self.config == other.config
            && self.trained_at_steps == other.trained_at_steps
            && self.blocks == other.blocks
            && self.standardizer == other.standardizer
            && self.rows == other.rows
    }
}

fn input(row: &TrainingRow) -> Vec<f64> {
    let mut x = Vec::with_capacity(row.feature.len() + row.proprio.len() + row.subgoal.len());
    x.extend_from_slice(&row.feature);
    x.extend_from_slice(&row.proprio);
    x.extend_from_slice(&row.subgoal);
    x
}

fn blocks_of(row: &TrainingRow) -> [usize; 3] {
    [row.feature.len(), row.proprio.len(), row.subgoal.len()]
}

impl SkillPolicy {
    /// Trains a fresh policy on `rows`, replacing any previous data.
    pub fn train(
        skill_id: usize,
        rows: Vec<TrainingRow>,
        config: SkillConfig,
        step: u32,
    ) -> Result<Self, PolicyError> {
        if rows.is_empty() {
            return Err(PolicyError::EmptyTrainingSet(skill_id));
        }
        let blocks = blocks_of(&rows[0]);
        let mut policy = Self {
            skill_id,
            config,
            trained_at_steps: vec![step],
            blocks,
            standardizer: Standardizer {
                mean: Vec::new(),
                scale: Vec::new(),
            },
            rows: Vec::new(),
            cache: OnceLock::new(),
        };
        let mut seen = HashSet::new();
        let rows: Vec<TrainingRow> = rows
            .into_iter()
            .filter(|r| seen.insert((r.task_id.clone(), r.demo_id.clone(), r.t)))
            .collect();
        policy.set_rows(rows)?;
        Ok(policy)
    }

    /// Appends rows not already present (keyed by task, demo and frame) and
    /// refreshes the standardizer. An empty batch leaves the policy untouched.
    pub fn finetune(&mut self, rows: Vec<TrainingRow>, step: u32) -> Result<(), PolicyError> {
        if rows.is_empty() {
            return Ok(());
        }
        let mut seen: HashSet<(String, String, u64)> = self
            .rows
            .iter()
            .map(|r| (r.task_id.clone(), r.demo_id.clone(), r.t))
            .collect();
        let mut all = std::mem::take(&mut self.rows);
        all.extend(
            rows.into_iter()
                .filter(|r| seen.insert((r.task_id.clone(), r.demo_id.clone(), r.t))),
        );
        self.trained_at_steps.push(step);
        self.set_rows(all)
    }

    fn set_rows(&mut self, rows: Vec<TrainingRow>) -> Result<(), PolicyError> {
        let width: usize = self.blocks.iter().sum();
        let xs: Vec<Vec<f64>> = rows.iter().map(input).collect();
        if let Some(bad) = rows.iter().find(|r| blocks_of(r) != self.blocks) {
            return Err(PolicyError::DimensionMismatch {
                expected: width,
                found: input(bad).len(),
            });
        }
        self.standardizer = Standardizer::fit(&xs, self.blocks, self.config.block_weights);
        self.rows = rows;
        self.cache = OnceLock::new();
        Ok(())
    }

    /// Reattaches rows after deserialization without refitting the
    /// standardizer.
    pub fn restore_rows(&mut self, rows: Vec<TrainingRow>) {
        self.rows = rows;
        self.cache = OnceLock::new();
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn standardized(&self) -> &[f64] {
        self.cache.get_or_init(|| {
            self.rows
                .iter()
                .flat_map(|r| self.standardizer.apply(&input(r)))
                .collect()
        })
    }

    /// Inverse-distance weighted mean of the `knn_k` nearest rows' actions.
    pub fn predict(&self, feature: &[f64], proprio: &[f64], subgoal: &[f64]) -> Result<Vec<f64>, PolicyError> {
        if self.rows.is_empty() {
            return Err(PolicyError::Untrained(self.skill_id));
        }
        let width: usize = self.blocks.iter().sum();
        let found = feature.len() + proprio.len() + subgoal.len();
        if found != width {
            return Err(PolicyError::DimensionMismatch {
                expected: width,
                found,
            });
        }
        let mut x = Vec::with_capacity(width);
        x.extend_from_slice(feature);
        x.extend_from_slice(proprio);
        x.extend_from_slice(subgoal);
        let q = self.standardizer.apply(&x);

        let k = self.config.knn_k.max(1).min(self.rows.len());
        // (squared distance, row index), ascending; earlier rows win ties
        let mut nearest: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, z) in self.standardized().chunks_exact(width).enumerate() {
            let bound = if nearest.len() == k { nearest[k - 1].0 } else { f64::INFINITY };
            let mut d = 0.0;
            for (a, b) in z.iter().zip(&q) {
                d += (a - b) * (a - b);
                if d >= bound {
                    break;
                }
            }
            if d < bound {
                let pos = nearest.partition_point(|&(nd, _)| nd <= d);
                nearest.insert(pos, (d, i));
                nearest.truncate(k);
            }
        }
        let (d0, i0) = nearest[0];
        if d0.sqrt() < EXACT_MATCH {
            return Ok(self.rows[i0].action.clone());
        }
        let mut out = vec![0.0; self.rows[i0].action.len()];
        let mut total = 0.0;
        for &(d, i) in &nearest {
            let w = 1.0 / d.sqrt();
            total += w;
            for (o, a) in out.iter_mut().zip(&self.rows[i].action) {
                *o += w * a;
            }
        }
        out.iter_mut().for_each(|o| *o /= total);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(demo: &str, t: u64, f: f64, p: f64, g: f64, a: f64) -> TrainingRow {
        TrainingRow {
            task_id: "task".into(),
            demo_id: demo.into(),
            t,
            feature: vec![f],
            proprio: vec![p],
            subgoal: vec![g],
            action: vec![a],
        }
    }

    fn cfg() -> SkillConfig {
        SkillConfig::default()
    }

    #[test]
    fn training_keeps_every_row() {
        let rows: Vec<_> = (0..20).map(|t| row("d", t, t as f64, 0.0, 0.0, 1.0)).collect();
        let p = SkillPolicy::train(0, rows, cfg(), 1).unwrap();
        assert_eq!(p.len(), 20);
    }

    #[test]
    fn empty_training_set() {
        assert!(matches!(
            SkillPolicy::train(3, vec![], cfg(), 1),
            Err(PolicyError::EmptyTrainingSet(3))
        ));
    }

    #[test]
    fn finetune_without_rows_changes_nothing() {
        let rows: Vec<_> = (0..5).map(|t| row("d", t, t as f64, 0.0, 0.0, 1.0)).collect();
        let mut p = SkillPolicy::train(0, rows, cfg(), 1).unwrap();
        let before = serde_json::to_string(&p).unwrap();
        p.finetune(vec![], 2).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), before);
        assert_eq!(p.len(), 5);
    }

    #[test]
    fn finetune_deduplicates() {
        let rows: Vec<_> = (0..5).map(|t| row("d", t, t as f64, 0.0, 0.0, 1.0)).collect();
        let mut p = SkillPolicy::train(0, rows, cfg(), 1).unwrap();
        let new = vec![
            row("d", 3, 3.0, 0.0, 0.0, 1.0),
            row("d", 4, 4.0, 0.0, 0.0, 1.0),
            row("e", 0, 0.5, 0.0, 0.0, 1.0),
            row("e", 1, 1.5, 0.0, 0.0, 1.0),
            row("e", 2, 2.5, 0.0, 0.0, 1.0),
        ];
        p.finetune(new, 2).unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(p.trained_at_steps, vec![1, 2]);
    }

    #[test]
    fn exact_match_returns_that_action() {
        let rows: Vec<_> = (0..10)
            .map(|t| row("d", t, t as f64, (t * t) as f64, 1.0, t as f64 * 2.0))
            .collect();
        let p = SkillPolicy::train(0, rows, cfg(), 1).unwrap();
        assert_eq!(p.predict(&[4.0], &[16.0], &[1.0]).unwrap(), vec![8.0]);
    }

    #[test]
    fn single_row_answers_everything() {
        let p = SkillPolicy::train(0, vec![row("d", 0, 1.0, 2.0, 3.0, 7.5)], cfg(), 1).unwrap();
        assert_eq!(p.predict(&[-4.0], &[9.0], &[0.0]).unwrap(), vec![7.5]);
    }

    #[test]
    fn equidistant_pair_averages() {
        let rows = vec![row("d", 0, 0.0, 0.0, 0.0, 1.0), row("d", 1, 2.0, 0.0, 0.0, 3.0)];
        let p = SkillPolicy::train(0, rows, cfg(), 1).unwrap();
        let a = p.predict(&[1.0], &[0.0], &[0.0]).unwrap();
        assert!((a[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn untrained_after_restore_without_rows() {
        let p = SkillPolicy::train(0, vec![row("d", 0, 1.0, 2.0, 3.0, 7.5)], cfg(), 1).unwrap();
        let mut q: SkillPolicy = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert!(matches!(q.predict(&[0.0], &[0.0], &[0.0]), Err(PolicyError::Untrained(0))));
        q.restore_rows(p.rows.clone());
        assert_eq!(q, p);
    }
}
