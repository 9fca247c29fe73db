//! Forward transfer, negative backward transfer and area under the success
//! curve from a lower-triangular success matrix.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("success matrix is missing r[{i}][{j}]")]
    IncompleteMatrix { i: usize, j: usize },
    #[error("success matrix is empty")]
    Empty,
    #[error("cell ({i}, {j}) is outside the lower triangle of a {m}-task matrix")]
    OutOfRange { i: usize, j: usize, m: usize },
}

/// `r[i][j]` is the success rate on task `j` after learning the first `i`
/// tasks. Indices are 1-based in the API; row `i` stores `i` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessMatrix {
    pub m: usize,
    pub episodes_per_cell: usize,
    pub r: Vec<Vec<Option<f64>>>,
}

impl SuccessMatrix {
    pub fn new(m: usize, episodes_per_cell: usize) -> Self {
        Self {
            m,
            episodes_per_cell,
            r: (1..=m).map(|i| vec![None; i]).collect(),
        }
    }

    /// Builds a full matrix from nested rows (row `i` has `i` entries).
    pub fn from_rows(rows: Vec<Vec<f64>>, episodes_per_cell: usize) -> Self {
        Self {
            m: rows.len(),
            episodes_per_cell,
            r: rows
                .into_iter()
                .map(|row| row.into_iter().map(Some).collect())
                .collect(),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<(), MetricsError> {
        if j == 0 || j > i || i > self.m {
            return Err(MetricsError::OutOfRange { i, j, m: self.m });
        }
        self.r[i - 1][j - 1] = Some(value);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64, MetricsError> {
        self.r
            .get(i.wrapping_sub(1))
            .and_then(|row| row.get(j.wrapping_sub(1)))
            .copied()
            .flatten()
            .ok_or(MetricsError::IncompleteMatrix { i, j })
    }

    pub fn is_complete(&self) -> bool {
        self.r.len() == self.m
            && self
                .r
                .iter()
                .enumerate()
                .all(|(i, row)| row.len() == i + 1 && row.iter().all(Option::is_some))
    }
}

/// How the per-task NBT values are averaged. The last task has no later
/// evaluations, so its NBT is an empty average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NbtConvention {
    /// NBT_M = 0 and the mean runs over all M tasks.
    #[default]
    IncludeLast,
    /// The mean runs over tasks 1..M-1 only (0 when M = 1).
    ExcludeLast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifelongMetrics {
    pub fwt: f64,
    pub nbt: f64,
    pub auc: f64,
    pub nbt_m: Vec<f64>,
    pub auc_m: Vec<f64>,
}

impl LifelongMetrics {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            fwt: self.fwt * factor,
            nbt: self.nbt * factor,
            auc: self.auc * factor,
            nbt_m: self.nbt_m.iter().map(|v| v * factor).collect(),
            auc_m: self.auc_m.iter().map(|v| v * factor).collect(),
        }
    }
}

pub fn compute_lifelong_metrics(
    r: &SuccessMatrix,
    convention: NbtConvention,
) -> Result<LifelongMetrics, MetricsError> {
    let m = r.m;
    if m == 0 {
        return Err(MetricsError::Empty);
    }
    let mut fwt = 0.0;
    let mut nbt_m = Vec::with_capacity(m);
    let mut auc_m = Vec::with_capacity(m);
    for task in 1..=m {
        let diag = r.get(task, task)?;
        fwt += diag;
        let mut drop = 0.0;
        let mut later = 0.0;
        for q in task + 1..=m {
            let v = r.get(q, task)?;
            drop += diag - v;
            later += v;
        }
        let after = (m - task) as f64;
        nbt_m.push(if task < m { drop / after } else { 0.0 });
        auc_m.push((diag + later) / (after + 1.0));
    }
    let nbt = match convention {
        NbtConvention::IncludeLast => nbt_m.iter().sum::<f64>() / m as f64,
        NbtConvention::ExcludeLast if m == 1 => 0.0,
        NbtConvention::ExcludeLast => nbt_m[..m - 1].iter().sum::<f64>() / (m - 1) as f64,
    };
    Ok(LifelongMetrics {
        fwt: fwt / m as f64,
        nbt,
        auc: auc_m.iter().sum::<f64>() / m as f64,
        nbt_m,
        auc_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> SuccessMatrix {
        SuccessMatrix::from_rows(vec![vec![0.8], vec![0.6, 0.7], vec![0.5, 0.7, 0.9]], 20)
    }

    #[test]
    fn three_task_example() {
        let m = compute_lifelong_metrics(&example(), NbtConvention::IncludeLast).unwrap();
        assert!((m.fwt - 0.8).abs() < 1e-12);
        assert!((m.nbt - 0.25 / 3.0).abs() < 1e-12);
        assert!((m.auc - (1.9 / 3.0 + 0.7 + 0.9) / 3.0).abs() < 1e-12);
        assert!((m.nbt_m[0] - 0.25).abs() < 1e-12);
        assert_eq!(&m.nbt_m[1..], &[0.0, 0.0]);
    }

    #[test]
    fn last_task_convention_is_switchable() {
        let m = compute_lifelong_metrics(&example(), NbtConvention::ExcludeLast).unwrap();
        assert!((m.nbt - 0.125).abs() < 1e-12);
        let one = SuccessMatrix::from_rows(vec![vec![0.4]], 1);
        assert_eq!(compute_lifelong_metrics(&one, NbtConvention::ExcludeLast).unwrap().nbt, 0.0);
    }

    #[test]
    fn perfect_agent() {
        let rows = (1..=5).map(|i| vec![1.0; i]).collect();
        let m = compute_lifelong_metrics(&SuccessMatrix::from_rows(rows, 1), NbtConvention::IncludeLast).unwrap();
        assert_eq!((m.fwt, m.nbt, m.auc), (1.0, 0.0, 1.0));
    }

    #[test]
    fn missing_cell() {
        let mut r = SuccessMatrix::new(3, 20);
        for (i, j) in [(1, 1), (2, 1), (2, 2), (3, 2), (3, 3)] {
            r.set(i, j, 0.5).unwrap();
        }
        assert!(!r.is_complete());
        assert_eq!(
            compute_lifelong_metrics(&r, NbtConvention::IncludeLast),
            Err(MetricsError::IncompleteMatrix { i: 3, j: 1 })
        );
    }

    #[test]
    fn upper_triangle_is_rejected() {
        let mut r = SuccessMatrix::new(3, 1);
        assert!(r.set(1, 2, 0.5).is_err());
        assert!(r.set(4, 1, 0.5).is_err());
    }
}
