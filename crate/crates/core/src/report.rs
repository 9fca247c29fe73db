//! Tables and a small plot from a finished run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::RunConfig;
use crate::engine::StepReport;
use crate::metrics::{compute_lifelong_metrics, NbtConvention, SuccessMatrix};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("incomplete run in {dir}: {reason}")]
    IncompleteRun { dir: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn incomplete(dir: &Path, reason: impl Into<String>) -> ReportError {
    ReportError::IncompleteRun {
        dir: dir.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn read_matrix(run_dir: &Path) -> Result<SuccessMatrix, ReportError> {
    let path = run_dir.join("matrix.json");
    let text = fs::read_to_string(&path).map_err(|e| incomplete(run_dir, format!("matrix.json: {e}")))?;
    let matrix: SuccessMatrix =
        serde_json::from_str(&text).map_err(|e| incomplete(run_dir, format!("matrix.json: {e}")))?;
    if !matrix.is_complete() {
        return Err(incomplete(run_dir, "matrix.json has missing cells"));
    }
    Ok(matrix)
}

pub fn read_log(run_dir: &Path) -> Result<Vec<StepReport>, ReportError> {
    let path = run_dir.join("log.jsonl");
    let file = fs::File::open(&path).map_err(|e| incomplete(run_dir, format!("log.jsonl: {e}")))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| incomplete(run_dir, format!("log.jsonl: {e}")))?);
    }
    if out.is_empty() {
        return Err(incomplete(run_dir, "log.jsonl is empty"));
    }
    Ok(out)
}

/// `task_id,skill,segments,frames`, one row per distinct (task, skill).
pub fn skill_usage_csv(reports: &[StepReport]) -> String {
    let mut usage: BTreeMap<(String, usize), (usize, usize)> = BTreeMap::new();
    for seg in reports.iter().flat_map(|r| &r.segments) {
        let e = usage.entry((seg.task_id.clone(), seg.skill)).or_default();
        e.0 += 1;
        e.1 += seg.end - seg.start;
    }
    let mut out = String::from("task_id,skill,segments,frames\n");
    for ((task, skill), (n, frames)) in usage {
        writeln!(out, "{task},{skill},{n},{frames}").unwrap();
    }
    out
}

/// `after_task,task,success`, one row per lower-triangle cell.
pub fn success_matrix_csv(matrix: &SuccessMatrix) -> String {
    let mut out = String::from("after_task,task,success\n");
    for i in 1..=matrix.m {
        for j in 1..=i {
            if let Ok(v) = matrix.get(i, j) {
                writeln!(out, "{i},{j},{v}").unwrap();
            }
        }
    }
    out
}

/// Mean success over learned tasks after each step.
pub fn running_success(matrix: &SuccessMatrix) -> Vec<f64> {
    (1..=matrix.m)
        .map(|i| (1..=i).filter_map(|j| matrix.get(i, j).ok()).sum::<f64>() / i as f64)
        .collect()
}

/// A bare-bones SVG line chart of `values` in [0, 1].
pub fn line_svg(values: &[f64], title: &str) -> String {
    let (w, h, pad) = (480.0, 240.0, 30.0);
    let n = values.len().max(2) - 1;
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / n as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v.clamp(0.0, 1.0);
    let points: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v)))
        .collect();
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <text x=\"{pad}\" y=\"18\" font-size=\"12\">{title}</text>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n\
         </svg>\n",
        points.join(" "),
        b = h - pad,
        r = w - pad,
    )
}

/// Writes the report tables into `<run_dir>/report` and returns their paths.
pub fn cmd_report(run_dir: &Path, svg: bool) -> Result<Vec<PathBuf>, ReportError> {
    let matrix = read_matrix(run_dir)?;
    let reports = read_log(run_dir)?;
    let convention = fs::read_to_string(run_dir.join("config.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<RunConfig>(&t).ok())
        .map_or(NbtConvention::default(), |c| c.metrics.nbt_convention);
    let metrics = compute_lifelong_metrics(&matrix, convention).map_err(|e| incomplete(run_dir, e.to_string()))?;

    let dir = run_dir.join("report");
    fs::create_dir_all(&dir).map_err(|source| ReportError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut summary = String::from("metric,value\n");
    writeln!(summary, "fwt,{}\nnbt,{}\nauc,{}", metrics.fwt, metrics.nbt, metrics.auc).unwrap();
    for (m, (n, a)) in metrics.nbt_m.iter().zip(&metrics.auc_m).enumerate() {
        writeln!(summary, "nbt_{},{n}\nauc_{},{a}", m + 1, m + 1).unwrap();
    }
    let mut files = vec![
        ("skill_usage.csv", skill_usage_csv(&reports)),
        ("success_matrix.csv", success_matrix_csv(&matrix)),
        ("metrics.csv", summary),
    ];
    if svg {
        files.push(("auc.svg", line_svg(&running_success(&matrix), "mean success over learned tasks")));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SegmentRecord;

    fn seg(task: &str, skill: usize, len: usize) -> SegmentRecord {
        SegmentRecord {
            task_id: task.into(),
            demo_id: "d".into(),
            start: 0,
            end: len,
            skill,
            silhouette: None,
        }
    }

    #[test]
    fn usage_rows_per_task_and_skill() {
        let r = StepReport {
            step: 1,
            tasks: vec!["a".into(), "b".into()],
            k_c: 2,
            new_skills: vec![0, 1],
            touched_skills: vec![0, 1],
            partition_sizes: vec![2, 1],
            k_scores: vec![],
            segments: vec![seg("a", 0, 5), seg("a", 0, 4), seg("a", 1, 3), seg("b", 1, 6)],
        };
        let csv = skill_usage_csv(&[r]);
        assert_eq!(csv, "task_id,skill,segments,frames\na,0,2,9\na,1,1,3\nb,1,1,6\n");
    }

    #[test]
    fn corrupted_matrix_is_incomplete() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("matrix.json"), "{not json").unwrap();
        assert!(matches!(cmd_report(dir.path(), false), Err(ReportError::IncompleteRun { .. })));
    }

    #[test]
    fn single_step_tables() {
        let m = SuccessMatrix::from_rows(vec![vec![0.5]], 2);
        assert_eq!(success_matrix_csv(&m), "after_task,task,success\n1,1,0.5\n");
        assert_eq!(running_success(&m), vec![0.5]);
    }
}
