//! On-disk snapshots of a learner so `eval` and `report` can run after `run`.
//!
//! ```text
//! state/state.json                step and seed
//! state/clustering.json           partitions with member segments
//! state/skills/<k>/meta.json      skill metadata and standardizer
//! state/skills/<k>/rows.jsonl     training rows, one per line
//! state/meta/meta.json            meta-controller head and mask width
//! state/meta/rows.jsonl           meta-controller exemplars
//! buffer/                         replay buffer (index.json + demos)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusteringState;
use crate::engine::LifelongState;
use crate::policy::{MetaController, SkillPolicy};
use crate::replay::{ReplayBuffer, ReplayError};
use crate::trajectory::{read_json, write_json, TrajectoryError};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Store(#[from] TrajectoryError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed line in {path}: {source}")]
    Line {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Serialize, Deserialize)]
struct StateHeader {
    step: u32,
    rng_seed: u64,
    skills: Vec<usize>,
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("plain data serializes");
        out.push(b'\n');
    }
    out
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PersistError> {
    let io = |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| PersistError::Line {
            path: path.to_path_buf(),
            source,
        })?);
    }
    Ok(out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    let io = |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

/// The exact bytes written for a skill: `(meta.json, rows.jsonl)`.
pub fn skill_bytes(policy: &SkillPolicy) -> (Vec<u8>, Vec<u8>) {
    let mut meta = serde_json::to_vec_pretty(policy).expect("plain data serializes");
    meta.push(b'\n');
    (meta, to_jsonl(&policy.rows))
}

pub fn save_skill(policy: &SkillPolicy, dir: &Path) -> Result<(), PersistError> {
    let (meta, rows) = skill_bytes(policy);
    write_bytes(&dir.join("meta.json"), &meta)?;
    write_bytes(&dir.join("rows.jsonl"), &rows)
}

pub fn load_skill(dir: &Path) -> Result<SkillPolicy, PersistError> {
    let mut policy: SkillPolicy = read_json(&dir.join("meta.json"))?;
    policy.restore_rows(read_jsonl(&dir.join("rows.jsonl"))?);
    Ok(policy)
}

fn skill_dir(state_dir: &Path, k: usize) -> PathBuf {
    state_dir.join("skills").join(format!("{k:03}"))
}

/// Writes `state/` and `buffer/` under `run_dir`.
pub fn save_state(state: &LifelongState, run_dir: &Path) -> Result<(), PersistError> {
    let dir = run_dir.join("state");
    let header = StateHeader {
        step: state.step,
        rng_seed: state.rng_seed,
        skills: state.library.keys().copied().collect(),
    };
    write_json(&dir.join("state.json"), &header)?;
    write_json(&dir.join("clustering.json"), &state.clustering)?;
    for (k, policy) in &state.library {
        save_skill(policy, &skill_dir(&dir, *k))?;
    }
    write_json(&dir.join("meta").join("meta.json"), &state.meta)?;
    write_bytes(&dir.join("meta").join("rows.jsonl"), &to_jsonl(&state.meta.rows))?;
    state.buffer.save(&run_dir.join("buffer"))?;
    Ok(())
}

pub fn load_state(run_dir: &Path) -> Result<LifelongState, PersistError> {
    let dir = run_dir.join("state");
    let header: StateHeader = read_json(&dir.join("state.json"))?;
    let clustering: ClusteringState = read_json(&dir.join("clustering.json"))?;
    let mut library = BTreeMap::new();
    for k in header.skills {
        library.insert(k, load_skill(&skill_dir(&dir, k))?);
    }
    let mut meta: MetaController = read_json(&dir.join("meta").join("meta.json"))?;
    meta.restore_rows(read_jsonl(&dir.join("meta").join("rows.jsonl"))?);
    let buffer = ReplayBuffer::load(&run_dir.join("buffer"))?;
    Ok(LifelongState {
        step: header.step,
        clustering,
        library,
        meta,
        buffer,
        rng_seed: header.rng_seed,
    })
}
