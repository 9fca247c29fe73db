//! Run configuration. Every field has a default, so `{}` is a valid config
//! that generates and runs the bundled tabletop suite.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineConfig, Variant, DEFAULT_META_BLOCK_WEIGHTS};
use crate::metrics::NbtConvention;
use crate::policy::{RowConfig, SkillConfig};
use crate::segmentation::SegmentationConfig;
use crate::synth::SuiteSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub sil_threshold: f64,
    pub k_max_sweep: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            sil_threshold: 0.1,
            k_max_sweep: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub knn_k: usize,
    pub lookahead: usize,
    pub subgoal_window: usize,
    pub alpha: f64,
    pub k_max: usize,
    /// Skill-policy distance weights for the feature, proprio and subgoal
    /// blocks.
    pub block_weights: [f64; 3],
    /// Meta-controller distance weights for the feature, proprio and
    /// language blocks.
    pub meta_block_weights: [f64; 3],
}

impl Default for PolicyConfig {
    fn default() -> Self {
        let skill = SkillConfig::default();
        let rows = RowConfig::default();
        Self {
            knn_k: skill.knn_k,
            lookahead: rows.lookahead,
            subgoal_window: rows.subgoal_window,
            alpha: 10.0,
            k_max: 64,
            block_weights: skill.block_weights,
            meta_block_weights: DEFAULT_META_BLOCK_WEIGHTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub n_save: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { n_save: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 20 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub nbt_convention: NbtConvention,
    /// Report metrics as percentages.
    pub percent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Manifest of an existing suite. When absent the bundled suite is
    /// generated from `generate` into `<out>/suite`.
    pub suite: Option<PathBuf>,
    /// Environment description for evaluation; defaults to `world.json`
    /// next to the manifest.
    pub world: Option<PathBuf>,
    pub generate: SuiteSpec,
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads for parallel sections; 0 uses all cores.
    pub threads: usize,
    pub variant: Variant,
    pub segmentation: SegmentationConfig,
    pub clustering: ClusteringConfig,
    pub policy: PolicyConfig,
    pub replay: ReplayConfig,
    pub eval: EvalConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            suite: None,
            world: None,
            generate: SuiteSpec::default(),
            out: PathBuf::from("run"),
            seed: 0,
            threads: 0,
            variant: Variant::Full,
            segmentation: SegmentationConfig::default(),
            clustering: ClusteringConfig::default(),
            policy: PolicyConfig::default(),
            replay: ReplayConfig::default(),
            eval: EvalConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        self.segmentation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.clustering.sil_threshold.is_finite() {
            return bad("clustering.sil_threshold must be finite");
        }
        if self.clustering.k_max_sweep < 2 {
            return bad("clustering.k_max_sweep must be at least 2");
        }
        let p = &self.policy;
        if p.knn_k == 0 {
            return bad("policy.knn_k must be positive");
        }
        if p.subgoal_window == 0 {
            return bad("policy.subgoal_window must be positive");
        }
        if !(p.alpha.is_finite() && p.alpha > 0.0) {
            return bad("policy.alpha must be positive");
        }
        if p.k_max < 2 {
            return bad("policy.k_max must be at least 2");
        }
        if p.block_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("policy.block_weights must be non-negative");
        }
        if p.meta_block_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("policy.meta_block_weights must be non-negative");
        }
        if self.eval.episodes == 0 {
            return bad("eval.episodes must be positive");
        }
        Ok(())
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            segmentation: self.segmentation,
            sil_threshold: self.clustering.sil_threshold,
            k_max_sweep: self.clustering.k_max_sweep,
            rows: RowConfig {
                lookahead: self.policy.lookahead,
                subgoal_window: self.policy.subgoal_window,
            },
            skill: SkillConfig {
                knn_k: self.policy.knn_k,
                block_weights: self.policy.block_weights,
            },
            alpha: self.policy.alpha,
            meta_block_weights: self.policy.meta_block_weights,
            k_max: self.policy.k_max,
            n_save: self.replay.n_save,
            variant: self.variant,
            seed: self.seed,
        }
    }
}
