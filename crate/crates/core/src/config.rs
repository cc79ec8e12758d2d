//! Pipeline configuration, read from TOML.
//!
//! Every section is optional and falls back to defaults:
//!
//! ```toml
//! seed = 7
//!
//! [room]
//! width = 8.0
//! depth = 6.0
//! height = 3.0
//!
//! [weights]
//! w_geo = 0.5
//! w_chem = 0.5
//!
//! [safety]
//! flammable_d_min = 1.0
//! incompatible_d_min = 0.5
//! d_low_factor = 0.25
//! glass_d_safe = 0.1
//!
//! [navigation]
//! resolution = 0.05
//! agent_radius = 0.3
//! offset_radius = 0.3
//! inflation = "rounded"
//!
//! [optimizer]
//! room_iterations = 20
//! desktop_iterations = 20
//! plateau_window = 3
//!
//! [refine]
//! max_iterations = 10
//! epsilon = 0.5
//! stall_limit = 3
//!
//! [proposer]
//! kind = "heuristic"          # or "remote"
//! endpoint_url = "http://localhost:8080/propose"
//! auth_env_var = "LABSCENE_TOKEN"
//!
//! [semantic]
//! kind = "stub"               # or "remote"
//! mode = "medium"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{EvalConfig, RemoteScorer, RemoteScorerConfig, SemanticMode, SemanticScorer, StubScorer};
use crate::navigation::NavConfig;
use crate::optimizer::{OptimizerConfig, RewardWeights};
use crate::proposer::{HeuristicProposer, InitConfig, Proposer, RemoteConfig, RemoteProposer};
use crate::refine::RefineConfig;
use crate::safety::SafetyConfig;
use crate::scene::Room;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposerKind {
    #[default]
    Heuristic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposerSection {
    pub kind: ProposerKind,
    #[serde(flatten)]
    pub remote: RemoteConfig,
    pub heuristic: HeuristicProposer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SemanticSection {
    pub kind: ScorerKind,
    pub mode: SemanticMode,
    pub stub: StubScorer,
    #[serde(flatten)]
    pub remote: RemoteScorerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub room: Room,
    pub weights: RewardWeights,
    pub safety: SafetyConfig,
    pub navigation: NavConfig,
    pub init: InitConfig,
    pub optimizer: OptimizerConfig,
    pub refine: RefineConfig,
    pub proposer: ProposerSection,
    pub semantic: SemanticSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            room: Room::new(8.0, 6.0, 3.0),
            weights: RewardWeights::default(),
            safety: SafetyConfig::default(),
            navigation: NavConfig::default(),
            init: InitConfig::default(),
            optimizer: OptimizerConfig::default(),
            refine: RefineConfig::default(),
            proposer: ProposerSection::default(),
            semantic: SemanticSection::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            field: field.into(),
            reason: format!("must be positive, got {v}"),
        })
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Parses, validates and normalizes the weights.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        cfg.weights = RewardWeights::new(cfg.weights.w_geo, cfg.weights.w_chem).map_err(|e| ConfigError::Invalid {
            field: "weights".into(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.safety;
        let n = &self.navigation;
        for (field, v) in [
            ("room.width", self.room.width),
            ("room.depth", self.room.depth),
            ("room.height", self.room.height),
            ("safety.flammable_d_min", s.flammable_d_min),
            ("safety.incompatible_d_min", s.incompatible_d_min),
            ("safety.glass_d_safe", s.glass_d_safe),
            ("navigation.resolution", n.resolution),
            ("navigation.agent_radius", n.agent_radius),
            ("navigation.offset_radius", n.offset_radius),
            ("init.step", self.init.step),
        ] {
            positive(field, v)?;
        }
        if !(0.0..1.0).contains(&s.d_low_factor) {
            return Err(ConfigError::Invalid {
                field: "safety.d_low_factor".into(),
                reason: "must lie in [0, 1)".into(),
            });
        }
        if s.worst_k == 0 || self.refine.max_iterations == 0 {
            return Err(ConfigError::Invalid {
                field: if s.worst_k == 0 {
                    "safety.worst_k"
                } else {
                    "refine.max_iterations"
                }
                .into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Optimizer settings with the shared weights, safety rules and seed
    /// filled in.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            weights: self.weights,
            safety: self.safety.clone(),
            seed: self.seed,
            ..self.optimizer.clone()
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            safety: self.safety.clone(),
            nav: self.navigation.clone(),
            mode: self.semantic.mode,
        }
    }

    pub fn proposer(&self) -> Box<dyn Proposer> {
        match self.proposer.kind {
            ProposerKind::Heuristic => Box::new(self.proposer.heuristic.clone()),
            ProposerKind::Remote => Box::new(RemoteProposer::new(self.proposer.remote.clone())),
        }
    }

    pub fn scorer(&self) -> Box<dyn SemanticScorer> {
        match self.semantic.kind {
            ScorerKind::Stub => Box::new(self.semantic.stub.clone()),
            ScorerKind::Remote => Box::new(RemoteScorer::new(self.semantic.remote.clone())),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
