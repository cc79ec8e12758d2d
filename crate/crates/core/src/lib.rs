//! Generation, repair, reachability checking and scoring of laboratory
//! scene layouts.

pub mod asset;
pub mod config;
pub mod evaluator;
pub mod geometry;
pub mod issue;
pub mod navigation;
pub mod optimizer;
pub mod pipeline;
pub mod proposer;
pub mod protocol;
pub mod refine;
pub mod render;
pub mod safety;
pub mod scene;

pub use asset::{AssetBase, AssetError, AssetRecord, AssetType, BoundingBox, HazardFlag, SafetyAttributes};
pub use config::{ConfigError, PipelineConfig};
pub use evaluator::{EvalConfig, EvaluationReport, SemanticScorer, StubScorer};
pub use geometry::{Footprint, GeometryError, GeometryStatus, PenetrationResult, Vec2};
pub use issue::{Issue, Severity};
pub use navigation::{GoalPair, NavConfig, NavError, NavOutcome, NavStatus, NavTarget, OccupancyGrid, ReachReport};
pub use optimizer::{AdjustCommand, Assessment, OptimizeError, OptimizerConfig, RewardWeights};
pub use pipeline::{run_pipeline, PipelineError, PipelineOutput};
pub use proposer::{HeuristicProposer, Proposer, ProposerError, RemoteConfig, RemoteProposer};
pub use protocol::{ChemicalConstraintSpec, ConstraintKind, MoveAction, Protocol, ProtocolError, ProtocolStep};
pub use refine::{AdjustmentSuggestion, RefineConfig, RefineOutcome, RefineRecord};
pub use safety::{ChemReport, ConstraintInstance, SafetyConfig, SafetyError};
pub use scene::{Layout, Location, PlacedObject, Pose, Room, SceneError};
