//! Proposal sources for initialization and adjustment: the offline heuristic
//! and an HTTP client for an external service. Both speak the same request
//! and response schema; responses are validated before anything touches a
//! layout.

mod heuristic;
mod remote;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{AssetBase, AssetType, BoundingBox, HazardFlag};
use crate::optimizer::{AdjustCommand, Assessment, Level, OptimizerConfig};
use crate::protocol::Protocol;
use crate::scene::{Layout, Location, Room};

pub use heuristic::{init_desktop, init_room, is_fume_hood, HeuristicProposer, InitConfig};
pub use remote::{RemoteConfig, RemoteProposer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProposerError {
    #[error("proposer unavailable: {0}")]
    Unavailable(String),
    #[error("response rejected: {reason}")]
    Rejected { reason: String, payload: String },
    #[error("placement infeasible for: {}", .0.join(", "))]
    PlacementInfeasible(Vec<String>),
}

/// Inputs handed to a proposer for one adjustment step.
pub struct ProposalContext<'a> {
    pub layout: &'a Layout,
    pub assessment: &'a Assessment,
    pub level: Level,
    pub protocol: &'a Protocol,
    pub base: &'a AssetBase,
    pub config: &'a OptimizerConfig,
    pub seed: u64,
    pub iteration: usize,
    /// Consecutive rejected steps so far at this level.
    pub attempt: usize,
}

pub trait Proposer: Send + Sync {
    fn name(&self) -> &str;

    fn propose(&self, ctx: &ProposalContext<'_>) -> Result<Vec<AdjustCommand>, ProposerError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestMode {
    InitRoom,
    InitDesktop,
    Adjust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub asset_id: String,
    pub asset_type: AssetType,
    pub category: String,
    pub bbox: BoundingBox,
    pub provides_surface: bool,
    pub hazards: Vec<HazardFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub protocol_id: String,
    pub reagents: Vec<String>,
    pub instruments: Vec<String>,
    pub locations: Vec<String>,
    pub steps: Vec<String>,
}

impl ProtocolSummary {
    pub fn of(p: &Protocol) -> Self {
        Self {
            protocol_id: p.protocol_id.clone(),
            reagents: p.reagents.clone(),
            instruments: p.instruments.clone(),
            locations: p.locations(),
            steps: p
                .steps
                .iter()
                .map(|s| format!("{}. [{}] {}", s.index, s.location, s.description))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: String,
    pub subjects: Vec<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerRequest {
    pub mode: RequestMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    pub room: Room,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
    pub diagnostics: Vec<Diagnostic>,
    pub protocol: ProtocolSummary,
    pub catalog: Vec<CatalogEntry>,
    pub catalog_digest: String,
    pub seed: u64,
    pub prompt: String,
}

const PROMPT_INIT_ROOM: &str = include_str!("prompts/init_room.txt");
const PROMPT_INIT_DESKTOP: &str = include_str!("prompts/init_desktop.txt");
const PROMPT_ADJUST: &str = include_str!("prompts/adjust.txt");

pub fn prompt_template(mode: RequestMode) -> &'static str {
    match mode {
        RequestMode::InitRoom => PROMPT_INIT_ROOM,
        RequestMode::InitDesktop => PROMPT_INIT_DESKTOP,
        RequestMode::Adjust => PROMPT_ADJUST,
    }
}

/// FNV-1a over the catalog's ids and dimensions.
pub fn catalog_digest(base: &AssetBase) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for r in base.records() {
        feed(r.asset_id.as_bytes());
        for v in [r.bbox.short_side, r.bbox.long_side, r.bbox.height] {
            feed(&v.to_le_bytes());
        }
    }
    format!("{h:016x}")
}

fn catalog_for(base: &AssetBase, ids: &BTreeSet<String>) -> Vec<CatalogEntry> {
    use HazardFlag::*;
    let flags = [
        Flammable,
        Explosive,
        VolatileOrToxic,
        GlassContainer,
        HeatSource,
        Acid,
        Base,
        Oxidizer,
        ReactiveMetal,
    ];
    base.records()
        .filter(|r| ids.is_empty() || ids.contains(&r.asset_id) || r.asset_type == AssetType::RoomAsset)
        .map(|r| CatalogEntry {
            asset_id: r.asset_id.clone(),
            asset_type: r.asset_type,
            category: r.category.clone(),
            bbox: r.bbox,
            provides_surface: r.is_surface(),
            hazards: flags.iter().copied().filter(|f| r.safety.has(*f)).collect(),
        })
        .collect()
}

impl ProposerRequest {
    pub fn new(mode: RequestMode, room: Room, protocol: &Protocol, base: &AssetBase, seed: u64) -> Self {
        let ids: BTreeSet<String> = protocol
            .required_assets()
            .into_iter()
            .filter_map(|n| base.resolve(&n).ok().map(|r| r.asset_id.clone()))
            .collect();
        Self {
            mode,
            level: None,
            room,
            layout: None,
            diagnostics: Vec::new(),
            protocol: ProtocolSummary::of(protocol),
            catalog: catalog_for(base, &ids),
            catalog_digest: catalog_digest(base),
            seed,
            prompt: prompt_template(mode).to_string(),
        }
    }

    pub fn adjust(ctx: &ProposalContext<'_>) -> Self {
        let mut req = Self::new(RequestMode::Adjust, ctx.layout.room, ctx.protocol, ctx.base, ctx.seed);
        req.level = Some(ctx.level);
        req.layout = Some(ctx.layout.clone());
        req.diagnostics = diagnostics(ctx.assessment);
        req
    }
}

pub fn diagnostics(a: &Assessment) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for b in &a.violations.boundary {
        out.push(Diagnostic {
            kind: "out_of_bounds".into(),
            subjects: vec![b.instance_id.clone()],
            detail: match b.correction {
                Some(c) => format!("needs inward shift ({:.3}, {:.3})", c.x, c.y),
                None => "does not fit".into(),
            },
        });
    }
    for c in &a.violations.collisions {
        out.push(Diagnostic {
            kind: "collision".into(),
            subjects: vec![c.a.clone(), c.b.clone()],
            detail: format!("penetration {:.3} m", c.result.depth),
        });
    }
    for i in a.chem.instances.iter().filter(|i| i.score < 1.0) {
        out.push(Diagnostic {
            kind: i.kind.to_string(),
            subjects: i.subjects.clone(),
            detail: format!(
                "score {:.3}, distance {}, threshold {:.3}",
                i.score,
                i.distance.map_or("n/a".to_string(), |d| format!("{d:.3}")),
                i.d_min
            ),
        });
    }
    out
}

/// One object placement returned by an initialization request. Exactly one
/// of `pos` (global) and `local` (tabletop frame) must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub instance_id: String,
    pub asset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local: Option<[f64; 2]>,
    #[serde(default)]
    pub yaw_deg: f64,
    pub initial_location: Location,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposerResponse {
    #[serde(default)]
    pub commands: Vec<AdjustCommand>,
    #[serde(default)]
    pub placements: Vec<Placement>,
}

impl ProposerResponse {
    /// Strict parse plus mode-specific shape checks.
    pub fn parse(payload: &str, mode: RequestMode) -> Result<Self, ProposerError> {
        let reject = |reason: String| ProposerError::Rejected {
            reason,
            payload: payload.to_string(),
        };
        let resp: ProposerResponse = serde_json::from_str(payload).map_err(|e| reject(e.to_string()))?;
        match mode {
            RequestMode::Adjust if !resp.placements.is_empty() => {
                return Err(reject("adjust responses carry commands only".into()))
            }
            RequestMode::InitRoom | RequestMode::InitDesktop if !resp.commands.is_empty() => {
                return Err(reject("init responses carry placements only".into()))
            }
            _ => {}
        }
        for p in &resp.placements {
            if p.pos.is_some() == p.local.is_some() {
                return Err(reject(format!(
                    "placement `{}` needs exactly one of pos/local",
                    p.instance_id
                )));
            }
            let coords = p.pos.or(p.local).expect("checked above");
            if !coords.iter().chain([&p.yaw_deg]).all(|v| v.is_finite()) {
                return Err(reject(format!("placement `{}` has non-finite values", p.instance_id)));
            }
        }
        for c in &resp.commands {
            let finite = match c {
                AdjustCommand::Move(m) => m.pos.iter().all(|v| v.is_finite()),
                AdjustCommand::Rotate(r) => r.angle.is_finite(),
                AdjustCommand::Swap(_) => true,
            };
            if !finite {
                return Err(reject("command has non-finite values".into()));
            }
        }
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_move_command() {
        let r = ProposerResponse::parse(
            r#"{"commands":[{"move":{"id":"bench1","pos":[3.0,2.0]}}]}"#,
            RequestMode::Adjust,
        )
        .unwrap();
        assert_eq!(r.commands, vec![AdjustCommand::move_to("bench1", 3.0, 2.0)]);
    }

    #[test]
    fn rejects_unknown_command() {
        let e = ProposerResponse::parse(
            r#"{"commands":[{"teleport":{"id":"b","pos":[0,0]}}]}"#,
            RequestMode::Adjust,
        )
        .unwrap_err();
        assert!(matches!(e, ProposerError::Rejected { .. }));
    }

    #[test]
    fn rejects_wrong_shape_for_mode() {
        let text = r#"{"placements":[{"instance_id":"a","asset_id":"A","pos":[1,1],"initial_location":"floor"}]}"#;
        assert!(ProposerResponse::parse(text, RequestMode::InitRoom).is_ok());
        assert!(ProposerResponse::parse(text, RequestMode::Adjust).is_err());
        let both = r#"{"placements":[{"instance_id":"a","asset_id":"A","pos":[1,1],"local":[0,0],"initial_location":"floor"}]}"#;
        assert!(ProposerResponse::parse(both, RequestMode::InitRoom).is_err());
    }
}
