//! Hard-violation counting, the layout reward, deterministic geometric
//! repair, command application and the violation-prioritized two-level
//! optimization loop.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::AssetBase;
use crate::geometry::{
    containment_correction, footprint, overlap, room_region, tested_pairs, BoundaryViolation, CollisionPair, Footprint,
    GeometryStatus, Vec2,
};
use crate::proposer::{HeuristicProposer, ProposalContext, Proposer};
use crate::protocol::Protocol;
use crate::safety::{instantiate_constraints, score_instances, ChemReport, ConstraintInstance, SafetyConfig};
use crate::scene::{tabletop_height, Layout, Location, SceneError};

#[derive(Debug, Error, PartialEq)]
pub enum OptimizeError {
    #[error("`{0}` does not fit inside its containing region")]
    Unrepairable(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("reward weights must be non-negative with a positive sum")]
    InvalidWeights,
}

impl From<SceneError> for OptimizeError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::UnknownInstance(id) => OptimizeError::UnknownInstance(id),
            other => OptimizeError::InvalidCommand(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_geo: f64,
    pub w_chem: f64,
}

impl RewardWeights {
    /// Normalizes the pair to sum to one.
    pub fn new(w_geo: f64, w_chem: f64) -> Result<Self, OptimizeError> {
        let sum = w_geo + w_chem;
        if w_geo < 0.0 || w_chem < 0.0 || sum <= 0.0 || !sum.is_finite() {
            return Err(OptimizeError::InvalidWeights);
        }
        Ok(Self {
            w_geo: w_geo / sum,
            w_chem: w_chem / sum,
        })
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_geo: 0.5,
            w_chem: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub weights: RewardWeights,
    #[serde(skip)]
    pub safety: SafetyConfig,
    pub repair_rounds: usize,
    pub margin: f64,
    pub room_iterations: usize,
    pub desktop_iterations: usize,
    pub plateau_window: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            safety: SafetyConfig::default(),
            repair_rounds: 50,
            margin: 0.02,
            room_iterations: 20,
            desktop_iterations: 20,
            plateau_window: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub boundary: Vec<BoundaryViolation>,
    pub collisions: Vec<CollisionPair>,
    /// Separation constraints scored exactly zero with the geometry gate off.
    pub critical: Vec<ConstraintInstance>,
    pub v: usize,
}

impl ViolationReport {
    pub fn geometric(&self) -> usize {
        self.boundary.len() + self.collisions.len()
    }
}

/// Everything the acceptance rule and the proposer need about one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub violations: ViolationReport,
    pub geometry: GeometryStatus,
    pub chem: ChemReport,
    pub f_geo: f64,
    pub reward: f64,
}

fn critical_instances(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    cfg: &SafetyConfig,
) -> Vec<ConstraintInstance> {
    let mut inst = instantiate_constraints(layout, protocol, base, cfg);
    score_instances(&mut inst, layout, base, None, cfg);
    inst.retain(|i| i.kind.is_distance() && i.score == 0.0);
    inst
}

pub fn assess(layout: &Layout, protocol: &Protocol, base: &AssetBase, cfg: &OptimizerConfig) -> Assessment {
    let geometry = GeometryStatus::compute(layout, base);
    let chem = crate::safety::chem_report(layout, protocol, base, &geometry, &cfg.safety);
    let critical = critical_instances(layout, protocol, base, &cfg.safety);
    let v = geometry.violation_count() + critical.len();
    let f_geo = geometry.f_geo();
    let reward = combine(f_geo, chem.f_chem, cfg.weights);
    Assessment {
        violations: ViolationReport {
            boundary: geometry.boundary.clone(),
            collisions: geometry.collisions.clone(),
            critical,
            v,
        },
        geometry,
        chem,
        f_geo,
        reward,
    }
}

/// `w_geo * f_geo + w_chem * f_chem`; an undefined chemistry term counts as
/// fully satisfied.
pub fn combine(f_geo: f64, f_chem: Option<f64>, w: RewardWeights) -> f64 {
    w.w_geo * f_geo + w.w_chem * f_chem.unwrap_or(1.0)
}

pub fn count_violations(layout: &Layout, protocol: &Protocol, base: &AssetBase, cfg: &SafetyConfig) -> ViolationReport {
    let geometry = GeometryStatus::compute(layout, base);
    let critical = critical_instances(layout, protocol, base, cfg);
    ViolationReport {
        v: geometry.violation_count() + critical.len(),
        boundary: geometry.boundary,
        collisions: geometry.collisions,
        critical,
    }
}

pub fn reward(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    weights: RewardWeights,
    cfg: &SafetyConfig,
) -> f64 {
    let geometry = GeometryStatus::compute(layout, base);
    let chem = crate::safety::chem_report(layout, protocol, base, &geometry, cfg);
    combine(geometry.f_geo(), chem.f_chem, weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub layout: Layout,
    pub rounds: usize,
    pub converged: bool,
    pub residual: GeometryStatus,
}

fn fp_at(layout: &Layout, base: &AssetBase, idx: usize) -> Option<Footprint> {
    let o = &layout.objects[idx];
    base.get(&o.asset_id).map(|a| footprint(o, a))
}

/// Region an object must stay inside: the room for floor objects, the
/// parent tabletop for desktop items.
fn region_of(layout: &Layout, base: &AssetBase, idx: usize) -> Option<Footprint> {
    match layout.objects[idx].parent() {
        None => Some(room_region(&layout.room)),
        Some(p) => layout.index_of(p).and_then(|k| fp_at(layout, base, k)),
    }
}

fn shift(layout: &mut Layout, idx: usize, d: Vec2) {
    let id = layout.objects[idx].instance_id.clone();
    layout.translate_rigid(&id, d.x, d.y).expect("index is valid");
}

fn boundary_pass(layout: &mut Layout, base: &AssetBase) -> Result<(), OptimizeError> {
    for idx in 0..layout.objects.len() {
        let (Some(fp), Some(region)) = (fp_at(layout, base, idx), region_of(layout, base, idx)) else {
            continue;
        };
        let id = layout.objects[idx].instance_id.clone();
        match containment_correction(&fp, &region, &id) {
            Ok(Some(c)) => shift(layout, idx, c),
            Ok(None) => {}
            Err(_) => return Err(OptimizeError::Unrepairable(id)),
        }
    }
    Ok(())
}

fn stays_inside(layout: &Layout, base: &AssetBase, idx: usize, d: Vec2) -> bool {
    match (fp_at(layout, base, idx), region_of(layout, base, idx)) {
        (Some(fp), Some(region)) => {
            matches!(containment_correction(&fp.translated(d), &region, ""), Ok(None))
        }
        _ => true,
    }
}

fn collision_pass(layout: &mut Layout, base: &AssetBase, margin: f64) {
    for (i, j) in tested_pairs(layout) {
        let (Some(a), Some(b)) = (fp_at(layout, base, i), fp_at(layout, base, j)) else {
            continue;
        };
        let r = overlap(&a, &b);
        if !r.overlapping {
            continue;
        }
        let d = r.direction * (r.depth + margin);
        // The later object moves unless that pushes it out of its region
        // while moving the earlier one the other way would not.
        let (idx, d) = if !stays_inside(layout, base, j, d) && stays_inside(layout, base, i, -d) {
            (i, -d)
        } else {
            (j, d)
        };
        shift(layout, idx, d);
        if !layout.objects[idx].is_floor() {
            clamp_into_region(layout, base, idx);
        }
    }
}

fn clamp_into_region(layout: &mut Layout, base: &AssetBase, idx: usize) {
    if let (Some(fp), Some(region)) = (fp_at(layout, base, idx), region_of(layout, base, idx)) {
        if let Ok(Some(c)) = containment_correction(&fp, &region, "") {
            shift(layout, idx, c);
        }
    }
}

/// Alternates boundary and collision repair until no geometric violation
/// remains or `max_rounds` is spent. Surfaces drag their items along.
pub fn fast_repair(
    layout: &Layout,
    base: &AssetBase,
    max_rounds: usize,
    margin: f64,
) -> Result<RepairOutcome, OptimizeError> {
    let mut out = layout.clone();
    let mut rounds = 0;
    loop {
        let status = GeometryStatus::compute(&out, base);
        if let Some(b) = status.boundary.iter().find(|b| b.correction.is_none()) {
            return Err(OptimizeError::Unrepairable(b.instance_id.clone()));
        }
        if status.violation_count() == 0 || rounds >= max_rounds {
            return Ok(RepairOutcome {
                layout: out,
                rounds,
                converged: status.violation_count() == 0,
                residual: status,
            });
        }
        boundary_pass(&mut out, base)?;
        collision_pass(&mut out, base, margin);
        rounds += 1;
    }
}

/// Closed command vocabulary for layout adjustments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AdjustCommand {
    Move(MoveCommand),
    Rotate(RotateCommand),
    Swap(SwapCommand),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveCommand {
    pub id: String,
    pub pos: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotateCommand {
    pub id: String,
    /// Absolute target yaw in degrees.
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapCommand {
    pub ids: [String; 2],
}

impl AdjustCommand {
    pub fn move_to(id: impl Into<String>, x: f64, y: f64) -> Self {
        AdjustCommand::Move(MoveCommand {
            id: id.into(),
            pos: [x, y],
        })
    }

    pub fn rotate(id: impl Into<String>, angle: f64) -> Self {
        AdjustCommand::Rotate(RotateCommand { id: id.into(), angle })
    }

    pub fn swap(a: impl Into<String>, b: impl Into<String>) -> Self {
        AdjustCommand::Swap(SwapCommand {
            ids: [a.into(), b.into()],
        })
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            AdjustCommand::Move(m) => vec![&m.id],
            AdjustCommand::Rotate(r) => vec![&r.id],
            AdjustCommand::Swap(s) => vec![&s.ids[0], &s.ids[1]],
        }
    }
}

fn apply_one(layout: &mut Layout, base: &AssetBase, cmd: &AdjustCommand) -> Result<(), OptimizeError> {
    for id in cmd.ids() {
        layout.require(id)?;
    }
    match cmd {
        AdjustCommand::Move(m) => {
            let p = layout.require(&m.id)?.pose.xy();
            layout.translate_rigid(&m.id, m.pos[0] - p.x, m.pos[1] - p.y)?;
        }
        AdjustCommand::Rotate(r) => layout.rotate_rigid(&r.id, r.angle)?,
        AdjustCommand::Swap(s) => {
            let [a, b] = &s.ids;
            if a == b {
                return Ok(());
            }
            let oa = layout.require(a)?.clone();
            let ob = layout.require(b)?.clone();
            match (oa.is_floor(), ob.is_floor()) {
                (true, true) => {
                    layout.translate_rigid(a, ob.pose.x - oa.pose.x, ob.pose.y - oa.pose.y)?;
                    layout.translate_rigid(b, oa.pose.x - ob.pose.x, oa.pose.y - ob.pose.y)?;
                    layout.rotate_rigid(a, ob.pose.yaw)?;
                    layout.rotate_rigid(b, oa.pose.yaw)?;
                }
                (false, false) => {
                    for (target, from) in [(a, &ob), (b, &oa)] {
                        let z = surface_height(layout, base, &from.initial_location).unwrap_or(from.pose.z);
                        let o = layout.get_mut(target).expect("checked above");
                        o.pose.x = from.pose.x;
                        o.pose.y = from.pose.y;
                        o.pose.yaw = from.pose.yaw;
                        o.pose.z = z;
                        o.initial_location = from.initial_location.clone();
                    }
                }
                _ => {
                    return Err(OptimizeError::InvalidCommand(format!(
                        "cannot swap floor object with desktop item ({a}, {b})"
                    )))
                }
            }
        }
    }
    Ok(())
}

fn surface_height(layout: &Layout, base: &AssetBase, loc: &Location) -> Option<f64> {
    let parent = layout.get(loc.parent()?)?;
    Some(tabletop_height(parent, base.get(&parent.asset_id)?))
}

/// Applies commands in order to a copy. The copy is discarded (and the
/// input returned with `false`) if it has more hard violations than the input.
pub fn apply_commands(
    layout: &Layout,
    commands: &[AdjustCommand],
    protocol: &Protocol,
    base: &AssetBase,
    cfg: &SafetyConfig,
) -> Result<(Layout, bool), OptimizeError> {
    let mut cand = layout.clone();
    for c in commands {
        apply_one(&mut cand, base, c)?;
    }
    let before = count_violations(layout, protocol, base, cfg).v;
    let after = count_violations(&cand, protocol, base, cfg).v;
    if after > before {
        Ok((layout.clone(), false))
    } else {
        Ok((cand, true))
    }
}

/// Violation-prioritized acceptance on precomputed `(v, reward)` pairs.
pub fn accepts(candidate: (usize, f64), incumbent: (usize, f64)) -> bool {
    candidate.0 < incumbent.0 || (candidate.0 == incumbent.0 && candidate.1 > incumbent.1)
}

pub fn accept(
    candidate: &Layout,
    incumbent: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    cfg: &OptimizerConfig,
) -> bool {
    let c = assess(candidate, protocol, base, cfg);
    let i = assess(incumbent, protocol, base, cfg);
    accepts((c.violations.v, c.reward), (i.violations.v, i.reward))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Room,
    Desktop,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Room => "room",
            Level::Desktop => "desktop",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub level: Level,
    /// Incumbent violations and reward before the step.
    pub v_prev: usize,
    pub f_prev: f64,
    /// Candidate violations and reward.
    pub v: usize,
    pub f: f64,
    pub accepted: bool,
    pub commands: usize,
    pub proposer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn trace_to_jsonl(trace: &[TraceRecord]) -> String {
    trace
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub layout: Layout,
    pub trace: Vec<TraceRecord>,
}

/// Room level, then desktop level: repair, propose, validate, accept. A
/// level ends after `plateau_window` consecutive steps without a strict
/// improvement, or after its iteration budget.
pub fn optimize(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    proposer: &dyn Proposer,
    cfg: &OptimizerConfig,
) -> Result<OptimizeOutcome, OptimizeError> {
    let fallback = HeuristicProposer::default();
    let mut current = layout.clone();
    let mut inc = assess(&current, protocol, base, cfg);
    let mut trace = Vec::new();
    let mut iteration = 0;
    for (level, budget) in [
        (Level::Room, cfg.room_iterations),
        (Level::Desktop, cfg.desktop_iterations),
    ] {
        let mut stale = 0;
        for _ in 0..budget {
            let repaired = fast_repair(&current, base, cfg.repair_rounds, cfg.margin)?.layout;
            let rep = assess(&repaired, protocol, base, cfg);
            let ctx = ProposalContext {
                layout: &repaired,
                assessment: &rep,
                level,
                protocol,
                base,
                config: cfg,
                seed: cfg.seed,
                iteration,
                attempt: stale,
            };
            let mut note = None;
            let mut used = proposer.name().to_string();
            let commands = match proposer.propose(&ctx) {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("proposer `{}` failed, using heuristic: {e}", proposer.name());
                    note = Some(format!("fallback: {e}"));
                    used = fallback.name().to_string();
                    fallback.propose(&ctx).unwrap_or_default()
                }
            };
            let (cand, valid) = match apply_commands(&repaired, &commands, protocol, base, &cfg.safety) {
                Ok(r) => r,
                Err(e) => {
                    note = Some(format!("rejected: {e}"));
                    (repaired.clone(), false)
                }
            };
            if !valid && note.is_none() {
                note = Some("rejected: commands add violations".into());
            }
            let ca = if valid { assess(&cand, protocol, base, cfg) } else { rep };
            let accepted = accepts((ca.violations.v, ca.reward), (inc.violations.v, inc.reward));
            trace.push(TraceRecord {
                iteration,
                level,
                v_prev: inc.violations.v,
                f_prev: inc.reward,
                v: ca.violations.v,
                f: ca.reward,
                accepted,
                commands: commands.len(),
                proposer: used,
                note,
            });
            iteration += 1;
            if accepted {
                current = if valid { cand } else { repaired };
                inc = ca;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.plateau_window {
                    break;
                }
            }
        }
    }
    Ok(OptimizeOutcome { layout: current, trace })
}

/// Whether an accepted-step subsequence is strictly decreasing in `(v, -F)`.
pub fn trace_is_monotone(trace: &[TraceRecord]) -> bool {
    let accepted: Vec<_> = trace.iter().filter(|r| r.accepted).collect();
    accepted.iter().all(|r| accepts((r.v, r.f), (r.v_prev, r.f_prev)))
        && accepted.windows(2).all(|w| accepts((w[1].v, w[1].f), (w[0].v, w[0].f)))
}
