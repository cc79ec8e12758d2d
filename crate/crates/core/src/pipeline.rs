//! End-to-end run: initialize, optimize, refine for reachability, evaluate
//! and render.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::asset::AssetBase;
use crate::config::{PipelineConfig, ProposerKind};
use crate::evaluator::{evaluate_scene, EvalError, EvaluationReport};
use crate::issue::Issue;
use crate::navigation::{goal_pairs_json, nav_targets, pair_targets, plan_pairs, rasterize, NavError};
use crate::optimizer::{optimize, trace_to_jsonl, OptimizeError, TraceRecord};
use crate::proposer::{
    init_desktop, init_room, Placement, ProposerError, ProposerRequest, RemoteProposer, RequestMode,
};
use crate::protocol::Protocol;
use crate::refine::{refine_loop, RefineOutcome};
use crate::render::{render_svg, Overlay};
use crate::scene::{desktop_to_global, Layout, LocalPose, Location, PlacedObject, Pose, Room, SceneError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Builds a layout from init placements. Placements with a local pose are
/// mapped onto their parent's tabletop, so parents must come first.
pub fn layout_from_placements(room: Room, placements: &[Placement], base: &AssetBase) -> Result<Layout, PipelineError> {
    let mut layout = Layout::new(room);
    for p in placements {
        let asset = base
            .get(&p.asset_id)
            .ok_or_else(|| SceneError::UnknownAsset(p.asset_id.clone()))?;
        let obj = match (&p.initial_location, p.pos, p.local) {
            (Location::Floor, Some([x, y]), _) => {
                PlacedObject::on_floor(&p.instance_id, &asset.asset_id, Pose::new(x, y, 0.0, p.yaw_deg))
            }
            (Location::On(parent), pos, local) => {
                let par = layout.require(parent)?.clone();
                let pa = base
                    .get(&par.asset_id)
                    .ok_or_else(|| SceneError::UnknownAsset(par.asset_id.clone()))?;
                let pose = match (pos, local) {
                    (_, Some([u, v])) => desktop_to_global(&par, pa, LocalPose { u, v, yaw: p.yaw_deg })?,
                    (Some([x, y]), None) => Pose::new(x, y, crate::scene::tabletop_height(&par, pa), p.yaw_deg),
                    (None, None) => unreachable!("validated by ProposerResponse::parse"),
                };
                PlacedObject::on_surface(&p.instance_id, &asset.asset_id, pose, parent.clone())
            }
            (Location::Floor, None, _) => {
                let issue = Issue::error(
                    format!("placements.{}.pos", p.instance_id),
                    "floor placement needs a global position",
                );
                return Err(SceneError::Invalid(vec![issue]).into());
            }
        };
        layout.objects.push(obj);
    }
    Ok(layout)
}

fn remote_init(cfg: &PipelineConfig, protocol: &Protocol, base: &AssetBase) -> Result<Layout, PipelineError> {
    let client = RemoteProposer::new(cfg.proposer.remote.clone());
    let req = ProposerRequest::new(RequestMode::InitRoom, cfg.room, protocol, base, cfg.seed);
    let room_level = client.call(&req)?;
    let layout = layout_from_placements(cfg.room, &room_level.placements, base)?;
    let mut req = ProposerRequest::new(RequestMode::InitDesktop, cfg.room, protocol, base, cfg.seed);
    req.layout = Some(layout.clone());
    let desk = client.call(&req)?;
    let mut all = room_level.placements;
    all.extend(desk.placements);
    layout_from_placements(cfg.room, &all, base)
}

/// Initial layout: room-level placement then desktop packing. A remote
/// proposer is tried first when configured; any failure falls back to the
/// heuristic.
pub fn generate(protocol: &Protocol, base: &AssetBase, cfg: &PipelineConfig) -> Result<Layout, PipelineError> {
    if cfg.proposer.kind == ProposerKind::Remote {
        match remote_init(cfg, protocol, base) {
            Ok(l) => return Ok(l),
            Err(e) => log::warn!("remote initialization failed, using heuristic: {e}"),
        }
    }
    let room = init_room(protocol, base, cfg.room, cfg.seed, &cfg.init, &cfg.safety)?;
    Ok(init_desktop(&room, protocol, base, &cfg.init, &cfg.safety)?)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub layout: Layout,
    pub trace: Vec<TraceRecord>,
    pub refine: RefineOutcome,
    pub goal_pairs: String,
    pub report: EvaluationReport,
    pub svg: String,
}

/// Goal-pair file, report and drawing for a finished layout.
pub fn finish(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    cfg: &PipelineConfig,
) -> Result<(String, EvaluationReport, String), PipelineError> {
    let nav = &cfg.navigation;
    let targets = nav_targets(protocol, layout, base, nav.offset_radius)?;
    let pairs = pair_targets(&targets);
    let goal_pairs = goal_pairs_json(&pairs, targets.len(), 3);
    let scorer = cfg.scorer();
    let report = evaluate_scene(layout, protocol, base, &cfg.eval_config(), scorer.as_ref())?;

    let grid = rasterize(layout, base, nav.resolution, nav.agent_radius, nav.inflation);
    let paths = plan_pairs(&grid, &pairs)
        .into_iter()
        .filter_map(|p| p.outcome.path)
        .map(|cells| cells.into_iter().map(|c| grid.cell_center(c)).collect())
        .collect();
    let violations = report
        .chemistry
        .instances
        .iter()
        .filter(|i| i.kind.is_distance() && i.score < 1.0 && i.subjects.len() == 2)
        .map(|i| (i.subjects[0].clone(), i.subjects[1].clone()))
        .collect();
    let overlay = Overlay {
        grid: None,
        paths,
        markers: targets.iter().collect(),
        violations,
    };
    let svg = render_svg(layout, base, &overlay);
    Ok((goal_pairs, report, svg))
}

/// Optimizes and refines `initial` (or a generated layout) and evaluates
/// the result.
pub fn run_pipeline(
    protocol: &Protocol,
    base: &AssetBase,
    cfg: &PipelineConfig,
    initial: Option<&Layout>,
) -> Result<PipelineOutput, PipelineError> {
    let start = match initial {
        Some(l) => l.clone(),
        None => generate(protocol, base, cfg)?,
    };
    let proposer = cfg.proposer();
    let opt = optimize(&start, protocol, base, proposer.as_ref(), &cfg.optimizer_config())?;
    let refine = refine_loop(&opt.layout, protocol, base, &cfg.navigation, &cfg.refine)?;
    let (goal_pairs, report, svg) = finish(&refine.layout, protocol, base, cfg)?;
    Ok(PipelineOutput {
        layout: refine.layout.clone(),
        trace: opt.trace,
        refine,
        goal_pairs,
        report,
        svg,
    })
}

pub const OUTPUT_FILES: [&str; 6] = [
    "layout.json",
    "trace.jsonl",
    "refine.jsonl",
    "goal_pairs.json",
    "report.json",
    "layout.svg",
];

pub fn write_outputs(out: &PipelineOutput, dir: &Path) -> Result<(), PipelineError> {
    let io = |path: &Path, e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let bodies = [
        out.layout.to_json_string(),
        trace_to_jsonl(&out.trace),
        out.refine.to_jsonl(),
        out.goal_pairs.clone() + "\n",
        out.report.to_json_string() + "\n",
        out.svg.clone(),
    ];
    for (name, body) in OUTPUT_FILES.iter().zip(bodies) {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| io(&path, e))?;
    }
    Ok(())
}
