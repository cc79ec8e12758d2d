//! Deterministic offline proposer.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ProposalContext, Proposer, ProposerError};
use crate::asset::{normalize_name, AssetBase, AssetRecord, AssetType};
use crate::geometry::{containment_correction, edge_distance_fp, footprint, overlap, room_region, Footprint, Vec2};
use crate::navigation::access_direction;
use crate::optimizer::{AdjustCommand, Level};
use crate::protocol::Protocol;
use crate::safety::{ConstraintInstance, SafetyConfig};
use crate::scene::{desktop_to_global, normalize_deg, Layout, LocalPose, PlacedObject, Pose, Room};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// Gap kept between a wall and the objects placed against it.
    pub wall_gap: f64,
    /// Minimum gap between two room-level objects.
    pub spacing: f64,
    /// Depth of the free approach zone kept in front of every object.
    pub access_depth: f64,
    /// Scan step along the walls.
    pub step: f64,
    /// Distance kept between desktop items and tabletop edges.
    pub edge_margin: f64,
    /// Gap between neighbouring desktop items.
    pub item_gap: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            wall_gap: 0.05,
            spacing: 0.1,
            access_depth: 0.9,
            step: 0.05,
            edge_margin: 0.12,
            item_gap: 0.05,
        }
    }
}

pub fn is_fume_hood(rec: &AssetRecord) -> bool {
    let squash = |s: &str| normalize_name(s).replace([' ', '_', '-'], "");
    [&rec.asset_id, &rec.category, &rec.subtype]
        .iter()
        .any(|s| squash(s) == "fumehood")
}

fn is_volatile_protocol(protocol: &Protocol, base: &AssetBase) -> bool {
    protocol
        .reagents
        .iter()
        .filter_map(|r| base.resolve(r).ok())
        .any(|r| r.safety.volatile_or_toxic)
}

/// Room assets a protocol needs: resolvable step locations, plus a fume hood
/// for volatile chemistry and a storage unit when there are reagents.
fn room_assets_for<'a>(protocol: &Protocol, base: &'a AssetBase, safety: &SafetyConfig) -> Vec<&'a AssetRecord> {
    let mut out: Vec<&AssetRecord> = Vec::new();
    for loc in protocol.locations() {
        if let Ok(r) = base.resolve(&loc) {
            if (r.asset_type == AssetType::RoomAsset || r.is_surface()) && !out.iter().any(|o| o.asset_id == r.asset_id)
            {
                out.push(r);
            }
        }
    }
    let volatile = is_volatile_protocol(protocol, base);
    if volatile && !out.iter().any(|r| is_fume_hood(r)) {
        if let Some(h) = base
            .records()
            .find(|r| is_fume_hood(r) && r.asset_type == AssetType::RoomAsset)
        {
            out.push(h);
        }
    }
    if !protocol.reagents.is_empty() && !out.iter().any(|r| safety.is_storage(r)) {
        if let Some(s) = base.records().find(|r| safety.is_storage(r) && r.is_surface()) {
            out.push(s);
        }
    }
    // Hood then storage first, so volatile reagents end up stored next to
    // the hood.
    out.sort_by(|a, b| {
        let rank = |r: &AssetRecord| match (volatile && is_fume_hood(r), volatile && safety.is_storage(r)) {
            (true, _) => 0,
            (_, true) => 1,
            _ => 2,
        };
        rank(a)
            .cmp(&rank(b))
            .then(b.bbox.area().total_cmp(&a.bbox.area()))
            .then(a.asset_id.cmp(&b.asset_id))
    });
    out
}

/// Rectangle in front of `fp` on its approach side, `depth` deep.
fn access_zone(fp: &Footprint, depth: f64) -> Footprint {
    let a = access_direction(fp.yaw);
    let perp = Vec2::new(-a.y, a.x);
    let (_, hi) = fp.project(a);
    let (plo, phi) = fp.project(perp);
    let along = hi - fp.center.dot(a);
    let center = fp.center + a * (along + depth / 2.0);
    let yaw = (-a.x).atan2(a.y).to_degrees();
    Footprint::new(center, phi - plo, depth, yaw)
}

#[derive(Clone, Copy)]
enum Wall {
    Back,
    Left,
    Right,
    Front,
}

impl Wall {
    /// Yaw whose approach side faces away from this wall.
    fn yaw(self) -> f64 {
        match self {
            Wall::Back => 0.0,
            Wall::Front => 180.0,
            Wall::Left => 270.0,
            Wall::Right => 90.0,
        }
    }
}

/// Candidate centers along a wall, in scan order.
fn wall_slots(room: &Room, wall: Wall, asset: &AssetRecord, cfg: &InitConfig) -> Vec<(Vec2, f64)> {
    let interior = room.interior();
    let (lo, hi) = (interior.min, interior.max);
    let (long, short) = (asset.bbox.long_side, asset.bbox.short_side);
    let yaw = wall.yaw();
    let (ex, ey) = match wall {
        Wall::Back | Wall::Front => (long / 2.0, short / 2.0),
        Wall::Left | Wall::Right => (short / 2.0, long / 2.0),
    };
    let g = cfg.wall_gap;
    let mut out = Vec::new();
    let scan = |from: f64, to: f64| {
        let n = ((to - from) / cfg.step).floor();
        if n < 0.0 {
            return Vec::new();
        }
        (0..=n as usize)
            .map(move |k| from + k as f64 * cfg.step)
            .collect::<Vec<_>>()
    };
    match wall {
        Wall::Back | Wall::Front => {
            let y = if matches!(wall, Wall::Back) {
                hi.y - g - ey
            } else {
                lo.y + g + ey
            };
            for x in scan(lo.x + g + ex, hi.x - g - ex) {
                out.push((Vec2::new(x, y), yaw));
            }
        }
        Wall::Left | Wall::Right => {
            let x = if matches!(wall, Wall::Left) {
                lo.x + g + ex
            } else {
                hi.x - g - ex
            };
            for y in scan(lo.y + g + ey, hi.y - g - ey) {
                out.push((Vec2::new(x, y), yaw));
            }
        }
    }
    out
}

/// Places the protocol's room assets against the walls, largest first (fume
/// hood and storage first for volatile chemistry), each with a free approach
/// zone.
pub fn init_room(
    protocol: &Protocol,
    base: &AssetBase,
    room: Room,
    seed: u64,
    cfg: &InitConfig,
    safety: &SafetyConfig,
) -> Result<Layout, ProposerError> {
    let mut layout = Layout::new(room);
    layout
        .metadata
        .insert("experiment".into(), protocol.protocol_id.clone());
    let region = room_region(&room);
    let mut walls = vec![Wall::Back, Wall::Left, Wall::Right, Wall::Front];
    walls.rotate_left((seed % 4) as usize);
    let mut placed: Vec<(Footprint, Footprint)> = Vec::new();
    let mut failed = Vec::new();
    for asset in room_assets_for(protocol, base, safety) {
        let mut spot = None;
        'walls: for &wall in &walls {
            for (c, yaw) in wall_slots(&room, wall, asset, cfg) {
                let fp = Footprint::new(c, asset.bbox.long_side, asset.bbox.short_side, yaw);
                let zone = access_zone(&fp, cfg.access_depth);
                let inside = |f: &Footprint| matches!(containment_correction(f, &region, ""), Ok(None));
                if !inside(&fp) || !inside(&zone) {
                    continue;
                }
                let clear = placed.iter().all(|(pf, pz)| {
                    !overlap(&fp.inflated(cfg.spacing / 2.0), &pf.inflated(cfg.spacing / 2.0)).overlapping
                        && !overlap(&fp, pz).overlapping
                        && !overlap(&zone, pf).overlapping
                });
                if clear {
                    spot = Some((fp, zone));
                    break 'walls;
                }
            }
        }
        match spot {
            Some((fp, zone)) => {
                let n = layout.objects.iter().filter(|o| o.asset_id == asset.asset_id).count() + 1;
                layout.objects.push(PlacedObject::on_floor(
                    format!("{}_{n}", asset.asset_id),
                    asset.asset_id.clone(),
                    Pose::new(fp.center.x, fp.center.y, 0.0, fp.yaw),
                ));
                placed.push((fp, zone));
            }
            None => failed.push(asset.asset_id.clone()),
        }
    }
    if failed.is_empty() {
        Ok(layout)
    } else {
        Err(ProposerError::PlacementInfeasible(failed))
    }
}

/// Reagents and instruments in the order the steps first use them, then the
/// rest in list order.
fn desktop_items<'a>(protocol: &Protocol, base: &'a AssetBase) -> Vec<&'a AssetRecord> {
    let listed: BTreeSet<&str> = protocol
        .reagents
        .iter()
        .chain(&protocol.instruments)
        .map(String::as_str)
        .collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let from_steps = protocol
        .steps
        .iter()
        .flat_map(|s| &s.assets_used)
        .filter(|a| listed.contains(a.as_str()));
    for name in from_steps.chain(&protocol.reagents).chain(&protocol.instruments) {
        let Ok(r) = base.resolve(name) else { continue };
        if r.asset_type != AssetType::RoomAsset && seen.insert(r.asset_id.clone()) {
            out.push(r);
        }
    }
    out
}

struct Packer {
    idx: usize,
    length: f64,
    depth: f64,
    u: f64,
    v: f64,
    row: f64,
}

impl Packer {
    /// Local center for the next item, advancing the cursor on success.
    fn place(&mut self, long: f64, short: f64, cfg: &InitConfig) -> Option<(f64, f64)> {
        let m = cfg.edge_margin;
        let (mut u, mut v, mut row) = (self.u, self.v, self.row);
        if u + long > self.length - m + 1e-12 {
            v += row + cfg.item_gap;
            u = m;
            row = 0.0;
        }
        if u + long > self.length - m + 1e-12 || v + short > self.depth - m + 1e-12 {
            return None;
        }
        let center = (u + long / 2.0, v + short / 2.0);
        self.u = u + long + cfg.item_gap;
        self.v = v;
        self.row = row.max(short);
        Some(center)
    }
}

/// Packs the protocol's reagents and instruments onto the layout's surfaces
/// in rows, left to right from the front-left corner.
pub fn init_desktop(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    cfg: &InitConfig,
    safety: &SafetyConfig,
) -> Result<Layout, ProposerError> {
    let mut out = layout.clone();
    let mut packers: Vec<Packer> = layout
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_floor())
        .filter_map(|(i, o)| base.get(&o.asset_id).filter(|a| a.is_surface()).map(|a| (i, a)))
        .map(|(idx, a)| Packer {
            idx,
            length: a.bbox.long_side,
            depth: a.bbox.short_side,
            u: cfg.edge_margin,
            v: cfg.edge_margin,
            row: 0.0,
        })
        .collect();
    let asset_of = |p: &Packer| base.get(&layout.objects[p.idx].asset_id).expect("filtered above");
    let find = |pred: &dyn Fn(&AssetRecord) -> bool| packers.iter().position(|p| pred(asset_of(p)));
    let hood = find(&|a| is_fume_hood(a));
    let storage = find(&|a| safety.is_storage(a));
    let mut by_area: Vec<usize> = (0..packers.len()).collect();
    by_area.sort_by(|&a, &b| {
        let area = |k: usize| packers[k].length * packers[k].depth;
        area(b).total_cmp(&area(a)).then(a.cmp(&b))
    });

    let mut failed = Vec::new();
    for item in desktop_items(protocol, base) {
        let preferred = if item.is_reagent() {
            storage.or(hood)
        } else {
            protocol
                .steps
                .iter()
                .find(|s| {
                    s.assets_used
                        .iter()
                        .any(|a| base.resolve(a).is_ok_and(|r| r.asset_id == item.asset_id))
                })
                .and_then(|s| base.resolve(&s.location).ok())
                .and_then(|loc| {
                    packers
                        .iter()
                        .position(|p| layout.objects[p.idx].asset_id == loc.asset_id)
                })
        };
        let order: Vec<usize> = preferred
            .into_iter()
            .chain(by_area.iter().copied().filter(|k| Some(*k) != preferred))
            .collect();
        let mut done = false;
        for k in order {
            let Some((u, v)) = packers[k].place(item.bbox.long_side, item.bbox.short_side, cfg) else {
                continue;
            };
            let parent = &layout.objects[packers[k].idx];
            let pa = asset_of(&packers[k]);
            let pose = desktop_to_global(parent, pa, LocalPose { u, v, yaw: 0.0 })
                .map_err(|_| ProposerError::PlacementInfeasible(vec![item.asset_id.clone()]))?;
            let n = out.objects.iter().filter(|o| o.asset_id == item.asset_id).count() + 1;
            out.objects.push(PlacedObject::on_surface(
                format!("{}_{n}", item.asset_id),
                item.asset_id.clone(),
                pose,
                parent.instance_id.clone(),
            ));
            done = true;
            break;
        }
        if !done {
            failed.push(item.asset_id.clone());
        }
    }
    if failed.is_empty() {
        Ok(out)
    } else {
        Err(ProposerError::PlacementInfeasible(failed))
    }
}

/// Offline adjustment proposer. Each call picks one fix: relocate an object
/// that is still in violation, pull a low-scoring safety pair apart, move
/// glassware away from an edge, or turn a wall-facing object around.
/// Repeated rejections rotate through the candidate fixes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicProposer {
    pub margin: f64,
    pub room_step: f64,
    pub desktop_step: f64,
    pub offset_radius: f64,
}

impl Default for HeuristicProposer {
    fn default() -> Self {
        Self {
            margin: 0.05,
            room_step: 0.1,
            desktop_step: 0.02,
            offset_radius: 0.3,
        }
    }
}

enum Fix<'a> {
    Relocate(String),
    Chem(&'a ConstraintInstance),
    Face(String),
}

/// Everything a placement search needs to know about the mover.
struct Search<'a> {
    region: Footprint,
    obstacles: Vec<Footprint>,
    size: (f64, f64),
    yaws: Vec<f64>,
    step: f64,
    score: &'a dyn Fn(&Footprint) -> Option<f64>,
}

impl Search<'_> {
    /// Grid scan of the region; returns the admissible footprint with the
    /// lowest score (first found on ties).
    fn run(&self) -> Option<Footprint> {
        let r = &self.region;
        let nx = (2.0 * r.half.x / self.step).floor() as usize;
        let ny = (2.0 * r.half.y / self.step).floor() as usize;
        let mut best: Option<(f64, Footprint)> = None;
        for &yaw in &self.yaws {
            for j in 0..=ny {
                for i in 0..=nx {
                    let local = Vec2::new(-r.half.x + i as f64 * self.step, -r.half.y + j as f64 * self.step);
                    let fp = Footprint::new(r.from_local(local), self.size.0, self.size.1, yaw);
                    if !matches!(containment_correction(&fp, r, ""), Ok(None)) {
                        continue;
                    }
                    if self.obstacles.iter().any(|o| overlap(o, &fp).overlapping) {
                        continue;
                    }
                    if let Some(s) = (self.score)(&fp) {
                        if best.as_ref().is_none_or(|(b, _)| s < *b) {
                            best = Some((s, fp));
                        }
                    }
                }
            }
        }
        best.map(|(_, fp)| fp)
    }
}

impl HeuristicProposer {
    fn candidates<'a>(&self, ctx: &'a ProposalContext<'_>) -> Vec<Fix<'a>> {
        let layout = ctx.layout;
        let at_level = |id: &str| {
            layout.get(id).is_some_and(|o| match ctx.level {
                Level::Room => o.is_floor(),
                Level::Desktop => !o.is_floor(),
            })
        };
        let mut fixes = Vec::new();
        let mut seen = BTreeSet::new();
        let v = &ctx.assessment.violations;
        let geo_ids = v
            .boundary
            .iter()
            .map(|b| b.instance_id.as_str())
            .chain(v.collisions.iter().flat_map(|c| [c.b.as_str(), c.a.as_str()]));
        for id in geo_ids {
            if at_level(id) && seen.insert(id.to_string()) {
                fixes.push(Fix::Relocate(id.to_string()));
            }
        }
        let mut weak: Vec<&ConstraintInstance> = ctx
            .assessment
            .chem
            .instances
            .iter()
            .filter(|i| i.score < 1.0 && i.geo_ok)
            .collect();
        weak.sort_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then(a.kind.cmp(&b.kind))
                .then(a.subjects.cmp(&b.subjects))
        });
        for inst in weak {
            let relevant = match (ctx.level, inst.kind.is_distance()) {
                (Level::Room, true) => {
                    let carriers: BTreeSet<&str> = inst
                        .subjects
                        .iter()
                        .filter_map(|s| layout.get(s))
                        .map(|o| o.parent().unwrap_or(&o.instance_id))
                        .collect();
                    carriers.len() == 2
                }
                (Level::Desktop, true) => inst.subjects.iter().any(|s| at_level(s)),
                (Level::Desktop, false) => inst.kind == crate::protocol::ConstraintKind::GlassEdge,
                (Level::Room, false) => false,
            };
            if relevant {
                fixes.push(Fix::Chem(inst));
            }
        }
        if ctx.level == Level::Room {
            let interior = layout.room.interior();
            for o in layout.floor_objects() {
                let Some(a) = ctx.base.get(&o.asset_id) else { continue };
                let reach = a.bbox.short_side / 2.0 + 2.0 * self.offset_radius;
                if !interior.contains(o.pose.xy() + access_direction(o.pose.yaw) * reach) {
                    fixes.push(Fix::Face(o.instance_id.clone()));
                }
            }
        }
        fixes
    }

    fn footprint_of<'c>(&self, ctx: &ProposalContext<'c>, id: &str) -> Option<(Footprint, &'c PlacedObject)> {
        let o = ctx.layout.get(id)?;
        Some((footprint(o, ctx.base.get(&o.asset_id)?), o))
    }

    /// Region and same-level obstacles for moving `id`.
    fn arena(&self, ctx: &ProposalContext<'_>, id: &str, margin: f64) -> Option<(Footprint, Vec<Footprint>)> {
        let (_, o) = self.footprint_of(ctx, id)?;
        let region = match o.parent() {
            None => room_region(&ctx.layout.room),
            Some(p) => self.footprint_of(ctx, p)?.0,
        };
        let obstacles = ctx
            .layout
            .objects
            .iter()
            .filter(|x| x.instance_id != id && x.initial_location == o.initial_location)
            .filter_map(|x| ctx.base.get(&x.asset_id).map(|a| footprint(x, a).inflated(margin)))
            .collect();
        Some((region, obstacles))
    }

    fn step_for(&self, o: &PlacedObject) -> f64 {
        if o.is_floor() {
            self.room_step
        } else {
            self.desktop_step
        }
    }

    fn margin_for(&self, o: &PlacedObject) -> f64 {
        if o.is_floor() {
            self.margin
        } else {
            self.margin.min(0.01)
        }
    }

    fn commands_for(id: &str, from: &Footprint, to: &Footprint) -> Vec<AdjustCommand> {
        let mut cmds = Vec::new();
        if (normalize_deg(to.yaw) - normalize_deg(from.yaw)).abs() > 1e-9 {
            cmds.push(AdjustCommand::rotate(id, normalize_deg(to.yaw)));
        }
        cmds.push(AdjustCommand::move_to(id, to.center.x, to.center.y));
        cmds
    }

    fn relocate(&self, ctx: &ProposalContext<'_>, id: &str) -> Option<Vec<AdjustCommand>> {
        let (fp, o) = self.footprint_of(ctx, id)?;
        let (region, obstacles) = self.arena(ctx, id, self.margin_for(o))?;
        let start = fp.center;
        let score = |f: &Footprint| Some(f.center.distance(start));
        let found = Search {
            region,
            obstacles,
            size: (2.0 * fp.half.x, 2.0 * fp.half.y),
            yaws: vec![fp.yaw, normalize_deg(fp.yaw + 90.0)],
            step: self.step_for(o),
            score: &score,
        }
        .run()?;
        Some(Self::commands_for(id, &fp, &found))
    }

    fn separate(&self, ctx: &ProposalContext<'_>, inst: &ConstraintInstance) -> Option<Vec<AdjustCommand>> {
        let objs: Vec<&PlacedObject> = inst.subjects.iter().filter_map(|s| ctx.layout.get(s)).collect();
        let [s0, s1] = objs.as_slice() else { return None };
        let area = |id: &str| self.footprint_of(ctx, id).map_or(f64::INFINITY, |(f, _)| f.area());
        let index = |id: &str| ctx.layout.index_of(id).unwrap_or(0);
        let target = inst.d_min + self.margin;
        // (mover id, moving subject, fixed subject)
        let (mover, moving, fixed) = match ctx.level {
            Level::Room => {
                let c0 = s0.parent().unwrap_or(&s0.instance_id).to_string();
                let c1 = s1.parent().unwrap_or(&s1.instance_id).to_string();
                let first_moves = (area(&c0), index(&c0)) < (area(&c1), index(&c1));
                if first_moves {
                    (c0, *s0, *s1)
                } else {
                    (c1, *s1, *s0)
                }
            }
            Level::Desktop => {
                let movable = |o: &PlacedObject| !o.is_floor();
                let first_moves = match (movable(s0), movable(s1)) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => {
                        (area(&s0.instance_id), index(&s0.instance_id))
                            > (area(&s1.instance_id), index(&s1.instance_id))
                    }
                    (false, false) => return None,
                };
                let first_moves = if movable(s0) && movable(s1) {
                    !first_moves
                } else {
                    first_moves
                };
                if first_moves {
                    (s0.instance_id.clone(), *s0, *s1)
                } else {
                    (s1.instance_id.clone(), *s1, *s0)
                }
            }
        };
        let (fp, mo) = self.footprint_of(ctx, &mover)?;
        let (region, obstacles) = self.arena(ctx, &mover, self.margin_for(mo))?;
        let offset = moving.pose.xy() - fp.center;
        let other = fixed.pose.xy();
        let start = fp.center;
        let reach = |f: &Footprint| (f.center + offset).distance(other);
        let near = |f: &Footprint| (reach(f) >= target).then(|| f.center.distance(start));
        let search = |score: &dyn Fn(&Footprint) -> Option<f64>| {
            Search {
                region,
                obstacles: obstacles.clone(),
                size: (2.0 * fp.half.x, 2.0 * fp.half.y),
                yaws: vec![fp.yaw],
                step: self.step_for(mo),
                score,
            }
            .run()
        };
        let found = search(&near).or_else(|| {
            let current = reach(&fp);
            let far = |f: &Footprint| (reach(f) > current + 1e-9).then(|| -reach(f));
            search(&far)
        })?;
        Some(Self::commands_for(&mover, &fp, &found))
    }

    fn inset_glass(&self, ctx: &ProposalContext<'_>, inst: &ConstraintInstance) -> Option<Vec<AdjustCommand>> {
        let id = inst.subjects.first()?;
        let (fp, o) = self.footprint_of(ctx, id)?;
        let (region, obstacles) = self.arena(ctx, id, self.margin_for(o))?;
        let need = inst.d_min + 0.01;
        let start = fp.center;
        let score = |f: &Footprint| (edge_distance_fp(f, &region) >= need).then(|| f.center.distance(start));
        let found = Search {
            region,
            obstacles,
            size: (2.0 * fp.half.x, 2.0 * fp.half.y),
            yaws: vec![fp.yaw],
            step: self.step_for(o),
            score: &score,
        }
        .run()?;
        Some(Self::commands_for(id, &fp, &found))
    }

    /// Turns an object so that its approach side faces the room center,
    /// shifting it if the turned footprint no longer fits where it is.
    fn face_inward(&self, ctx: &ProposalContext<'_>, id: &str) -> Option<Vec<AdjustCommand>> {
        let (fp, o) = self.footprint_of(ctx, id)?;
        let to_center = ctx.layout.room.interior().center() - fp.center;
        let yaw = [0.0, 90.0, 180.0, 270.0]
            .into_iter()
            .max_by(|a, b| {
                access_direction(*a)
                    .dot(to_center)
                    .total_cmp(&access_direction(*b).dot(to_center))
                    .then(b.total_cmp(a))
            })
            .expect("four candidates");
        if (yaw - fp.yaw).abs() < 1e-9 {
            return None;
        }
        let (region, obstacles) = self.arena(ctx, id, self.margin_for(o))?;
        let reach = fp.half.y + 2.0 * self.offset_radius;
        let interior = ctx.layout.room.interior();
        let start = fp.center;
        let score = |f: &Footprint| {
            interior
                .contains(f.center + access_direction(f.yaw) * reach)
                .then(|| f.center.distance(start))
        };
        let found = Search {
            region,
            obstacles,
            size: (2.0 * fp.half.x, 2.0 * fp.half.y),
            yaws: vec![yaw],
            step: self.room_step,
            score: &score,
        }
        .run()?;
        Some(Self::commands_for(id, &fp, &found))
    }

    fn realize(&self, ctx: &ProposalContext<'_>, fix: &Fix<'_>) -> Option<Vec<AdjustCommand>> {
        match fix {
            Fix::Relocate(id) => self.relocate(ctx, id),
            Fix::Chem(inst) if inst.kind.is_distance() => self.separate(ctx, inst),
            Fix::Chem(inst) => self.inset_glass(ctx, inst),
            Fix::Face(id) => self.face_inward(ctx, id),
        }
    }
}

impl Proposer for HeuristicProposer {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn propose(&self, ctx: &ProposalContext<'_>) -> Result<Vec<AdjustCommand>, ProposerError> {
        let fixes = self.candidates(ctx);
        let n = fixes.len();
        for k in 0..n {
            if let Some(cmds) = self.realize(ctx, &fixes[(ctx.attempt + k) % n]) {
                return Ok(cmds);
            }
        }
        Ok(Vec::new())
    }
}
