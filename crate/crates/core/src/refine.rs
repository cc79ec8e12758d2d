//! Reachability-driven layout refinement: turns navigation failures into
//! rigid translations and rotations of room-level objects and iterates.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::asset::AssetBase;
use crate::geometry::{containment_correction, footprint, room_region, Footprint, GeometryStatus, Vec2};
use crate::navigation::{
    access_direction, f_reach, neighbors, rasterize, standoff, Cell, NavConfig, NavError, NavStatus, OccupancyGrid,
    PairOutcome, ReachReport,
};
use crate::optimizer::fast_repair;
use crate::protocol::Protocol;
use crate::scene::{normalize_deg, Layout, PlacedObject, SceneError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub max_iterations: usize,
    /// Rate change (percentage points) below which an iteration counts as
    /// stalled.
    pub epsilon: f64,
    pub stall_limit: usize,
    pub clearance_margin: f64,
    /// Max angle between an object's approach direction and the outward
    /// normal of its nearest wall for it to count as wall-facing.
    pub facing_threshold_deg: f64,
    pub repair_rounds: usize,
    pub repair_margin: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            epsilon: 0.5,
            stall_limit: 3,
            clearance_margin: 0.1,
            facing_threshold_deg: 45.0,
            repair_rounds: 50,
            repair_margin: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn unit(self) -> Vec2 {
        match self {
            Axis::X => Vec2::new(1.0, 0.0),
            Axis::Y => Vec2::new(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    Translation { axis: Axis, delta: f64 },
    Rotation { target_theta: f64, delta_theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentSuggestion {
    pub object: String,
    #[serde(flatten)]
    pub adjustment: Adjustment,
    /// Failure that produced the suggestion, e.g. `pair 2 end_blocked`.
    pub reason: String,
}

impl AdjustmentSuggestion {
    fn translation(object: &str, axis: Axis, delta: f64, reason: String) -> Self {
        Self {
            object: object.to_string(),
            adjustment: Adjustment::Translation { axis, delta },
            reason,
        }
    }

    fn rotation(object: &str, from: f64, target: f64, reason: String) -> Self {
        Self {
            object: object.to_string(),
            adjustment: Adjustment::Rotation {
                target_theta: target,
                delta_theta: signed_delta(from, target),
            },
            reason,
        }
    }

    /// Grouping key: (object, slot) where slot 0/1 = x/y translation and
    /// 2 = rotation.
    fn key(&self) -> (&str, u8) {
        let slot = match self.adjustment {
            Adjustment::Translation { axis: Axis::X, .. } => 0,
            Adjustment::Translation { axis: Axis::Y, .. } => 1,
            Adjustment::Rotation { .. } => 2,
        };
        (&self.object, slot)
    }

    fn magnitude(&self) -> f64 {
        match self.adjustment {
            Adjustment::Translation { delta, .. } => delta.abs(),
            Adjustment::Rotation { delta_theta, .. } => delta_theta.abs(),
        }
    }
}

/// Smallest signed rotation taking `from` to `to`, in `(-180, 180]`.
pub fn signed_delta(from: f64, to: f64) -> f64 {
    let d = normalize_deg(to - from);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Keeps the largest-magnitude suggestion per (object, axis) and one
/// rotation per object, ordered by object id then axis. Ties keep the
/// first occurrence.
pub fn dedup(suggestions: &[AdjustmentSuggestion]) -> Vec<AdjustmentSuggestion> {
    let mut best: Vec<&AdjustmentSuggestion> = Vec::new();
    for s in suggestions {
        match best.iter_mut().find(|b| b.key() == s.key()) {
            Some(b) if s.magnitude() > b.magnitude() => *b = s,
            Some(_) => {}
            None => best.push(s),
        }
    }
    best.sort_by(|a, b| a.key().cmp(&b.key()));
    best.into_iter().cloned().collect()
}

pub fn apply_translation(layout: &Layout, object: &str, axis: Axis, delta: f64) -> Result<Layout, SceneError> {
    let mut out = layout.clone();
    let d = axis.unit() * delta;
    out.translate_rigid(object, d.x, d.y)?;
    Ok(out)
}

pub fn apply_rotation(layout: &Layout, object: &str, target_theta: f64) -> Result<Layout, SceneError> {
    let mut out = layout.clone();
    out.rotate_rigid(object, target_theta)?;
    Ok(out)
}

/// Applies translations first, then rotations, each group sorted by object
/// id.
pub fn apply_all(layout: &Layout, suggestions: &[AdjustmentSuggestion]) -> Result<Layout, SceneError> {
    let mut sorted: Vec<&AdjustmentSuggestion> = suggestions.iter().collect();
    sorted.sort_by(|a, b| {
        let rot = |s: &AdjustmentSuggestion| matches!(s.adjustment, Adjustment::Rotation { .. });
        rot(a).cmp(&rot(b)).then(a.key().cmp(&b.key()))
    });
    let mut out = layout.clone();
    for s in sorted {
        out = match s.adjustment {
            Adjustment::Translation { axis, delta } => apply_translation(&out, &s.object, axis, delta)?,
            Adjustment::Rotation { target_theta, .. } => apply_rotation(&out, &s.object, target_theta)?,
        };
    }
    Ok(out)
}

struct Scene<'a> {
    layout: &'a Layout,
    base: &'a AssetBase,
    nav: &'a NavConfig,
    cfg: &'a RefineConfig,
    grid: OccupancyGrid,
    /// Walls only, for telling wall blockage from object blockage.
    walls: OccupancyGrid,
}

impl Scene<'_> {
    fn fp(&self, o: &PlacedObject) -> Option<Footprint> {
        self.base.get(&o.asset_id).map(|a| footprint(o, a))
    }

    fn blocks(&self, fp: &Footprint, cell: Cell) -> bool {
        let c = self.grid.cell_center(cell);
        match self.nav.inflation {
            crate::navigation::Inflation::Rounded => fp.distance_to(c) <= self.nav.agent_radius,
            crate::navigation::Inflation::Box => fp.inflated(self.nav.agent_radius).contains(c),
        }
    }

    fn fits(&self, fp: &Footprint) -> bool {
        matches!(
            containment_correction(fp, &room_region(&self.layout.room), ""),
            Ok(None)
        )
    }

    fn usable(&self, p: Vec2) -> bool {
        self.layout.room.interior().contains(p) && self.walls.cell_of(p).is_some_and(|c| !self.walls.occupied(c))
    }

    /// Smallest shift of `fp` along `axis` (either sign, stepping by the grid
    /// resolution) that satisfies `ok` while staying inside the room.
    fn min_shift(&self, fp: &Footprint, axis: Axis, ok: &dyn Fn(&Footprint, f64) -> bool) -> Option<f64> {
        let room = self.layout.room;
        let span = room.width.max(room.depth);
        let step = self.grid.resolution;
        let n = (span / step).ceil() as usize;
        for k in 1..=n {
            for sign in [1.0, -1.0] {
                let d = sign * k as f64 * step;
                let moved = fp.translated(axis.unit() * d);
                if self.fits(&moved) && ok(&moved, d) {
                    return Some(d);
                }
            }
        }
        None
    }

    /// Wall-facing test: the approach side points at the nearest wall and
    /// the standoff pose is not usable floor.
    fn faces_wall(&self, o: &PlacedObject) -> bool {
        let Ok((p, _)) = standoff(o, self.base, self.nav.offset_radius) else {
            return false;
        };
        if self.usable(p) {
            return false;
        }
        let i = self.layout.room.interior();
        let c = o.pose.xy();
        let walls = [
            (c.x - i.min.x, Vec2::new(-1.0, 0.0)),
            (i.max.x - c.x, Vec2::new(1.0, 0.0)),
            (c.y - i.min.y, Vec2::new(0.0, -1.0)),
            (i.max.y - c.y, Vec2::new(0.0, 1.0)),
        ];
        let (_, normal) = walls
            .iter()
            .copied()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("four walls");
        access_direction(o.pose.yaw).dot(normal) >= self.cfg.facing_threshold_deg.to_radians().cos() - 1e-12
    }

    /// Cardinal yaw whose approach side points most directly at the room
    /// center; ties go to the smaller angle.
    fn face_center(&self, o: &PlacedObject) -> f64 {
        let to_center = self.layout.room.interior().center() - o.pose.xy();
        let mut best = (f64::NEG_INFINITY, 0.0);
        for yaw in [0.0, 90.0, 180.0, 270.0] {
            let s = access_direction(yaw).dot(to_center);
            if s > best.0 + 1e-12 {
                best = (s, yaw);
            }
        }
        best.1
    }

    fn endpoint(&self, p: &PairOutcome, start: bool, reason: String) -> Vec<AdjustmentSuggestion> {
        let target = if start { &p.pair.start } else { &p.pair.end };
        let point = target.xy();
        let margin = self.cfg.clearance_margin;
        let Some(obj) = self.layout.get(&target.instance_id) else {
            return Vec::new();
        };
        let cell = self
            .grid
            .cell_of(point)
            .filter(|_| self.layout.room.interior().contains(point));

        let blockers: Vec<&PlacedObject> = match cell {
            Some(c) => self
                .layout
                .floor_objects()
                .filter(|o| o.instance_id != obj.instance_id)
                .filter(|o| self.fp(o).is_some_and(|f| self.blocks(&f, c)))
                .collect(),
            None => Vec::new(),
        };
        if let (Some(c), false) = (cell, blockers.is_empty()) {
            let mut out = Vec::new();
            for b in blockers {
                let Some(fp) = self.fp(b) else { continue };
                let clear = |f: &Footprint, _: f64| !self.blocks(f, c);
                let best = [Axis::X, Axis::Y]
                    .into_iter()
                    .filter_map(|axis| self.min_shift(&fp, axis, &clear).map(|d| (axis, d)))
                    .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
                if let Some((axis, d)) = best {
                    out.push(AdjustmentSuggestion::translation(
                        &b.instance_id,
                        axis,
                        d + margin * d.signum(),
                        reason.clone(),
                    ));
                }
            }
            return out;
        }

        // Blocked by walls or outside the floor: the target itself is at fault.
        if self.faces_wall(obj) {
            let yaw = self.face_center(obj);
            if (signed_delta(obj.pose.yaw, yaw)).abs() > 1e-9 {
                return vec![AdjustmentSuggestion::rotation(
                    &obj.instance_id,
                    obj.pose.yaw,
                    yaw,
                    reason,
                )];
            }
        }
        let Some(fp) = self.fp(obj) else { return Vec::new() };
        let best = [Axis::X, Axis::Y]
            .into_iter()
            .filter_map(|axis| {
                let ok = |_: &Footprint, d: f64| self.usable(point + axis.unit() * d);
                self.min_shift(&fp, axis, &ok).map(|d| (axis, d))
            })
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
        match best {
            Some((axis, d)) => vec![AdjustmentSuggestion::translation(
                &obj.instance_id,
                axis,
                d + margin * d.signum(),
                reason,
            )],
            None => Vec::new(),
        }
    }

    fn component(&self, grid: &OccupancyGrid, from: Vec2) -> Vec<bool> {
        let mut seen = vec![false; grid.cells.len()];
        let Some(s) = grid.cell_of(from).filter(|c| !grid.occupied(*c)) else {
            return seen;
        };
        let mut queue = VecDeque::from([s]);
        seen[grid.index(s)] = true;
        while let Some(c) = queue.pop_front() {
            for (n, _) in neighbors(grid, c) {
                let i = grid.index(n);
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Obstacles whose inflated footprint borders both the start's and the
    /// goal's free component.
    fn separators(&self, start: Vec2, goal: Vec2) -> Vec<&PlacedObject> {
        let g = &self.grid;
        let a = self.component(g, start);
        let b = self.component(g, goal);
        let touches = |fp: &Footprint, comp: &[bool]| {
            (0..g.height).any(|j| {
                (0..g.width).any(|i| {
                    g.occupied((i, j))
                        && self.blocks(fp, (i, j))
                        && [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| {
                            let (x, y) = (i as i64 + dx, j as i64 + dy);
                            x >= 0
                                && y >= 0
                                && (x as usize) < g.width
                                && (y as usize) < g.height
                                && comp[g.index((x as usize, y as usize))]
                        })
                })
            })
        };
        self.layout
            .floor_objects()
            .filter(|o| self.fp(o).is_some_and(|f| touches(&f, &a) && touches(&f, &b)))
            .collect()
    }

    fn corridor(&self, p: &PairOutcome, reason: String) -> Vec<AdjustmentSuggestion> {
        let (s, e) = (p.pair.start.xy(), p.pair.end.xy());
        let mut seps = self.separators(s, e);
        let targets = [&p.pair.start.instance_id, &p.pair.end.instance_id];
        // Prefer moving something that is not an endpoint's own target.
        seps.sort_by(|a, b| {
            let key = |o: &PlacedObject| {
                (
                    targets.contains(&&o.instance_id),
                    self.fp(o).map_or(f64::INFINITY, |f| f.area()),
                )
            };
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(a.instance_id.cmp(&b.instance_id))
        });
        let chord = e - s;
        let axis = if chord.y.abs() >= chord.x.abs() {
            Axis::X
        } else {
            Axis::Y
        };
        for o in seps {
            let Some(fp) = self.fp(o) else { continue };
            let opens = |_: &Footprint, d: f64| {
                apply_translation(self.layout, &o.instance_id, axis, d).is_ok_and(|l| {
                    let g = rasterize(
                        &l,
                        self.base,
                        self.nav.resolution,
                        self.nav.agent_radius,
                        self.nav.inflation,
                    );
                    crate::navigation::plan(&g, s, e).status == NavStatus::Ok
                })
            };
            if let Some(d) = self.min_shift(&fp, axis, &opens) {
                return vec![AdjustmentSuggestion::translation(
                    &o.instance_id,
                    axis,
                    d + self.cfg.clearance_margin * d.signum(),
                    reason,
                )];
            }
        }
        Vec::new()
    }
}

/// Suggestions for every failed pair of `report`.
pub fn analyze_report(
    report: &ReachReport,
    layout: &Layout,
    base: &AssetBase,
    nav: &NavConfig,
    cfg: &RefineConfig,
) -> Vec<AdjustmentSuggestion> {
    let mut empty = layout.clone();
    empty.objects.clear();
    let scene = Scene {
        layout,
        base,
        nav,
        cfg,
        grid: rasterize(layout, base, nav.resolution, nav.agent_radius, nav.inflation),
        walls: rasterize(&empty, base, nav.resolution, nav.agent_radius, nav.inflation),
    };
    let mut out = Vec::new();
    for (k, p) in report.pairs.iter().enumerate() {
        let reason = format!("pair {} {}", k + 1, p.outcome.status);
        out.extend(match p.outcome.status {
            NavStatus::Ok => Vec::new(),
            NavStatus::StartBlocked => scene.endpoint(p, true, reason),
            NavStatus::EndBlocked => scene.endpoint(p, false, reason),
            NavStatus::PathBlocked => scene.corridor(p, reason),
        });
    }
    out
}

pub fn analyze(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    nav: &NavConfig,
    cfg: &RefineConfig,
) -> Result<Vec<AdjustmentSuggestion>, NavError> {
    let report = f_reach(layout, protocol, base, nav)?;
    Ok(analyze_report(&report, layout, base, nav, cfg))
}

/// `100 * u / n`, or 0 when there are no pairs.
pub fn unreachable_rate(u: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * u as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRecord {
    pub t: usize,
    pub unreachable: usize,
    pub pairs: usize,
    pub rate: f64,
    pub applied: Vec<AdjustmentSuggestion>,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub layout: Layout,
    pub history: Vec<RefineRecord>,
}

impl RefineOutcome {
    pub fn converged(&self) -> bool {
        self.history.last().is_some_and(|r| r.unreachable == 0)
    }

    pub fn to_jsonl(&self) -> String {
        self.history
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }
}

/// Evaluate, fix and repeat until every pair is reachable, no suggestion is
/// produced, `stall_limit` consecutive iterations fail to improve, or
/// `max_iterations` is spent. The last record always describes the
/// returned layout.
pub fn refine_loop(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    nav: &NavConfig,
    cfg: &RefineConfig,
) -> Result<RefineOutcome, NavError> {
    let mut current = layout.clone();
    let mut history: Vec<RefineRecord> = Vec::new();
    let mut best_u = usize::MAX;
    let mut stalled = 0;
    let mut dirty = false;
    for t in 1..=cfg.max_iterations.max(1) {
        let report = f_reach(&current, protocol, base, nav)?;
        let (u, n) = (report.unreachable(), report.pairs.len());
        let rate = unreachable_rate(u, n);
        let mut record = RefineRecord {
            t,
            unreachable: u,
            pairs: n,
            rate,
            applied: Vec::new(),
            repaired: false,
        };
        dirty = false;
        if u == 0 {
            history.push(record);
            break;
        }
        let improved = u < best_u;
        let rate_moved = history
            .last()
            .is_none_or(|prev| (rate - prev.rate).abs() >= cfg.epsilon);
        if improved && rate_moved {
            stalled = 0;
        } else {
            stalled += 1;
        }
        best_u = best_u.min(u);
        if stalled >= cfg.stall_limit {
            history.push(record);
            break;
        }
        let suggestions = dedup(&analyze_report(&report, &current, base, nav, cfg));
        if suggestions.is_empty() {
            history.push(record);
            break;
        }
        let mut next = match apply_all(&current, &suggestions) {
            Ok(l) => l,
            Err(e) => {
                log::warn!("refinement step {t} failed: {e}");
                history.push(record);
                break;
            }
        };
        if GeometryStatus::compute(&next, base).violation_count() > 0 {
            match fast_repair(&next, base, cfg.repair_rounds, cfg.repair_margin) {
                Ok(r) => next = r.layout,
                Err(e) => log::warn!("repair after refinement step {t} failed: {e}"),
            }
            record.repaired = true;
        }
        record.applied = suggestions;
        history.push(record);
        current = next;
        dirty = true;
    }
    if dirty {
        let report = f_reach(&current, protocol, base, nav)?;
        let (u, n) = (report.unreachable(), report.pairs.len());
        history.push(RefineRecord {
            t: history.len() + 1,
            unreachable: u,
            pairs: n,
            rate: unreachable_rate(u, n),
            applied: Vec::new(),
            repaired: false,
        });
    }
    Ok(RefineOutcome {
        layout: current,
        history,
    })
}
