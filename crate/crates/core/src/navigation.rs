//! Navigation targets, goal pairs, occupancy grids and A* reachability.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::{self, Write as _};
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::AssetBase;
use crate::geometry::{footprint, Footprint, Vec2};
use crate::protocol::{Protocol, ProtocolStep};
use crate::scene::{normalize_deg, Interior, Layout, PlacedObject};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error, PartialEq)]
pub enum NavError {
    #[error("step {step}: no placed object for `{name}`")]
    NotPlaced { step: usize, name: String },
    #[error("`{0}` sits on `{1}`, which is not in the layout")]
    UnresolvedParent(String, String),
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inflation {
    /// Exact Minkowski sum with the agent disc (rounded corners).
    Rounded,
    /// Rectangle grown by the radius on every side.
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavConfig {
    pub resolution: f64,
    pub agent_radius: f64,
    pub offset_radius: f64,
    pub inflation: Inflation,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            agent_radius: 0.3,
            offset_radius: 0.3,
            inflation: Inflation::Rounded,
        }
    }
}

/// Unit vector from an object's center toward the side a robot approaches
/// it from.
pub fn access_direction(yaw_deg: f64) -> Vec2 {
    let r = yaw_deg.to_radians();
    Vec2::new(-r.sin(), -r.cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavTarget {
    pub x: f64,
    pub y: f64,
    /// Robot heading in degrees, in `[0, 360)`.
    pub theta: f64,
    pub step: usize,
    pub instance_id: String,
}

impl NavTarget {
    pub fn xy(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    fn coincides(&self, o: &NavTarget) -> bool {
        self.xy().distance(o.xy()) <= 1e-6 && (self.theta - o.theta).abs() <= 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalPair {
    pub start: NavTarget,
    pub end: NavTarget,
}

fn step_object<'a>(step: &ProtocolStep, layout: &'a Layout, base: &AssetBase) -> Result<&'a PlacedObject, NavError> {
    let placed = |name: &str| {
        base.resolve(name)
            .ok()
            .and_then(|r| layout.first_instance_of(&r.asset_id))
            .or_else(|| layout.get(name))
    };
    placed(&step.location)
        .or_else(|| step.assets_used.iter().find_map(|a| placed(a)))
        .ok_or_else(|| NavTarget::not_placed(step))
}

impl NavTarget {
    fn not_placed(step: &ProtocolStep) -> NavError {
        NavError::NotPlaced {
            step: step.index,
            name: step.location.clone(),
        }
    }
}

/// Object the robot should drive to: the placed object itself, or its
/// supporting surface when that surface is larger.
pub fn resolve_target<'a>(
    obj: &'a PlacedObject,
    layout: &'a Layout,
    base: &AssetBase,
) -> Result<&'a PlacedObject, NavError> {
    let Some(pid) = obj.parent() else { return Ok(obj) };
    let parent = layout
        .get(pid)
        .ok_or_else(|| NavError::UnresolvedParent(obj.instance_id.clone(), pid.to_string()))?;
    let area = |o: &PlacedObject| {
        base.get(&o.asset_id)
            .map(|a| a.bbox.area())
            .ok_or_else(|| NavError::UnknownAsset(o.asset_id.clone()))
    };
    Ok(if area(parent)? > area(obj)? { parent } else { obj })
}

/// Standoff pose in front of `obj`: `short/2 + 2 * offset_radius` along the
/// approach direction, facing the object.
pub fn standoff(obj: &PlacedObject, base: &AssetBase, offset_radius: f64) -> Result<(Vec2, f64), NavError> {
    let a = base
        .get(&obj.asset_id)
        .ok_or_else(|| NavError::UnknownAsset(obj.asset_id.clone()))?;
    let dist = a.bbox.short_side / 2.0 + 2.0 * offset_radius;
    let p = obj.pose.xy() + access_direction(obj.pose.yaw) * dist;
    Ok((p, normalize_deg(obj.pose.yaw + 180.0)))
}

pub fn nav_target_for(
    step: &ProtocolStep,
    layout: &Layout,
    base: &AssetBase,
    offset_radius: f64,
) -> Result<NavTarget, NavError> {
    let obj = step_object(step, layout, base)?;
    let target = resolve_target(obj, layout, base)?;
    let (p, theta) = standoff(target, base, offset_radius)?;
    Ok(NavTarget {
        x: p.x,
        y: p.y,
        theta,
        step: step.index,
        instance_id: target.instance_id.clone(),
    })
}

/// Targets for every step whose location or assets are placed. Steps with
/// nothing placed are skipped.
pub fn nav_targets(
    protocol: &Protocol,
    layout: &Layout,
    base: &AssetBase,
    offset_radius: f64,
) -> Result<Vec<NavTarget>, NavError> {
    let mut out = Vec::new();
    for step in &protocol.steps {
        match nav_target_for(step, layout, base, offset_radius) {
            Ok(t) => out.push(t),
            Err(NavError::NotPlaced { step, name }) => log::debug!("step {step}: `{name}` not placed, skipped"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Pairs consecutive targets, dropping zero-length pairs.
pub fn pair_targets(targets: &[NavTarget]) -> Vec<GoalPair> {
    targets
        .windows(2)
        .filter(|w| !w[0].coincides(&w[1]))
        .map(|w| GoalPair {
            start: w[0].clone(),
            end: w[1].clone(),
        })
        .collect()
}

pub fn goal_pairs(
    protocol: &Protocol,
    layout: &Layout,
    base: &AssetBase,
    offset_radius: f64,
) -> Result<Vec<GoalPair>, NavError> {
    Ok(pair_targets(&nav_targets(protocol, layout, base, offset_radius)?))
}

/// Goal-pair file body with every number printed to `decimals` places and
/// headings in radians.
pub fn goal_pairs_json(pairs: &[GoalPair], num_targets: usize, decimals: usize) -> String {
    let pose = |t: &NavTarget| format!("[{:.d$},{:.d$},{:.d$}]", t.x, t.y, t.theta.to_radians(), d = decimals);
    let mut s = String::from("{\"goal_pairs\":[");
    for (i, p) in pairs.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{{\"start\":{},\"end\":{}}}", pose(&p.start), pose(&p.end));
    }
    let _ = write!(
        s,
        "],\"num_targets\":{num_targets},\"num_goal_pairs\":{}}}",
        pairs.len()
    );
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    /// Global position of the corner of cell (0, 0).
    pub origin: Vec2,
    pub width: usize,
    pub height: usize,
    /// Row-major, `true` = occupied.
    pub cells: Vec<bool>,
    /// Usable floor region; endpoints outside it count as blocked.
    pub interior: Interior,
}

pub type Cell = (usize, usize);

impl OccupancyGrid {
    pub fn empty(width: usize, height: usize, resolution: f64) -> Self {
        Self {
            resolution,
            origin: Vec2::ZERO,
            width,
            height,
            cells: vec![false; width * height],
            interior: Interior {
                min: Vec2::ZERO,
                max: Vec2::new(width as f64 * resolution, height as f64 * resolution),
            },
        }
    }

    pub fn index(&self, c: Cell) -> usize {
        c.1 * self.width + c.0
    }

    pub fn occupied(&self, c: Cell) -> bool {
        self.cells[self.index(c)]
    }

    pub fn set(&mut self, c: Cell, occupied: bool) {
        let i = self.index(c);
        self.cells[i] = occupied;
    }

    pub fn cell_center(&self, c: Cell) -> Vec2 {
        self.origin
            + Vec2::new(
                (c.0 as f64 + 0.5) * self.resolution,
                (c.1 as f64 + 0.5) * self.resolution,
            )
    }

    pub fn cell_of(&self, p: Vec2) -> Option<Cell> {
        let l = (p - self.origin) * (1.0 / self.resolution);
        let (i, j) = (l.x.floor(), l.y.floor());
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.width && (j as usize) < self.height)
            .then_some((i as usize, j as usize))
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| !**c).count()
    }

    fn mark(&mut self, fp: &Footprint, radius: f64, mode: Inflation) {
        let grown = fp.inflated(radius);
        let (x0, x1) = grown.project(Vec2::new(1.0, 0.0));
        let (y0, y1) = grown.project(Vec2::new(0.0, 1.0));
        let res = self.resolution;
        let lo = |v: f64, o: f64| (((v - o) / res).floor().max(0.0)) as usize;
        let hi = |v: f64, o: f64, n: usize| ((((v - o) / res).ceil()).max(0.0) as usize).min(n);
        for j in lo(y0, self.origin.y)..hi(y1, self.origin.y, self.height) {
            for i in lo(x0, self.origin.x)..hi(x1, self.origin.x, self.width) {
                let c = self.cell_center((i, j));
                let hit = match mode {
                    Inflation::Rounded => fp.distance_to(c) <= radius,
                    Inflation::Box => grown.contains(c),
                };
                if hit {
                    self.set((i, j), true);
                }
            }
        }
    }

    /// Binary PGM (P5): 0 = occupied, 255 = free, top row = largest y.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for j in (0..self.height).rev() {
            for i in 0..self.width {
                out.push(if self.occupied((i, j)) { 0 } else { 255 });
            }
        }
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_pgm())
    }
}

/// Occupancy of the room's floor: floor footprints grown by the agent
/// radius, the border ring and everything outside the interior. Desktop
/// items are ignored.
pub fn rasterize(
    layout: &Layout,
    base: &AssetBase,
    resolution: f64,
    agent_radius: f64,
    mode: Inflation,
) -> OccupancyGrid {
    let room = layout.room;
    let width = (room.width / resolution).ceil().max(1.0) as usize;
    let height = (room.depth / resolution).ceil().max(1.0) as usize;
    let mut grid = OccupancyGrid::empty(width, height, resolution);
    grid.interior = room.interior();
    for j in 0..height {
        for i in 0..width {
            let border = i == 0 || j == 0 || i + 1 == width || j + 1 == height;
            if border || !grid.interior.contains(grid.cell_center((i, j))) {
                grid.set((i, j), true);
            }
        }
    }
    for o in layout.floor_objects() {
        if let Some(a) = base.get(&o.asset_id) {
            grid.mark(&footprint(o, a), agent_radius, mode);
        }
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavStatus {
    Ok,
    StartBlocked,
    EndBlocked,
    PathBlocked,
}

impl fmt::Display for NavStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NavStatus::Ok => "ok",
            NavStatus::StartBlocked => "start_blocked",
            NavStatus::EndBlocked => "end_blocked",
            NavStatus::PathBlocked => "path_blocked",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavOutcome {
    pub status: NavStatus,
    pub path: Option<Vec<Cell>>,
    /// Path length in meters; 0 unless `status` is ok.
    pub length: f64,
}

impl NavOutcome {
    fn failed(status: NavStatus) -> Self {
        Self {
            status,
            path: None,
            length: 0.0,
        }
    }
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    h: f64,
    cell: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(o.h.total_cmp(&self.h))
            .then(o.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Free 8-neighbors of `c`; diagonal moves may not cut an occupied corner.
/// Each neighbor comes with its (straight, diagonal) step counts.
pub fn neighbors(grid: &OccupancyGrid, c: Cell) -> impl Iterator<Item = (Cell, (u32, u32))> + '_ {
    let (w, h) = (grid.width as i64, grid.height as i64);
    let free = move |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && !grid.occupied((x as usize, y as usize));
    let (x, y) = (c.0 as i64, c.1 as i64);
    NEIGHBORS.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (x + dx, y + dy);
        if !free(nx, ny) {
            return None;
        }
        let diagonal = dx != 0 && dy != 0;
        if diagonal && !(free(x + dx, y) && free(x, y + dy)) {
            return None;
        }
        Some(((nx as usize, ny as usize), if diagonal { (0, 1) } else { (1, 0) }))
    })
}

fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    dx.max(dy) + (SQRT2 - 1.0) * dx.min(dy)
}

/// A* between two cells with the octile heuristic.
pub fn plan_cells(grid: &OccupancyGrid, start: Cell, goal: Cell) -> NavOutcome {
    if grid.occupied(start) {
        return NavOutcome::failed(NavStatus::StartBlocked);
    }
    if grid.occupied(goal) {
        return NavOutcome::failed(NavStatus::EndBlocked);
    }
    let n = grid.cells.len();
    // Step counts as (straight, diagonal): the optimal pair is unique, so
    // the reported length does not depend on summation order.
    let mut best: Vec<Option<(u32, u32)>> = vec![None; n];
    let mut came = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let cost = |c: (u32, u32)| c.0 as f64 + c.1 as f64 * SQRT2;
    let (si, gi) = (grid.index(start), grid.index(goal));
    best[si] = Some((0, 0));
    let mut open = BinaryHeap::new();
    open.push(Open {
        f: octile(start, goal),
        h: octile(start, goal),
        cell: si,
    });
    while let Some(Open { cell, .. }) = open.pop() {
        if closed[cell] {
            continue;
        }
        closed[cell] = true;
        if cell == gi {
            break;
        }
        let here = (cell % grid.width, cell / grid.width);
        let g = best[cell].expect("reached cells have a cost");
        for (next, step) in neighbors(grid, here) {
            let ni = grid.index(next);
            if closed[ni] {
                continue;
            }
            let cand = (g.0 + step.0, g.1 + step.1);
            if best[ni].is_none_or(|b| cost(cand) < cost(b)) {
                best[ni] = Some(cand);
                came[ni] = cell;
                let h = octile(next, goal);
                open.push(Open {
                    f: cost(cand) + h,
                    h,
                    cell: ni,
                });
            }
        }
    }
    let Some(total) = best[gi].filter(|_| closed[gi]) else {
        return NavOutcome::failed(NavStatus::PathBlocked);
    };
    let mut path = vec![goal];
    let mut cur = gi;
    while cur != si {
        cur = came[cur];
        path.push((cur % grid.width, cur / grid.width));
    }
    path.reverse();
    NavOutcome {
        status: NavStatus::Ok,
        path: Some(path),
        length: cost(total) * grid.resolution,
    }
}

/// Plans between two world points. Endpoints outside the grid or the
/// interior count as blocked.
pub fn plan(grid: &OccupancyGrid, start: Vec2, goal: Vec2) -> NavOutcome {
    let inside = |p: Vec2| grid.interior.contains(p).then(|| grid.cell_of(p)).flatten();
    let Some(s) = inside(start) else {
        return NavOutcome::failed(NavStatus::StartBlocked);
    };
    let Some(g) = inside(goal) else {
        return NavOutcome::failed(NavStatus::EndBlocked);
    };
    plan_cells(grid, s, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub pair: GoalPair,
    pub outcome: NavOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachReport {
    /// 1 when every pair is reachable (also when there are no pairs), else 0.
    pub f_reach: f64,
    pub num_targets: usize,
    pub pairs: Vec<PairOutcome>,
}

impl ReachReport {
    pub fn failures(&self) -> impl Iterator<Item = &PairOutcome> {
        self.pairs.iter().filter(|p| p.outcome.status != NavStatus::Ok)
    }

    pub fn unreachable(&self) -> usize {
        self.failures().count()
    }
}

pub fn plan_pairs(grid: &OccupancyGrid, pairs: &[GoalPair]) -> Vec<PairOutcome> {
    pairs
        .par_iter()
        .map(|p| PairOutcome {
            pair: p.clone(),
            outcome: plan(grid, p.start.xy(), p.end.xy()),
        })
        .collect()
}

pub fn f_reach(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    cfg: &NavConfig,
) -> Result<ReachReport, NavError> {
    let targets = nav_targets(protocol, layout, base, cfg.offset_radius)?;
    let pairs = pair_targets(&targets);
    let grid = rasterize(layout, base, cfg.resolution, cfg.agent_radius, cfg.inflation);
    let outcomes = plan_pairs(&grid, &pairs);
    let ok = outcomes.iter().all(|p| p.outcome.status == NavStatus::Ok);
    Ok(ReachReport {
        f_reach: if ok { 1.0 } else { 0.0 },
        num_targets: targets.len(),
        pairs: outcomes,
    })
}
