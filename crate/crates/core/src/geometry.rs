//! Rotation-aware 2D footprints and the collision/boundary primitives built
//! on them.
//!
//! A footprint is the horizontal projection of an asset's bounding box: the
//! long side lies along the asset's local x axis and the short side along
//! local y (front = +y), rotated counterclockwise by the object's yaw.
//! Contact of zero measure is never a collision.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{AssetBase, AssetRecord};
use crate::scene::{Layout, PlacedObject, Room};

/// Overlaps (and boundary excursions) at or below this many metres count as
/// contact, not violation.
pub const CONTACT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 1e-15).then(|| self * (1.0 / n))
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Counterclockwise rotation by `deg` degrees.
pub fn rotate(v: Vec2, deg: f64) -> Vec2 {
    let (s, c) = deg.to_radians().sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("footprint of `{0}` is larger than its containing region")]
    Unrepairable(String),
    #[error("`{0}` is not attached to a surface")]
    NotAttached(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
}

/// Oriented rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub center: Vec2,
    /// Half extents along the local x and y axes.
    pub half: Vec2,
    pub yaw: f64,
    axis_x: Vec2,
    axis_y: Vec2,
}

impl Footprint {
    pub fn new(center: Vec2, size_x: f64, size_y: f64, yaw: f64) -> Self {
        Self {
            center,
            half: Vec2::new(size_x / 2.0, size_y / 2.0),
            yaw,
            axis_x: rotate(Vec2::new(1.0, 0.0), yaw),
            axis_y: rotate(Vec2::new(0.0, 1.0), yaw),
        }
    }

    /// Axis-aligned rectangle spanning `min..max`.
    pub fn aligned(min: Vec2, max: Vec2) -> Self {
        Self::new((min + max) * 0.5, max.x - min.x, max.y - min.y, 0.0)
    }

    pub fn axes(&self) -> [Vec2; 2] {
        [self.axis_x, self.axis_y]
    }

    /// Corners counterclockwise from the local (-x, -y) corner.
    pub fn corners(&self) -> [Vec2; 4] {
        let ex = self.axis_x * self.half.x;
        let ey = self.axis_y * self.half.y;
        let c = self.center;
        [c - ex - ey, c + ex - ey, c + ex + ey, c - ex + ey]
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half.x * self.half.y
    }

    /// Interval covered on a unit axis.
    pub fn project(&self, axis: Vec2) -> (f64, f64) {
        let c = self.center.dot(axis);
        let r = self.half.x * self.axis_x.dot(axis).abs() + self.half.y * self.axis_y.dot(axis).abs();
        (c - r, c + r)
    }

    /// Coordinates of `p` in this rectangle's local frame (origin at center).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let d = p - self.center;
        Vec2::new(d.dot(self.axis_x), d.dot(self.axis_y))
    }

    pub fn from_local(&self, v: Vec2) -> Vec2 {
        self.center + self.axis_x * v.x + self.axis_y * v.y
    }

    /// Euclidean distance from `p` to the rectangle (0 inside).
    pub fn distance_to(&self, p: Vec2) -> f64 {
        let l = self.to_local(p);
        let dx = (l.x.abs() - self.half.x).max(0.0);
        let dy = (l.y.abs() - self.half.y).max(0.0);
        dx.hypot(dy)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= self.half.x && l.y.abs() <= self.half.y
    }

    /// Same rectangle grown by `m` on every side.
    pub fn inflated(&self, m: f64) -> Self {
        Footprint::new(self.center, 2.0 * (self.half.x + m), 2.0 * (self.half.y + m), self.yaw)
    }

    pub fn translated(&self, d: Vec2) -> Self {
        let mut f = *self;
        f.center += d;
        f
    }
}

pub fn footprint(obj: &PlacedObject, asset: &AssetRecord) -> Footprint {
    Footprint::new(obj.pose.xy(), asset.bbox.long_side, asset.bbox.short_side, obj.pose.yaw)
}

/// Footprint of an instance looked up through the asset base.
pub fn footprint_of(layout: &Layout, base: &AssetBase, instance_id: &str) -> Result<Footprint, GeometryError> {
    let obj = layout
        .get(instance_id)
        .ok_or_else(|| GeometryError::UnknownInstance(instance_id.to_string()))?;
    let asset = base
        .get(&obj.asset_id)
        .ok_or_else(|| GeometryError::UnknownAsset(obj.asset_id.clone()))?;
    Ok(footprint(obj, asset))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenetrationResult {
    pub overlapping: bool,
    pub depth: f64,
    /// Unit direction in which to move `b` by `depth` to separate it from `a`.
    pub direction: Vec2,
}

impl PenetrationResult {
    fn separated() -> Self {
        Self {
            overlapping: false,
            depth: 0.0,
            direction: Vec2::ZERO,
        }
    }
}

/// Separating-axis test over both rectangles' edge normals.
pub fn overlap(a: &Footprint, b: &Footprint) -> PenetrationResult {
    let mut best: Option<(f64, Vec2)> = None;
    for axis in a.axes().into_iter().chain(b.axes()) {
        let (amin, amax) = a.project(axis);
        let (bmin, bmax) = b.project(axis);
        let push_pos = amax - bmin;
        let push_neg = bmax - amin;
        if push_pos <= CONTACT_EPS || push_neg <= CONTACT_EPS {
            return PenetrationResult::separated();
        }
        let candidate = if push_pos <= push_neg {
            (push_pos, axis)
        } else {
            (push_neg, -axis)
        };
        if best.is_none_or(|(d, _)| candidate.0 < d) {
            best = Some(candidate);
        }
    }
    let (depth, direction) = best.expect("four axes tested");
    PenetrationResult {
        overlapping: true,
        depth,
        direction,
    }
}

/// Minimal translation that brings `fp` inside `region`, `None` if it
/// already lies inside (within [`CONTACT_EPS`]).
pub fn containment_correction(fp: &Footprint, region: &Footprint, id: &str) -> Result<Option<Vec2>, GeometryError> {
    let [rx, ry] = region.axes();
    let mut local = Vec2::ZERO;
    for (k, axis) in [rx, ry].into_iter().enumerate() {
        let (lo, hi) = fp.project(axis);
        let c = region.center.dot(axis);
        let h = if k == 0 { region.half.x } else { region.half.y };
        let (rlo, rhi) = (c - h, c + h);
        if hi - lo > rhi - rlo + CONTACT_EPS {
            return Err(GeometryError::Unrepairable(id.to_string()));
        }
        let shift = if lo < rlo - CONTACT_EPS {
            rlo - lo
        } else if hi > rhi + CONTACT_EPS {
            rhi - hi
        } else {
            0.0
        };
        if k == 0 {
            local.x = shift;
        } else {
            local.y = shift;
        }
    }
    if local == Vec2::ZERO {
        return Ok(None);
    }
    Ok(Some(rx * local.x + ry * local.y))
}

/// Usable floor region as a rectangle.
pub fn room_region(room: &Room) -> Footprint {
    let i = room.interior();
    Footprint::aligned(i.min, i.max)
}

/// Correction that moves `fp` back inside the room interior.
pub fn out_of_bounds(fp: &Footprint, room: &Room) -> Result<Option<Vec2>, GeometryError> {
    containment_correction(fp, &room_region(room), "footprint")
}

/// Signed distance from the item's footprint to the nearest tabletop edge:
/// the minimum over the item's corners, negative when a corner overhangs.
pub fn edge_distance_fp(item: &Footprint, surface: &Footprint) -> f64 {
    item.corners()
        .iter()
        .map(|&c| {
            let l = surface.to_local(c);
            (surface.half.x - l.x.abs()).min(surface.half.y - l.y.abs())
        })
        .fold(f64::INFINITY, f64::min)
}

/// [`edge_distance_fp`] for an attached item in a layout.
pub fn edge_distance(layout: &Layout, base: &AssetBase, item_id: &str) -> Result<f64, GeometryError> {
    let item = layout
        .get(item_id)
        .ok_or_else(|| GeometryError::UnknownInstance(item_id.to_string()))?;
    let parent = item
        .parent()
        .ok_or_else(|| GeometryError::NotAttached(item_id.to_string()))?;
    Ok(edge_distance_fp(
        &footprint_of(layout, base, item_id)?,
        &footprint_of(layout, base, parent)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionPair {
    pub a: String,
    pub b: String,
    pub result: PenetrationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryViolation {
    pub instance_id: String,
    /// Inward correction; `None` when the object cannot fit at all.
    pub correction: Option<Vec2>,
}

/// Same-level pairs that get a collision test: floor objects against each
/// other, and items sharing one surface. Pairs are in layout order (a < b).
pub fn tested_pairs(layout: &Layout) -> Vec<(usize, usize)> {
    let objs = &layout.objects;
    let mut pairs = Vec::new();
    for i in 0..objs.len() {
        for j in (i + 1)..objs.len() {
            if objs[i].initial_location == objs[j].initial_location {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

pub fn pairwise_collisions(layout: &Layout, base: &AssetBase) -> Vec<CollisionPair> {
    let fps = footprints(layout, base);
    tested_pairs(layout)
        .into_iter()
        .filter_map(|(i, j)| {
            let (fa, fb) = (fps[i]?, fps[j]?);
            let result = overlap(&fa, &fb);
            result.overlapping.then(|| CollisionPair {
                a: layout.objects[i].instance_id.clone(),
                b: layout.objects[j].instance_id.clone(),
                result,
            })
        })
        .collect()
}

/// Footprints in layout order; `None` where the asset is unknown.
pub fn footprints(layout: &Layout, base: &AssetBase) -> Vec<Option<Footprint>> {
    layout
        .objects
        .iter()
        .map(|o| base.get(&o.asset_id).map(|a| footprint(o, a)))
        .collect()
}

/// Boundary check for every object: floor objects against the room
/// interior, desktop items against their tabletop.
pub fn boundary_violations(layout: &Layout, base: &AssetBase) -> Vec<BoundaryViolation> {
    let fps = footprints(layout, base);
    let room = room_region(&layout.room);
    let mut out = Vec::new();
    for (i, o) in layout.objects.iter().enumerate() {
        let Some(fp) = fps[i] else { continue };
        let region = match o.parent() {
            None => room,
            Some(p) => match layout.index_of(p).and_then(|k| fps[k]) {
                Some(r) => r,
                None => continue,
            },
        };
        match containment_correction(&fp, &region, &o.instance_id) {
            Ok(None) => {}
            Ok(Some(c)) => out.push(BoundaryViolation {
                instance_id: o.instance_id.clone(),
                correction: Some(c),
            }),
            Err(_) => out.push(BoundaryViolation {
                instance_id: o.instance_id.clone(),
                correction: None,
            }),
        }
    }
    out
}

/// All geometric findings for one layout.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GeometryStatus {
    pub boundary: Vec<BoundaryViolation>,
    pub collisions: Vec<CollisionPair>,
    pub tested_pairs: usize,
    pub object_count: usize,
}

impl GeometryStatus {
    pub fn compute(layout: &Layout, base: &AssetBase) -> Self {
        Self {
            boundary: boundary_violations(layout, base),
            collisions: pairwise_collisions(layout, base),
            tested_pairs: tested_pairs(layout).len(),
            object_count: layout.objects.len(),
        }
    }

    pub fn violation_count(&self) -> usize {
        self.boundary.len() + self.collisions.len()
    }

    /// Whether an instance is involved in any boundary or collision finding.
    pub fn is_clean(&self, instance_id: &str) -> bool {
        !self.boundary.iter().any(|b| b.instance_id == instance_id)
            && !self.collisions.iter().any(|c| c.a == instance_id || c.b == instance_id)
    }

    /// Geometric validity ratio `1 - min(1, violations / checks)`.
    pub fn f_geo(&self) -> f64 {
        let checks = self.object_count + self.tested_pairs;
        if checks == 0 {
            return 1.0;
        }
        1.0 - (self.violation_count() as f64 / checks as f64).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(x: f64, y: f64, yaw: f64) -> Footprint {
        Footprint::new(Vec2::new(x, y), 1.0, 1.0, yaw)
    }

    fn assert_corners(fp: &Footprint, expected: &[(f64, f64)]) {
        for &(ex, ey) in expected {
            assert!(
                fp.corners()
                    .iter()
                    .any(|c| (c.x - ex).abs() < 1e-12 && (c.y - ey).abs() < 1e-12),
                "missing corner ({ex},{ey}) in {:?}",
                fp.corners()
            );
        }
    }

    #[test]
    fn footprint_corner_examples() {
        assert_corners(
            &sq(0.0, 0.0, 0.0),
            &[(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)],
        );
        let h = 2f64.sqrt() / 2.0;
        assert_corners(&sq(0.0, 0.0, 45.0), &[(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)]);
        let long = Footprint::new(Vec2::new(3.0, 4.0), 2.0, 1.0, 90.0);
        assert_corners(&long, &[(2.5, 3.0), (3.5, 3.0), (3.5, 5.0), (2.5, 5.0)]);
    }

    #[test]
    fn overlap_examples() {
        assert!(!overlap(&sq(0.0, 0.0, 0.0), &sq(2.0, 0.0, 0.0)).overlapping);
        let r = overlap(&sq(0.0, 0.0, 0.0), &sq(0.6, 0.0, 0.0));
        assert!(r.overlapping);
        assert!((r.depth - 0.4).abs() < 1e-12);
        assert_eq!(r.direction, Vec2::new(1.0, 0.0));
        assert!(!overlap(&sq(0.0, 0.0, 0.0), &sq(1.0, 0.0, 0.0)).overlapping, "touching");
    }

    #[test]
    fn overlap_direction_points_from_a_to_b() {
        let r = overlap(&sq(0.0, 0.0, 0.0), &sq(-0.7, 0.1, 0.0));
        assert!(r.overlapping);
        assert!((r.depth - 0.3).abs() < 1e-12);
        assert_eq!(r.direction, Vec2::new(-1.0, 0.0));
    }

    #[test]
    fn out_of_bounds_examples() {
        let room = Room::new(10.0, 10.0, 3.0);
        let c = out_of_bounds(&sq(0.2, 2.0, 0.0), &room).unwrap().unwrap();
        assert!((c.x - 0.3).abs() < 1e-12 && c.y.abs() < 1e-12);
        assert_eq!(out_of_bounds(&sq(5.0, 5.0, 0.0), &room).unwrap(), None);
        let huge = Footprint::new(Vec2::new(5.0, 5.0), 12.0, 12.0, 0.0);
        assert!(matches!(
            out_of_bounds(&huge, &room),
            Err(GeometryError::Unrepairable(_))
        ));
    }

    #[test]
    fn wall_thickness_shrinks_interior() {
        let mut room = Room::new(10.0, 10.0, 3.0);
        room.wall_thickness = 0.2;
        let c = out_of_bounds(&sq(0.6, 5.0, 0.0), &room).unwrap().unwrap();
        assert!((c.x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn edge_distance_examples() {
        let table = Footprint::new(Vec2::new(0.0, 0.0), 2.0, 1.0, 0.0);
        // center 0.10 m from the front edge, 0.04 m wide item
        let item = Footprint::new(Vec2::new(0.0, -0.4), 0.04, 0.04, 0.0);
        assert!((edge_distance_fp(&item, &table) - 0.08).abs() < 1e-12);

        let unit = Footprint::new(Vec2::ZERO, 1.0, 1.0, 0.0);
        let dot = Footprint::new(Vec2::ZERO, 1e-12, 1e-12, 0.0);
        assert!((edge_distance_fp(&dot, &unit) - 0.5).abs() < 1e-9);

        let flush = Footprint::new(Vec2::new(0.9, 0.0), 0.2, 0.2, 0.0);
        assert!(edge_distance_fp(&flush, &table).abs() < 1e-12);

        let over = Footprint::new(Vec2::new(0.95, 0.0), 0.2, 0.2, 0.0);
        assert!(edge_distance_fp(&over, &table) < 0.0);
    }

    #[test]
    fn distance_to_rectangle() {
        let r = Footprint::new(Vec2::ZERO, 2.0, 1.0, 0.0);
        assert_eq!(r.distance_to(Vec2::new(0.5, 0.0)), 0.0);
        assert!((r.distance_to(Vec2::new(2.0, 0.0)) - 1.0).abs() < 1e-12);
        assert!((r.distance_to(Vec2::new(4.0, 4.5)) - 5.0).abs() < 1e-12);
    }
}
