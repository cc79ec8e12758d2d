//! Rooms, posed objects and the layout file format.
//!
//! Coordinates are global metres with the origin at the front-left corner of
//! the room floor, z up. Yaw is in degrees, counterclockwise, with 0 meaning
//! the asset's canonical front (+y). Desktop items are stored in global
//! coordinates; `initial_location` records which surface carries them.
//! Nesting is one level deep: floor -> surface -> items.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::asset::{AssetBase, AssetRecord};
use crate::geometry::{rotate, Vec2};
use crate::issue::Issue;

/// Tolerance for the tabletop-height invariant.
pub const HEIGHT_TOLERANCE: f64 = 1e-6;

pub const FLOOR: &str = "floor";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse layout: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid layout: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Issue>),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("`{0}` does not provide a work surface")]
    NotASurface(String),
    #[error("local point ({u}, {v}) lies outside the tabletop of `{parent}`")]
    OutsideSurface { parent: String, u: f64, v: f64 },
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn normalize_deg(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            yaw: normalize_deg(yaw),
        }
    }

    pub fn xy(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    #[serde(default)]
    pub wall_thickness: f64,
}

/// Axis-aligned usable floor region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interior {
    pub min: Vec2,
    pub max: Vec2,
}

impl Interior {
    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

impl Room {
    pub fn new(width: f64, depth: f64, height: f64) -> Self {
        Self {
            width,
            depth,
            height,
            wall_thickness: 0.0,
        }
    }

    pub fn interior(&self) -> Interior {
        let t = self.wall_thickness;
        Interior {
            min: Vec2::new(t, t),
            max: Vec2::new(self.width - t, self.depth - t),
        }
    }

    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        for (field, v) in [
            ("room.width", self.width),
            ("room.depth", self.depth),
            ("room.height", self.height),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                issues.push(Issue::error(field, "must be strictly positive"));
            }
        }
        if self.wall_thickness < 0.0 || 2.0 * self.wall_thickness >= self.width.min(self.depth) {
            issues.push(Issue::error(
                "room.wall_thickness",
                "must be non-negative and leave a usable interior",
            ));
        }
        issues
    }
}

/// Where an object was placed: on the floor or on a surface instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Location {
    Floor,
    On(String),
}

impl Location {
    pub fn parent(&self) -> Option<&str> {
        match self {
            Location::Floor => None,
            Location::On(id) => Some(id),
        }
    }

    pub fn is_floor(&self) -> bool {
        matches!(self, Location::Floor)
    }
}

impl Serialize for Location {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Location::Floor => s.serialize_str(FLOOR),
            Location::On(id) => s.serialize_str(id),
        }
    }
}

impl<'de> Deserialize<'de> for Location {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == FLOOR { Location::Floor } else { Location::On(s) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "WireObject", into = "WireObject")]
pub struct PlacedObject {
    pub instance_id: String,
    pub asset_id: String,
    pub pose: Pose,
    pub initial_location: Location,
}

impl PlacedObject {
    pub fn on_floor(instance_id: impl Into<String>, asset_id: impl Into<String>, pose: Pose) -> Self {
        Self {
            instance_id: instance_id.into(),
            asset_id: asset_id.into(),
            pose,
            initial_location: Location::Floor,
        }
    }

    pub fn on_surface(
        instance_id: impl Into<String>,
        asset_id: impl Into<String>,
        pose: Pose,
        parent: impl Into<String>,
    ) -> Self {
        Self {
            instance_id: instance_id.into(),
            asset_id: asset_id.into(),
            pose,
            initial_location: Location::On(parent.into()),
        }
    }

    pub fn is_floor(&self) -> bool {
        self.initial_location.is_floor()
    }

    pub fn parent(&self) -> Option<&str> {
        self.initial_location.parent()
    }
}

#[derive(Serialize, Deserialize)]
struct WireObject {
    instance_id: String,
    asset_id: String,
    position: [f64; 3],
    yaw_deg: f64,
    initial_location: Location,
}

impl From<WireObject> for PlacedObject {
    fn from(w: WireObject) -> Self {
        PlacedObject {
            instance_id: w.instance_id,
            asset_id: w.asset_id,
            pose: Pose::new(w.position[0], w.position[1], w.position[2], w.yaw_deg),
            initial_location: w.initial_location,
        }
    }
}

impl From<PlacedObject> for WireObject {
    fn from(o: PlacedObject) -> Self {
        WireObject {
            instance_id: o.instance_id,
            asset_id: o.asset_id,
            position: [o.pose.x, o.pose.y, o.pose.z],
            yaw_deg: o.pose.yaw,
            initial_location: o.initial_location,
        }
    }
}

/// Position of a desktop item in its surface's frame: origin at the
/// front-left tabletop corner, `u` along the surface width (long side), `v`
/// along its depth (short side).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPose {
    pub u: f64,
    pub v: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub room: Room,
    pub objects: Vec<PlacedObject>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Layout {
    pub fn new(room: Room) -> Self {
        Self {
            room,
            objects: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Parses and checks structural invariants (ids, attachment references).
    pub fn from_json_str(text: &str) -> Result<Self, SceneError> {
        let layout: Layout = serde_json::from_str(text)?;
        let issues = layout.validate_structure();
        if issues.iter().any(Issue::is_error) {
            return Err(SceneError::Invalid(issues));
        }
        Ok(layout)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SceneError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("layout serializes");
        s.push('\n');
        s
    }

    /// Checks that need no asset knowledge: room sanity, unique ids,
    /// resolvable attachments, single-level nesting.
    pub fn validate_structure(&self) -> Vec<Issue> {
        let mut issues = self.room.validate();
        let mut seen = BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if !seen.insert(o.instance_id.as_str()) {
                issues.push(Issue::error(
                    format!("objects[{i}].instance_id"),
                    format!("duplicate instance_id `{}`", o.instance_id),
                ));
            }
            if o.pose.z < 0.0 {
                issues.push(Issue::error(format!("objects[{i}].position"), "z must be >= 0"));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if let Some(parent) = o.parent() {
                if parent == o.instance_id {
                    issues.push(Issue::error(
                        format!("objects[{i}].initial_location"),
                        "object cannot rest on itself",
                    ));
                    continue;
                }
                match self.get(parent) {
                    None => issues.push(Issue::error(
                        format!("objects[{i}].initial_location"),
                        format!("dangling reference `{parent}`"),
                    )),
                    Some(p) if !p.is_floor() => issues.push(Issue::error(
                        format!("objects[{i}].initial_location"),
                        format!("`{parent}` is itself a desktop item; nesting is one level deep"),
                    )),
                    Some(_) => {}
                }
            }
        }
        issues
    }

    /// Structural checks plus asset-dependent ones: every asset known, every
    /// parent a surface, every desktop item resting at tabletop height.
    pub fn validate(&self, base: &AssetBase) -> Vec<Issue> {
        let mut issues = self.validate_structure();
        for (i, o) in self.objects.iter().enumerate() {
            if base.get(&o.asset_id).is_none() {
                issues.push(Issue::error(
                    format!("objects[{i}].asset_id"),
                    format!("unknown asset `{}`", o.asset_id),
                ));
                continue;
            }
            let Some(parent) = o.parent().and_then(|p| self.get(p)) else {
                continue;
            };
            let Some(passet) = base.get(&parent.asset_id) else {
                continue;
            };
            if !passet.is_surface() {
                issues.push(Issue::error(
                    format!("objects[{i}].initial_location"),
                    format!("`{}` does not provide a surface", parent.instance_id),
                ));
            }
            let top = tabletop_height(parent, passet);
            if (o.pose.z - top).abs() > HEIGHT_TOLERANCE {
                issues.push(Issue::error(
                    format!("objects[{i}].position"),
                    format!("z {} differs from tabletop height {top}", o.pose.z),
                ));
            }
        }
        issues
    }

    pub fn index_of(&self, instance_id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.instance_id == instance_id)
    }

    pub fn get(&self, instance_id: &str) -> Option<&PlacedObject> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }

    pub fn get_mut(&mut self, instance_id: &str) -> Option<&mut PlacedObject> {
        self.objects.iter_mut().find(|o| o.instance_id == instance_id)
    }

    pub fn require(&self, instance_id: &str) -> Result<&PlacedObject, SceneError> {
        self.get(instance_id)
            .ok_or_else(|| SceneError::UnknownInstance(instance_id.to_string()))
    }

    /// Items whose `initial_location` is `instance_id`, in layout order.
    pub fn items_on(&self, instance_id: &str) -> Result<Vec<&PlacedObject>, SceneError> {
        self.require(instance_id)?;
        Ok(self
            .objects
            .iter()
            .filter(|o| o.parent() == Some(instance_id))
            .collect())
    }

    pub fn floor_objects(&self) -> impl Iterator<Item = &PlacedObject> {
        self.objects.iter().filter(|o| o.is_floor())
    }

    pub fn desktop_objects(&self) -> impl Iterator<Item = &PlacedObject> {
        self.objects.iter().filter(|o| !o.is_floor())
    }

    /// First placed instance of an asset, in layout order.
    pub fn first_instance_of(&self, asset_id: &str) -> Option<&PlacedObject> {
        self.objects.iter().find(|o| o.asset_id == asset_id)
    }

    /// Translates an object; if it is a surface its items move with it.
    pub fn translate_rigid(&mut self, instance_id: &str, dx: f64, dy: f64) -> Result<(), SceneError> {
        self.require(instance_id)?;
        for o in self.objects.iter_mut() {
            if o.instance_id == instance_id || o.parent() == Some(instance_id) {
                o.pose.x += dx;
                o.pose.y += dy;
            }
        }
        Ok(())
    }

    /// Sets an object's yaw to `target_yaw` and rotates its items rigidly
    /// about the object's center by the same increment.
    pub fn rotate_rigid(&mut self, instance_id: &str, target_yaw: f64) -> Result<(), SceneError> {
        let obj = self.require(instance_id)?;
        let center = obj.pose.xy();
        let delta = target_yaw - obj.pose.yaw;
        for o in self.objects.iter_mut() {
            if o.instance_id == instance_id {
                o.pose.yaw = normalize_deg(target_yaw);
            } else if o.parent() == Some(instance_id) {
                let p = center + rotate(o.pose.xy() - center, delta);
                o.pose.x = p.x;
                o.pose.y = p.y;
                o.pose.yaw = normalize_deg(o.pose.yaw + delta);
            }
        }
        Ok(())
    }

    /// Ids of every floor object followed by their items; used for stable
    /// iteration when ordering matters.
    pub fn instance_ids(&self) -> Vec<String> {
        self.objects.iter().map(|o| o.instance_id.clone()).collect()
    }
}

pub fn tabletop_height(parent: &PlacedObject, asset: &AssetRecord) -> f64 {
    parent.pose.z + asset.bbox.height
}

/// Global position of the front-left tabletop corner of a surface.
pub fn tabletop_origin(parent: &PlacedObject, asset: &AssetRecord) -> Vec2 {
    let half = Vec2::new(asset.bbox.long_side / 2.0, asset.bbox.short_side / 2.0);
    parent.pose.xy() + rotate(Vec2::new(-half.x, -half.y), parent.pose.yaw)
}

/// Maps a pose in a surface's local frame to the global frame.
pub fn desktop_to_global(parent: &PlacedObject, asset: &AssetRecord, local: LocalPose) -> Result<Pose, SceneError> {
    if !asset.is_surface() {
        return Err(SceneError::NotASurface(parent.instance_id.clone()));
    }
    let eps = 1e-9;
    if local.u < -eps || local.v < -eps || local.u > asset.bbox.long_side + eps || local.v > asset.bbox.short_side + eps
    {
        return Err(SceneError::OutsideSurface {
            parent: parent.instance_id.clone(),
            u: local.u,
            v: local.v,
        });
    }
    let p = tabletop_origin(parent, asset) + rotate(Vec2::new(local.u, local.v), parent.pose.yaw);
    Ok(Pose::new(
        p.x,
        p.y,
        tabletop_height(parent, asset),
        local.yaw + parent.pose.yaw,
    ))
}

/// Inverse of [`desktop_to_global`] for the horizontal components.
pub fn global_to_desktop(parent: &PlacedObject, asset: &AssetRecord, pose: &Pose) -> LocalPose {
    let d = rotate(pose.xy() - tabletop_origin(parent, asset), -parent.pose.yaw);
    LocalPose {
        u: d.x,
        v: d.y,
        yaw: normalize_deg(pose.yaw - parent.pose.yaw),
    }
}

/// Free-function form of [`Layout::items_on`].
pub fn items_on<'a>(layout: &'a Layout, instance_id: &str) -> Result<Vec<&'a PlacedObject>, SceneError> {
    layout.items_on(instance_id)
}
