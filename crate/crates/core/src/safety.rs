//! Chemical-safety constraints derived from asset hazard flags and protocol
//! specs, and their continuous satisfaction scores.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{normalize_name, AssetBase, AssetRecord, HazardFlag};
use crate::geometry::{edge_distance_fp, footprint, GeometryStatus};
use crate::protocol::{ConstraintKind, Protocol};
use crate::scene::{Layout, PlacedObject};

#[derive(Debug, Error, PartialEq)]
pub enum SafetyError {
    #[error("invalid thresholds: need 0 <= d_low ({d_low}) < d_min ({d_min})")]
    InvalidThresholds { d_min: f64, d_low: f64 },
    #[error("cannot aggregate an empty score list")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyConfig {
    pub flammable_d_min: f64,
    pub incompatible_d_min: f64,
    /// `d_low = d_low_factor * d_min`.
    pub d_low_factor: f64,
    pub glass_d_safe: f64,
    pub incompatible_pairs: Vec<[HazardFlag; 2]>,
    /// Storage-class surfaces, as `category` or `category:subtype`.
    pub storage_classes: Vec<String>,
    pub worst_k: usize,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        use HazardFlag::*;
        Self {
            flammable_d_min: 1.0,
            incompatible_d_min: 0.5,
            d_low_factor: 0.25,
            glass_d_safe: 0.10,
            incompatible_pairs: vec![
                [Acid, Base],
                [Oxidizer, Flammable],
                [Oxidizer, ReactiveMetal],
                [Acid, ReactiveMetal],
                [Acid, Oxidizer],
            ],
            storage_classes: vec!["cabinet".into(), "safety_equipment:storage".into()],
            worst_k: 3,
        }
    }
}

impl SafetyConfig {
    pub fn d_min_for(&self, kind: ConstraintKind) -> f64 {
        match kind {
            ConstraintKind::FlammableHeatSeparation => self.flammable_d_min,
            ConstraintKind::IncompatibleSeparation => self.incompatible_d_min,
            ConstraintKind::GlassEdge => self.glass_d_safe,
            ConstraintKind::ReagentStorage => 0.0,
        }
    }

    pub fn is_storage(&self, asset: &AssetRecord) -> bool {
        let cat = normalize_name(&asset.category);
        let full = format!("{cat}:{}", normalize_name(&asset.subtype));
        self.storage_classes
            .iter()
            .map(|s| normalize_name(s))
            .any(|s| s == cat || s == full)
    }

    fn incompatible(&self, a: &AssetRecord, b: &AssetRecord) -> bool {
        self.incompatible_pairs
            .iter()
            .any(|[f, g]| (a.safety.has(*f) && b.safety.has(*g)) || (a.safety.has(*g) && b.safety.has(*f)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintInstance {
    pub kind: ConstraintKind,
    /// Instance ids: two for distance kinds, one otherwise.
    pub subjects: Vec<String>,
    /// Distance threshold; `D_safe` for glass, 0 for storage.
    pub d_min: f64,
    pub d_low: f64,
    /// Measured distance (centroid separation or edge distance).
    pub distance: Option<f64>,
    pub geo_ok: bool,
    pub score: f64,
}

impl ConstraintInstance {
    fn new(kind: ConstraintKind, subjects: Vec<String>, d_min: f64, cfg: &SafetyConfig) -> Self {
        Self {
            kind,
            subjects,
            d_min,
            d_low: if kind.is_distance() {
                cfg.d_low_factor * d_min
            } else {
                0.0
            },
            distance: None,
            geo_ok: true,
            score: 0.0,
        }
    }
}

/// Piecewise distance satisfaction: 1 at or beyond `d_min`, linear `d/d_min`
/// down to `d_low`, 0 below it. A geometry violation forces 0.
pub fn satisfaction_distance(d: f64, d_min: f64, d_low: f64, geo_ok: bool) -> Result<f64, SafetyError> {
    if !(0.0 <= d_low && d_low < d_min) {
        return Err(SafetyError::InvalidThresholds { d_min, d_low });
    }
    if !geo_ok {
        return Ok(0.0);
    }
    Ok(if d >= d_min {
        1.0
    } else if d >= d_low {
        d / d_min
    } else {
        0.0
    })
}

/// `min(1, d / d_safe)`, clamped at 0 for overhanging items.
pub fn satisfaction_glass(d: f64, d_safe: f64) -> f64 {
    (d / d_safe).clamp(0.0, 1.0)
}

pub fn satisfaction_storage(inside: bool, geo_ok: bool) -> f64 {
    if inside && geo_ok {
        1.0
    } else {
        0.0
    }
}

/// Mean of the `min(n, k)` smallest scores.
pub fn worst_k_average(scores: &[f64], k: usize) -> Result<f64, SafetyError> {
    if scores.is_empty() || k == 0 {
        return Err(SafetyError::Empty);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let take = k.min(sorted.len());
    Ok(sorted[..take].iter().sum::<f64>() / take as f64)
}

fn mean(scores: &[f64]) -> Option<f64> {
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

fn placed<'a>(layout: &'a Layout, base: &'a AssetBase) -> Vec<(&'a PlacedObject, &'a AssetRecord)> {
    layout
        .objects
        .iter()
        .filter_map(|o| base.get(&o.asset_id).map(|a| (o, a)))
        .collect()
}

/// Enumerates constraint instances over placed objects. Protocol specs set
/// the threshold of matching instances; a spec whose subjects are placed but
/// match no derived instance adds instances of its own.
pub fn instantiate_constraints(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    cfg: &SafetyConfig,
) -> Vec<ConstraintInstance> {
    use ConstraintKind::*;
    let objs = placed(layout, base);
    let mut out = Vec::new();

    for (o, a) in &objs {
        if !a.safety.flammable {
            continue;
        }
        for (h, ha) in &objs {
            if h.instance_id != o.instance_id && ha.safety.heat_source {
                out.push(ConstraintInstance::new(
                    FlammableHeatSeparation,
                    vec![o.instance_id.clone(), h.instance_id.clone()],
                    cfg.flammable_d_min,
                    cfg,
                ));
            }
        }
    }
    for (o, a) in &objs {
        if a.is_reagent() {
            out.push(ConstraintInstance::new(
                ReagentStorage,
                vec![o.instance_id.clone()],
                0.0,
                cfg,
            ));
        }
    }
    for (i, (o, a)) in objs.iter().enumerate() {
        for (p, b) in &objs[i + 1..] {
            if cfg.incompatible(a, b) {
                out.push(ConstraintInstance::new(
                    IncompatibleSeparation,
                    vec![o.instance_id.clone(), p.instance_id.clone()],
                    cfg.incompatible_d_min,
                    cfg,
                ));
            }
        }
    }
    for (o, a) in &objs {
        if a.safety.glass_container && !o.is_floor() {
            out.push(ConstraintInstance::new(
                GlassEdge,
                vec![o.instance_id.clone()],
                cfg.glass_d_safe,
                cfg,
            ));
        }
    }

    let canonical = |name: &str| base.resolve(name).map(|r| r.asset_id.clone()).ok();
    let asset_of = |id: &str| layout.get(id).map(|o| o.asset_id.clone());
    for spec in &protocol.constraints {
        let ids: Option<Vec<String>> = spec.subjects.iter().map(|s| canonical(s)).collect();
        let Some(ids) = ids else { continue };
        if ids.len() != spec.kind.arity() {
            continue;
        }
        let matches = |inst: &ConstraintInstance| {
            if inst.kind != spec.kind {
                return false;
            }
            let assets: Vec<_> = inst.subjects.iter().filter_map(|s| asset_of(s)).collect();
            match ids.as_slice() {
                [x] => assets == [x.clone()],
                [x, y] => assets == [x.clone(), y.clone()] || assets == [y.clone(), x.clone()],
                _ => false,
            }
        };
        let d_min = spec.min_distance.unwrap_or_else(|| cfg.d_min_for(spec.kind));
        let mut hit = false;
        for inst in out.iter_mut().filter(|i| matches(i)) {
            hit = true;
            inst.d_min = d_min;
            inst.d_low = if spec.kind.is_distance() {
                cfg.d_low_factor * d_min
            } else {
                0.0
            };
        }
        if hit {
            continue;
        }
        let instances_of = |asset: &str| {
            objs.iter()
                .filter(|(o, _)| o.asset_id == asset)
                .map(|(o, _)| o.instance_id.clone())
                .collect::<Vec<_>>()
        };
        match ids.as_slice() {
            [x] => {
                for id in instances_of(x) {
                    let eligible = spec.kind != GlassEdge || layout.get(&id).is_some_and(|o| !o.is_floor());
                    if eligible {
                        out.push(ConstraintInstance::new(spec.kind, vec![id], d_min, cfg));
                    }
                }
            }
            [x, y] => {
                for a in instances_of(x) {
                    for b in instances_of(y) {
                        if a != b {
                            out.push(ConstraintInstance::new(spec.kind, vec![a.clone(), b], d_min, cfg));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Fills distance, gate and score of every instance. `geo = None` disables
/// the geometry gate.
pub fn score_instances(
    instances: &mut [ConstraintInstance],
    layout: &Layout,
    base: &AssetBase,
    geo: Option<&GeometryStatus>,
    cfg: &SafetyConfig,
) {
    for inst in instances.iter_mut() {
        inst.geo_ok = geo.is_none_or(|g| inst.subjects.iter().all(|s| g.is_clean(s)));
        let obj = |i: usize| layout.get(&inst.subjects[i]);
        match inst.kind {
            ConstraintKind::FlammableHeatSeparation | ConstraintKind::IncompatibleSeparation => {
                let (Some(a), Some(b)) = (obj(0), obj(1)) else { continue };
                let d = a.pose.xy().distance(b.pose.xy());
                inst.distance = Some(d);
                inst.score = satisfaction_distance(d, inst.d_min, inst.d_low, inst.geo_ok).unwrap_or(0.0);
            }
            ConstraintKind::ReagentStorage => {
                let inside = obj(0)
                    .and_then(|o| o.parent())
                    .and_then(|p| layout.get(p))
                    .and_then(|p| base.get(&p.asset_id))
                    .is_some_and(|a| cfg.is_storage(a));
                inst.score = satisfaction_storage(inside, inst.geo_ok);
            }
            ConstraintKind::GlassEdge => {
                let Some(item) = obj(0) else { continue };
                let parent = item.parent().and_then(|p| layout.get(p));
                let (Some(parent), Some(ia)) = (parent, base.get(&item.asset_id)) else {
                    continue;
                };
                let Some(pa) = base.get(&parent.asset_id) else { continue };
                let d = edge_distance_fp(&footprint(item, ia), &footprint(parent, pa));
                inst.distance = Some(d);
                inst.score = if inst.geo_ok {
                    satisfaction_glass(d, inst.d_min)
                } else {
                    0.0
                };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChemReport {
    pub flam: Option<f64>,
    pub store: Option<f64>,
    pub incomp: Option<f64>,
    pub glass: Option<f64>,
    /// Mean of the defined metrics; `None` when no metric is defined.
    pub f_chem: Option<f64>,
    pub instances: Vec<ConstraintInstance>,
}

impl ChemReport {
    pub fn from_instances(instances: Vec<ConstraintInstance>, worst_k: usize) -> Self {
        let scores =
            |k: ConstraintKind| -> Vec<f64> { instances.iter().filter(|i| i.kind == k).map(|i| i.score).collect() };
        let flam = worst_k_average(&scores(ConstraintKind::FlammableHeatSeparation), worst_k).ok();
        let incomp = worst_k_average(&scores(ConstraintKind::IncompatibleSeparation), worst_k).ok();
        let store = mean(&scores(ConstraintKind::ReagentStorage));
        let glass = mean(&scores(ConstraintKind::GlassEdge));
        let defined: Vec<f64> = [flam, store, incomp, glass].into_iter().flatten().collect();
        Self {
            flam,
            store,
            incomp,
            glass,
            f_chem: mean(&defined),
            instances,
        }
    }
}

pub fn chem_report(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    geo: &GeometryStatus,
    cfg: &SafetyConfig,
) -> ChemReport {
    let mut instances = instantiate_constraints(layout, protocol, base, cfg);
    score_instances(&mut instances, layout, base, Some(geo), cfg);
    ChemReport::from_instances(instances, cfg.worst_k)
}
