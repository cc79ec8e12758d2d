//! Annotated asset knowledge base.
//!
//! Every laboratory entity (reagent, instrument, room fixture) carries a
//! canonical bounding box, a semantic tuple used for name grounding, and nine
//! boolean safety flags. Names are grounded by exact match after
//! normalization (lowercase, trimmed, internal whitespace collapsed); there is
//! no fuzzy matching.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::issue::{has_errors, Issue};

/// Token every canonicalized asset carries in `coordinate_system`.
pub const Z_UP: &str = "z_up";

/// Canonical front direction after orientation normalization.
pub const CANONICAL_FRONT: [f64; 3] = [0.0, 1.0, 0.0];

/// Minimum height for furniture-like room assets to count as a work surface
/// when `provides_surface` is not annotated.
pub const DEFAULT_SURFACE_MIN_HEIGHT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse asset file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate asset_id `{0}`")]
    DuplicateId(String),
    #[error("name `{name}` maps to both `{first}` and `{second}`")]
    SynonymCollision {
        name: String,
        first: String,
        second: String,
    },
    #[error("asset `{asset_id}` is invalid: {}", join_issues(.issues))]
    InvalidRecord { asset_id: String, issues: Vec<Issue> },
    #[error("no asset named `{0}`")]
    NotFound(String),
}

fn join_issues(issues: &[Issue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub short_side: f64,
    pub long_side: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(short_side: f64, long_side: f64, height: f64) -> Self {
        Self {
            short_side,
            long_side,
            height,
        }
    }

    /// Horizontal footprint area.
    pub fn area(&self) -> f64 {
        self.short_side * self.long_side
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyAttributes {
    pub flammable: bool,
    pub explosive: bool,
    pub volatile_or_toxic: bool,
    pub glass_container: bool,
    pub heat_source: bool,
    pub acid: bool,
    pub base: bool,
    pub oxidizer: bool,
    pub reactive_metal: bool,
}

/// One of the nine safety flags, used to express incompatibility rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardFlag {
    Flammable,
    Explosive,
    VolatileOrToxic,
    GlassContainer,
    HeatSource,
    Acid,
    Base,
    Oxidizer,
    ReactiveMetal,
}

impl SafetyAttributes {
    pub fn has(&self, flag: HazardFlag) -> bool {
        match flag {
            HazardFlag::Flammable => self.flammable,
            HazardFlag::Explosive => self.explosive,
            HazardFlag::VolatileOrToxic => self.volatile_or_toxic,
            HazardFlag::GlassContainer => self.glass_container,
            HazardFlag::HeatSource => self.heat_source,
            HazardFlag::Acid => self.acid,
            HazardFlag::Base => self.base,
            HazardFlag::Oxidizer => self.oxidizer,
            HazardFlag::ReactiveMetal => self.reactive_metal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetType {
    Instrument,
    Reagent,
    RoomAsset,
}

fn default_scale() -> f64 {
    1.0
}

fn default_front() -> [f64; 3] {
    CANONICAL_FRONT
}

fn default_coordinate_system() -> String {
    Z_UP.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub asset_id: String,
    pub asset_type: AssetType,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub subtype: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub description: String,
    pub bbox: BoundingBox,
    #[serde(default = "default_scale")]
    pub scale_factor: f64,
    #[serde(default = "default_front")]
    pub front_direction: [f64; 3],
    #[serde(default = "default_coordinate_system")]
    pub coordinate_system: String,
    #[serde(default)]
    pub usd_path: String,
    #[serde(default)]
    pub safety: SafetyAttributes,
    /// Whether desktop items may be placed on this asset. Absent in the file
    /// means "derive from category and height".
    #[serde(default)]
    pub provides_surface: Option<bool>,
    /// Keys this schema does not know about, kept for round-tripping.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl AssetRecord {
    /// Minimal record with the given geometry; remaining fields take their
    /// canonical defaults.
    pub fn new(asset_id: impl Into<String>, asset_type: AssetType, bbox: BoundingBox) -> Self {
        Self {
            asset_id: asset_id.into(),
            asset_type,
            category: String::new(),
            subtype: String::new(),
            synonyms: Vec::new(),
            description: String::new(),
            bbox,
            scale_factor: 1.0,
            front_direction: CANONICAL_FRONT,
            coordinate_system: Z_UP.to_string(),
            usd_path: String::new(),
            safety: SafetyAttributes::default(),
            provides_surface: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn is_surface(&self) -> bool {
        self.provides_surface.unwrap_or_else(|| default_provides_surface(self))
    }

    pub fn is_reagent(&self) -> bool {
        self.asset_type == AssetType::Reagent
    }
}

/// Surface rule applied when the annotation is missing: furniture or safety
/// equipment at least half a metre tall.
pub fn default_provides_surface(record: &AssetRecord) -> bool {
    let category = normalize_name(&record.category);
    record.asset_type == AssetType::RoomAsset
        && (category == "furniture" || category == "safety_equipment")
        && record.bbox.height >= DEFAULT_SURFACE_MIN_HEIGHT
}

/// Lowercase, trim, collapse internal whitespace.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Checks one record against the asset invariants. An empty result means the
/// record is valid.
pub fn validate_asset_record(record: &AssetRecord) -> Vec<Issue> {
    let mut issues = Vec::new();
    if record.asset_id.trim().is_empty() {
        issues.push(Issue::error("asset_id", "must be nonempty"));
    }
    let bbox = &record.bbox;
    for (field, value) in [
        ("bbox.short_side", bbox.short_side),
        ("bbox.long_side", bbox.long_side),
        ("bbox.height", bbox.height),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            issues.push(Issue::error(field, format!("must be strictly positive, got {value}")));
        }
    }
    if bbox.short_side > bbox.long_side {
        issues.push(Issue::error(
            "bbox.short_side",
            format!("short_side {} exceeds long_side {}", bbox.short_side, bbox.long_side),
        ));
    }
    if !(record.scale_factor > 0.0 && record.scale_factor.is_finite()) {
        issues.push(Issue::error("scale_factor", "must be strictly positive"));
    }
    let front_ok = record
        .front_direction
        .iter()
        .zip(CANONICAL_FRONT)
        .all(|(a, b)| (a - b).abs() <= 1e-9);
    if !front_ok {
        issues.push(Issue::error(
            "front_direction",
            format!("must be canonical (0,1,0), got {:?}", record.front_direction),
        ));
    }
    if record.coordinate_system != Z_UP {
        issues.push(Issue::error(
            "coordinate_system",
            format!("must be `{Z_UP}`, got `{}`", record.coordinate_system),
        ));
    }
    for (i, s) in record.synonyms.iter().enumerate() {
        if s.trim().is_empty() {
            issues.push(Issue::error(format!("synonyms[{i}]"), "must be nonempty"));
        }
    }
    issues
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AssetFile {
    List(Vec<AssetRecord>),
    Wrapped { assets: Vec<AssetRecord> },
}

/// Indexed, immutable collection of asset records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssetBase {
    records: BTreeMap<String, AssetRecord>,
    synonym_index: BTreeMap<String, String>,
    warnings: Vec<Issue>,
}

impl AssetBase {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, AssetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| AssetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self, AssetError> {
        let records = match serde_json::from_str::<AssetFile>(text) {
            Ok(AssetFile::List(records)) | Ok(AssetFile::Wrapped { assets: records }) => records,
            // Re-parse as a plain list to surface a precise serde error.
            Err(_) => serde_json::from_str::<Vec<AssetRecord>>(text)?,
        };
        Self::from_records(records)
    }

    /// Builds the index, fixing swapped short/long sides with a warning and
    /// resolving absent `provides_surface` annotations.
    pub fn from_records(records: Vec<AssetRecord>) -> Result<Self, AssetError> {
        let mut base = AssetBase::default();
        for mut record in records {
            if record.bbox.short_side > record.bbox.long_side {
                std::mem::swap(&mut record.bbox.short_side, &mut record.bbox.long_side);
                base.warnings.push(Issue::warning(
                    format!("{}.bbox", record.asset_id),
                    "short_side exceeded long_side; swapped",
                ));
            }
            let issues = validate_asset_record(&record);
            if has_errors(&issues) {
                return Err(AssetError::InvalidRecord {
                    asset_id: record.asset_id.clone(),
                    issues,
                });
            }
            if record.provides_surface.is_none() {
                record.provides_surface = Some(default_provides_surface(&record));
            }
            if base.records.contains_key(&record.asset_id) {
                return Err(AssetError::DuplicateId(record.asset_id));
            }
            base.records.insert(record.asset_id.clone(), record);
        }

        let mut index: BTreeMap<String, String> = BTreeMap::new();
        for record in base.records.values() {
            let names = std::iter::once(&record.asset_id).chain(record.synonyms.iter());
            for name in names {
                let key = normalize_name(name);
                match index.get(&key) {
                    Some(owner) if owner != &record.asset_id => {
                        return Err(AssetError::SynonymCollision {
                            name: key,
                            first: owner.clone(),
                            second: record.asset_id.clone(),
                        });
                    }
                    _ => {
                        index.insert(key, record.asset_id.clone());
                    }
                }
            }
        }
        base.synonym_index = index;
        Ok(base)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AssetError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|source| AssetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_json_string(&self) -> String {
        let list: Vec<&AssetRecord> = self.records.values().collect();
        serde_json::to_string_pretty(&list).expect("asset records serialize")
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, asset_id: &str) -> Option<&AssetRecord> {
        self.records.get(asset_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &AssetRecord> {
        self.records.values()
    }

    pub fn warnings(&self) -> &[Issue] {
        &self.warnings
    }

    /// Grounds a free-form name to its canonical record.
    pub fn resolve(&self, name: &str) -> Result<&AssetRecord, AssetError> {
        self.synonym_index
            .get(&normalize_name(name))
            .and_then(|id| self.records.get(id))
            .ok_or_else(|| AssetError::NotFound(name.to_string()))
    }

    /// Copy of the base restricted to the given ids (unknown ids are skipped).
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> AssetBase {
        let mut records: BTreeMap<String, AssetRecord> = BTreeMap::new();
        for id in ids {
            if let Some(r) = self.records.get(id) {
                records.insert(id.to_string(), r.clone());
            }
        }
        let keep: std::collections::BTreeSet<&String> = records.keys().collect();
        let synonym_index = self
            .synonym_index
            .iter()
            .filter(|(_, id)| keep.contains(id))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        AssetBase {
            records,
            synonym_index,
            warnings: Vec::new(),
        }
    }
}

/// Free-function form of [`AssetBase::resolve`].
pub fn resolve_asset<'a>(name: &str, base: &'a AssetBase) -> Result<&'a AssetRecord, AssetError> {
    base.resolve(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_tube() -> AssetRecord {
        let mut r = AssetRecord::new(
            "TestTube",
            AssetType::Instrument,
            BoundingBox::new(9.996e-4, 2.414e-3, 2.351e-3),
        );
        r.category = "Glassware".into();
        r.subtype = "Test Tube".into();
        r.synonyms = vec!["Culture tube".into(), "Sample tube".into()];
        r.usd_path = "/assets/TestTube.usd".into();
        r.safety.glass_container = true;
        r
    }

    fn ethanol() -> AssetRecord {
        let mut r = AssetRecord::new("Ethanol", AssetType::Reagent, BoundingBox::new(0.06, 0.06, 0.2));
        r.category = "organic_solvent".into();
        r.subtype = "alcohol".into();
        r.synonyms = vec!["ethyl alcohol".into(), "C2H5OH".into()];
        r.safety.flammable = true;
        r
    }

    #[test]
    fn test_tube_case_loads() {
        let json = r#"[{
            "asset_id": "TestTube", "asset_type": "instrument",
            "category": "Glassware", "subtype": "Test Tube",
            "synonyms": ["Culture tube", "Sample tube"],
            "description": "A common piece of laboratory glassware.",
            "bbox": {"short_side": 9.996e-4, "long_side": 2.414e-3, "height": 2.351e-3},
            "scale_factor": 1.0, "front_direction": [0, 1, 0],
            "coordinate_system": "z_up", "usd_path": "/assets/TestTube.usd",
            "safety": {"glass_container": true}
        }]"#;
        let base = AssetBase::from_json_str(json).unwrap();
        assert_eq!(base.len(), 1);
        let r = base.get("TestTube").unwrap();
        assert!(r.safety.glass_container);
        assert!(!r.safety.flammable && !r.safety.acid && !r.safety.heat_source);
        assert_eq!(r.bbox.short_side, 9.996e-4);
        assert_eq!(r.provides_surface, Some(false));
        assert!(validate_asset_record(&test_tube()).is_empty());
    }

    #[test]
    fn empty_base_resolves_nothing() {
        let base = AssetBase::from_json_str("[]").unwrap();
        assert!(base.is_empty());
        assert!(matches!(base.resolve("Beaker"), Err(AssetError::NotFound(_))));
    }

    #[test]
    fn shared_synonym_is_a_load_error_naming_both() {
        let mut a = ethanol();
        a.synonyms = vec!["alcohol".into()];
        let mut b = AssetRecord::new("Methanol", AssetType::Reagent, BoundingBox::new(0.05, 0.05, 0.2));
        b.synonyms = vec!["Alcohol".into()];
        let err = AssetBase::from_records(vec![a, b]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Ethanol") && msg.contains("Methanol"), "{msg}");
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = AssetBase::from_records(vec![ethanol(), ethanol()]).unwrap_err();
        assert!(matches!(err, AssetError::DuplicateId(id) if id == "Ethanol"));
    }

    #[test]
    fn non_positive_bbox_names_asset() {
        let mut r = ethanol();
        r.bbox.height = 0.0;
        let err = AssetBase::from_records(vec![r]).unwrap_err();
        match err {
            AssetError::InvalidRecord { asset_id, issues } => {
                assert_eq!(asset_id, "Ethanol");
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].field, "bbox.height");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resolve_by_synonym_and_id() {
        let base = AssetBase::from_records(vec![ethanol(), test_tube()]).unwrap();
        assert_eq!(base.resolve("ethyl alcohol").unwrap().asset_id, "Ethanol");
        assert_eq!(base.resolve("Ethanol").unwrap().asset_id, "Ethanol");
        assert_eq!(base.resolve("  ETHYL   Alcohol ").unwrap().asset_id, "Ethanol");
        assert!(matches!(base.resolve("unobtainium"), Err(AssetError::NotFound(_))));
    }

    #[test]
    fn validate_flags_single_issues() {
        let mut r = test_tube();
        r.bbox.height = 0.0;
        let issues = validate_asset_record(&r);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "bbox.height");

        let mut r = test_tube();
        r.front_direction = [1.0, 0.0, 0.0];
        let issues = validate_asset_record(&r);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "front_direction");
    }

    #[test]
    fn swapped_sides_fixed_with_warning() {
        let mut r = ethanol();
        r.bbox = BoundingBox::new(0.3, 0.1, 0.2);
        let base = AssetBase::from_records(vec![r]).unwrap();
        let b = base.get("Ethanol").unwrap().bbox;
        assert_eq!((b.short_side, b.long_side), (0.1, 0.3));
        assert_eq!(base.warnings().len(), 1);
    }

    #[test]
    fn surface_default_rule() {
        let mut bench = AssetRecord::new("Bench", AssetType::RoomAsset, BoundingBox::new(0.7, 1.8, 0.9));
        bench.category = "furniture".into();
        assert!(default_provides_surface(&bench));
        bench.bbox.height = 0.4;
        assert!(!default_provides_surface(&bench));
        let mut hood = AssetRecord::new("Hood", AssetType::RoomAsset, BoundingBox::new(0.8, 1.5, 2.2));
        hood.category = "Safety_Equipment".into();
        assert!(default_provides_surface(&hood));
        hood.provides_surface = Some(false);
        assert!(!hood.is_surface());
    }

    #[test]
    fn unknown_keys_survive_round_trip() {
        let json = r#"[{"asset_id": "Beaker", "asset_type": "instrument",
            "bbox": {"short_side": 0.08, "long_side": 0.08, "height": 0.1},
            "caption": "for mixing", "tags": [1, 2]}]"#;
        let base = AssetBase::from_json_str(json).unwrap();
        let again = AssetBase::from_json_str(&base.to_json_string()).unwrap();
        assert_eq!(base, again);
        assert_eq!(
            again.get("Beaker").unwrap().extra.get("caption"),
            Some(&Value::String("for mixing".into()))
        );
    }
}
