//! Structured experimental protocols: loading, grounding checks against an
//! asset base, and per-corpus count statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::asset::{AssetBase, AssetType};
use crate::issue::Issue;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse protocol: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid protocol: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Issue>),
    #[error("statistics need at least one protocol")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStep {
    pub index: usize,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub location: String,
    #[serde(default)]
    pub assets_used: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveAction {
    pub from_step: usize,
    pub to_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    FlammableHeatSeparation,
    ReagentStorage,
    IncompatibleSeparation,
    GlassEdge,
}

impl ConstraintKind {
    pub fn is_distance(self) -> bool {
        matches!(
            self,
            ConstraintKind::FlammableHeatSeparation | ConstraintKind::IncompatibleSeparation
        )
    }

    /// Number of subjects the kind takes.
    pub fn arity(self) -> usize {
        if self.is_distance() {
            2
        } else {
            1
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::FlammableHeatSeparation => "flammable_heat_separation",
            ConstraintKind::ReagentStorage => "reagent_storage",
            ConstraintKind::IncompatibleSeparation => "incompatible_separation",
            ConstraintKind::GlassEdge => "glass_edge",
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChemicalConstraintSpec {
    pub kind: ConstraintKind,
    pub subjects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Protocol {
    pub protocol_id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub reagents: Vec<String>,
    pub instruments: Vec<String>,
    pub steps: Vec<ProtocolStep>,
    #[serde(default)]
    pub moves: Vec<MoveAction>,
    #[serde(default)]
    pub constraints: Vec<ChemicalConstraintSpec>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// Location tokens accepted even when they do not resolve to an asset.
pub const DEFAULT_LOCATION_TOKENS: &[&str] = &[
    "FumeHood",
    "ExperimentTable",
    "ValidationPlatform",
    "Validation Platform",
    "RotaryEvaporator Station",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRules {
    pub tokens: BTreeSet<String>,
}

impl Default for LocationRules {
    fn default() -> Self {
        Self {
            tokens: DEFAULT_LOCATION_TOKENS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Protocol {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProtocolError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ProtocolError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ProtocolError> {
        let p: Protocol = serde_json::from_str(text)?;
        let issues = p.structural_issues();
        if issues.iter().any(Issue::is_error) {
            return Err(ProtocolError::Invalid(issues));
        }
        Ok(p)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("protocol serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProtocolError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|source| ProtocolError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Checks that need no asset knowledge.
    pub fn structural_issues(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        if self.protocol_id.trim().is_empty() {
            issues.push(Issue::error("protocol_id", "must be nonempty"));
        }
        for (field, list) in [("reagents", &self.reagents), ("instruments", &self.instruments)] {
            if list.is_empty() {
                issues.push(Issue::error(field, "must be nonempty"));
            }
            let mut seen = BTreeSet::new();
            for (i, id) in list.iter().enumerate() {
                if !seen.insert(id.as_str()) {
                    issues.push(Issue::error(format!("{field}[{i}]"), format!("duplicate id `{id}`")));
                }
            }
        }
        if self.steps.is_empty() {
            issues.push(Issue::error("steps", "must contain at least one step"));
        }
        let mut prev: Option<usize> = None;
        for (i, s) in self.steps.iter().enumerate() {
            if s.location.trim().is_empty() {
                issues.push(Issue::error(format!("steps[{i}].location"), "must be nonempty"));
            }
            if prev.is_some_and(|p| s.index <= p) {
                issues.push(Issue::error(
                    format!("steps[{i}].index"),
                    "indices must be strictly increasing",
                ));
            }
            prev = Some(s.index);
        }
        let indices: BTreeSet<usize> = self.steps.iter().map(|s| s.index).collect();
        for (i, m) in self.moves.iter().enumerate() {
            if m.from_step >= m.to_step {
                issues.push(Issue::error(format!("moves[{i}]"), "from_step must precede to_step"));
            }
            for (name, v) in [("from_step", m.from_step), ("to_step", m.to_step)] {
                if !indices.contains(&v) {
                    issues.push(Issue::error(
                        format!("moves[{i}].{name}"),
                        format!("dangling step reference {v}"),
                    ));
                }
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if let Some(d) = c.min_distance {
                if !(d > 0.0 && d.is_finite()) {
                    issues.push(Issue::error(format!("constraints[{i}].min_distance"), "must be > 0"));
                }
            }
        }
        issues
    }

    /// Every asset id the protocol mentions, deduplicated, in first-mention order.
    pub fn required_assets(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let all = self
            .reagents
            .iter()
            .chain(&self.instruments)
            .chain(self.steps.iter().flat_map(|s| &s.assets_used));
        for id in all {
            if seen.insert(id.clone()) {
                out.push(id.clone());
            }
        }
        out
    }

    /// Distinct step locations in step order.
    pub fn locations(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.steps
            .iter()
            .filter(|s| seen.insert(s.location.clone()))
            .map(|s| s.location.clone())
            .collect()
    }
}

fn is_preparation(step: &ProtocolStep) -> bool {
    step.description.to_lowercase().contains("prepar")
}

/// Grounding checks with the default location tokens.
pub fn validate_protocol(p: &Protocol, base: &AssetBase) -> Vec<Issue> {
    validate_protocol_with(p, base, &LocationRules::default())
}

pub fn validate_protocol_with(p: &Protocol, base: &AssetBase, rules: &LocationRules) -> Vec<Issue> {
    let mut issues = p.structural_issues();
    let resolvable = |field: String, name: &str, issues: &mut Vec<Issue>| {
        if base.resolve(name).is_err() {
            issues.push(Issue::error(
                field,
                format!("`{name}` does not resolve to a known asset"),
            ));
        }
    };
    for (i, r) in p.reagents.iter().enumerate() {
        resolvable(format!("reagents[{i}]"), r, &mut issues);
    }
    for (i, r) in p.instruments.iter().enumerate() {
        resolvable(format!("instruments[{i}]"), r, &mut issues);
    }
    for (i, s) in p.steps.iter().enumerate() {
        if s.description.trim().is_empty() {
            issues.push(Issue::error(format!("steps[{i}].description"), "must be nonempty"));
        }
        for (k, a) in s.assets_used.iter().enumerate() {
            resolvable(format!("steps[{i}].assets_used[{k}]"), a, &mut issues);
        }
        if s.location.trim().is_empty() {
            continue;
        }
        let legal = match base.resolve(&s.location) {
            Ok(rec) => rec.asset_type == AssetType::RoomAsset || rec.is_surface(),
            Err(_) => rules.tokens.contains(s.location.trim()),
        };
        if !legal {
            issues.push(Issue::error(
                format!("steps[{i}].location"),
                format!("`{}` is not a room asset or work surface", s.location),
            ));
        }
    }
    for (i, c) in p.constraints.iter().enumerate() {
        if c.subjects.len() != c.kind.arity() {
            issues.push(Issue::error(
                format!("constraints[{i}].subjects"),
                format!(
                    "{} takes {} subject(s), got {}",
                    c.kind,
                    c.kind.arity(),
                    c.subjects.len()
                ),
            ));
        }
        for (k, s) in c.subjects.iter().enumerate() {
            resolvable(format!("constraints[{i}].subjects[{k}]"), s, &mut issues);
        }
    }
    if let Some(first) = p.steps.first() {
        if p.steps.iter().any(is_preparation) && !is_preparation(first) {
            issues.push(Issue::error("steps[0]", "reagent preparation must be the first step"));
        }
    }
    issues
}

/// Loads every `*.json` file in a directory, sorted by file name.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<Protocol>, ProtocolError> {
    let dir = dir.as_ref();
    let io = |source| ProtocolError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(Protocol::load).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub name: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

impl StatRow {
    /// Population statistics over the counts.
    pub fn from_counts(name: &str, counts: &[f64]) -> Self {
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = if counts.len() < 2 {
            0.0
        } else {
            counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n
        };
        Self {
            name: name.to_string(),
            mean,
            min: counts.iter().copied().fold(f64::INFINITY, f64::min),
            max: counts.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStats {
    pub count: usize,
    pub rows: Vec<StatRow>,
}

impl ProtocolStats {
    pub fn row(&self, name: &str) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Plain-text table: mean and std to two decimals, min/max as integers.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<12} {:>8} {:>6} {:>6} {:>8}\n",
            "Category", "Mean", "Min", "Max", "Std"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<12} {:>8.2} {:>6} {:>6} {:>8.2}\n",
                r.name, r.mean, r.min as i64, r.max as i64, r.std
            ));
        }
        s
    }
}

pub fn protocol_stats(corpus: &[Protocol]) -> Result<ProtocolStats, ProtocolError> {
    if corpus.is_empty() {
        return Err(ProtocolError::EmptyCorpus);
    }
    let col = |f: fn(&Protocol) -> usize| corpus.iter().map(|p| f(p) as f64).collect::<Vec<_>>();
    Ok(ProtocolStats {
        count: corpus.len(),
        rows: vec![
            StatRow::from_counts("Reagents", &col(|p| p.reagents.len())),
            StatRow::from_counts("Instruments", &col(|p| p.instruments.len())),
            StatRow::from_counts("Steps", &col(|p| p.steps.len())),
            StatRow::from_counts("Moves", &col(|p| p.moves.len())),
        ],
    })
}
