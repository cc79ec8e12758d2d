//! Scene scoring: geometry counts, feasibility rates, availability-weighted
//! chemistry, the 35/35/30 composite, SR/SPL, and semantic scoring.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::AssetBase;
use crate::geometry::GeometryStatus;
use crate::navigation::{f_reach, NavConfig, NavError, ReachReport};
use crate::proposer::ProtocolSummary;
use crate::protocol::Protocol;
use crate::safety::{chem_report, ChemReport, SafetyConfig};
use crate::scene::Layout;

pub const PHYS_CAP: f64 = 35.0;
pub const CHEM_CAP: f64 = 35.0;
pub const CONSIST_CAP: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("nothing to aggregate")]
    Empty,
    #[error("length mismatch: {0} weights for {1} scores")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Nav(#[from] NavError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GeometryMetrics {
    pub obj: usize,
    /// Objects outside their region.
    pub ob: usize,
    /// Colliding same-level pairs.
    pub cn: usize,
}

pub fn geometry_metrics(layout: &Layout, base: &AssetBase) -> GeometryMetrics {
    metrics_of(&GeometryStatus::compute(layout, base))
}

fn metrics_of(g: &GeometryStatus) -> GeometryMetrics {
    let mut ids: Vec<&str> = g.boundary.iter().map(|b| b.instance_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    GeometryMetrics {
        obj: g.object_count,
        ob: ids.len(),
        cn: g.collisions.len(),
    }
}

/// Whether every reagent, instrument, used asset and asset-backed step
/// location of the protocol is placed in the layout.
pub fn assets_available(layout: &Layout, protocol: &Protocol, base: &AssetBase) -> bool {
    let placed = |name: &str| match base.resolve(name) {
        Ok(r) => layout.first_instance_of(&r.asset_id).is_some(),
        Err(_) => false,
    };
    protocol.required_assets().iter().all(|n| placed(n))
        && protocol
            .locations()
            .iter()
            .filter(|l| base.resolve(l).is_ok())
            .all(|l| placed(l))
}

/// Per-scene inputs to the feasibility rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneFeasibility {
    pub assets_ok: bool,
    pub transitions_ok: usize,
    pub transitions: usize,
}

impl SceneFeasibility {
    pub fn of(assets_ok: bool, reach: &ReachReport) -> Self {
        Self {
            assets_ok,
            transitions_ok: reach.pairs.len() - reach.unreachable(),
            transitions: reach.pairs.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fsr {
    pub asset_availability: f64,
    /// Feasible transitions over all transitions, pooled across scenes.
    pub step_nav: f64,
    /// Share of scenes whose every transition is feasible.
    pub protocol_nav: f64,
}

pub fn fsr(scenes: &[SceneFeasibility]) -> Result<Fsr, EvalError> {
    if scenes.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = scenes.len() as f64;
    let ok: usize = scenes.iter().map(|s| s.transitions_ok).sum();
    let all: usize = scenes.iter().map(|s| s.transitions).sum();
    Ok(Fsr {
        asset_availability: scenes.iter().filter(|s| s.assets_ok).count() as f64 / n,
        step_nav: if all == 0 { 1.0 } else { ok as f64 / all as f64 },
        protocol_nav: scenes.iter().filter(|s| s.transitions_ok == s.transitions).count() as f64 / n,
    })
}

/// `(1/N) * sum(g_i * s_i)`.
pub fn availability_weighted(g: &[bool], s: &[f64]) -> Result<f64, EvalError> {
    if g.len() != s.len() {
        return Err(EvalError::LengthMismatch(g.len(), s.len()));
    }
    if s.is_empty() {
        return Err(EvalError::Empty);
    }
    let sum: f64 = g.iter().zip(s).map(|(&gi, &si)| if gi { si } else { 0.0 }).sum();
    Ok(sum / s.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightedChem {
    pub flam: Option<f64>,
    pub store: Option<f64>,
    pub incomp: Option<f64>,
    pub glass: Option<f64>,
}

/// Availability-weighted mean of each chemistry metric. Scenes where a
/// metric is undefined (no instances of that kind) are left out of that
/// metric's average.
pub fn weighted_chem(scenes: &[(bool, &ChemReport)]) -> Result<WeightedChem, EvalError> {
    if scenes.is_empty() {
        return Err(EvalError::Empty);
    }
    let metric = |pick: fn(&ChemReport) -> Option<f64>| {
        let (g, s): (Vec<bool>, Vec<f64>) = scenes.iter().filter_map(|(g, r)| pick(r).map(|s| (*g, s))).unzip();
        availability_weighted(&g, &s).ok()
    };
    Ok(WeightedChem {
        flam: metric(|r| r.flam),
        store: metric(|r| r.store),
        incomp: metric(|r| r.incomp),
        glass: metric(|r| r.glass),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub s_phys: f64,
    pub s_chem: f64,
    /// `None` when no semantic score was available.
    pub s_consist: Option<f64>,
    pub overall: f64,
}

/// Composite score. Inputs are clamped into range; chemistry counts only
/// when the scene's assets are all available; an undefined chemistry term
/// counts as fully satisfied.
pub fn compose_scores(f_geo: f64, f_chem: Option<f64>, assets_ok: bool, semantic_total: Option<f64>) -> Scores {
    let unit = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let s_phys = PHYS_CAP * unit(f_geo);
    let s_chem = if assets_ok {
        CHEM_CAP * unit(f_chem.unwrap_or(1.0))
    } else {
        0.0
    };
    let s_consist = semantic_total.map(|t| CONSIST_CAP * unit(t / CONSIST_CAP));
    Scores {
        s_phys,
        s_chem,
        s_consist,
        overall: s_phys + s_chem + s_consist.unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Shortest feasible path length.
    pub shortest: f64,
    /// Length the agent actually travelled.
    pub agent: f64,
}

impl EpisodeResult {
    pub fn spl_term(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let m = self.agent.max(self.shortest);
        if m <= 0.0 {
            1.0
        } else {
            self.shortest / m
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavBenchmark {
    pub sr: f64,
    pub spl: f64,
}

pub fn nav_benchmark(episodes: &[EpisodeResult]) -> Result<NavBenchmark, EvalError> {
    if episodes.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = episodes.len() as f64;
    Ok(NavBenchmark {
        sr: episodes.iter().filter(|e| e.success).count() as f64 / n,
        spl: episodes.iter().map(EpisodeResult::spl_term).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticMode {
    Strict,
    #[default]
    Medium,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticDimension {
    Realism,
    Layout,
    Completion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardRule {
    pub dimension: SemanticDimension,
    pub reason: String,
}

/// Scores as returned by a scorer, before range enforcement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSemantic {
    pub realism: f64,
    pub layout: f64,
    pub completion: f64,
    #[serde(default)]
    pub hard_rules: Vec<HardRule>,
    #[serde(default)]
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticScore {
    pub realism: u8,
    pub layout: u8,
    pub completion: u8,
    pub total: u8,
    pub reasons: Vec<String>,
}

impl SemanticScore {
    pub fn mean(&self) -> f64 {
        f64::from(self.total) / 3.0
    }
}

/// Rounds and clamps each dimension to 0..=10 and zeroes dimensions hit by
/// a hard rule.
pub fn finalize_semantic(raw: &RawSemantic) -> SemanticScore {
    let mut reasons = raw.reasons.clone();
    let mut fix = |name: &str, v: f64, dim: SemanticDimension| -> u8 {
        if raw.hard_rules.iter().any(|h| h.dimension == dim) {
            return 0;
        }
        let r = if v.is_finite() { v.round() } else { 0.0 };
        if !(0.0..=10.0).contains(&r) {
            log::warn!("semantic {name} score {v} out of range, clamped");
            reasons.push(format!("{name} clamped from {v}"));
        }
        r.clamp(0.0, 10.0) as u8
    };
    let realism = fix("realism", raw.realism, SemanticDimension::Realism);
    let layout = fix("layout", raw.layout, SemanticDimension::Layout);
    let completion = fix("completion", raw.completion, SemanticDimension::Completion);
    reasons.extend(raw.hard_rules.iter().map(|h| format!("hard rule: {}", h.reason)));
    SemanticScore {
        realism,
        layout,
        completion,
        total: realism + layout + completion,
        reasons,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticError {
    #[error("semantic scorer unavailable: {0}")]
    Unavailable(String),
}

pub trait SemanticScorer: Send + Sync {
    fn score(&self, layout: &Layout, protocol: &Protocol, mode: SemanticMode) -> Result<RawSemantic, SemanticError>;
}

/// Offline scorer returning fixed scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubScorer {
    pub realism: f64,
    pub layout: f64,
    pub completion: f64,
}

impl Default for StubScorer {
    fn default() -> Self {
        Self {
            realism: 8.0,
            layout: 9.0,
            completion: 9.0,
        }
    }
}

impl SemanticScorer for StubScorer {
    fn score(&self, _: &Layout, _: &Protocol, _: SemanticMode) -> Result<RawSemantic, SemanticError> {
        Ok(RawSemantic {
            realism: self.realism,
            layout: self.layout,
            completion: self.completion,
            hard_rules: Vec::new(),
            reasons: vec!["stub scorer".into()],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteScorerConfig {
    pub endpoint_url: String,
    pub timeout_s: f64,
    pub auth_env_var: Option<String>,
    pub max_in_flight: usize,
}

impl Default for RemoteScorerConfig {
    fn default() -> Self {
        Self {
            endpoint_url: String::new(),
            timeout_s: 60.0,
            auth_env_var: None,
            max_in_flight: 1,
        }
    }
}

/// HTTP scorer. Posts `{mode, layout, protocol}` and expects a
/// [`RawSemantic`] body.
pub struct RemoteScorer {
    cfg: RemoteScorerConfig,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    mode: SemanticMode,
    layout: &'a Layout,
    protocol: ProtocolSummary,
}

impl RemoteScorer {
    pub fn new(cfg: RemoteScorerConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            cfg,
            agent,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
        }
    }

    fn post(&self, body: &ScoreRequest<'_>) -> Result<RawSemantic, SemanticError> {
        let mut req = self.agent.post(&self.cfg.endpoint_url);
        if let Some(t) = self.cfg.auth_env_var.as_deref().and_then(|v| std::env::var(v).ok()) {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| SemanticError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(SemanticError::Unavailable(format!("HTTP {status}")));
        }
        resp.body_mut()
            .read_json::<RawSemantic>()
            .map_err(|e| SemanticError::Unavailable(format!("bad reply: {e}")))
    }
}

impl SemanticScorer for RemoteScorer {
    fn score(&self, layout: &Layout, protocol: &Protocol, mode: SemanticMode) -> Result<RawSemantic, SemanticError> {
        if self.cfg.endpoint_url.is_empty() {
            return Err(SemanticError::Unavailable("no endpoint configured".into()));
        }
        let cap = self.cfg.max_in_flight.max(1);
        {
            let mut n = self.in_flight.lock().expect("lock poisoned");
            while *n >= cap {
                n = self.slot_freed.wait(n).expect("lock poisoned");
            }
            *n += 1;
        }
        let out = self.post(&ScoreRequest {
            mode,
            layout,
            protocol: ProtocolSummary::of(protocol),
        });
        *self.in_flight.lock().expect("lock poisoned") -= 1;
        self.slot_freed.notify_one();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: String,
    pub subjects: Vec<String>,
    pub detail: String,
    /// Penetration depth, score or similar magnitude.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub overall: f64,
    pub s_phys: f64,
    pub s_chem: f64,
    pub s_consist: Option<f64>,
    pub semantic_available: bool,
    pub geometry: GeometryMetrics,
    pub f_geo: f64,
    pub fsr: Fsr,
    pub f_reach: f64,
    pub chemistry: ChemReport,
    pub semantic: Option<SemanticScore>,
    pub violations: Vec<Violation>,
    pub suggestions: Vec<String>,
}

impl EvaluationReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub safety: SafetyConfig,
    pub nav: NavConfig,
    pub mode: SemanticMode,
}

fn violations_and_hints(geo: &GeometryStatus, chem: &ChemReport, reach: &ReachReport) -> (Vec<Violation>, Vec<String>) {
    let mut v = Vec::new();
    let mut hints = Vec::new();
    for b in &geo.boundary {
        let mag = b.correction.map_or(f64::INFINITY, |c| c.norm());
        v.push(Violation {
            kind: "out_of_bounds".into(),
            subjects: vec![b.instance_id.clone()],
            detail: match b.correction {
                Some(_) => format!("outside its region by {mag:.3} m"),
                None => "larger than its region".into(),
            },
            value: if mag.is_finite() { mag } else { -1.0 },
        });
        hints.push(match b.correction {
            Some(c) => format!("move {} by ({:.2}, {:.2}) m", b.instance_id, c.x, c.y),
            None => format!("replace {} with a smaller asset", b.instance_id),
        });
    }
    for c in &geo.collisions {
        v.push(Violation {
            kind: "collision".into(),
            subjects: vec![c.a.clone(), c.b.clone()],
            detail: format!("penetration {:.3} m", c.result.depth),
            value: c.result.depth,
        });
        hints.push(format!(
            "separate {} and {} by at least {:.2} m",
            c.a, c.b, c.result.depth
        ));
    }
    for i in chem.instances.iter().filter(|i| i.score < 1.0) {
        v.push(Violation {
            kind: i.kind.to_string(),
            subjects: i.subjects.clone(),
            detail: match i.distance {
                Some(d) => format!("distance {d:.3} m, required {:.3} m", i.d_min),
                None => "not satisfied".into(),
            },
            value: i.score,
        });
        if let Some(d) = i.distance.filter(|_| i.kind.is_distance()) {
            hints.push(format!(
                "increase the distance between {} to {:.2} m (now {d:.2} m)",
                i.subjects.join(" and "),
                i.d_min
            ));
        }
    }
    for p in reach.failures() {
        v.push(Violation {
            kind: p.outcome.status.to_string(),
            subjects: vec![p.pair.start.instance_id.clone(), p.pair.end.instance_id.clone()],
            detail: format!("step {} to step {}", p.pair.start.step, p.pair.end.step),
            value: 0.0,
        });
        hints.push(format!(
            "clear access between {} and {}",
            p.pair.start.instance_id, p.pair.end.instance_id
        ));
    }
    (v, hints)
}

/// Full report for one scene.
pub fn evaluate_scene(
    layout: &Layout,
    protocol: &Protocol,
    base: &AssetBase,
    cfg: &EvalConfig,
    scorer: &dyn SemanticScorer,
) -> Result<EvaluationReport, EvalError> {
    let geo = GeometryStatus::compute(layout, base);
    let chem = chem_report(layout, protocol, base, &geo, &cfg.safety);
    let reach = f_reach(layout, protocol, base, &cfg.nav)?;
    let assets_ok = assets_available(layout, protocol, base);
    let semantic = match scorer.score(layout, protocol, cfg.mode) {
        Ok(raw) => Some(finalize_semantic(&raw)),
        Err(e) => {
            log::warn!("{e}");
            None
        }
    };
    let f_geo = geo.f_geo();
    let scores = compose_scores(
        f_geo,
        chem.f_chem,
        assets_ok,
        semantic.as_ref().map(|s| f64::from(s.total)),
    );
    let (violations, suggestions) = violations_and_hints(&geo, &chem, &reach);
    Ok(EvaluationReport {
        overall: scores.overall,
        s_phys: scores.s_phys,
        s_chem: scores.s_chem,
        s_consist: scores.s_consist,
        semantic_available: semantic.is_some(),
        geometry: metrics_of(&geo),
        f_geo,
        fsr: fsr(&[SceneFeasibility::of(assets_ok, &reach)])?,
        f_reach: reach.f_reach,
        chemistry: chem,
        semantic,
        violations,
        suggestions,
    })
}

/// One summary row per report with the usual result-table columns.
pub fn summary_csv(rows: &[(String, &EvaluationReport)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scene", "Obj", "OB", "CN", "Asset", "Nav", "Flam", "Store", "Incomp", "Glass", "Real", "Lay", "Comp",
        "Overall",
    ])
    .expect("in-memory write");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.3}"));
    for (name, r) in rows {
        let sem = |f: fn(&SemanticScore) -> u8| r.semantic.as_ref().map_or(String::new(), |s| f(s).to_string());
        w.write_record([
            name.clone(),
            r.geometry.obj.to_string(),
            r.geometry.ob.to_string(),
            r.geometry.cn.to_string(),
            format!("{:.3}", r.fsr.asset_availability),
            format!("{:.3}", r.fsr.step_nav),
            opt(r.chemistry.flam),
            opt(r.chemistry.store),
            opt(r.chemistry.incomp),
            opt(r.chemistry.glass),
            sem(|s| s.realism),
            sem(|s| s.layout),
            sem(|s| s.completion),
            format!("{:.3}", r.overall),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
