#![allow(dead_code)]

use std::path::PathBuf;

use labscene_core::{AssetBase, Layout, Protocol};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn assets() -> AssetBase {
    AssetBase::load(fixture("assets.json")).expect("fixture assets load")
}

pub fn protocol(name: &str) -> Protocol {
    Protocol::load(fixture(&format!("protocols/{name}.json"))).expect("fixture protocol loads")
}

pub fn layout(name: &str) -> Layout {
    Layout::load(fixture(&format!("layouts/{name}.json"))).expect("fixture layout loads")
}

/// `|a - b| <= tol * max(1, |a|, |b|)`: relative, with an absolute floor
/// near zero.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}
