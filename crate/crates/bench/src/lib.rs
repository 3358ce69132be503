//! Fixture loading shared by the benchmarks.

use std::path::PathBuf;

use gari_core::dem::{classify_detectors, load_dem_file, parse_sidecar};
use gari_core::gari::{build_correlated, CorrelatedModel, GariModel, MemoryBasis};
use gari_core::DemModel;

pub fn fixture_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(file)
}

/// Reads `<name>.dem.gz` with its `.typing` sidecar.
pub fn load_typed(name: &str) -> DemModel {
    let dem = load_dem_file(&fixture_path(&format!("{name}.dem.gz"))).expect("fixture DEM");
    let sidecar = std::fs::read_to_string(fixture_path(&format!("{name}.dem.typing"))).expect("fixture typing");
    let typing = classify_detectors(&dem, &parse_sidecar(&sidecar).expect("sidecar")).expect("typing");
    dem.with_typing(typing).expect("typing matches")
}

pub fn load_models(name: &str) -> (CorrelatedModel, GariModel) {
    let cm = build_correlated(&load_typed(name), MemoryBasis::Z).expect("correlated model");
    let gm = GariModel::from_correlated(&cm).expect("augmented model");
    (cm, gm)
}
