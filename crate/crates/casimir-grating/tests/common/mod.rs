#![allow(dead_code)]

use casimir_grating::corrugation::CorrugationGeometry;
use casimir_grating::io::{load_geometry, load_material};
use casimir_grating::material::MaterialModel;
use std::path::PathBuf;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn gold() -> MaterialModel {
    load_material(&data("au_material.json")).unwrap()
}

pub fn experiment() -> CorrugationGeometry {
    load_geometry(&data("geometry_experiment.json")).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
