mod common;

use casimir_grating::calibration::{Curve, DeflectionDataset};
use casimir_grating::corrugation::{ForceCurve, Method};
use casimir_grating::io::*;
use casimir_grating::material::MaterialModel;
use casimir_grating::Error;
use proptest::prelude::*;
use std::process::Command;

fn field_of(e: Error) -> String {
    match e {
        Error::Config { field, .. } => field,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn material_configs() {
    assert!(matches!(parse_material_config(r#"{"ideal_metal": true}"#).unwrap(), MaterialModel::IdealMetal));
    let m = parse_material_config(r#"{"plasma_frequency_eV": 9, "relaxation_frequency_eV": 0.035}"#).unwrap();
    assert!(matches!(m, MaterialModel::Dispersive { .. }));
    let e = parse_material_config(r#"{"relaxation_frequency_eV": 0.035}"#).unwrap_err();
    assert_eq!(field_of(e), "plasma_frequency_eV");
    assert!(parse_material_config(r#"{"plasma_frequency_eV": 9, "relaxation_frequency_eV": 0.035, "colour": 1}"#).is_err());
    assert!(parse_material_config(r#"{"plasma_frequency_eV": -9, "relaxation_frequency_eV": 0.035}"#).is_err());
}

#[test]
fn geometry_configs() {
    let text = std::fs::read_to_string(common::data("geometry_experiment.json")).unwrap();
    let g = parse_geometry_config(&text).unwrap();
    assert!((g.period - 570.5e-9).abs() < 1e-15);
    assert!((g.radius - 99.6e-6).abs() < 1e-12);
    let bad = text.replace("\"theta_deg\": 0.0", "\"theta_deg\": 4.0");
    assert!(parse_geometry_config(&bad).is_err());
    assert_eq!(field_of(parse_geometry_config("{").unwrap_err()), "geometry");
}

const RUN: &str = r#"{
  "material": "m.json", "geometry": "g.json",
  "force": { "z_min_nm": 127, "z_max_nm": 300, "theta_deg": [0, 2.4], "methods": ["DER", "PFA"] }
}"#;

#[test]
fn run_config_validation() {
    let c = parse_run_config(RUN).unwrap();
    assert_eq!(c.temperature_K, 300.0);
    assert_eq!(c.force.as_ref().unwrap().theta_deg, vec![0.0, 2.4]);
    let cases = [
        (RUN.replace("[0, 2.4]", "[]"), "force.theta_deg"),
        (RUN.replace("[0, 2.4]", "[3.5]"), "force.theta_deg"),
        (RUN.replace("\"PFA\"", "\"XYZ\""), "force.methods"),
        (RUN.replace("\"z_min_nm\": 127", "\"z_min_nm\": 400"), "force.z_*_nm"),
        (RUN.replace("\"material\"", "\"temperature_K\": -1, \"material\""), "temperature_K"),
        (RUN.replace("\"force\"", "\"unknown\": 1, \"force\""), "config"),
    ];
    for (text, field) in cases {
        let e = parse_run_config(&text).unwrap_err();
        match e {
            Error::Config { field: f, .. } => assert_eq!(f, field, "{text}"),
            other => panic!("{other}"),
        }
    }
}

#[test]
fn run_config_paths_resolve_relative_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.json");
    std::fs::write(&p, RUN).unwrap();
    let c = load_run_config(&p).unwrap();
    assert_eq!(c.geometry, dir.path().join("g.json"));
    assert_eq!(c.material.unwrap(), dir.path().join("m.json"));
}

#[test]
fn dataset_csv_parsing() {
    let (z, s) = parse_dataset_csv(b"z_piezo_nm,S_def_signal\n0,0.1\n1, 0.2\n2,0.3\n").unwrap();
    assert_eq!(z.len(), 3);
    assert!((z[2] - 2e-9).abs() < 1e-20 && s[1] == 0.2);
    let err = |b: &[u8]| match parse_dataset_csv(b) {
        Err(Error::Data(m)) => m,
        other => panic!("{other:?}"),
    };
    assert!(err(b"z,S\n0,1\n1,2\n").starts_with("line 1"));
    assert!(err(b"z_piezo_nm,S_def_signal\n0,1\n1,abc\n").starts_with("line 3"));
    assert!(err(b"z_piezo_nm,S_def_signal\n0,1\n1,2\n1,3\n").starts_with("line 4"));
    assert!(err(b"z_piezo_nm,S_def_signal\n0,1\n1,NaN\n").starts_with("line 3"));
    assert!(err(b"z_piezo_nm,S_def_signal\n0,1\n1,2,3\n").starts_with("line 3"));
    assert!(err(b"z_piezo_nm,S_def_signal\n0,1\n").contains("fewer than 2"));
}

#[test]
fn manifest_parsing() {
    let ok = r#"{"m_nm_per_unit": 102.1, "curves": [{"file": "a.csv", "voltage_mV": -90, "repetition": 0}]}"#;
    let m = parse_manifest(ok).unwrap();
    assert_eq!(m.curves.len(), 1);
    assert_eq!(m.m_err_nm_per_unit, 0.0);
    for bad in [
        ok.replace("102.1", "0"),
        ok.replace("[{\"file\": \"a.csv\", \"voltage_mV\": -90, \"repetition\": 0}]", "[]"),
        ok.replace("\"repetition\": 0", "\"repetition\": -1"),
        "[]".to_string(),
    ] {
        assert!(matches!(parse_manifest(&bad), Err(Error::Data(_))), "{bad}");
    }
}

fn sample_dataset() -> DeflectionDataset {
    let z: Vec<f64> = (0..300).map(|i| i as f64 * 7e-9).collect();
    let curves = [-140e-3, -90e-3, -40e-3]
        .iter()
        .enumerate()
        .map(|(r, &v)| Curve {
            voltage: v,
            repetition: r,
            signal: z.iter().map(|zz| 0.3 * (zz * 1e7).sin() + v).collect(),
        })
        .collect();
    DeflectionDataset { z_piezo: z, curves, m: 102.1e-9, m_err: 1e-9 }
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = sample_dataset();
    let man = write_dataset(dir.path(), &d).unwrap();
    let back = load_dataset(&man).unwrap();
    assert_eq!(back.curves.len(), 3);
    assert!((back.m - d.m).abs() < 1e-18 && (back.m_err - d.m_err).abs() < 1e-18);
    for (a, b) in d.z_piezo.iter().zip(&back.z_piezo) {
        assert!((a - b).abs() < 1e-17);
    }
    for (a, b) in d.curves.iter().zip(&back.curves) {
        assert!((a.voltage - b.voltage).abs() < 1e-15 && a.repetition == b.repetition);
        assert_eq!(a.signal, b.signal);
    }
    // a curve on another grid is rejected
    std::fs::write(dir.path().join("curve_0001.csv"), "z_piezo_nm,S_def_signal\n0,1\n5,2\n").unwrap();
    assert!(matches!(load_dataset(&man), Err(Error::Data(_))));
    assert!(matches!(load_dataset(&dir.path().join("missing.json")), Err(Error::Data(_))));
}

#[test]
fn force_csv_round_trip() {
    let curves = vec![
        ForceCurve { method: Method::Der, theta: 1.2f64.to_radians(), points: vec![(127e-9, -9e-11), (200e-9, -3e-11)] },
        ForceCurve { method: Method::Pfa, theta: 0.0, points: vec![(127e-9, -8e-11)] },
    ];
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.csv");
    write_force_csv(&p, &curves).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("z_nm,F_pN,method,theta_deg\n127,90,DER,"));
    let back = read_force_csv(text.as_bytes()).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in curves.iter().zip(&back) {
        assert_eq!(a.method, b.method);
        assert!((a.theta - b.theta).abs() < 1e-12);
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((p.0 - q.0).abs() < 1e-18 && (p.1 - q.1).abs() < 1e-24);
        }
    }
    assert!(read_force_csv(b"z,F\n").is_err());
    assert!(read_force_csv(b"z_nm,F_pN,method,theta_deg\n1,2,NOPE,0\n").is_err());
}

#[test]
fn nm_formatting_hides_grid_noise() {
    assert_eq!(fmt_nm(127e-9 + 73.0 * 1e-9), "200");
    assert_eq!(fmt_nm(130.5e-9), "130.5");
    assert!((sigma_to_pn_per_mv(sigma_from_pn_per_mv(1.35)) - 1.35).abs() < 1e-12);
    assert!((sigma_from_pn_per_mv(1.35) - 1.35e-9).abs() < 1e-21);
}

#[test]
fn force_interpolant_follows_power_law() {
    let c = ForceCurve {
        method: Method::Der,
        theta: 0.0,
        points: (0..20).map(|i| {
            let z = 100e-9 + i as f64 * 20e-9;
            (z, -1e-10 * (100e-9 / z).powi(3))
        }).collect(),
    };
    let f = ForceInterpolant::new(&c).unwrap();
    for z in [90e-9f64, 155e-9, 600e-9] {
        let want = 1e-10 * (100e-9 / z).powi(3);
        assert!(((f.eval(z) - want) / want).abs() < 1e-6, "{z}");
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_casimir-grating"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::copy(common::data("geometry_experiment.json"), d.join("g.json")).unwrap();
    std::fs::copy(common::data("ideal_metal.json"), d.join("m.json")).unwrap();

    std::fs::write(d.join("bad.json"), RUN.replace("[0, 2.4]", "[]")).unwrap();
    let o = bin().args(["force", "--config"]).arg(d.join("bad.json")).arg("--out").arg(d.join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("force.theta_deg"));

    write_dataset(&d.join("ds"), &sample_dataset()).unwrap();
    std::fs::write(d.join("ds/curve_0002.csv"), "z_piezo_nm,S_def_signal\n0,1\n7,x\n").unwrap();
    std::fs::write(d.join("cal.json"), r#"{"geometry": "g.json", "calibrate": {"dataset": "ds/manifest.json"}}"#).unwrap();
    let o = bin().args(["calibrate", "--config"]).arg(d.join("cal.json")).arg("--out").arg(d.join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let o = bin().arg("nonsense").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cli_force_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::copy(common::data("geometry_experiment.json"), d.join("g.json")).unwrap();
    std::fs::copy(common::data("ideal_metal.json"), d.join("m.json")).unwrap();
    let cfg = r#"{"material": "m.json", "geometry": "g.json", "temperature_K": 300,
      "force": {"z_min_nm": 127, "z_max_nm": 131, "z_step_nm": 1, "theta_deg": [0],
                "methods": ["DER", "PFA"], "table_nodes": 12, "table_cache_dir": "cache"}}"#;
    std::fs::write(d.join("f.json"), cfg).unwrap();
    for _ in 0..2 {
        let o = bin().args(["force", "--config"]).arg(d.join("f.json")).arg("--out").arg(d.join("o")).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let forces = std::fs::read_to_string(d.join("o/forces.csv")).unwrap();
    let curves = read_force_csv(forces.as_bytes()).unwrap();
    assert_eq!(curves.len(), 2);
    assert!(curves.iter().all(|c| c.points.len() == 5));
    assert!(forces.lines().nth(4).unwrap().starts_with("130,"));
    assert!(d.join("o/comparison.csv").exists());
    assert!(std::fs::read_dir(d.join("cache")).unwrap().count() >= 1);
}

proptest! {
    #[test]
    fn csv_parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
        let _ = parse_dataset_csv(&bytes);
    }

    #[test]
    fn csv_rows_round_trip(rows in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
        let mut text = String::from("z_piezo_nm,S_def_signal\n");
        for (i, s) in rows.iter().enumerate() {
            text.push_str(&format!("{},{}\n", i as f64 * 2.5, fmt(*s)));
        }
        let (z, s) = parse_dataset_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(s, rows);
        prop_assert_eq!(z.len(), text.lines().count() - 1);
    }
}
