use casimir_grating::calibration::*;
use casimir_grating::corrugation::CorrugationGeometry;
use casimir_grating::electrostatics::x_of_z;
use proptest::prelude::*;

fn geom() -> CorrugationGeometry {
    CorrugationGeometry {
        period: 570.5e-9,
        amplitude_plate: 40.2e-9,
        amplitude_sphere: 14.6e-9,
        lx: 14e-6,
        ly: 14e-6,
        radius: 99.6e-6,
        theta: 0.0,
        phase: 0.0,
        roughness_plate: 0.0,
        roughness_sphere: 0.0,
    }
}

fn flat() -> CorrugationGeometry {
    CorrugationGeometry {
        amplitude_plate: 0.0,
        amplitude_sphere: 0.0,
        ..geom()
    }
}

fn casimir(z: f64) -> f64 {
    86e-12 * (130e-9 / z).powf(3.3)
}

fn truth() -> SynthTruth {
    SynthTruth {
        sigma: 1.35e-9,
        z0: 126.2e-9,
        v0: -90.2e-3,
        m: 102.1e-9,
    }
}

fn small_spec(noise: f64, reps: usize) -> SynthSpec {
    let mut s = SynthSpec::eleven_voltages(noise);
    s.repetitions = reps;
    s
}

/// β on z = scale·z_rel + z₀; scale ≠ 1 mimics a miscalibrated piezo.
fn beta_samples(g: &CorrugationGeometry, sigma: f64, z0: f64, scale: f64) -> Vec<BetaSample> {
    (0..900)
        .map(|i| {
            let z_rel = 10e-9 + i as f64 * 1e-9;
            BetaSample {
                z_rel,
                beta: x_of_z(g, scale * z_rel + z0).unwrap() / sigma,
                sigma: 0.3,
            }
        })
        .collect()
}

#[test]
fn drift_of_linear_signal_is_removed_completely() {
    let z: Vec<f64> = (0..3000).map(|i| i as f64 * 1e-9).collect();
    let s: Vec<f64> = z.iter().map(|z| 0.3 - 2e3 * z).collect();
    let d = drift_correct(&z, &s, 1.7e-6).unwrap();
    assert!(d.corrected.iter().all(|c| c.abs() < 1e-12));
}

#[test]
fn drift_slope_is_recovered_to_one_percent() {
    // curve taken at V = V₀, so only the Casimir tail reaches the drift window
    let z: Vec<f64> = (0..3000).map(|i| i as f64 * 1e-9).collect();
    let slope = 2e3;
    let s: Vec<f64> = z
        .iter()
        .map(|zp| casimir(zp + 126.2e-9) / 1.35e-9 + 0.01 + slope * zp)
        .collect();
    let d = drift_correct(&z, &s, 1.7e-6).unwrap();
    assert!((d.slope - slope).abs() / slope < 0.01, "slope {}", d.slope);
}

#[test]
fn drift_free_flat_signal_is_unchanged() {
    let z: Vec<f64> = (0..3000).map(|i| i as f64 * 1e-9).collect();
    let s: Vec<f64> = z.iter().map(|z| 1e-3 * (z * 1e8).sin()).collect();
    let d = drift_correct(&z, &s, 1.7e-6).unwrap();
    let dev = d.corrected.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-3, "{dev}");
}

#[test]
fn drift_needs_enough_large_z_samples() {
    let z: Vec<f64> = (0..1750).map(|i| i as f64 * 1e-9).collect();
    let s = vec![0.0; z.len()];
    assert!(matches!(
        drift_correct(&z, &s, 1.7e-6),
        Err(casimir_grating::Error::Data(_))
    ));
}

#[test]
fn separation_reconstruction() {
    let zp = [0.0, 10e-9, 20e-9];
    let z = reconstruct_separation(&zp, &[0.0; 3], 102.1e-9, 5e-9);
    for (a, b) in z.iter().zip([5e-9, 15e-9, 25e-9]) {
        assert!((a - b).abs() < 1e-20);
    }
    let z = reconstruct_separation(&[0.0], &[1.0], 102.1e-9, 0.0);
    assert!((z[0] - 102.1e-9).abs() < 1e-18);
}

#[test]
fn parabola_is_recovered_exactly() {
    let v: Vec<f64> = (0..11).map(|i| (-145.0 + 10.5 * i as f64) * 1e-3).collect();
    let (beta, v0, c) = (14.86, -90.2e-3, 0.063);
    let s: Vec<f64> = v.iter().map(|x| beta * (x - v0).powi(2) + c).collect();
    let p = fit_parabola(&s, &v, None).unwrap();
    assert!((p.v0.value - v0).abs() < 1e-12);
    assert!((p.beta.value - beta).abs() < 1e-9);
    assert!((p.vertex.value - c).abs() < 1e-12);
}

#[test]
fn parabola_rejects_degenerate_input() {
    let v = [-0.1, -0.05, 0.0, 0.05];
    assert!(fit_parabola(&[0.2; 4], &v, None).is_err());
    assert!(fit_parabola(&[1.0, 2.0], &[0.1, 0.2], None).is_err());
    let inverted: Vec<f64> = v.iter().map(|x| -x * x).collect();
    assert!(fit_parabola(&inverted, &v, None).is_err());
}

#[test]
fn beta_curve_noise_free_recovery() {
    let s = beta_samples(&geom(), 1.35e-9, 126.2e-9, 1.0);
    let f = fit_beta_curve(&s, &geom(), &BetaFitOptions::default()).unwrap();
    assert!((f.sigma.value / 1.35e-9 - 1.0).abs() < 1e-5, "{:?}", f.sigma);
    assert!((f.z0.value - 126.2e-9).abs() < 0.05e-9, "{:?}", f.z0);
}

#[test]
fn beta_curve_flat_geometry_nests() {
    let s = beta_samples(&flat(), 1.35e-9, 126.2e-9, 1.0);
    let f = fit_beta_curve(&s, &flat(), &BetaFitOptions::default()).unwrap();
    assert!((f.sigma.value / 1.35e-9 - 1.0).abs() < 1e-5);
    assert!((f.z0.value - 126.2e-9).abs() < 0.05e-9);
}

#[test]
fn endpoint_grid_has_thirteen_points() {
    let g = endpoint_grid(1000e-9);
    assert_eq!(g.len(), 13);
    let want = [1000.0, 900.0, 800.0, 700.0, 650.0, 600.0, 550.0, 500.0, 450.0, 400.0, 350.0, 300.0, 250.0];
    for (a, b) in g.iter().zip(want) {
        assert!((a * 1e9 - b).abs() < 1e-6);
    }
}

#[test]
fn endpoint_scan_is_flat_for_correct_model() {
    let s = beta_samples(&geom(), 1.35e-9, 126.2e-9, 1.0);
    let opts = BetaFitOptions::default();
    let f = fit_beta_curve(&s, &geom(), &opts).unwrap();
    let scan = endpoint_scan(&s, &geom(), f.z0.value, &endpoint_grid(1000e-9), &opts);
    for e in &scan {
        let ef = e.fit.as_ref().unwrap();
        assert!((ef.z0.value - 126.2e-9).abs() < 0.1e-9, "{} {:?}", e.z_end, ef.z0);
    }
}

fn jitter(s: &mut [BetaSample], sd: f64) {
    let mut state = 0x2545F4914F6CDD1Du64;
    for b in s.iter_mut() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let u = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        b.sigma = sd;
        b.beta += sd * 12f64.sqrt() * u;
    }
}

#[test]
fn uniform_piezo_scale_error_is_absorbed() {
    // X ≈ πε₀R/z, so a uniform stretch trades against σ′ and z₀
    let mut s = beta_samples(&geom(), 1.35e-9, 126.2e-9, 1.01);
    jitter(&mut s, 0.005);
    let opts = BetaFitOptions::default();
    let f = fit_beta_curve(&s, &geom(), &opts).unwrap();
    assert!((f.z0.value - 126.2e-9 / 1.01).abs() < 0.3e-9, "{:?}", f.z0);
    assert!((f.sigma.value / 1.35e-9 - 1.01).abs() < 2e-3, "{:?}", f.sigma);
}

#[test]
fn endpoint_scan_flags_distance_scale_error() {
    // piezo scale error growing to 1% at 500 nm extension
    let mut s: Vec<BetaSample> = beta_samples(&geom(), 1.35e-9, 126.2e-9, 1.0)
        .into_iter()
        .map(|mut b| {
            let z = b.z_rel * (1.0 + 0.01 * b.z_rel / 500e-9) + 126.2e-9;
            b.beta = x_of_z(&geom(), z).unwrap() / 1.35e-9;
            b
        })
        .collect();
    jitter(&mut s, 0.005);
    let opts = BetaFitOptions::default();
    let f = fit_beta_curve(&s, &geom(), &opts).unwrap();
    let scan = endpoint_scan(&s, &geom(), f.z0.value, &endpoint_grid(1000e-9), &opts);
    let z0: Vec<f64> = scan.iter().filter_map(|e| e.fit.as_ref().ok()).map(|f| f.z0.value).collect();
    assert!((z0.first().unwrap() - z0.last().unwrap()).abs() > 1e-9, "{z0:?}");
    assert!(!endpoint_constant(&scan, &f, 2.0));
}

#[test]
fn student_factor_for_110_curves() {
    let t = student_factor(0.67, 109).unwrap();
    assert!((t - 0.978).abs() < 1e-3, "{t}");
    assert!(student_factor(0.67, 9).unwrap() > t);
    assert!(student_factor(1.5, 9).is_err());
}

#[test]
fn noise_free_pipeline_recovers_truth() {
    let mut spec = small_spec(0.0, 3);
    spec.drift_slope = 2e3;
    spec.drift_offset = 0.01;
    let data = synth_generate(&casimir, &truth(), &geom(), &spec, 1).unwrap();
    let run = calibrate(&data, &geom(), &CalibrationOptions::default()).unwrap();
    let r = &run.result;
    assert!((r.v0.value - truth().v0).abs() < 1e-6, "{:?}", r.v0);
    assert!((r.sigma.value / truth().sigma - 1.0).abs() < 1e-3, "{:?}", r.sigma);
    assert!((r.z0.value - truth().z0).abs() < 0.2e-9, "{:?}", r.z0);
    assert_eq!(r.endpoint_scan.len(), 13);
    // V₀(z) flat to well below a microvolt over the fitted range
    assert!(r.v0_slope.value.abs() * 1e-6 < 1e-6, "{:?}", r.v0_slope);

    let m = extract_casimir(&run.prepared, r, &geom()).unwrap();
    // residual z₀ offset times the force slope
    let tol = 2.0 * (r.z0.value - truth().z0).abs() * 3.3 / 130e-9 * 86e-12 + 0.02e-12;
    for (z, f) in m.z.iter().zip(&m.mean).filter(|(z, _)| **z < 300e-9).step_by(10) {
        assert!((f - casimir(*z)).abs() < tol, "z {z} F {f} z0 {:?}", r.z0);
    }
}

#[test]
fn extraction_at_v0_is_pure_signal() {
    let spec = SynthSpec {
        voltages: vec![-0.1, -0.05, 0.0],
        ..small_spec(0.0, 3)
    };
    let data = synth_generate(&casimir, &truth(), &geom(), &spec, 1).unwrap();
    let mut run = calibrate(&data, &geom(), &CalibrationOptions::default()).unwrap();
    let v0 = run.result.v0.value;
    for v in run.prepared.voltages.iter_mut() {
        *v = v0;
    }
    let m = extract_casimir(&run.prepared, &run.result, &geom()).unwrap();
    let k = 50;
    let want = run.result.sigma.value * m.mean_signal[k];
    assert!((m.mean[k] - want).abs() <= 1e-12 * want.abs());
}

#[test]
fn doubling_noise_doubles_random_error() {
    let random = |noise: f64| {
        let data = synth_generate(&casimir, &truth(), &geom(), &small_spec(noise, 3), 7).unwrap();
        let run = calibrate(&data, &geom(), &CalibrationOptions::default()).unwrap();
        let m = extract_casimir(&run.prepared, &run.result, &geom()).unwrap();
        let b = error_budget(&m, &run.result, &run.prepared, &geom(), &ErrorBudgetOptions::default()).unwrap();
        for k in 0..b.z.len() {
            let q = (b.random[k].powi(2) + b.systematic[k].powi(2)).sqrt();
            assert!((b.total[k] - q).abs() <= 1e-12 * q);
        }
        b.random.iter().sum::<f64>() / b.random.len() as f64
    };
    let ratio = random(4e-3) / random(2e-3);
    assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parabola_recovery_any_vertex(v0 in -0.2f64..0.1, beta in 0.5f64..50.0, c in -1.0f64..1.0) {
        let v: Vec<f64> = (0..11).map(|i| (-145.0 + 10.5 * i as f64) * 1e-3).collect();
        let s: Vec<f64> = v.iter().map(|x| beta * (x - v0).powi(2) + c).collect();
        let p = fit_parabola(&s, &v, None).unwrap();
        prop_assert!((p.v0.value - v0).abs() < 1e-9);
        prop_assert!((p.beta.value / beta - 1.0).abs() < 1e-9);
    }

    #[test]
    fn drift_correction_removes_any_line(a in -1.0f64..1.0, b in -1e4f64..1e4) {
        let z: Vec<f64> = (0..2000).map(|i| i as f64 * 1e-9).collect();
        let s: Vec<f64> = z.iter().map(|z| a + b * z).collect();
        let d = drift_correct(&z, &s, 1.7e-6).unwrap();
        prop_assert!(d.corrected.iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn resampling_reproduces_lines(a in -1.0f64..1.0, b in -10.0f64..10.0, t in 0.0f64..1.0) {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|x| a + b * x).collect();
        let at = [t * 4.9];
        let r = resample_linear(&x, &y, &at);
        prop_assert!((r[0] - (a + b * at[0])).abs() < 1e-9);
    }
}

#[test]
fn vertex_background_removes_line_in_linear_coefficient() {
    let z: Vec<f64> = (0..200).map(|i| 10e-9 + i as f64 * 4e-9).collect();
    let beta: Vec<f64> = z.iter().map(|z| 2.0 + 1e-6 / z).collect();
    // b_i picks up p + q·z, so the vertex moves by −(p + q·z)/(2β)
    let v: Vec<f64> = z
        .iter()
        .zip(&beta)
        .map(|(z, b)| -0.0902 - (0.003 + 4e3 * z) / (2.0 * b))
        .collect();
    let sig = vec![1e-4; z.len()];
    let e = vertex_with_background(&z, &v, &sig, &beta).unwrap();
    assert!((e.value + 0.0902).abs() < 1e-12, "{}", e.value);
    let (plain, _) = weighted_mean_and_slope(&z, &v, &sig).unwrap();
    assert!((plain.value + 0.0902).abs() > 1e-4);
    assert!(vertex_with_background(&z[..3], &v[..3], &sig[..3], &beta[..3]).is_err());
}
