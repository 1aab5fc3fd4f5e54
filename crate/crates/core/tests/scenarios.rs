//! Integration checks of the shipped scenario files against the reference
//! operating points they encode.

use qkdsim_core::harness::{polarimeter_sweep, run_scenario, sweep};
use qkdsim_core::scenario::{RunMode, ScenarioConfig, SweepAxis, SweepPoint};

use std::path::PathBuf;

fn load(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    ScenarioConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn qbers(points: &[SweepPoint]) -> Vec<f64> {
    points
        .iter()
        .map(|p| match p {
            SweepPoint::Ok(rec) => rec.qber,
            SweepPoint::Failed { error, .. } => panic!("{error}"),
        })
        .collect()
}

#[test]
fn all_shipped_scenarios_parse_and_run() {
    for name in [
        "fig4a.json",
        "fig4b.json",
        "fig4c.json",
        "fig4d.json",
        "fig3a.json",
        "fig3b.json",
    ] {
        let cfg = load(name);
        let rec = run_scenario(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(rec.sifted_rate_bps >= 0.0);
        assert!((0.0..=1.0).contains(&rec.qber), "{name}: qber {}", rec.qber);
    }
}

#[test]
fn fig4b_length_boundaries() {
    // 2 nm: key generation survives to 256 m but not well beyond; 1 nm
    // stretches to 1 km.
    let cfg = load("fig4b.json");
    let q2 = qbers(&sweep(&cfg, SweepAxis::Length, &[0.256, 2.0]).unwrap());
    assert!(q2[0] <= 0.11, "2 nm at 256 m: qber {}", q2[0]);
    assert!(q2[1] > 0.11, "2 nm at 2 km: qber {}", q2[1]);
    let mut cfg1 = cfg.clone();
    cfg1.filter.delta_lambda_nm = 1.0;
    let q1 = qbers(&sweep(&cfg1, SweepAxis::Length, &[1.0]).unwrap());
    assert!(q1[0] <= 0.11, "1 nm at 1 km: qber {}", q1[0]);
}

#[test]
fn fig4d_is_power_limited() {
    let rec = run_scenario(&load("fig4d.json")).unwrap();
    assert!(rec.power_limited);
    assert!(rec.mu_used < 0.1);
    assert!(rec.feasible);
}

#[test]
fn fig3a_polarimeter_covers_the_band() {
    let mut cfg = load("fig3a.json");
    cfg.polarimeter.time_steps = 2;
    let rows = polarimeter_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 2 * 16);
    let lambdas: Vec<f64> = rows.iter().take(16).map(|r| r.lambda_nm).collect();
    assert!((lambdas[0] - 1569.5).abs() < 1e-9);
    assert!((lambdas[15] - 1584.5).abs() < 1e-9);
    // 12.8 km of strongly birefringent fiber scrambles the band.
    assert!(rows[0].spread_rad > 1.0, "spread {}", rows[0].spread_rad);
}

#[test]
fn four_detector_mode_matches_its_analytic_pipeline() {
    let mut cfg = load("fig4a.json");
    cfg.measurement.mode = qkdsim_core::receiver::MeasurementMode::FourDetectorIdealized;
    cfg.fiber.length_km = 0.256;
    cfg.seed = 5;
    let analytic = run_scenario(&cfg).unwrap();
    cfg.mode = RunMode::Montecarlo;
    cfg.n_symbols = 1_000_000;
    let mc = run_scenario(&cfg).unwrap();
    let n = mc.sifted_count.max(1.0);
    let q_sigma = (analytic.qber * (1.0 - analytic.qber) / n).sqrt();
    assert!(
        (mc.qber - analytic.qber).abs() <= 3.0 * q_sigma,
        "qber {} vs {}",
        mc.qber,
        analytic.qber
    );
    let expected = analytic.sifted_rate_bps * 1e6 / 1e9; // one session
    assert!(
        (mc.sifted_count - expected).abs() <= 3.0 * expected.sqrt(),
        "count {} vs {expected}",
        mc.sifted_count
    );
}

#[test]
fn ideal_chain_has_zero_qber() {
    // Quasi-monochromatic launch, no fiber, no dark counts.
    let mut cfg = load("fig4a.json");
    cfg.measurement.alignment_error_rad = 0.0;
    cfg.filter.delta_lambda_nm = 1e-4;
    cfg.emitter.bandwidth_nm = 1e-5;
    cfg.spad.dark_rate_cps = 0.0;
    for mode in [RunMode::Analytic, RunMode::Montecarlo] {
        let mut c = cfg.clone();
        c.mode = mode;
        c.n_symbols = 100_000;
        let rec = run_scenario(&c).unwrap();
        assert_eq!(rec.qber, 0.0, "{mode:?}");
        assert!(rec.feasible);
        assert!(rec.sifted_rate_bps > 0.0);
    }
}
