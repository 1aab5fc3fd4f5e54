//! Scenario orchestration: end-to-end runs, parameter sweeps, the
//! wavelength-swept polarimeter, eye diagrams and fiber calibration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::time::Instant;

use crate::encoder::{drive_waveform, encode_symbol, launched_state, waveform_states, EncoderSpec};
use crate::error::{Error, Result};
use crate::fiber::{
    build_fiber, drift_step, propagate, transmittance, ChannelOperator, FiberRealization,
};
use crate::polarization::{projection_probability, AnalyzerAxis, Basis, StokesVector};
use crate::protocol::{generate_alice, secret_key_feasible, QBER_FEASIBILITY_THRESHOLD};
use crate::receiver::{analytic_rates, AnalyticScenario, MeasurementMode};
use crate::scenario::{
    csv_metadata_line, DetectorCounts, MuNamed, MuTarget, ResultRecord, RunMode, ScenarioConfig,
    SweepAxis, SweepPoint,
};
use crate::seed::{mix, tag};
use crate::sim::{run_four_detector_session, run_two_detector_session, SessionSetup};
use crate::source::{apply_filter, make_spectrum, photons_per_symbol, sample_slices};

/// Nominal quantum launch level; a max-power launch below this is flagged
/// power-limited.
pub const MU_NOMINAL: f64 = 0.1;

/// Channel state shared by every run mode: filtered spectrum, launch power
/// bookkeeping, the frozen fiber draw and the aligned channel operator.
#[derive(Debug, Clone)]
pub struct PreparedChannel {
    pub slices: Vec<(f64, f64)>,
    pub lambda_c_nm: f64,
    pub captured_fraction: f64,
    pub mu_used: f64,
    pub power_limited: bool,
    pub transmittance: f64,
    pub realization: FiberRealization,
    /// Spectrum-averaged channel with the session-start alignment applied.
    pub operator: ChannelOperator,
    /// Received mean states indexed `[basis][bit]`.
    pub received: [[StokesVector; 2]; 2],
    pub contrast_diagonal: f64,
    pub contrast_circular: f64,
    pub dop_at_bob: f64,
}

/// Build the source -> filter -> VOA -> fiber front end of a scenario.
pub fn prepare_channel(cfg: &ScenarioConfig) -> Result<PreparedChannel> {
    let spectrum = make_spectrum(&cfg.emitter)?;
    let (filtered, captured_fraction) = apply_filter(
        &spectrum,
        cfg.emitter.center_nm,
        cfg.filter.delta_lambda_nm,
        cfg.filter.shape,
    )?;
    let lambda_c_nm = filtered.centroid_nm();
    let slices = sample_slices(&filtered, cfg.slices)?;

    // Launch power: a targeted mu is set by the VOA at Alice's output (the
    // VOA absorbs the transmitter insertion loss); "max" launches whatever
    // survives the filter and the insertion loss.
    let power_at_alice_w = filtered.total_power_w() * 10f64.powf(-cfg.insertion_loss_db / 10.0);
    let mu_available = photons_per_symbol(power_at_alice_w, cfg.symbol_rate_hz, lambda_c_nm)?;
    let (mu_used, power_limited) = match cfg.mu {
        MuTarget::Photons(target) => {
            if target <= mu_available {
                (target, false)
            } else {
                (mu_available, true)
            }
        }
        MuTarget::Named(MuNamed::Max) => (mu_available, mu_available < MU_NOMINAL),
    };

    let realization = build_fiber(&cfg.fiber, mix(cfg.seed, &[tag::FIBER]))?;
    let trans = transmittance(&cfg.fiber, cfg.optical_budget_db);
    let operator = ChannelOperator::from_realization(&realization, &slices)?.aligned();

    let mut received = [[StokesVector::zero(); 2]; 2];
    for (bi, basis) in [Basis::Diagonal, Basis::Circular].iter().enumerate() {
        for bit in [false, true] {
            let launched = launched_state(&encode_symbol(bit, *basis), cfg.encoder.balance_error)?;
            received[bi][usize::from(bit)] = operator.apply(&launched);
        }
    }
    let contrast = |bi: usize, axis: StokesVector| {
        (received[bi][0].dot(&axis) + received[bi][1].dot(&axis.negated())) / 2.0
    };
    let contrast_diagonal = contrast(0, StokesVector::diagonal());
    let contrast_circular = contrast(1, StokesVector::right_circular());
    let dop_at_bob = received.iter().flatten().map(|s| s.length()).sum::<f64>() / 4.0;

    Ok(PreparedChannel {
        slices,
        lambda_c_nm,
        captured_fraction,
        mu_used,
        power_limited,
        transmittance: trans,
        realization,
        operator,
        received,
        contrast_diagonal,
        contrast_circular,
        dop_at_bob,
    })
}

/// Execute one scenario end to end. Deterministic per (config, seed).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ResultRecord> {
    let started = Instant::now();
    cfg.validate()?;
    let prep = prepare_channel(cfg)?;
    let session_duration_s = cfg.n_symbols as f64 / cfg.symbol_rate_hz;

    let (sifted_rate, qber, sifted_count, detectors) = match cfg.mode {
        RunMode::Analytic => {
            let mk = |dop: f64| AnalyticScenario {
                mu_at_alice: prep.mu_used,
                transmittance: prep.transmittance,
                dop,
                alignment_error_rad: cfg.measurement.alignment_error_rad,
                symbol_rate_hz: cfg.symbol_rate_hz,
                spad: cfg.spad,
                filter_fraction: cfg.measurement.filter_fraction,
                mode: cfg.measurement.mode,
            };
            match cfg.measurement.mode {
                MeasurementMode::TwoDetectorPerSession => {
                    let est_d = analytic_rates(&mk(prep.contrast_diagonal))?;
                    let est_c = analytic_rates(&mk(prep.contrast_circular))?;
                    let sifted = 0.5 * (est_d.sifted_rate_cps + est_c.sifted_rate_cps);
                    let errors = 0.5
                        * (est_d.sifted_rate_cps * est_d.expected_qber
                            + est_c.sifted_rate_cps * est_c.expected_qber);
                    let qber = if sifted > 0.0 { errors / sifted } else { 0.5 };
                    let count =
                        (est_d.sifted_rate_cps + est_c.sifted_rate_cps) * session_duration_s;
                    // Both detectors carry the same expected load; sessions add.
                    let per_det = DetectorCounts {
                        clicks: (est_d.accepted_per_detector_cps + est_c.accepted_per_detector_cps)
                            * session_duration_s,
                        dark: (est_d.accepted_dark_per_detector_cps
                            + est_c.accepted_dark_per_detector_cps)
                            * session_duration_s,
                    };
                    (
                        sifted,
                        qber,
                        count,
                        [
                            per_det,
                            per_det,
                            DetectorCounts::default(),
                            DetectorCounts::default(),
                        ],
                    )
                }
                MeasurementMode::FourDetectorIdealized => {
                    let dop = 0.5 * (prep.contrast_diagonal + prep.contrast_circular);
                    let est = analytic_rates(&mk(dop))?;
                    let per_det = DetectorCounts {
                        clicks: est.accepted_per_detector_cps * session_duration_s,
                        dark: est.accepted_dark_per_detector_cps * session_duration_s,
                    };
                    (
                        est.sifted_rate_cps,
                        est.expected_qber,
                        est.sifted_rate_cps * session_duration_s,
                        [per_det; 4],
                    )
                }
            }
        }
        RunMode::Montecarlo => {
            let setup = SessionSetup {
                n_symbols: cfg.n_symbols,
                symbol_rate_hz: cfg.symbol_rate_hz,
                mu_at_analyzer: prep.mu_used * prep.transmittance,
                received: &prep.received,
                spad: &cfg.spad,
                filter_fraction: cfg.measurement.filter_fraction,
                alignment_error_rad: cfg.measurement.alignment_error_rad,
            };
            let mut detectors = [DetectorCounts::default(); 4];
            let (samples, mismatches, total_duration) = match cfg.measurement.mode {
                MeasurementMode::TwoDetectorPerSession => {
                    let out_d = run_two_detector_session(
                        &setup,
                        Basis::Diagonal,
                        0,
                        mix(cfg.seed, &[tag::SPAD, 0]),
                    )?;
                    let out_c = run_two_detector_session(
                        &setup,
                        Basis::Circular,
                        1,
                        mix(cfg.seed, &[tag::SPAD, 1]),
                    )?;
                    for out in [&out_d, &out_c] {
                        for (i, d) in out.detectors.iter().enumerate() {
                            detectors[i].clicks += d.clicks;
                            detectors[i].dark += d.dark;
                        }
                    }
                    (
                        out_d.sifted.len() + out_c.sifted.len(),
                        out_d.sifted.mismatches() + out_c.sifted.mismatches(),
                        2.0 * session_duration_s,
                    )
                }
                MeasurementMode::FourDetectorIdealized => {
                    let out = run_four_detector_session(&setup, 0, mix(cfg.seed, &[tag::SPAD, 0]))?;
                    for (i, d) in out.detectors.iter().enumerate() {
                        detectors[i].clicks += d.clicks;
                        detectors[i].dark += d.dark;
                    }
                    (
                        out.sifted.len(),
                        out.sifted.mismatches(),
                        session_duration_s,
                    )
                }
            };
            let qber = if samples > 0 {
                mismatches as f64 / samples as f64
            } else {
                0.5
            };
            (
                samples as f64 / total_duration,
                qber,
                samples as f64,
                detectors,
            )
        }
    };

    let qber_std_error = if sifted_count > 0.0 {
        (qber * (1.0 - qber) / sifted_count).sqrt()
    } else {
        0.0
    };
    let feasible = secret_key_feasible(
        &crate::protocol::QberEstimate {
            qber,
            std_error: qber_std_error,
            sample_count: sifted_count as usize,
            raw_key_rate_bps: sifted_rate,
        },
        QBER_FEASIBILITY_THRESHOLD,
    );

    Ok(ResultRecord {
        axis: None,
        axis_value: None,
        mode: cfg.mode,
        seed: cfg.seed,
        mu_target: cfg.mu,
        mu_used: prep.mu_used,
        power_limited: prep.power_limited,
        delta_lambda_nm: cfg.filter.delta_lambda_nm,
        fiber_length_km: cfg.fiber.length_km,
        optical_budget_db: cfg.optical_budget_db,
        symbol_rate_hz: cfg.symbol_rate_hz,
        transmittance: prep.transmittance,
        dop_at_bob: prep.dop_at_bob,
        contrast_diagonal: prep.contrast_diagonal,
        contrast_circular: prep.contrast_circular,
        sifted_rate_bps: sifted_rate,
        qber,
        qber_std_error,
        sifted_count,
        detectors,
        feasible,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Run one scenario per axis value; failed points carry an error marker and
/// the sweep continues. Rows come back in input order.
///
/// Every point inherits the template's master seed, so a fixed-seed sweep
/// varies exactly one physical quantity at a time (the same fiber draw is
/// reused along OB and delta-lambda axes).
pub fn sweep(cfg: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one axis value"));
    }
    cfg.validate()?;
    Ok(values
        .par_iter()
        .map(|&v| {
            let point_cfg = axis.apply(cfg, v);
            match run_scenario(&point_cfg) {
                Ok(mut rec) => {
                    rec.axis = Some(axis);
                    rec.axis_value = Some(v);
                    SweepPoint::Ok(Box::new(rec))
                }
                Err(e) => SweepPoint::Failed {
                    axis_value: v,
                    error: e.to_string(),
                },
            }
        })
        .collect())
}

/// One sample of the wavelength-swept polarimeter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarimeterRow {
    pub time_minutes: f64,
    pub lambda_nm: f64,
    pub sop: StokesVector,
    /// Largest pairwise great-circle separation across the sweep at this
    /// time step.
    pub spread_rad: f64,
}

/// Propagate polarized narrow slices across the configured wavelength range,
/// repeating after each drift interval.
pub fn polarimeter_sweep(cfg: &ScenarioConfig) -> Result<Vec<PolarimeterRow>> {
    cfg.validate()?;
    let p = cfg.polarimeter;
    let n_slices = ((p.lambda_max_nm - p.lambda_min_nm) / p.slice_width_nm).floor() as usize;
    if n_slices == 0 {
        return Err(Error::invalid("polarimeter range narrower than one slice"));
    }
    let lambda_c = 0.5 * (p.lambda_min_nm + p.lambda_max_nm);
    let input = StokesVector::diagonal(); // fixed polarizer before launch
    let mut realization = build_fiber(&cfg.fiber, mix(cfg.seed, &[tag::FIBER]))?;
    let mut rows = Vec::with_capacity(n_slices * p.time_steps.max(1));
    for step in 0..p.time_steps.max(1) {
        if step > 0 {
            realization = drift_step(&realization, p.step_minutes * 60.0, &cfg.fiber)?;
        }
        let time_minutes = step as f64 * p.step_minutes;
        let sops: Vec<(f64, StokesVector)> = (0..n_slices)
            .map(|i| {
                let lam = p.lambda_min_nm + (i as f64 + 0.5) * p.slice_width_nm;
                (lam, propagate(&input, &realization, lam, lambda_c))
            })
            .collect();
        let mut spread: f64 = 0.0;
        for i in 0..sops.len() {
            for j in i + 1..sops.len() {
                spread = spread.max(sops[i].1.angle_to(&sops[j].1));
            }
        }
        rows.extend(sops.into_iter().map(|(lam, sop)| PolarimeterRow {
            time_minutes,
            lambda_nm: lam,
            sop,
            spread_rad: spread,
        }));
    }
    Ok(rows)
}

pub fn polarimeter_to_csv(seed: u64, rows: &[PolarimeterRow]) -> String {
    let mut out = csv_metadata_line(seed);
    out.push('\n');
    out.push_str("time_min,lambda_nm,s1,s2,s3,spread_rad\n");
    for r in rows {
        out.push_str(&format!(
            "{:.3},{:.4},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            r.time_minutes, r.lambda_nm, r.sop.s1, r.sop.s2, r.sop.s3, r.spread_rad
        ));
    }
    out
}

/// Overlaid classical power traces folded onto a two-symbol window.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeDiagram {
    pub sample_dt_s: f64,
    pub samples_per_symbol: usize,
    /// Each trace holds `2 * samples_per_symbol` power samples.
    pub traces: Vec<Vec<f64>>,
}

impl EyeDiagram {
    /// Power samples taken at the center of each of the two symbols of every
    /// trace; these are the decision-point levels.
    pub fn mid_symbol_levels(&self) -> Vec<f64> {
        let spp = self.samples_per_symbol;
        self.traces
            .iter()
            .flat_map(|t| [t[spp / 2], t[spp + spp / 2]])
            .collect()
    }
}

/// Eye diagram through the scenario's own channel.
pub fn eye_diagram(cfg: &ScenarioConfig, basis: Basis, n_traces: usize) -> Result<EyeDiagram> {
    cfg.validate()?;
    let prep = prepare_channel(cfg)?;
    eye_with_channel(
        &cfg.encoder_spec(),
        &prep.operator,
        prep.transmittance,
        basis,
        cfg.measurement.alignment_error_rad,
        n_traces,
        mix(cfg.seed, &[tag::EYE]),
    )
}

/// Eye diagram against an explicit channel operator: random symbol sequences
/// through the drive waveform, per-sample analyzer-port power
/// `transmittance * (1 + S(t) . a) / 2`.
pub fn eye_with_channel(
    enc: &EncoderSpec,
    channel: &ChannelOperator,
    transmittance: f64,
    basis: Basis,
    alignment_error_rad: f64,
    n_traces: usize,
    seed: u64,
) -> Result<EyeDiagram> {
    if n_traces == 0 {
        return Err(Error::invalid("need at least one eye trace"));
    }
    enc.validate()?;
    let n_symbols = 2 * n_traces + 1; // one warmup symbol
    let alice = generate_alice(n_symbols, enc.symbol_rate_hz, 0, seed)?;
    let symbols: Vec<_> = alice
        .bits
        .iter()
        .zip(&alice.bases)
        .map(|(&bit, &basis)| encode_symbol(bit, basis))
        .collect();
    let wave = drive_waveform(&symbols, enc)?;
    let states = waveform_states(&wave, enc.balance_error)?;
    let axis = AnalyzerAxis::for_basis(basis).misaligned(alignment_error_rad);
    let powers: Vec<f64> = states
        .iter()
        .map(|s| transmittance * projection_probability(&channel.apply(s), &axis))
        .collect();
    let spp = enc.samples_per_symbol;
    let traces = (0..n_traces)
        .map(|t| {
            let start = (1 + 2 * t) * spp;
            powers[start..start + 2 * spp].to_vec()
        })
        .collect();
    Ok(EyeDiagram {
        sample_dt_s: 1.0 / (enc.symbol_rate_hz * spp as f64),
        samples_per_symbol: spp,
        traces,
    })
}

pub fn eye_to_csv(seed: u64, eye: &EyeDiagram) -> String {
    let mut out = csv_metadata_line(seed);
    out.push('\n');
    out.push_str("trace,sample,time_ns,power\n");
    for (ti, trace) in eye.traces.iter().enumerate() {
        for (si, p) in trace.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{:.6},{:.9e}\n",
                ti,
                si,
                si as f64 * eye.sample_dt_s * 1e9,
                p
            ));
        }
    }
    out
}

/// One calibration anchor: a scenario variation and the QBER it should hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTarget {
    pub delta_lambda_nm: f64,
    pub length_km: f64,
    pub target_qber: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRange {
    pub min_ps_sqrt_km: f64,
    pub max_ps_sqrt_km: f64,
    pub steps: usize,
}

/// Calibration request: a scenario template plus anchors and a PMD
/// coefficient search grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRequest {
    pub template: ScenarioConfig,
    pub targets: Vec<CalibrationTarget>,
    pub search: SearchRange,
    /// Fiber seeds averaged per grid point.
    #[serde(default = "default_calibration_seeds")]
    pub n_seeds: u64,
}

fn default_calibration_seeds() -> u64 {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub pmd_coeff_ps_sqrt_km: f64,
    /// Sum of squared residuals at the best grid point.
    pub objective: f64,
    /// Per-target (mean QBER - target) at the best grid point.
    pub residuals: Vec<f64>,
    pub search: SearchRange,
    pub n_seeds: u64,
}

impl CalibrationRequest {
    pub fn from_json(text: &str) -> Result<Self> {
        let req: CalibrationRequest =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(req)
    }
}

/// Mean analytic QBER of a target variation over the calibration seeds.
fn mean_target_qber(
    template: &ScenarioConfig,
    target: &CalibrationTarget,
    pmd: f64,
    n_seeds: u64,
) -> Result<f64> {
    let mut sum = 0.0;
    for s in 0..n_seeds.max(1) {
        let mut cfg = template.clone();
        cfg.mode = RunMode::Analytic;
        cfg.filter.delta_lambda_nm = target.delta_lambda_nm;
        cfg.fiber.length_km = target.length_km;
        cfg.fiber.pmd_coeff_ps_sqrt_km = pmd;
        cfg.seed = mix(template.seed, &[tag::CALIBRATION, s]);
        sum += run_scenario(&cfg)?.qber;
    }
    Ok(sum / n_seeds.max(1) as f64)
}

/// Grid search over the PMD coefficient minimizing the summed squared QBER
/// residuals of the anchors, each averaged over `n_seeds` fiber draws.
pub fn calibrate_fiber(req: &CalibrationRequest) -> Result<CalibrationOutcome> {
    if req.targets.is_empty() {
        return Err(Error::CalibrationFailed("no calibration targets".into()));
    }
    let g = &req.search;
    if g.steps == 0 || !(g.min_ps_sqrt_km >= 0.0) || g.max_ps_sqrt_km < g.min_ps_sqrt_km {
        return Err(Error::CalibrationFailed(format!(
            "degenerate search range [{}, {}] with {} steps",
            g.min_ps_sqrt_km, g.max_ps_sqrt_km, g.steps
        )));
    }
    req.template
        .validate()
        .map_err(|e| Error::CalibrationFailed(e.to_string()))?;
    let grid: Vec<f64> = (0..g.steps)
        .map(|k| {
            if g.steps == 1 {
                g.min_ps_sqrt_km
            } else {
                g.min_ps_sqrt_km
                    + k as f64 * (g.max_ps_sqrt_km - g.min_ps_sqrt_km) / (g.steps - 1) as f64
            }
        })
        .collect();
    let evaluated: Vec<(f64, f64, Vec<f64>)> = grid
        .par_iter()
        .map(|&pmd| {
            let mut residuals = Vec::with_capacity(req.targets.len());
            let mut objective = 0.0;
            for t in &req.targets {
                match mean_target_qber(&req.template, t, pmd, req.n_seeds) {
                    Ok(q) => {
                        let r = q - t.target_qber;
                        residuals.push(r);
                        objective += r * r;
                    }
                    Err(_) => {
                        residuals.push(f64::NAN);
                        objective = f64::NAN;
                    }
                }
            }
            (pmd, objective, residuals)
        })
        .collect();
    let best = evaluated
        .into_iter()
        .filter(|(_, obj, _)| obj.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| {
            Error::CalibrationFailed("no grid point produced a finite residual".into())
        })?;
    Ok(CalibrationOutcome {
        pmd_coeff_ps_sqrt_km: best.0,
        objective: best.1,
        residuals: best.2,
        search: *g,
        n_seeds: req.n_seeds,
    })
}
