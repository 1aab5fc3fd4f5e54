//! Alice-side state preparation.
//!
//! The transmitter modulates a single phase phi between the X and Y field
//! components, rotating the launched polarization along the S2/S3 plane:
//! `S = (0, cos phi, sin phi)` for a balanced modulator. The drive electronics
//! are modeled as a four-level DC-coupled staircase on the unwrapped levels
//! {0, pi/2, pi, 3pi/2} passed through a single-pole low-pass with the
//! electro-optic 3-dB bandwidth.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::{jones_to_stokes, Basis, JonesVector, StokesVector};

use std::f64::consts::PI;

/// The four BB84 state labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateLabel {
    /// Anti-diagonal, -45 deg.
    A,
    /// Diagonal, +45 deg.
    D,
    /// Right circular (s3 = +1 under the crate convention).
    R,
    /// Left circular.
    L,
}

/// One prepared BB84 symbol: (bit, basis) with its derived label and phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bb84Symbol {
    pub bit: bool,
    pub basis: Basis,
    pub label: StateLabel,
    /// Modulator phase, one of {0, pi/2, pi, 3pi/2}.
    pub phase: f64,
}

/// Electrical/electro-optic description of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub symbol_rate_hz: f64,
    /// 3-dB bandwidth of the phase section's electro-optic response.
    pub eo_bandwidth_hz: f64,
    /// X/Y power balance error; 0 means perfectly balanced DC biases.
    pub balance_error: f64,
    pub samples_per_symbol: usize,
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_rate_hz > 0.0) {
            return Err(Error::invalid("symbol rate must be > 0"));
        }
        if !(self.eo_bandwidth_hz > 0.0) {
            return Err(Error::invalid("EO bandwidth must be > 0"));
        }
        if self.samples_per_symbol < 1 {
            return Err(Error::invalid("samples per symbol must be >= 1"));
        }
        if !(-1.0..=1.0).contains(&self.balance_error) {
            return Err(Error::invalid("balance error must lie in [-1, 1]"));
        }
        Ok(())
    }
}

/// Deterministic (bit, basis) -> state mapping.
///
/// bit 0 maps to the positive basis axis (D, R), bit 1 to the negative (A, L).
pub fn encode_symbol(bit: bool, basis: Basis) -> Bb84Symbol {
    let (label, phase) = match (bit, basis) {
        (false, Basis::Diagonal) => (StateLabel::D, 0.0),
        (true, Basis::Diagonal) => (StateLabel::A, PI),
        (false, Basis::Circular) => (StateLabel::R, PI / 2.0),
        (true, Basis::Circular) => (StateLabel::L, 3.0 * PI / 2.0),
    };
    Bb84Symbol {
        bit,
        basis,
        label,
        phase,
    }
}

/// Launched polarization for a modulator phase and X/Y balance error `e`:
/// Jones `(sqrt(0.5 + e/2), sqrt(0.5 - e/2) * exp(i phi))`.
///
/// With `e = 0` this reduces to `S = (0, cos phi, sin phi)`.
pub fn phase_to_state(phase: f64, balance_error: f64) -> Result<StokesVector> {
    if !(-1.0..=1.0).contains(&balance_error) {
        return Err(Error::invalid("balance error must lie in [-1, 1]"));
    }
    let ax = (0.5 + balance_error / 2.0).sqrt();
    let ay = (0.5 - balance_error / 2.0).sqrt();
    let jones = JonesVector::new(Complex64::new(ax, 0.0), Complex64::from_polar(ay, phase))?;
    jones_to_stokes(&jones)
}

/// Launched state of a whole symbol.
pub fn launched_state(symbol: &Bb84Symbol, balance_error: f64) -> Result<StokesVector> {
    phase_to_state(symbol.phase, balance_error)
}

/// Sampled phase waveform phi(t) for a symbol sequence.
///
/// The ideal staircase of drive levels is convolved with a single-pole
/// low-pass whose 3-dB frequency equals the EO bandwidth; the filter starts in
/// steady state at the first symbol's level. Output has
/// `symbols.len() * samples_per_symbol` samples, sample i of symbol k taken at
/// `t = (k + i/spp) / symbol_rate`.
pub fn drive_waveform(symbols: &[Bb84Symbol], spec: &EncoderSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if symbols.is_empty() {
        return Err(Error::invalid("drive_waveform needs at least one symbol"));
    }
    let spp = spec.samples_per_symbol;
    let dt = 1.0 / (spec.symbol_rate_hz * spp as f64);
    let tau = 1.0 / (2.0 * PI * spec.eo_bandwidth_hz);
    // One-pole step response over a sample interval.
    let alpha = 1.0 - (-dt / tau).exp();
    let mut out = Vec::with_capacity(symbols.len() * spp);
    let mut y = symbols[0].phase;
    for symbol in symbols {
        let target = symbol.phase;
        for _ in 0..spp {
            y += alpha * (target - y);
            out.push(y);
        }
    }
    Ok(out)
}

/// Map a phase waveform to launched Stokes states sample by sample.
pub fn waveform_states(phases: &[f64], balance_error: f64) -> Result<Vec<StokesVector>> {
    phases
        .iter()
        .map(|&p| phase_to_state(p, balance_error))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::IDENTITY_TOL;

    #[test]
    fn encode_mapping_anchors() {
        let d = encode_symbol(false, Basis::Diagonal);
        assert_eq!(d.label, StateLabel::D);
        assert_eq!(d.phase, 0.0);
        let a = encode_symbol(true, Basis::Diagonal);
        assert_eq!(a.label, StateLabel::A);
        assert_eq!(a.phase, PI);
        let r = encode_symbol(false, Basis::Circular);
        assert_eq!(r.label, StateLabel::R);
        assert_eq!(r.phase, PI / 2.0);
        let l = encode_symbol(true, Basis::Circular);
        assert_eq!(l.label, StateLabel::L);
    }

    #[test]
    fn launched_states_match_convention() {
        let d = launched_state(&encode_symbol(false, Basis::Diagonal), 0.0).unwrap();
        assert!((d.s2 - 1.0).abs() < IDENTITY_TOL && d.s1.abs() < IDENTITY_TOL);
        let a = launched_state(&encode_symbol(true, Basis::Diagonal), 0.0).unwrap();
        assert!((a.s2 + 1.0).abs() < IDENTITY_TOL);
        let r = launched_state(&encode_symbol(false, Basis::Circular), 0.0).unwrap();
        assert!((r.s3 - 1.0).abs() < IDENTITY_TOL);
        let l = launched_state(&encode_symbol(true, Basis::Circular), 0.0).unwrap();
        assert!((l.s3 + 1.0).abs() < IDENTITY_TOL);
    }

    #[test]
    fn four_states_antipodal_within_basis_orthogonal_across() {
        let states: Vec<StokesVector> = [
            (false, Basis::Diagonal),
            (true, Basis::Diagonal),
            (false, Basis::Circular),
            (true, Basis::Circular),
        ]
        .iter()
        .map(|&(bit, basis)| launched_state(&encode_symbol(bit, basis), 0.0).unwrap())
        .collect();
        assert!((states[0].dot(&states[1]) + 1.0).abs() < IDENTITY_TOL);
        assert!((states[2].dot(&states[3]) + 1.0).abs() < IDENTITY_TOL);
        for i in 0..2 {
            for j in 2..4 {
                assert!(states[i].dot(&states[j]).abs() < IDENTITY_TOL);
            }
        }
        // All four live in the S2/S3 plane when balanced.
        assert!(states.iter().all(|s| s.s1.abs() < IDENTITY_TOL));
    }

    #[test]
    fn phase_to_state_balance_error() {
        // e = 0.2 at phi = 0: s1 = 0.2, s2 = sqrt(1 - 0.04), s3 = 0. Oracle:
        // direct Jones arithmetic.
        let s = phase_to_state(0.0, 0.2).unwrap();
        assert!((s.s1 - 0.2).abs() < IDENTITY_TOL);
        assert!((s.s2 - (1.0f64 - 0.04).sqrt()).abs() < IDENTITY_TOL);
        assert!(s.s3.abs() < IDENTITY_TOL);
        let ax: f64 = 0.6f64.sqrt();
        let ay: f64 = 0.4f64.sqrt();
        assert!((s.s2 - 2.0 * ax * ay).abs() < IDENTITY_TOL);
    }

    #[test]
    fn phase_to_state_anchors() {
        let a = phase_to_state(PI, 0.0).unwrap();
        assert!((a.s2 + 1.0).abs() < IDENTITY_TOL);
        let r = phase_to_state(PI / 2.0, 0.0).unwrap();
        assert!((r.s3 - 1.0).abs() < IDENTITY_TOL);
    }

    fn spec(rate: f64, bw: f64, spp: usize) -> EncoderSpec {
        EncoderSpec {
            symbol_rate_hz: rate,
            eo_bandwidth_hz: bw,
            balance_error: 0.0,
            samples_per_symbol: spp,
        }
    }

    #[test]
    fn constant_sequence_is_flat() {
        let symbols = vec![encode_symbol(false, Basis::Diagonal); 16];
        let wave = drive_waveform(&symbols, &spec(1e9, 920e6, 8)).unwrap();
        assert_eq!(wave.len(), 128);
        assert!(wave.iter().all(|&p| p.abs() < IDENTITY_TOL));
    }

    #[test]
    fn infinite_bandwidth_returns_staircase() {
        let symbols = vec![
            encode_symbol(false, Basis::Diagonal),
            encode_symbol(true, Basis::Diagonal),
            encode_symbol(false, Basis::Circular),
        ];
        let wave = drive_waveform(&symbols, &spec(1e9, 1e15, 4)).unwrap();
        for (i, &p) in wave.iter().enumerate() {
            let target = symbols[i / 4].phase;
            assert!((p - target).abs() < 1e-6, "sample {i}: {p} vs {target}");
        }
    }

    #[test]
    fn step_rise_time_matches_first_order_relation() {
        // 10-90% rise of a one-pole response is ln(9)/(2 pi f3dB) = 0.380 ns
        // at 920 MHz. Sample finely to resolve it.
        let symbols = vec![
            encode_symbol(false, Basis::Diagonal),
            encode_symbol(true, Basis::Diagonal),
            encode_symbol(true, Basis::Diagonal),
            encode_symbol(true, Basis::Diagonal),
        ];
        let spp = 1000;
        let rate = 1e9;
        let wave = drive_waveform(&symbols, &spec(rate, 920e6, spp)).unwrap();
        let dt = 1.0 / (rate * spp as f64);
        let step_start = spp; // beginning of the A symbol
        let crossing = |frac: f64| -> f64 {
            let target = frac * PI;
            for i in step_start..wave.len() - 1 {
                if wave[i] < target && wave[i + 1] >= target {
                    let t = (target - wave[i]) / (wave[i + 1] - wave[i]);
                    return (i as f64 + t - step_start as f64) * dt;
                }
            }
            panic!("crossing not reached");
        };
        let rise = crossing(0.9) - crossing(0.1);
        let expected = 9.0f64.ln() / (2.0 * PI * 920e6);
        assert!((expected - 0.380e-9).abs() < 1e-12);
        assert!((rise - expected).abs() < 5e-12, "rise {rise} vs {expected}");
    }

    #[test]
    fn waveform_is_shift_invariant() {
        let base: Vec<Bb84Symbol> = [
            (false, Basis::Circular),
            (true, Basis::Diagonal),
            (false, Basis::Diagonal),
            (true, Basis::Circular),
        ]
        .iter()
        .map(|&(b, ba)| encode_symbol(b, ba))
        .collect();
        let sp = spec(1e9, 920e6, 8);
        let wave = drive_waveform(&base, &sp).unwrap();
        // Prepend k repeats of the first symbol: output shifts by k*spp exactly.
        let k = 3;
        let mut shifted_in = vec![base[0]; k];
        shifted_in.extend_from_slice(&base);
        let shifted = drive_waveform(&shifted_in, &sp).unwrap();
        for (i, &p) in wave.iter().enumerate() {
            assert_eq!(p, shifted[i + k * 8], "sample {i}");
        }
    }

    #[test]
    fn mid_symbol_samples_settle_in_ideal_limit() {
        let symbols = vec![
            encode_symbol(false, Basis::Diagonal),
            encode_symbol(true, Basis::Diagonal),
        ];
        let wave = drive_waveform(&symbols, &spec(1e9, 1e15, 8)).unwrap();
        let mid = wave[8 + 4];
        assert!((mid - PI).abs() < 1e-6);
    }

    #[test]
    fn empty_sequence_rejected() {
        assert!(drive_waveform(&[], &spec(1e9, 920e6, 8)).is_err());
    }
}
