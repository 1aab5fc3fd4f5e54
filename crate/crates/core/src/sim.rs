//! Monte Carlo session engine.
//!
//! A session plays Alice's random symbol stream against the receiver at the
//! time-tag level: per symbol a Poisson photon number arrives at the
//! clock-recovered sampling instant (mid-symbol), each photon picks an
//! analyzer port from the received mean state of its symbol, SPADs apply
//! efficiency, jitter, dark counts and dead time, and the surviving tags are
//! paired back to symbols for sifting. Symbols with more than one surviving
//! click are discarded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use std::collections::HashMap;

use crate::error::Result;
use crate::polarization::{Basis, StokesVector};
use crate::protocol::{generate_alice, sift, BobClick, SiftedKey};
use crate::receiver::{analyze, spad_detect, temporal_filter, Arrival, SpadParams, TagOrigin};
use crate::scenario::DetectorCounts;

fn basis_index(basis: Basis) -> usize {
    match basis {
        Basis::Diagonal => 0,
        Basis::Circular => 1,
    }
}

/// Everything one simulated session needs.
#[derive(Debug, Clone, Copy)]
pub struct SessionSetup<'a> {
    pub n_symbols: usize,
    pub symbol_rate_hz: f64,
    /// Mean photons per symbol reaching the analyzer (mu at Alice times the
    /// channel transmittance); detector efficiency is applied by the SPADs.
    pub mu_at_analyzer: f64,
    /// Received mean states indexed `[basis][bit]`.
    pub received: &'a [[StokesVector; 2]; 2],
    pub spad: &'a SpadParams,
    pub filter_fraction: f64,
    pub alignment_error_rad: f64,
}

/// Tag-level outcome of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub sifted: SiftedKey,
    /// Accepted clicks (post dead time, pre temporal filter) per detector.
    pub detectors: Vec<DetectorCounts>,
    pub double_click_symbols: u64,
}

/// Receiver topology of a session: either both ports of one fixed basis, or
/// four detectors behind a passive 50/50 basis splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Topology {
    TwoDetector(Basis),
    FourDetector,
}

impl Topology {
    fn n_detectors(&self) -> usize {
        match self {
            Topology::TwoDetector(_) => 2,
            Topology::FourDetector => 4,
        }
    }

    /// (measured basis, bob bit) encoded by a detector index.
    fn outcome(&self, det: usize) -> (Basis, bool) {
        match self {
            Topology::TwoDetector(basis) => (*basis, det == 1),
            Topology::FourDetector => {
                let basis = if det / 2 == 0 {
                    Basis::Diagonal
                } else {
                    Basis::Circular
                };
                (basis, det % 2 == 1)
            }
        }
    }
}

/// Run a two-detector session with the analyzer fixed to one basis.
pub fn run_two_detector_session(
    setup: &SessionSetup,
    session_basis: Basis,
    session_id: u32,
    seed: u64,
) -> Result<SessionOutcome> {
    run_session(
        setup,
        Topology::TwoDetector(session_basis),
        session_id,
        seed,
    )
}

/// Run a four-detector session: each photon takes a 50/50 basis path, then a
/// port inside that basis. Detector index is `2*basis + port`.
pub fn run_four_detector_session(
    setup: &SessionSetup,
    session_id: u32,
    seed: u64,
) -> Result<SessionOutcome> {
    run_session(setup, Topology::FourDetector, session_id, seed)
}

fn run_session(
    setup: &SessionSetup,
    topology: Topology,
    session_id: u32,
    seed: u64,
) -> Result<SessionOutcome> {
    // Port-0 probability per (measured basis, alice basis, alice bit).
    let mut p0 = [[[0.0f64; 2]; 2]; 2];
    for (mi, measured) in [Basis::Diagonal, Basis::Circular].iter().enumerate() {
        for (b, row) in setup.received.iter().enumerate() {
            for (bit, state) in row.iter().enumerate() {
                p0[mi][b][bit] = analyze(state, *measured, setup.alignment_error_rad).0;
            }
        }
    }
    let alice = generate_alice(
        setup.n_symbols,
        setup.symbol_rate_hz,
        session_id,
        crate::seed::mix(seed, &[0]),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::mix(seed, &[1]));
    let spad_seed = crate::seed::mix(seed, &[2]);
    let n_detectors = topology.n_detectors();
    let period_ps = 1e12 / setup.symbol_rate_hz;
    let duration_s = setup.n_symbols as f64 / setup.symbol_rate_hz;

    // Photon arrivals at the mid-symbol sampling instant.
    let mut arrivals: Vec<Arrival> = Vec::new();
    if setup.mu_at_analyzer > 0.0 {
        let poisson = Poisson::new(setup.mu_at_analyzer)
            .map_err(|e| crate::error::Error::invalid(e.to_string()))?;
        for i in 0..setup.n_symbols {
            let count = poisson.sample(&mut rng) as usize;
            if count == 0 {
                continue;
            }
            let t = (i as f64 + 0.5) * period_ps;
            let (ab, abit) = (basis_index(alice.bases[i]), usize::from(alice.bits[i]));
            for _ in 0..count {
                let mi = match topology {
                    Topology::TwoDetector(basis) => basis_index(basis),
                    Topology::FourDetector => usize::from(rng.gen::<bool>()),
                };
                let port = usize::from(rng.gen::<f64>() >= p0[mi][ab][abit]);
                let det = match topology {
                    Topology::TwoDetector(_) => port,
                    Topology::FourDetector => 2 * mi + port,
                };
                arrivals.push(Arrival {
                    time_ps: t,
                    detector: det,
                    click_probability: 1.0,
                });
            }
        }
    }
    let tags = spad_detect(&arrivals, n_detectors, setup.spad, duration_s, spad_seed)?;

    let mut detectors = vec![DetectorCounts::default(); n_detectors];
    for t in &tags {
        detectors[t.detector].clicks += 1.0;
        if t.origin == TagOrigin::Dark {
            detectors[t.detector].dark += 1.0;
        }
    }

    let kept = temporal_filter(&tags, period_ps, setup.filter_fraction)?;

    // Pair surviving tags back to symbols; clicks are sparse, so a map keyed
    // by symbol index is enough.
    let mut per_symbol: HashMap<usize, (usize, usize)> = HashMap::new(); // index -> (count, detector)
    for t in &kept {
        let idx = (t.time_ps / period_ps).floor();
        if idx < 0.0 || idx >= setup.n_symbols as f64 {
            continue; // jittered outside the session
        }
        let entry = per_symbol.entry(idx as usize).or_insert((0, t.detector));
        entry.0 += 1;
        entry.1 = t.detector;
    }
    let mut double_click_symbols = 0u64;
    let mut clicks: Vec<BobClick> = Vec::new();
    let mut indices: Vec<usize> = per_symbol.keys().copied().collect();
    indices.sort_unstable();
    for idx in indices {
        let (count, det) = per_symbol[&idx];
        if count > 1 {
            double_click_symbols += 1;
            continue;
        }
        let (measured, bit) = topology.outcome(det);
        clicks.push(BobClick {
            symbol_index: idx,
            basis: measured,
            bit,
        });
    }
    let sifted = sift(&alice, &clicks)?;
    Ok(SessionOutcome {
        sifted,
        detectors,
        double_click_symbols,
    })
}
