//! BB84 bookkeeping: Alice's random symbol stream, sifting, QBER estimation
//! and the secret-key feasibility gate.
//!
//! No error correction or privacy amplification is performed; the 11% QBER
//! limit only gates whether a secret key could still be distilled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{encode_symbol, StateLabel};
use crate::error::{Error, Result};
use crate::polarization::Basis;

/// Default QBER threshold below which secret-key generation is feasible.
pub const QBER_FEASIBILITY_THRESHOLD: f64 = 0.11;

/// Alice's transmitted sequence for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct AliceRecord {
    pub bits: Vec<bool>,
    pub bases: Vec<Basis>,
    pub labels: Vec<StateLabel>,
    pub symbol_rate_hz: f64,
    pub session_id: u32,
}

impl AliceRecord {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.symbol_rate_hz
    }
}

/// One basis-resolved detection outcome delivered by the receiver, already
/// reduced to at most one click per symbol (double-click symbols discarded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BobClick {
    pub symbol_index: usize,
    pub basis: Basis,
    pub bit: bool,
}

/// Basis-matched (index, alice bit, bob bit) triples.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftedKey {
    pub pairs: Vec<(usize, bool, bool)>,
    pub duration_s: f64,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn mismatches(&self) -> usize {
        self.pairs.iter().filter(|(_, a, b)| a != b).count()
    }

    /// Concatenate sessions; indices are offset so they stay strictly
    /// increasing.
    pub fn merged(sessions: &[SiftedKey]) -> SiftedKey {
        let mut pairs = Vec::new();
        let mut offset = 0usize;
        let mut duration = 0.0;
        for s in sessions {
            pairs.extend(s.pairs.iter().map(|&(i, a, b)| (i + offset, a, b)));
            offset += s.pairs.last().map(|&(i, _, _)| i + 1).unwrap_or(0);
            duration += s.duration_s;
        }
        SiftedKey {
            pairs,
            duration_s: duration,
        }
    }
}

/// QBER point estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QberEstimate {
    pub qber: f64,
    pub std_error: f64,
    pub sample_count: usize,
    pub raw_key_rate_bps: f64,
}

/// Draw Alice's i.i.d. uniform bits and bases; deterministic per seed.
pub fn generate_alice(
    n_symbols: usize,
    symbol_rate_hz: f64,
    session_id: u32,
    seed: u64,
) -> Result<AliceRecord> {
    if n_symbols == 0 {
        return Err(Error::invalid("need at least one symbol"));
    }
    if !(symbol_rate_hz > 0.0) {
        return Err(Error::invalid("symbol rate must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = Vec::with_capacity(n_symbols);
    let mut bases = Vec::with_capacity(n_symbols);
    let mut labels = Vec::with_capacity(n_symbols);
    for _ in 0..n_symbols {
        let bit = rng.gen::<bool>();
        let basis = if rng.gen::<bool>() {
            Basis::Diagonal
        } else {
            Basis::Circular
        };
        bits.push(bit);
        bases.push(basis);
        labels.push(encode_symbol(bit, basis).label);
    }
    Ok(AliceRecord {
        bits,
        bases,
        labels,
        symbol_rate_hz,
        session_id,
    })
}

/// Keep exactly the clicks whose measured basis matches Alice's basis.
pub fn sift(alice: &AliceRecord, clicks: &[BobClick]) -> Result<SiftedKey> {
    let mut pairs = Vec::new();
    let mut last_index: Option<usize> = None;
    let mut sorted: Vec<&BobClick> = clicks.iter().collect();
    sorted.sort_by_key(|c| c.symbol_index);
    for click in sorted {
        if click.symbol_index >= alice.len() {
            return Err(Error::invalid(format!(
                "click index {} beyond session length {}",
                click.symbol_index,
                alice.len()
            )));
        }
        if last_index == Some(click.symbol_index) {
            return Err(Error::invalid(
                "multiple clicks for one symbol; discard double clicks upstream",
            ));
        }
        last_index = Some(click.symbol_index);
        if alice.bases[click.symbol_index] == click.basis {
            pairs.push((
                click.symbol_index,
                alice.bits[click.symbol_index],
                click.bit,
            ));
        }
    }
    Ok(SiftedKey {
        pairs,
        duration_s: alice.duration_s(),
    })
}

/// QBER of a sifted key with binomial standard error and the raw-key rate
/// accounting identity `rate = samples / duration`.
pub fn qber(key: &SiftedKey) -> Result<QberEstimate> {
    let n = key.len();
    if n == 0 {
        return Err(Error::UndefinedEstimate(
            "QBER of an empty sifted key".into(),
        ));
    }
    let q = key.mismatches() as f64 / n as f64;
    Ok(QberEstimate {
        qber: q,
        std_error: (q * (1.0 - q) / n as f64).sqrt(),
        sample_count: n,
        raw_key_rate_bps: n as f64 / key.duration_s,
    })
}

/// Secret-key feasibility gate; the threshold comparison is inclusive.
pub fn secret_key_feasible(estimate: &QberEstimate, threshold: f64) -> bool {
    estimate.qber <= threshold
}

/// Serialize a sifted key: one `index<TAB>alice_bit<TAB>bob_bit` line per
/// pair, preceded by a `# duration_s <v>` header.
pub fn sifted_key_to_text(key: &SiftedKey) -> String {
    let mut out = format!("# duration_s {:.9e}\n", key.duration_s);
    for (i, a, b) in &key.pairs {
        out.push_str(&format!("{}\t{}\t{}\n", i, *a as u8, *b as u8));
    }
    out
}

/// Serialize a QBER estimate as a single
/// `qber<TAB>std_error<TAB>sample_count<TAB>raw_key_rate_bps` line.
pub fn qber_estimate_to_text(est: &QberEstimate) -> String {
    format!(
        "{:.9e}\t{:.9e}\t{}\t{:.9e}\n",
        est.qber, est.std_error, est.sample_count, est.raw_key_rate_bps
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn generate_is_deterministic() {
        let a = generate_alice(4, 1e9, 0, 99).unwrap();
        let b = generate_alice(4, 1e9, 0, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_alice(4, 1e9, 0, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn basis_frequencies_are_uniform() {
        let n = 1_000_000;
        let rec = generate_alice(n, 1e9, 0, 5).unwrap();
        let diag = rec.bases.iter().filter(|b| **b == Basis::Diagonal).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((diag - n as f64 / 2.0).abs() < 3.0 * sigma, "diag {diag}");
    }

    #[test]
    fn state_labels_are_uniform() {
        let n = 1_000_000;
        let rec = generate_alice(n, 1e9, 0, 6).unwrap();
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for label in [StateLabel::A, StateLabel::D, StateLabel::R, StateLabel::L] {
            let count = rec.labels.iter().filter(|l| **l == label).count() as f64;
            assert!(
                (count - n as f64 / 4.0).abs() < 3.0 * sigma,
                "{label:?}: {count}"
            );
        }
    }

    #[test]
    fn sift_keeps_matching_bases_only() {
        let alice = generate_alice(100, 1e9, 0, 1).unwrap();
        // All-matching clicks are all retained.
        let clicks: Vec<BobClick> = (0..100)
            .map(|i| BobClick {
                symbol_index: i,
                basis: alice.bases[i],
                bit: alice.bits[i],
            })
            .collect();
        let key = sift(&alice, &clicks).unwrap();
        assert_eq!(key.len(), 100);
        assert_eq!(key.mismatches(), 0);
        // All-mismatching clicks yield an empty key.
        let wrong: Vec<BobClick> = (0..100)
            .map(|i| BobClick {
                symbol_index: i,
                basis: alice.bases[i].other(),
                bit: false,
            })
            .collect();
        assert!(sift(&alice, &wrong).unwrap().is_empty());
    }

    #[test]
    fn sift_retention_is_binomial_half() {
        let n = 100_000;
        let alice = generate_alice(n, 1e9, 0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let clicks: Vec<BobClick> = (0..n)
            .map(|i| BobClick {
                symbol_index: i,
                basis: if rng.gen::<bool>() {
                    Basis::Diagonal
                } else {
                    Basis::Circular
                },
                bit: rng.gen(),
            })
            .collect();
        let key = sift(&alice, &clicks).unwrap();
        let expected = n as f64 / 2.0;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!(
            (key.len() as f64 - expected).abs() < 3.0 * sigma,
            "retained {}",
            key.len()
        );
    }

    #[test]
    fn sift_rejects_bad_input() {
        let alice = generate_alice(10, 1e9, 0, 1).unwrap();
        let out_of_range = [BobClick {
            symbol_index: 10,
            basis: Basis::Diagonal,
            bit: false,
        }];
        assert!(sift(&alice, &out_of_range).is_err());
        let duplicated = [
            BobClick {
                symbol_index: 3,
                basis: Basis::Diagonal,
                bit: false,
            },
            BobClick {
                symbol_index: 3,
                basis: Basis::Circular,
                bit: true,
            },
        ];
        assert!(sift(&alice, &duplicated).is_err());
    }

    #[test]
    fn sift_is_idempotent_on_its_output() {
        let alice = generate_alice(1000, 1e9, 0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut clicks: Vec<BobClick> = Vec::new();
        for i in 0..1000 {
            if rng.gen::<f64>() < 0.3 {
                clicks.push(BobClick {
                    symbol_index: i,
                    basis: if rng.gen() {
                        Basis::Diagonal
                    } else {
                        Basis::Circular
                    },
                    bit: rng.gen(),
                });
            }
        }
        let key = sift(&alice, &clicks).unwrap();
        // Re-sift the retained clicks: identical outcome.
        let retained: Vec<BobClick> = key
            .pairs
            .iter()
            .map(|&(i, _, b)| BobClick {
                symbol_index: i,
                basis: alice.bases[i],
                bit: b,
            })
            .collect();
        let again = sift(&alice, &retained).unwrap();
        assert_eq!(key, again);
    }

    #[test]
    fn qber_examples() {
        // 1047 mismatches in 10000 sifted bits over one second.
        let key = SiftedKey {
            pairs: (0..10_000).map(|i| (i, true, i >= 1047)).collect(),
            duration_s: 1.0,
        };
        let est = qber(&key).unwrap();
        assert!((est.qber - 0.1047).abs() < 1e-12);
        assert!((est.raw_key_rate_bps - 10_000.0).abs() < 1e-9);
        assert!((est.std_error - (0.1047f64 * 0.8953 / 10_000.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn qber_zero_mismatch() {
        let key = SiftedKey {
            pairs: vec![(0, true, true), (1, false, false)],
            duration_s: 2.0,
        };
        let est = qber(&key).unwrap();
        assert_eq!(est.qber, 0.0);
        assert_eq!(est.raw_key_rate_bps, 1.0);
    }

    #[test]
    fn qber_dark_only_is_half() {
        let n = 100_000;
        let alice = generate_alice(n, 1e9, 0, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Dark clicks: random bits, random measured bases.
        let clicks: Vec<BobClick> = (0..n)
            .map(|i| BobClick {
                symbol_index: i,
                basis: if rng.gen() {
                    Basis::Diagonal
                } else {
                    Basis::Circular
                },
                bit: rng.gen(),
            })
            .collect();
        let key = sift(&alice, &clicks).unwrap();
        let est = qber(&key).unwrap();
        let sigma = (0.25 / key.len() as f64).sqrt();
        assert!((est.qber - 0.5).abs() < 3.0 * sigma, "qber {}", est.qber);
    }

    #[test]
    fn qber_empty_key_is_undefined() {
        let key = SiftedKey {
            pairs: vec![],
            duration_s: 1.0,
        };
        assert!(qber(&key).is_err());
    }

    #[test]
    fn qber_invariant_under_joint_relabeling() {
        let key = SiftedKey {
            pairs: vec![(0, true, false), (1, false, false), (2, true, true)],
            duration_s: 1.0,
        };
        let flipped = SiftedKey {
            pairs: key.pairs.iter().map(|&(i, a, b)| (i, !a, !b)).collect(),
            duration_s: 1.0,
        };
        assert_eq!(qber(&key).unwrap().qber, qber(&flipped).unwrap().qber);
    }

    #[test]
    fn sifted_alice_bits_stay_uniform() {
        let n = 100_000;
        let alice = generate_alice(n, 1e9, 0, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let clicks: Vec<BobClick> = (0..n)
            .map(|i| BobClick {
                symbol_index: i,
                basis: if rng.gen() {
                    Basis::Diagonal
                } else {
                    Basis::Circular
                },
                bit: rng.gen(),
            })
            .collect();
        let key = sift(&alice, &clicks).unwrap();
        let ones = key.pairs.iter().filter(|(_, a, _)| *a).count() as f64;
        let m = key.len() as f64;
        assert!((ones - m / 2.0).abs() < 3.0 * (m * 0.25).sqrt());
    }

    #[test]
    fn feasibility_gate_boundary() {
        let mk = |q: f64| QberEstimate {
            qber: q,
            std_error: 0.0,
            sample_count: 10_000,
            raw_key_rate_bps: 1000.0,
        };
        assert!(secret_key_feasible(&mk(0.1047), QBER_FEASIBILITY_THRESHOLD));
        assert!(secret_key_feasible(&mk(0.11), QBER_FEASIBILITY_THRESHOLD));
        assert!(!secret_key_feasible(&mk(0.25), QBER_FEASIBILITY_THRESHOLD));
    }

    #[test]
    fn text_formats() {
        let key = SiftedKey {
            pairs: vec![(3, true, false), (7, false, false)],
            duration_s: 0.5,
        };
        let text = sifted_key_to_text(&key);
        assert!(text.starts_with("# duration_s"));
        assert!(text.contains("3\t1\t0\n"));
        assert!(text.contains("7\t0\t0\n"));
        let est = qber(&key).unwrap();
        let line = qber_estimate_to_text(&est);
        assert!(line.contains('\t'));
        assert!(line.contains(&format!("{}", est.sample_count)));
    }

    #[test]
    fn merged_sessions_keep_indices_increasing() {
        let a = SiftedKey {
            pairs: vec![(2, true, true), (9, false, true)],
            duration_s: 1.0,
        };
        let b = SiftedKey {
            pairs: vec![(0, true, false), (4, false, false)],
            duration_s: 2.0,
        };
        let merged = SiftedKey::merged(&[a, b.clone()]);
        assert_eq!(merged.len(), 4);
        assert!((merged.duration_s - 3.0).abs() < 1e-12);
        for pair in merged.pairs.windows(2) {
            assert!(pair[1].0 > pair[0].0, "indices not increasing: {merged:?}");
        }
        assert_eq!(merged.mismatches(), 1 + b.mismatches());
        // Merging with an empty session changes nothing but the duration.
        let empty = SiftedKey {
            pairs: vec![],
            duration_s: 0.5,
        };
        let with_empty = SiftedKey::merged(&[empty, b.clone()]);
        assert_eq!(with_empty.pairs, b.pairs);
    }
}
