//! Birefringent-segment model of the transmission fiber.
//!
//! The fiber is a cascade of waveplates with random axes. Each segment
//! rotates the Stokes vector about its axis by a frequency-offset-dependent
//! angle `theta_i = 2 pi c dgd_i (1/lambda - 1/lambda_c) + psi_i`, so a
//! broadband input acquires wavelength-dependent SOPs whose spectral average
//! is partially depolarized.
//!
//! DGD bookkeeping uses two regimes split at the birefringence correlation
//! length `h`:
//! - `L <= h`: one deterministic segment with `dgd = beta1 * L`,
//!   `beta1 = D * sqrt(3 pi / 8) / sqrt(h)`;
//! - `L > h`: `ceil(L/h)` segments of fixed per-segment magnitude
//!   `D * sqrt(3 pi / 8) * sqrt(h)` (partial tail scaled linearly) with
//!   independent uniform axes. The `sqrt(3 pi / 8)` factor makes the
//!   ensemble-mean magnitude of the measured PMD vector equal `D * sqrt(L)`
//!   for long fibers (Maxwellian |tau| has mean `sqrt(8/(3 pi))` of its RMS).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::SPEED_OF_LIGHT;
use crate::error::{Error, Result};
use crate::polarization::{ensemble_average, StokesVector};

use std::f64::consts::PI;

/// Mean-of-Maxwellian shape factor sqrt(3 pi / 8).
const MAXWELL_MEAN_FACTOR: f64 = 1.085_401_672_936_93;

/// Static description of a fiber span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpec {
    pub length_km: f64,
    pub pmd_coeff_ps_sqrt_km: f64,
    /// Birefringence correlation length h.
    #[serde(default = "default_corr_length_km")]
    pub corr_length_km: f64,
    #[serde(default = "default_attenuation")]
    pub attenuation_db_per_km: f64,
    /// Deployed spans drift faster than spooled ones; informational except
    /// through the drift rate below.
    #[serde(default)]
    pub deployed: bool,
    #[serde(default)]
    pub drift_rate_rad_per_sqrt_hour: f64,
}

fn default_corr_length_km() -> f64 {
    0.1
}

fn default_attenuation() -> f64 {
    0.2
}

impl FiberSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length_km < 0.0 {
            return Err(Error::invalid("fiber length must be >= 0"));
        }
        if self.pmd_coeff_ps_sqrt_km < 0.0 {
            return Err(Error::invalid("PMD coefficient must be >= 0"));
        }
        if !(self.corr_length_km > 0.0) {
            return Err(Error::invalid("correlation length must be > 0"));
        }
        if self.attenuation_db_per_km < 0.0 {
            return Err(Error::invalid("attenuation must be >= 0"));
        }
        if self.drift_rate_rad_per_sqrt_hour < 0.0 {
            return Err(Error::invalid("drift rate must be >= 0"));
        }
        Ok(())
    }
}

/// One birefringent element of the cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub dgd_ps: f64,
    pub axis: StokesVector,
    pub static_phase: f64,
}

/// A frozen draw of the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberRealization {
    segments: Vec<Segment>,
    seed: u64,
    drift_epoch: u64,
}

impl FiberRealization {
    /// Build directly from segments; used by tests and synthetic channels.
    pub fn from_segments(segments: Vec<Segment>, seed: u64) -> Self {
        Self {
            segments,
            seed,
            drift_epoch: 0,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Scalar sum of per-segment DGD magnitudes.
    pub fn total_dgd_ps(&self) -> f64 {
        self.segments.iter().map(|s| s.dgd_ps).sum()
    }
}

fn uniform_axis(rng: &mut impl Rng) -> StokesVector {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    StokesVector::raw(r * phi.cos(), r * phi.sin(), z)
}

/// Draw a seeded channel realization for a fiber spec.
pub fn build_fiber(spec: &FiberSpec, seed: u64) -> Result<FiberRealization> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = spec.corr_length_km;
    let length = spec.length_km;
    if length == 0.0 {
        return Ok(FiberRealization::from_segments(
            vec![Segment {
                dgd_ps: 0.0,
                axis: StokesVector::raw(1.0, 0.0, 0.0),
                static_phase: 0.0,
            }],
            seed,
        ));
    }
    let dgd_per_full_segment = spec.pmd_coeff_ps_sqrt_km * MAXWELL_MEAN_FACTOR * h.sqrt();
    let n = (length / h).ceil().max(1.0) as usize;
    let mut segments = Vec::with_capacity(n);
    for i in 0..n {
        let seg_len = (length - i as f64 * h).min(h);
        let axis = uniform_axis(&mut rng);
        let static_phase = rng.gen_range(0.0..2.0 * PI);
        segments.push(Segment {
            dgd_ps: dgd_per_full_segment * (seg_len / h),
            axis,
            static_phase,
        });
    }
    Ok(FiberRealization::from_segments(segments, seed))
}

/// Segment rotation angle at a wavelength, relative to the band center.
fn segment_angle(segment: &Segment, lambda_nm: f64, lambda_c_nm: f64) -> f64 {
    let inv_diff = 1.0 / (lambda_nm * 1e-9) - 1.0 / (lambda_c_nm * 1e-9);
    2.0 * PI * SPEED_OF_LIGHT * segment.dgd_ps * 1e-12 * inv_diff + segment.static_phase
}

/// Propagate a pure spectral-slice state through the cascade.
///
/// Rotations are orthogonal, so the Stokes length is preserved per slice.
pub fn propagate(
    state: &StokesVector,
    realization: &FiberRealization,
    lambda_nm: f64,
    lambda_c_nm: f64,
) -> StokesVector {
    let mut s = *state;
    for segment in realization.segments() {
        let theta = segment_angle(segment, lambda_nm, lambda_c_nm);
        s = s.rotated_about(&segment.axis, theta);
    }
    s
}

/// Propagate every spectral slice and return the weighted mean Stokes vector;
/// its length is the degree of polarization at the fiber output.
///
/// The band-center wavelength is the weighted centroid of the slices.
pub fn channel_output(
    input: &StokesVector,
    slices: &[(f64, f64)],
    realization: &FiberRealization,
) -> Result<StokesVector> {
    if slices.is_empty() {
        return Err(Error::invalid("channel_output needs at least one slice"));
    }
    let total: f64 = slices.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(Error::invalid("slice weights must have positive sum"));
    }
    let lambda_c = slices.iter().map(|(l, w)| l * w).sum::<f64>() / total;
    let propagated: Vec<(f64, StokesVector)> = slices
        .iter()
        .map(|&(lam, w)| (w, propagate(input, realization, lam, lambda_c)))
        .collect();
    ensemble_average(&propagated)
}

/// Random-walk perturbation of the segment axes over a time interval.
///
/// Each axis moves along a random great-circle tangent by an angle drawn from
/// `Normal(0, drift_rate * sqrt(dt_hours))`. `dt = 0` or zero drift rate
/// return the realization unchanged; otherwise the result is deterministic in
/// (seed, drift epoch).
pub fn drift_step(
    realization: &FiberRealization,
    dt_s: f64,
    spec: &FiberSpec,
) -> Result<FiberRealization> {
    if dt_s < 0.0 {
        return Err(Error::invalid("drift interval must be >= 0"));
    }
    let sigma = spec.drift_rate_rad_per_sqrt_hour * (dt_s / 3600.0).sqrt();
    if sigma == 0.0 {
        return Ok(realization.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::mix(
        realization.seed,
        &[crate::seed::tag::DRIFT, realization.drift_epoch],
    ));
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let segments = realization
        .segments()
        .iter()
        .map(|seg| {
            // Random tangent direction perpendicular to the axis.
            let mut t = uniform_axis(&mut rng);
            let mut perp = t.add(&seg.axis.scaled(-t.dot(&seg.axis)));
            while perp.length() < 1e-9 {
                t = uniform_axis(&mut rng);
                perp = t.add(&seg.axis.scaled(-t.dot(&seg.axis)));
            }
            let tangent = perp.normalized().expect("non-zero tangent");
            let angle = normal.sample(&mut rng);
            let axis = seg
                .axis
                .scaled(angle.cos())
                .add(&tangent.scaled(angle.sin()));
            Segment {
                dgd_ps: seg.dgd_ps,
                axis,
                static_phase: seg.static_phase,
            }
        })
        .collect();
    Ok(FiberRealization {
        segments,
        seed: realization.seed,
        drift_epoch: realization.drift_epoch + 1,
    })
}

/// End-to-end power transmittance of the span plus an extra optical budget.
///
/// Negative budgets model launching more than the nominal photon number.
pub fn transmittance(spec: &FiberSpec, extra_budget_db: f64) -> f64 {
    let loss_db = spec.attenuation_db_per_km * spec.length_km + extra_budget_db;
    10f64.powf(-loss_db / 10.0)
}

/// Spectrum-averaged linear action of the channel on Stokes space, with the
/// receiver alignment folded in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelOperator {
    m: nalgebra::Matrix3<f64>,
}

impl ChannelOperator {
    /// Average the per-slice rotation matrices of a realization.
    pub fn from_realization(realization: &FiberRealization, slices: &[(f64, f64)]) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::invalid("channel operator needs at least one slice"));
        }
        let total: f64 = slices.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(Error::invalid("slice weights must have positive sum"));
        }
        let lambda_c = slices.iter().map(|(l, w)| l * w).sum::<f64>() / total;
        let basis = [
            StokesVector::raw(1.0, 0.0, 0.0),
            StokesVector::raw(0.0, 1.0, 0.0),
            StokesVector::raw(0.0, 0.0, 1.0),
        ];
        let mut m = nalgebra::Matrix3::<f64>::zeros();
        for &(lam, w) in slices {
            for (col, b) in basis.iter().enumerate() {
                let out = propagate(b, realization, lam, lambda_c);
                m[(0, col)] += w / total * out.s1;
                m[(1, col)] += w / total * out.s2;
                m[(2, col)] += w / total * out.s3;
            }
        }
        Ok(Self { m })
    }

    /// Identity channel scaled by a uniform depolarization factor.
    pub fn isotropic(dop: f64) -> Self {
        Self {
            m: nalgebra::Matrix3::identity() * dop,
        }
    }

    pub fn apply(&self, s: &StokesVector) -> StokesVector {
        let v = self.m * nalgebra::Vector3::new(s.s1, s.s2, s.s3);
        StokesVector::raw(v[0], v[1], v[2])
    }

    /// Best-fit rotation mapping the channel output frame back onto the
    /// launch frame (orthogonal Procrustes with a proper-rotation constraint):
    /// the ideal manual polarization controller at session start.
    pub fn alignment_rotation(&self) -> nalgebra::Matrix3<f64> {
        let svd = self.m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let v = v_t.transpose();
        let det = (v * u.transpose()).determinant();
        let correction =
            nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, det.signum()));
        v * correction * u.transpose()
    }

    /// Channel with the alignment rotation applied at the output.
    pub fn aligned(&self) -> Self {
        Self {
            m: self.alignment_rotation() * self.m,
        }
    }
}
