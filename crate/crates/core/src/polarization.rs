//! Stokes/Jones polarization algebra.
//!
//! Reduced (unit-normalized) Stokes vectors are used throughout the crate;
//! optical power is tracked separately as a scalar transmittance. Pure states
//! have unit length, partially polarized states live inside the unit sphere
//! and the fully depolarized state is the origin.
//!
//! Conventions (fixed once, here):
//! - `s1 = +1` is horizontal, `s2 = +1` is the diagonal state D (+45°),
//!   `s3 = +1` is labeled R (right circular); `s3 = -1` is L. All observable
//!   quantities are invariant under the opposite circular labeling.
//! - `jones_to_stokes` uses `s1 = (|ex|^2 - |ey|^2)/P`,
//!   `s2 = 2 Re(ex* ey)/P`, `s3 = 2 Im(ex* ey)/P` with `P = |ex|^2 + |ey|^2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::CONSTRUCTION_TOL;
use crate::error::{Error, Result};

/// Complex field amplitudes on the X and Y polarization axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub ex: Complex64,
    pub ey: Complex64,
}

impl JonesVector {
    /// Build a Jones vector; rejects the zero vector.
    pub fn new(ex: Complex64, ey: Complex64) -> Result<Self> {
        let norm = ex.norm_sqr() + ey.norm_sqr();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::invalid("Jones vector must have positive norm"));
        }
        Ok(Self { ex, ey })
    }

    /// Total optical power carried by the two field components.
    pub fn power(&self) -> f64 {
        self.ex.norm_sqr() + self.ey.norm_sqr()
    }

    /// Unit-power copy.
    pub fn normalized(&self) -> Self {
        let p = self.power().sqrt();
        Self {
            ex: self.ex / p,
            ey: self.ey / p,
        }
    }
}

/// Reduced Stokes triple (S0 normalized out).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    /// Construct a reduced Stokes vector; length may be sub-unit (partial
    /// polarization) but never more than 1 + 1e-9.
    pub fn new(s1: f64, s2: f64, s3: f64) -> Result<Self> {
        let v = Self { s1, s2, s3 };
        let len = v.length();
        if !len.is_finite() {
            return Err(Error::invalid("Stokes components must be finite"));
        }
        if len > 1.0 + CONSTRUCTION_TOL {
            return Err(Error::invalid(format!(
                "Stokes vector length {len} exceeds 1"
            )));
        }
        Ok(v)
    }

    /// Construct without the length check. For internal intermediates only
    /// (e.g. weighted sums before normalization).
    pub(crate) fn raw(s1: f64, s2: f64, s3: f64) -> Self {
        Self { s1, s2, s3 }
    }

    pub fn zero() -> Self {
        Self::raw(0.0, 0.0, 0.0)
    }

    /// The diagonal state D (+45°).
    pub fn diagonal() -> Self {
        Self::raw(0.0, 1.0, 0.0)
    }

    /// The anti-diagonal state A (-45°).
    pub fn anti_diagonal() -> Self {
        Self::raw(0.0, -1.0, 0.0)
    }

    /// Right circular (s3 = +1 under the crate convention).
    pub fn right_circular() -> Self {
        Self::raw(0.0, 0.0, 1.0)
    }

    /// Left circular.
    pub fn left_circular() -> Self {
        Self::raw(0.0, 0.0, -1.0)
    }

    pub fn length(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.s1 * other.s1 + self.s2 * other.s2 + self.s3 * other.s3
    }

    pub fn cross(&self, other: &Self) -> Self {
        Self::raw(
            self.s2 * other.s3 - self.s3 * other.s2,
            self.s3 * other.s1 - self.s1 * other.s3,
            self.s1 * other.s2 - self.s2 * other.s1,
        )
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::raw(self.s1 * k, self.s2 * k, self.s3 * k)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::raw(self.s1 + other.s1, self.s2 + other.s2, self.s3 + other.s3)
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    /// Unit-length copy; errors on (near-)zero vectors.
    pub fn normalized(&self) -> Result<Self> {
        let len = self.length();
        if len < 1e-300 {
            return Err(Error::invalid("cannot normalize a zero Stokes vector"));
        }
        Ok(self.scaled(1.0 / len))
    }

    /// Rotate about `axis` (unit length) by `angle` radians, right-hand rule.
    ///
    /// The global handedness choice is immaterial for every observable in the
    /// crate; it is fixed here so realizations are reproducible.
    pub fn rotated_about(&self, axis: &StokesVector, angle: f64) -> Self {
        let (sin, cos) = angle.sin_cos();
        let cross = axis.cross(self);
        let dot = axis.dot(self);
        self.scaled(cos)
            .add(&cross.scaled(sin))
            .add(&axis.scaled(dot * (1.0 - cos)))
    }

    /// Great-circle (angular) distance to another vector, both treated as
    /// directions.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let denom = self.length() * other.length();
        if denom < 1e-300 {
            return 0.0;
        }
        (self.dot(other) / denom).clamp(-1.0, 1.0).acos()
    }
}

/// The two BB84 bases used by the modulator and the analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Diagonal,
    Circular,
}

impl Basis {
    /// Unit Stokes axis of the basis' bit-0 state.
    pub fn axis(&self) -> StokesVector {
        match self {
            Basis::Diagonal => StokesVector::diagonal(),
            Basis::Circular => StokesVector::right_circular(),
        }
    }

    pub fn other(&self) -> Basis {
        match self {
            Basis::Diagonal => Basis::Circular,
            Basis::Circular => Basis::Diagonal,
        }
    }
}

/// A unit analyzer axis tagged with its basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerAxis {
    axis: StokesVector,
    basis: Basis,
}

impl AnalyzerAxis {
    /// Build from an explicit axis; must be unit length within 1e-9.
    pub fn new(axis: StokesVector, basis: Basis) -> Result<Self> {
        if (axis.length() - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(Error::invalid("analyzer axis must be unit length"));
        }
        Ok(Self { axis, basis })
    }

    /// Canonical axis of a basis (bit-0 port direction).
    pub fn for_basis(basis: Basis) -> Self {
        Self {
            axis: basis.axis(),
            basis,
        }
    }

    pub fn axis(&self) -> StokesVector {
        self.axis
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// The opposite port of the same analyzer.
    pub fn negated(&self) -> Self {
        Self {
            axis: self.axis.negated(),
            basis: self.basis,
        }
    }

    /// Axis rotated about S1 by a small alignment error angle.
    pub fn misaligned(&self, error_rad: f64) -> Self {
        Self {
            axis: self
                .axis
                .rotated_about(&StokesVector::raw(1.0, 0.0, 0.0), error_rad),
            basis: self.basis,
        }
    }
}

/// Convert a Jones vector to its reduced Stokes triple.
///
/// Pure states map to unit-length vectors within 1e-12.
pub fn jones_to_stokes(j: &JonesVector) -> Result<StokesVector> {
    let p = j.power();
    if p <= 0.0 || !p.is_finite() {
        return Err(Error::invalid("zero-norm Jones vector"));
    }
    let cross = j.ex.conj() * j.ey;
    Ok(StokesVector::raw(
        (j.ex.norm_sqr() - j.ey.norm_sqr()) / p,
        2.0 * cross.re / p,
        2.0 * cross.im / p,
    ))
}

/// Degree of polarization: the length of the reduced Stokes vector, clamped
/// to [0, 1].
pub fn dop(s: &StokesVector) -> f64 {
    s.length().clamp(0.0, 1.0)
}

/// Weighted incoherent average of an ensemble of Stokes vectors.
///
/// This is the mechanism by which a broadband source depolarizes: spectral
/// slices acquire different SOPs and their weighted mean shrinks below unit
/// length.
pub fn ensemble_average(states: &[(f64, StokesVector)]) -> Result<StokesVector> {
    let mut sum = StokesVector::zero();
    let mut total = 0.0;
    for (w, s) in states {
        if *w < 0.0 || !w.is_finite() {
            return Err(Error::invalid("ensemble weights must be finite and >= 0"));
        }
        sum = sum.add(&s.scaled(*w));
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::invalid(
            "ensemble average requires at least one positive weight",
        ));
    }
    Ok(sum.scaled(1.0 / total))
}

/// Probability that a (possibly partially polarized) state exits the analyzer
/// port aligned with `a`: `(1 + s·a)/2`.
pub fn projection_probability(s: &StokesVector, a: &AnalyzerAxis) -> f64 {
    0.5 * (1.0 + s.dot(&a.axis()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::IDENTITY_TOL;
    use num_complex::Complex64 as C;

    const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn jones_to_stokes_horizontal() {
        let j = JonesVector::new(C::new(1.0, 0.0), C::new(0.0, 0.0)).unwrap();
        let s = jones_to_stokes(&j).unwrap();
        assert!(close(s.s1, 1.0, IDENTITY_TOL));
        assert!(close(s.s2, 0.0, IDENTITY_TOL));
        assert!(close(s.s3, 0.0, IDENTITY_TOL));
    }

    #[test]
    fn jones_to_stokes_diagonal() {
        let j = JonesVector::new(C::new(FRAC_1_SQRT_2, 0.0), C::new(FRAC_1_SQRT_2, 0.0)).unwrap();
        let s = jones_to_stokes(&j).unwrap();
        assert!(close(s.s2, 1.0, IDENTITY_TOL));
        assert!(close(s.s1, 0.0, IDENTITY_TOL));
        assert!(close(s.s3, 0.0, IDENTITY_TOL));
    }

    #[test]
    fn jones_to_stokes_right_circular() {
        // (1, i)/sqrt(2) maps to s3 = +1 under the fixed convention; that
        // state carries the label R throughout the crate.
        let j = JonesVector::new(C::new(FRAC_1_SQRT_2, 0.0), C::new(0.0, FRAC_1_SQRT_2)).unwrap();
        let s = jones_to_stokes(&j).unwrap();
        assert!(close(s.s3, 1.0, IDENTITY_TOL));
        assert!(close(s.s1, 0.0, IDENTITY_TOL));
        assert!(close(s.s2, 0.0, IDENTITY_TOL));
    }

    #[test]
    fn jones_zero_norm_rejected() {
        assert!(JonesVector::new(C::new(0.0, 0.0), C::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn pure_states_have_unit_length() {
        // Any normalized Jones vector must land on the unit sphere.
        let cases = [
            (C::new(0.3, 0.4), C::new(-0.2, 0.85)),
            (C::new(1.0, 0.0), C::new(0.0, 0.0)),
            (C::new(0.6, -0.1), C::new(0.77, 0.2)),
        ];
        for (ex, ey) in cases {
            let j = JonesVector::new(ex, ey).unwrap().normalized();
            let s = jones_to_stokes(&j).unwrap();
            assert!(close(s.length(), 1.0, IDENTITY_TOL), "len {}", s.length());
        }
    }

    #[test]
    fn dop_examples() {
        assert_eq!(dop(&StokesVector::zero()), 0.0);
        assert!(close(dop(&StokesVector::diagonal()), 1.0, IDENTITY_TOL));
        let s = StokesVector::new(0.0, 0.3, 0.4).unwrap();
        assert!(close(dop(&s), 0.5, IDENTITY_TOL));
    }

    #[test]
    fn ensemble_average_opposites_cancel() {
        let avg = ensemble_average(&[
            (1.0, StokesVector::diagonal()),
            (1.0, StokesVector::anti_diagonal()),
        ])
        .unwrap();
        assert!(close(avg.length(), 0.0, IDENTITY_TOL));
    }

    #[test]
    fn ensemble_average_single_state() {
        let avg = ensemble_average(&[(0.37, StokesVector::right_circular())]).unwrap();
        assert!(close(avg.s3, 1.0, IDENTITY_TOL));
    }

    #[test]
    fn ensemble_average_uniform_circle_cancels() {
        // 100 equal-weight states uniformly spaced on the S2/S3 circle sum to
        // zero; this is the direct-summation oracle evaluated inline.
        let n = 100;
        let states: Vec<(f64, StokesVector)> = (0..n)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                (1.0, StokesVector::raw(0.0, phi.cos(), phi.sin()))
            })
            .collect();
        let avg = ensemble_average(&states).unwrap();
        assert!(avg.length() < 1e-12, "len {}", avg.length());
    }

    #[test]
    fn ensemble_average_rejects_zero_weights() {
        assert!(ensemble_average(&[(0.0, StokesVector::diagonal())]).is_err());
        assert!(ensemble_average(&[]).is_err());
    }

    #[test]
    fn projection_examples() {
        let d = AnalyzerAxis::for_basis(Basis::Diagonal);
        assert!(close(
            projection_probability(&StokesVector::diagonal(), &d),
            1.0,
            IDENTITY_TOL
        ));
        assert!(close(
            projection_probability(&StokesVector::right_circular(), &d),
            0.5,
            IDENTITY_TOL
        ));
        let partial = StokesVector::new(0.0, 0.8, 0.0).unwrap();
        assert!(close(
            projection_probability(&partial, &d),
            0.9,
            IDENTITY_TOL
        ));
    }

    #[test]
    fn projection_ports_sum_to_one() {
        let a = AnalyzerAxis::for_basis(Basis::Circular);
        let s = StokesVector::new(0.1, -0.5, 0.3).unwrap();
        let p0 = projection_probability(&s, &a);
        let p1 = projection_probability(&s, &a.negated());
        assert_eq!(p0 + p1, 1.0);
    }

    #[test]
    fn rotation_preserves_length() {
        let axis = StokesVector::raw(1.0, 0.0, 0.0);
        let s = StokesVector::new(0.0, 0.6, 0.8).unwrap();
        let r = s.rotated_about(&axis, 1.2345);
        assert!(close(r.length(), 1.0, IDENTITY_TOL));
    }

    #[test]
    fn rotation_quarter_turn_about_s1() {
        let axis = StokesVector::raw(1.0, 0.0, 0.0);
        let r = StokesVector::diagonal().rotated_about(&axis, std::f64::consts::FRAC_PI_2);
        assert!(close(r.s3, 1.0, IDENTITY_TOL));
        assert!(close(r.s2, 0.0, IDENTITY_TOL));
    }

    #[test]
    fn analyzer_axis_must_be_unit() {
        assert!(AnalyzerAxis::new(StokesVector::raw(0.0, 0.5, 0.0), Basis::Diagonal).is_err());
    }

    #[test]
    fn misaligned_axis_stays_unit() {
        let a = AnalyzerAxis::for_basis(Basis::Diagonal).misaligned(0.3);
        assert!(close(a.axis().length(), 1.0, IDENTITY_TOL));
        assert!(close(a.axis().s2, 0.3f64.cos(), IDENTITY_TOL));
        assert!(close(a.axis().s3, 0.3f64.sin(), IDENTITY_TOL));
    }
}
