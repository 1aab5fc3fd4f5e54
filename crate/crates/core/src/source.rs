//! Spectral and photon-statistics model of the incoherent emitters.
//!
//! Spectra are held as normalized densities on a uniform wavelength grid, so
//! filtering, slicing and centroid math reduce to sums. Optical power is a
//! scalar alongside the shape. Photon numbers per symbol are treated as
//! Poissonian with mean mu; the thermal-statistics correction for few-mode
//! filtered ASE is deliberately not modeled.

use serde::{Deserialize, Serialize};

use crate::constants::{dbm_to_watts, photon_energy_j, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Grid points used when synthesizing or resampling a spectrum.
const GRID_POINTS: usize = 2001;

/// Synthesized Gaussian support half-width, in FWHM units.
const SUPPORT_FWHM_MULTIPLE: f64 = 3.0;

/// Below this measured FWHM (nm) a spectrum is treated as quasi-monochromatic.
pub const QUASI_MONO_FWHM_NM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralShape {
    Gaussian,
    Rectangular,
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitterKind {
    /// Amplified spontaneous emission of an L-band EDFA.
    Ase,
    /// Forward-biased Ge-on-Si PIN junction acting as a weak LED.
    GeOnSi,
}

/// Static description of a light emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    pub kind: EmitterKind,
    pub center_nm: f64,
    /// Intrinsic emission FWHM before any external filtering.
    #[serde(default = "default_bandwidth_nm")]
    pub bandwidth_nm: f64,
    #[serde(default)]
    pub power_dbm: f64,
}

fn default_bandwidth_nm() -> f64 {
    16.0
}

impl EmitterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_nm > 0.0) {
            return Err(Error::invalid("emitter bandwidth must be > 0"));
        }
        if !(self.center_nm > 0.0) {
            return Err(Error::invalid("emitter center wavelength must be > 0"));
        }
        if !self.power_dbm.is_finite() {
            return Err(Error::invalid("emitter power must be finite"));
        }
        Ok(())
    }
}

/// Filter transmission profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterShape {
    Rectangular,
    Gaussian,
}

/// Wavelength-sampled power distribution after normalization.
///
/// Invariant: `sum(density) * step == 1` within 1e-9, wavelengths strictly
/// increasing on a uniform grid, densities non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    lambda_start_nm: f64,
    step_nm: f64,
    density: Vec<f64>,
    total_power_w: f64,
    shape: SpectralShape,
    fwhm_nm: f64,
}

impl SpectralDensity {
    fn from_grid(
        lambda_start_nm: f64,
        step_nm: f64,
        mut density: Vec<f64>,
        total_power_w: f64,
        shape: SpectralShape,
    ) -> Result<Self> {
        if density.is_empty() || step_nm <= 0.0 {
            return Err(Error::invalid("spectrum grid must be non-empty"));
        }
        let norm: f64 = density.iter().sum::<f64>() * step_nm;
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::EmptySpectrum("no spectral power on grid".into()));
        }
        for d in &mut density {
            *d /= norm;
        }
        let fwhm_nm = measure_fwhm(lambda_start_nm, step_nm, &density);
        Ok(Self {
            lambda_start_nm,
            step_nm,
            density,
            total_power_w,
            shape,
            fwhm_nm,
        })
    }

    /// Iterate (wavelength_nm, density_per_nm) samples.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.density
            .iter()
            .enumerate()
            .map(move |(i, d)| (self.lambda_start_nm + i as f64 * self.step_nm, *d))
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn step_nm(&self) -> f64 {
        self.step_nm
    }

    pub fn total_power_w(&self) -> f64 {
        self.total_power_w
    }

    pub fn shape(&self) -> SpectralShape {
        self.shape
    }

    /// FWHM measured from the sampled density by half-maximum crossings.
    pub fn fwhm_nm(&self) -> f64 {
        self.fwhm_nm
    }

    /// Power-weighted center wavelength.
    pub fn centroid_nm(&self) -> f64 {
        let mut num = 0.0;
        for (lam, d) in self.samples() {
            num += lam * d;
        }
        num * self.step_nm
    }

    fn interpolated_density(&self, lambda_nm: f64) -> f64 {
        let pos = (lambda_nm - self.lambda_start_nm) / self.step_nm;
        if pos < 0.0 || pos > (self.density.len() - 1) as f64 {
            return 0.0;
        }
        let i = (pos.floor() as usize).min(self.density.len() - 2);
        let frac = pos - i as f64;
        if self.density.len() == 1 {
            return self.density[0];
        }
        self.density[i] * (1.0 - frac) + self.density[i + 1] * frac
    }
}

/// Synthesize the emitter spectrum: Gaussian with FWHM equal to the intrinsic
/// bandwidth, centered at the emitter center wavelength.
pub fn make_spectrum(spec: &EmitterSpec) -> Result<SpectralDensity> {
    spec.validate()?;
    let power_w = dbm_to_watts(spec.power_dbm);
    if spec.bandwidth_nm < QUASI_MONO_FWHM_NM {
        // Degenerate width: a single dominant sample on a tiny grid.
        let step = 1e-6;
        return SpectralDensity::from_grid(
            spec.center_nm - step,
            step,
            vec![0.0, 1.0 / step, 0.0],
            power_w,
            SpectralShape::Gaussian,
        );
    }
    let half_span = SUPPORT_FWHM_MULTIPLE * spec.bandwidth_nm;
    let start = spec.center_nm - half_span;
    let step = 2.0 * half_span / (GRID_POINTS - 1) as f64;
    // FWHM = 2*sqrt(2 ln 2) * sigma
    let sigma = spec.bandwidth_nm / (2.0 * (2.0 * 2.0f64.ln()).sqrt());
    let density: Vec<f64> = (0..GRID_POINTS)
        .map(|i| {
            let lam = start + i as f64 * step;
            let x = (lam - spec.center_nm) / sigma;
            (-0.5 * x * x).exp()
        })
        .collect();
    SpectralDensity::from_grid(start, step, density, power_w, SpectralShape::Gaussian)
}

/// Apply an optical filter, returning the renormalized spectrum and the
/// captured power fraction.
pub fn apply_filter(
    s: &SpectralDensity,
    center_nm: f64,
    width_nm: f64,
    shape: FilterShape,
) -> Result<(SpectralDensity, f64)> {
    if !(width_nm > 0.0) {
        return Err(Error::invalid("filter width must be > 0"));
    }
    let old_start = s.lambda_start_nm;
    let old_end = s.lambda_start_nm + (s.len() - 1) as f64 * s.step_nm;
    // Rectangular filters get a fresh fine grid over the pass band so that
    // downstream slicing keeps its resolution; a Gaussian filter keeps the
    // original support.
    let (new_start, new_end) = match shape {
        FilterShape::Rectangular => (
            old_start.max(center_nm - width_nm / 2.0),
            old_end.min(center_nm + width_nm / 2.0),
        ),
        FilterShape::Gaussian => (old_start, old_end),
    };
    if new_end <= new_start {
        return Err(Error::EmptySpectrum(
            "filter band disjoint from spectrum support".into(),
        ));
    }
    let n = GRID_POINTS;
    let step = (new_end - new_start) / (n - 1) as f64;
    let sigma_f = width_nm / (2.0 * (2.0 * 2.0f64.ln()).sqrt());
    let transmission = |lam: f64| -> f64 {
        match shape {
            FilterShape::Rectangular => {
                if (lam - center_nm).abs() <= width_nm / 2.0 {
                    1.0
                } else {
                    0.0
                }
            }
            FilterShape::Gaussian => {
                let x = (lam - center_nm) / sigma_f;
                (-0.5 * x * x).exp()
            }
        }
    };
    let product: Vec<f64> = (0..n)
        .map(|i| {
            let lam = new_start + i as f64 * step;
            s.interpolated_density(lam) * transmission(lam)
        })
        .collect();
    let fraction: f64 = (product.iter().sum::<f64>() * step).min(1.0);
    if fraction <= 1e-12 {
        return Err(Error::EmptySpectrum(
            "filter band captures no spectral power".into(),
        ));
    }
    if fraction > 1.0 - 1e-9 {
        // Pass band wider than the whole support: nothing changes.
        return Ok((s.clone(), 1.0));
    }
    let filtered = SpectralDensity::from_grid(
        new_start,
        step,
        product,
        s.total_power_w * fraction,
        SpectralShape::Tabulated,
    )?;
    Ok((filtered, fraction))
}

/// Reduce the spectrum to `m` quadrature nodes (midpoint rule on equal-width
/// wavelength bins). Weights are non-negative and sum to 1; each node sits at
/// the power centroid of its bin.
pub fn sample_slices(s: &SpectralDensity, m: usize) -> Result<Vec<(f64, f64)>> {
    if m == 0 {
        return Err(Error::invalid("slice count must be >= 1"));
    }
    let support_start = s.lambda_start_nm - s.step_nm / 2.0;
    let support_width = s.len() as f64 * s.step_nm;
    let bin_width = support_width / m as f64;
    let mut weights = vec![0.0; m];
    let mut centroids = vec![0.0; m];
    for (lam, d) in s.samples() {
        let idx = (((lam - support_start) / bin_width) as usize).min(m - 1);
        let w = d * s.step_nm;
        weights[idx] += w;
        centroids[idx] += w * lam;
    }
    let total: f64 = weights.iter().sum();
    let nodes = (0..m)
        .map(|i| {
            let lam = if weights[i] > 1e-300 {
                centroids[i] / weights[i]
            } else {
                support_start + (i as f64 + 0.5) * bin_width
            };
            (lam, weights[i] / total)
        })
        .collect();
    Ok(nodes)
}

/// Coherence time of the spectrum, defined as `lambda_c^2 / (c * FWHM)`.
///
/// Alternative definitions differ by O(1) shape factors which are absorbed
/// into the fiber calibration. Quasi-monochromatic spectra return infinity.
pub fn coherence_time(s: &SpectralDensity) -> f64 {
    let fwhm = s.fwhm_nm();
    if fwhm <= QUASI_MONO_FWHM_NM {
        return f64::INFINITY;
    }
    let lambda_m = s.centroid_nm() * 1e-9;
    lambda_m * lambda_m / (SPEED_OF_LIGHT * fwhm * 1e-9)
}

/// Mean photon number per symbol for a given average power and symbol rate.
pub fn photons_per_symbol(power_w: f64, symbol_rate_hz: f64, lambda_nm: f64) -> Result<f64> {
    if power_w < 0.0 || !(symbol_rate_hz > 0.0) || !(lambda_nm > 0.0) {
        return Err(Error::invalid(
            "photons_per_symbol requires power >= 0, rate > 0, wavelength > 0",
        ));
    }
    Ok(power_w / (symbol_rate_hz * photon_energy_j(lambda_nm)))
}

/// Import a tabulated spectrum from two-column text: `wavelength_nm density`,
/// comment lines starting with '#'. Samples are resampled onto a uniform grid.
pub fn spectrum_from_table(text: &str, total_power_w: f64) -> Result<SpectralDensity> {
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let lam: f64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::invalid(format!("line {}: bad wavelength", lineno + 1)))?;
        let d: f64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::invalid(format!("line {}: bad density", lineno + 1)))?;
        if d < 0.0 {
            return Err(Error::invalid(format!(
                "line {}: negative density",
                lineno + 1
            )));
        }
        rows.push((lam, d));
    }
    if rows.len() < 2 {
        return Err(Error::invalid(
            "tabulated spectrum needs at least 2 samples",
        ));
    }
    for pair in rows.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(Error::invalid("wavelengths must be strictly increasing"));
        }
    }
    let start = rows[0].0;
    let end = rows[rows.len() - 1].0;
    let n = GRID_POINTS.max(4 * rows.len());
    let step = (end - start) / (n - 1) as f64;
    let mut j = 0usize;
    let density: Vec<f64> = (0..n)
        .map(|i| {
            let lam = start + i as f64 * step;
            while j + 2 < rows.len() && rows[j + 1].0 < lam {
                j += 1;
            }
            let (l0, d0) = rows[j];
            let (l1, d1) = rows[j + 1];
            let t = ((lam - l0) / (l1 - l0)).clamp(0.0, 1.0);
            d0 * (1.0 - t) + d1 * t
        })
        .collect();
    SpectralDensity::from_grid(
        start,
        step,
        density,
        total_power_w,
        SpectralShape::Tabulated,
    )
}

fn measure_fwhm(start: f64, step: f64, density: &[f64]) -> f64 {
    let (imax, dmax) =
        density.iter().enumerate().fold(
            (0usize, 0.0f64),
            |acc, (i, &d)| {
                if d > acc.1 {
                    (i, d)
                } else {
                    acc
                }
            },
        );
    if dmax <= 0.0 {
        return 0.0;
    }
    let half = dmax / 2.0;
    let lam = |i: usize| start + i as f64 * step;
    // Left crossing.
    let mut left = lam(0);
    for i in (1..=imax).rev() {
        if density[i - 1] < half && density[i] >= half {
            let t = (half - density[i - 1]) / (density[i] - density[i - 1]);
            left = lam(i - 1) + t * step;
            break;
        }
    }
    // Right crossing.
    let mut right = lam(density.len() - 1);
    for i in imax..density.len() - 1 {
        if density[i] >= half && density[i + 1] < half {
            let t = (density[i] - half) / (density[i] - density[i + 1]);
            right = lam(i) + t * step;
            break;
        }
    }
    (right - left).max(step.min(1e-6))
}
