//! Experiment configuration and result records.
//!
//! A scenario is a single JSON document covering the whole chain; unknown
//! keys are rejected so stale configs fail loudly. Results are emitted as CSV
//! with a fixed column set and a `# qkdsim <version> seed=<N>` metadata line,
//! and are byte-reproducible for a fixed config and seed (wall-clock timing
//! is reported separately, never written into the table).

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderSpec;
use crate::error::{Error, Result};
use crate::fiber::FiberSpec;
use crate::receiver::{MeasurementConfig, SpadParams};
use crate::source::{EmitterSpec, FilterShape};

/// Target mean photon number at Alice's output: a fixed value enforced by
/// the VOA, or `"max"` for a power-limited launch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuTarget {
    Photons(f64),
    Named(MuNamed),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuNamed {
    Max,
}

impl MuTarget {
    pub fn is_max(&self) -> bool {
        matches!(self, MuTarget::Named(MuNamed::Max))
    }

    /// Text form used in CSV output.
    pub fn as_csv(&self) -> String {
        match self {
            MuTarget::Photons(x) => format!("{x:.6e}"),
            MuTarget::Named(MuNamed::Max) => "max".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Analytic,
    #[serde(alias = "mc")]
    Montecarlo,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Analytic => "analytic",
            RunMode::Montecarlo => "montecarlo",
        }
    }
}

/// Optical filter section of the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub delta_lambda_nm: f64,
    #[serde(default = "default_filter_shape")]
    pub shape: FilterShape,
}

fn default_filter_shape() -> FilterShape {
    FilterShape::Rectangular
}

/// Encoder section; the symbol rate lives at the scenario top level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub eo_bandwidth_hz: f64,
    pub balance_error: f64,
    pub samples_per_symbol: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            eo_bandwidth_hz: 920e6,
            balance_error: 0.0,
            samples_per_symbol: 8,
        }
    }
}

/// Wavelength-swept polarimeter settings (SOP separation experiment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolarimeterConfig {
    pub slice_width_nm: f64,
    pub lambda_min_nm: f64,
    pub lambda_max_nm: f64,
    pub time_steps: usize,
    pub step_minutes: f64,
}

impl Default for PolarimeterConfig {
    fn default() -> Self {
        Self {
            slice_width_nm: 1.0,
            lambda_min_nm: 1569.0,
            lambda_max_nm: 1585.0,
            time_steps: 60,
            step_minutes: 5.0,
        }
    }
}

/// Full experiment parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub emitter: EmitterSpec,
    pub filter: FilterConfig,
    pub mu: MuTarget,
    pub symbol_rate_hz: f64,
    pub fiber: FiberSpec,
    #[serde(default)]
    pub optical_budget_db: f64,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub spad: SpadParams,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    /// Lumped transmitter insertion loss between source and Alice's output;
    /// only consumed in power-limited (`mu = "max"`) launches, since a
    /// targeted mu is defined at Alice's output and the VOA absorbs the loss.
    #[serde(default = "default_insertion_loss_db")]
    pub insertion_loss_db: f64,
    /// Spectral slice count for the depolarization average.
    #[serde(default = "default_slices")]
    pub slices: usize,
    pub mode: RunMode,
    #[serde(default = "default_n_symbols")]
    pub n_symbols: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub polarimeter: PolarimeterConfig,
}

fn default_insertion_loss_db() -> f64 {
    13.0
}

fn default_slices() -> usize {
    101
}

fn default_n_symbols() -> usize {
    1_000_000
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.emitter.validate().map_err(wrap)?;
        self.fiber.validate().map_err(wrap)?;
        self.spad.validate().map_err(wrap)?;
        self.measurement.validate().map_err(wrap)?;
        self.encoder_spec().validate().map_err(wrap)?;
        if !(self.filter.delta_lambda_nm > 0.0) {
            return Err(Error::Config("filter delta_lambda_nm must be > 0".into()));
        }
        if let MuTarget::Photons(x) = self.mu {
            if !(x >= 0.0) {
                return Err(Error::Config("mu must be >= 0".into()));
            }
        }
        if !(self.symbol_rate_hz > 0.0) {
            return Err(Error::Config("symbol_rate_hz must be > 0".into()));
        }
        if self.insertion_loss_db < 0.0 {
            return Err(Error::Config("insertion_loss_db must be >= 0".into()));
        }
        if self.slices == 0 {
            return Err(Error::Config("slices must be >= 1".into()));
        }
        if self.mode == RunMode::Montecarlo && self.n_symbols == 0 {
            return Err(Error::Config(
                "n_symbols must be >= 1 in montecarlo mode".into(),
            ));
        }
        if !(self.polarimeter.lambda_min_nm < self.polarimeter.lambda_max_nm)
            || !(self.polarimeter.slice_width_nm > 0.0)
        {
            return Err(Error::Config(
                "polarimeter range/slice width invalid".into(),
            ));
        }
        Ok(())
    }

    /// Encoder spec with the scenario symbol rate folded in.
    pub fn encoder_spec(&self) -> EncoderSpec {
        EncoderSpec {
            symbol_rate_hz: self.symbol_rate_hz,
            eo_bandwidth_hz: self.encoder.eo_bandwidth_hz,
            balance_error: self.encoder.balance_error,
            samples_per_symbol: self.encoder.samples_per_symbol,
        }
    }
}

/// Axis of a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Ob,
    Length,
    Dlambda,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Ob => "ob",
            SweepAxis::Length => "length",
            SweepAxis::Dlambda => "dlambda",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "ob" => Ok(SweepAxis::Ob),
            "length" => Ok(SweepAxis::Length),
            "dlambda" => Ok(SweepAxis::Dlambda),
            other => Err(Error::Config(format!(
                "unknown sweep axis '{other}' (expected ob|length|dlambda)"
            ))),
        }
    }

    /// Apply an axis value to a copy of the config.
    pub fn apply(&self, cfg: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut out = cfg.clone();
        match self {
            SweepAxis::Ob => out.optical_budget_db = value,
            SweepAxis::Length => out.fiber.length_km = value,
            SweepAxis::Dlambda => out.filter.delta_lambda_nm = value,
        }
        out
    }
}

/// Per-detector accepted click statistics (post dead time, pre temporal
/// filter); analytic runs carry expectations, Monte Carlo runs carry counts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectorCounts {
    pub clicks: f64,
    pub dark: f64,
}

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub axis: Option<SweepAxis>,
    pub axis_value: Option<f64>,
    pub mode: RunMode,
    pub seed: u64,
    pub mu_target: MuTarget,
    /// Mean photon number actually launched at Alice's output.
    pub mu_used: f64,
    /// Set when the source could not reach the requested mu, or a max-power
    /// launch fell below the nominal 0.1 photons/symbol.
    pub power_limited: bool,
    pub delta_lambda_nm: f64,
    pub fiber_length_km: f64,
    pub optical_budget_db: f64,
    pub symbol_rate_hz: f64,
    pub transmittance: f64,
    pub dop_at_bob: f64,
    /// Effective analyzer contrast of the diagonal-basis states at Bob.
    pub contrast_diagonal: f64,
    pub contrast_circular: f64,
    pub sifted_rate_bps: f64,
    pub qber: f64,
    pub qber_std_error: f64,
    pub sifted_count: f64,
    pub detectors: [DetectorCounts; 4],
    pub feasible: bool,
    /// Wall-clock seconds; diagnostic only, never part of the CSV table.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// One row of a sweep: a record or a per-point failure marker.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepPoint {
    Ok(Box<ResultRecord>),
    Failed { axis_value: f64, error: String },
}

pub const RESULT_CSV_HEADER: &str = "axis,axis_value,mode,mu_target,mu_used,power_limited,\
delta_lambda_nm,fiber_length_km,optical_budget_db,symbol_rate_hz,transmittance,dop_at_bob,\
contrast_diagonal,contrast_circular,sifted_rate_bps,qber,qber_std_error,sifted_count,\
det0_clicks,det0_dark,det1_clicks,det1_dark,det2_clicks,det2_dark,det3_clicks,det3_dark,\
feasible,error";

/// Metadata comment line placed at the top of every CSV output.
pub fn csv_metadata_line(seed: u64) -> String {
    format!("# qkdsim {} seed={}", env!("CARGO_PKG_VERSION"), seed)
}

fn fmt(v: f64) -> String {
    format!("{v:.9e}")
}

impl ResultRecord {
    pub fn to_csv_row(&self) -> String {
        let axis = self.axis.map(|a| a.as_str()).unwrap_or("");
        let axis_value = self.axis_value.map(fmt).unwrap_or_default();
        let mut cols = vec![
            axis.to_string(),
            axis_value,
            self.mode.as_str().to_string(),
            self.mu_target.as_csv(),
            fmt(self.mu_used),
            (self.power_limited as u8).to_string(),
            fmt(self.delta_lambda_nm),
            fmt(self.fiber_length_km),
            fmt(self.optical_budget_db),
            fmt(self.symbol_rate_hz),
            fmt(self.transmittance),
            fmt(self.dop_at_bob),
            fmt(self.contrast_diagonal),
            fmt(self.contrast_circular),
            fmt(self.sifted_rate_bps),
            fmt(self.qber),
            fmt(self.qber_std_error),
            fmt(self.sifted_count),
        ];
        for d in &self.detectors {
            cols.push(fmt(d.clicks));
            cols.push(fmt(d.dark));
        }
        cols.push((self.feasible as u8).to_string());
        cols.push(String::new());
        cols.join(",")
    }
}

impl SweepPoint {
    pub fn to_csv_row(&self) -> String {
        match self {
            SweepPoint::Ok(rec) => rec.to_csv_row(),
            SweepPoint::Failed { axis_value, error } => {
                let mut cols = vec![String::new(); 27];
                cols[1] = fmt(*axis_value);
                cols.push(error.replace(',', ";"));
                cols.join(",")
            }
        }
    }
}

/// Render a full result table (metadata line, header, rows).
pub fn results_to_csv(seed: u64, points: &[SweepPoint]) -> String {
    let mut out = String::new();
    out.push_str(&csv_metadata_line(seed));
    out.push('\n');
    out.push_str(RESULT_CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&p.to_csv_row());
        out.push('\n');
    }
    out
}
