//! `qkdsim`: run, sweep, and calibrate incoherent-source BB84 link scenarios.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime/physics error,
//! 4 calibration failure.

use clap::{Parser, Subcommand, ValueEnum};

use qkdsim_core::harness::{
    calibrate_fiber, eye_diagram, eye_to_csv, polarimeter_sweep, polarimeter_to_csv, run_scenario,
    sweep, CalibrationRequest,
};
use qkdsim_core::polarization::Basis;
use qkdsim_core::scenario::{results_to_csv, RunMode, ScenarioConfig, SweepAxis, SweepPoint};
use qkdsim_core::Error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "qkdsim",
    version,
    about = "Incoherent-source BB84 link simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Analytic,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Diagonal,
    Circular,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario end to end and write a result table.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's run mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario per axis value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Sweep axis: ob | length | dlambda.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values, e.g. `0,5,10,18.5`.
        #[arg(long)]
        values: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Overlay classical eye-diagram traces through the scenario channel.
    Eye {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 64)]
        traces: usize,
        #[arg(long, value_enum, default_value = "diagonal")]
        basis: BasisArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Wavelength-swept polarimeter with slow SOP drift between sweeps.
    Polarimeter {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search the fiber PMD coefficient against QBER anchors.
    Calibrate {
        /// JSON file holding the scenario template, targets and search grid.
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    mode: Option<ModeArg>,
) -> Result<ScenarioConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ScenarioConfig::from_json(&text)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(mode) = mode {
        cfg.mode = match mode {
            ModeArg::Analytic => RunMode::Analytic,
            ModeArg::Mc => RunMode::Montecarlo,
        };
    }
    Ok(cfg)
}

fn write_out(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents)?;
    Ok(())
}

fn parse_values(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad sweep value '{t}'")))
        })
        .collect()
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            mode,
            out,
        } => {
            let cfg = load_config(&config, seed, mode)?;
            let record = run_scenario(&cfg)?;
            eprintln!(
                "run: sifted {:.1} b/s, qber {:.4} ({}), dop {:.4}, {:.2} s",
                record.sifted_rate_bps,
                record.qber,
                if record.feasible {
                    "feasible"
                } else {
                    "infeasible"
                },
                record.dop_at_bob,
                record.wall_seconds
            );
            write_out(
                &out,
                &results_to_csv(cfg.seed, &[SweepPoint::Ok(Box::new(record))]),
            )
        }
        Command::Sweep {
            config,
            axis,
            values,
            seed,
            mode,
            out,
        } => {
            let cfg = load_config(&config, seed, mode)?;
            let axis = SweepAxis::parse(&axis)?;
            let values = parse_values(&values)?;
            let points = sweep(&cfg, axis, &values)?;
            let failed = points
                .iter()
                .filter(|p| matches!(p, SweepPoint::Failed { .. }))
                .count();
            eprintln!("sweep: {} points, {} failed", points.len(), failed);
            write_out(&out, &results_to_csv(cfg.seed, &points))
        }
        Command::Eye {
            config,
            traces,
            basis,
            seed,
            out,
        } => {
            let cfg = load_config(&config, seed, None)?;
            let basis = match basis {
                BasisArg::Diagonal => Basis::Diagonal,
                BasisArg::Circular => Basis::Circular,
            };
            let eye = eye_diagram(&cfg, basis, traces)?;
            eprintln!(
                "eye: {} traces x {} samples",
                eye.traces.len(),
                2 * eye.samples_per_symbol
            );
            write_out(&out, &eye_to_csv(cfg.seed, &eye))
        }
        Command::Polarimeter { config, seed, out } => {
            let cfg = load_config(&config, seed, None)?;
            let rows = polarimeter_sweep(&cfg)?;
            eprintln!("polarimeter: {} samples", rows.len());
            write_out(&out, &polarimeter_to_csv(cfg.seed, &rows))
        }
        Command::Calibrate { targets, out } => {
            let text = std::fs::read_to_string(&targets)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", targets.display())))?;
            let request = CalibrationRequest::from_json(&text)?;
            let outcome = calibrate_fiber(&request)?;
            eprintln!(
                "calibrate: D = {} ps/sqrt(km), objective {:.3e}",
                outcome.pmd_coeff_ps_sqrt_km, outcome.objective
            );
            let json =
                serde_json::to_string_pretty(&outcome).map_err(|e| Error::Config(e.to_string()))?;
            write_out(&out, &json)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::CalibrationFailed(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
