//! `fpmcal`: simulate FPM datasets, calibrate illumination angles,
//! reconstruct and run misalignment sweeps.

mod commands;
mod config;
mod plot;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fpm_selfcal::experiment::{CalibrationMode, SweepAxis};

use config::{RunConfig, Units};

/// Exit status 2 for usage and configuration problems, 3 for numerical failures.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<fpm_selfcal::Error> for CliError {
    fn from(e: fpm_selfcal::Error) -> Self {
        let numerical = e.is_numerical() || matches!(e, fpm_selfcal::Error::Registration(_));
        CliError { code: if numerical { 3 } else { 2 }, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "fpmcal", version, about = "Self-calibrating illumination angles for Fourier ptychography")]
struct Cli {
    /// More logging; repeat for debug output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset from the configured system, illuminator and object.
    Simulate(SimulateArgs),
    /// Brightfield calibration, optionally followed by an SC solver run.
    Calibrate(DatasetArgs),
    /// Phase retrieval with the selected calibration mode.
    Reconstruct(ReconstructArgs),
    /// Misalignment sweep on one rendered dataset; writes sweep.csv.
    Sweep(SweepArgs),
    /// Angle errors and bar-target resolution of a finished reconstruction.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Declarative run file (TOML); flags override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<CalibrationMode>,
    /// Angle units in written tables.
    #[arg(long, value_enum)]
    units: Option<Units>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Patch size in pixels.
    #[arg(long)]
    patch: Option<usize>,
    /// Largest illumination NA of the planar grid.
    #[arg(long)]
    extent: Option<f64>,
    /// Illuminator rotation, degrees.
    #[arg(long, allow_hyphen_values = true)]
    rotation: Option<f64>,
    /// Illuminator shift along x, NA.
    #[arg(long, allow_hyphen_values = true)]
    shift_x: Option<f64>,
    /// Illuminator shift along y, NA.
    #[arg(long, allow_hyphen_values = true)]
    shift_y: Option<f64>,
    /// Illuminator scale.
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset directory written by `simulate`.
    #[arg(short, long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Reuse a brightfield calibration instead of recomputing it.
    #[arg(long)]
    bfcal: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Sweep a single axis instead of the configured ranges.
    #[arg(long, value_parser = parse_axis)]
    axis: Option<SweepAxis>,
    #[arg(long, allow_hyphen_values = true, requires = "axis")]
    from: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "axis")]
    to: Option<f64>,
    #[arg(long, requires = "axis")]
    points: Option<usize>,
    /// Patch size in pixels.
    #[arg(long)]
    patch: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Reconstruction directory written by `reconstruct` or `calibrate`.
    #[arg(short, long)]
    reconstruction: PathBuf,
}

fn parse_mode(s: &str) -> Result<CalibrationMode, String> {
    s.parse().map_err(|e: fpm_selfcal::Error| e.to_string())
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    match s {
        "rotation" => Ok(SweepAxis::Rotation),
        "shift-x" => Ok(SweepAxis::ShiftX),
        "shift-y" => Ok(SweepAxis::ShiftY),
        "scale" => Ok(SweepAxis::Scale),
        _ => Err(format!("unknown axis `{s}` (rotation, shift-x, shift-y, scale)")),
    }
}

/// Loads the config file, if any, and applies the common flag overrides.
fn resolve(common: &Common, command: &str) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cfg.command.as_deref().is_some_and(|c| c != command) {
        log::warn!("config was written by `{}`; running `{command}`", cfg.command.as_deref().unwrap_or_default());
    }
    cfg.command = Some(command.to_string());
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(m) = common.mode {
        cfg.mode = m;
    }
    if let Some(u) = common.units {
        cfg.units = u;
    }
    cfg.plots |= common.plots;
    Ok(cfg)
}

fn resolve_dataset(args: &DatasetArgs, command: &str) -> Result<RunConfig, CliError> {
    let mut cfg = resolve(&args.common, command)?;
    if let Some(d) = &args.dataset {
        cfg.dataset = Some(d.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg = resolve(&a.common, "simulate")?;
            if let Some(m) = a.patch {
                cfg.simulation.params.patch_pixels = m;
            }
            if let Some(e) = a.extent {
                match &mut cfg.simulation.geometry {
                    fpm_selfcal::simulate::GeometryConfig::PlanarGrid { extent_na, .. } => *extent_na = e,
                    _ => return Err(CliError::usage("--extent applies to planar grids only")),
                }
            }
            let p = &mut cfg.simulation.perturbation;
            if let Some(r) = a.rotation {
                p.rotation_deg = r;
            }
            if let Some(x) = a.shift_x {
                p.shift_na[0] = x;
            }
            if let Some(y) = a.shift_y {
                p.shift_na[1] = y;
            }
            if let Some(s) = a.scale {
                p.scale = s;
            }
            commands::simulate(&cfg)
        }
        Command::Calibrate(a) => commands::calibrate(&resolve_dataset(&a, "calibrate")?),
        Command::Reconstruct(a) => {
            let mut cfg = resolve_dataset(&a.data, "reconstruct")?;
            if let Some(n) = a.max_iterations {
                cfg.solver.max_iterations = n;
            }
            commands::reconstruct(&cfg, a.bfcal.as_deref())
        }
        Command::Sweep(a) => {
            let mut cfg = resolve(&a.common, "sweep")?;
            if let Some(m) = a.patch {
                cfg.simulation.params.patch_pixels = m;
            }
            if let Some(axis) = a.axis {
                let base = cfg.sweep.ranges.iter().find(|r| r.axis == axis).cloned();
                let from = a.from.or(base.as_ref().map(|r| r.from));
                let to = a.to.or(base.as_ref().map(|r| r.to)).or(from);
                let (Some(from), Some(to)) = (from, to) else {
                    return Err(CliError::usage("--axis needs --from (and usually --to)"));
                };
                let points = a.points.or(base.map(|r| r.points)).unwrap_or(1);
                cfg.sweep.ranges = vec![fpm_selfcal::experiment::SweepRange { axis, from, to, points }];
            }
            commands::sweep(&cfg)
        }
        Command::Evaluate(a) => commands::evaluate(&resolve_dataset(&a.data, "evaluate")?, &a.reconstruction),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fpmcal: {e}");
            ExitCode::from(e.code)
        }
    }
}
