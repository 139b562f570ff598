use std::fs;
use std::path::{Path, PathBuf};

use fpm_selfcal::bfcal::BfCalConfig;
use fpm_selfcal::experiment::{study_config, CalibrationMode, SweepConfig, SweepRange};
use fpm_selfcal::fpm::SolverConfig;
use fpm_selfcal::simulate::{ObjectSpec, SimulationConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Units for angles in written tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    /// Numerical aperture.
    Na,
    /// Spatial frequency in 1/µm.
    InvUm,
}

impl Units {
    pub fn factor(self, wavelength: f64) -> f64 {
        match self {
            Units::Na => 1.0,
            Units::InvUm => 1.0 / wavelength,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Units::Na => "na",
            Units::InvUm => "inv_um",
        }
    }
}

/// One declarative run. Every subcommand writes the resolved config as
/// `run.toml` next to its outputs; passing it back with `--config` repeats the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand that produced this file; informational.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub mode: CalibrationMode,
    pub units: Units,
    pub plots: bool,
    pub simulation: SimulationConfig,
    pub bfcal: BfCalConfig,
    pub solver: SolverConfig,
    pub sweep: SweepSection,
}

/// Sweep ranges plus the calibration settings used at every point. The
/// defaults search the whole brightfield disk, since large rotations move
/// centers far from their expected positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub ranges: Vec<SweepRange>,
    pub bfcal: BfCalConfig,
    pub solver: SolverConfig,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        SweepSection { ranges: SweepRange::study(), bfcal: d.bfcal, solver: d.solver }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            seed: 0,
            dataset: None,
            out: None,
            mode: CalibrationMode::BfSc,
            units: Units::Na,
            plots: false,
            simulation: study_config(256, ObjectSpec::random_smooth(0)),
            bfcal: BfCalConfig::default(),
            solver: SolverConfig::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text =
            toml::to_string_pretty(self).map_err(|e| CliError::usage(format!("cannot serialize config: {e}")))?;
        fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
    }

    /// The seed drives RANSAC, noise and sweep point seeds.
    pub fn seeded_simulation(&self) -> SimulationConfig {
        let mut s = self.simulation.clone();
        s.noise.seed = self.seed;
        s
    }

    pub fn seeded_bfcal(&self) -> BfCalConfig {
        BfCalConfig { seed: self.seed, ..self.bfcal }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            simulation: self.seeded_simulation(),
            bfcal: self.sweep.bfcal,
            solver: self.sweep.solver.clone(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.bfcal.validate().map_err(CliError::from)?;
        self.solver.validate().map_err(CliError::from)?;
        self.simulation.params.validate().map_err(CliError::from)?;
        self.sweep.bfcal.validate().map_err(CliError::from)?;
        self.sweep.solver.validate().map_err(CliError::from)?;
        Ok(())
    }
}
