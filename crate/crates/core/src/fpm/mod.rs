//! Sequential FPM phase retrieval with pupil recovery and in-loop
//! spectral-correlation (SC) angle calibration.

mod container;
mod prior;
mod resolution;
mod solver;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bfcal::BfCalResult;
use crate::error::{Error, Result};
use crate::optics::{KVector, SystemParams};

pub use container::{save_reconstruction, AngleRecord};
pub use prior::apply_prior;
pub use resolution::{bar_contrast, measure_resolution, GroupContrast, ResolutionReport, RESOLVED_DIP};
pub use solver::{reconstruct, sc_update, total_cost, SC_OFFSETS};

/// Illuminator prior re-projected at the end of each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    None,
    Similarity,
    AffinePerBoard,
    /// Per-board affine for dome illuminators, nothing otherwise.
    Auto,
}

/// Order in which images update the object within one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    /// Ascending illumination NA of the initial angles.
    AscendingNa,
    /// Stack order.
    Index,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative cost decrease counted as stalled.
    pub tolerance: f64,
    /// Stalled iterations in a row before stopping.
    pub patience: usize,
    pub sc: bool,
    /// First iteration (1-based) that runs SC.
    pub sc_start: usize,
    /// SC stops for an image after this many `(0, 0)` picks in a row.
    pub sc_settle: usize,
    /// Extra spectrum pixels reserved around the outermost source for SC moves.
    pub sc_margin_px: usize,
    pub prior: PriorMode,
    pub order: UpdateOrder,
    pub alpha: f64,
    pub beta: f64,
    pub pupil_update: bool,
    /// Cost above this multiple of the first iteration's cost aborts.
    pub divergence_factor: f64,
    /// Pupil radius in pixels; defaults to the calibrated or nominal radius.
    pub pupil_radius: Option<f64>,
    /// Object grid size; defaults to the smallest grid covering every shift.
    pub object_size: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50,
            tolerance: 1e-4,
            patience: 3,
            sc: true,
            sc_start: 2,
            sc_settle: 2,
            sc_margin_px: 4,
            prior: PriorMode::Auto,
            order: UpdateOrder::AscendingNa,
            alpha: 1.0,
            beta: 1.0,
            pupil_update: true,
            divergence_factor: 10.0,
            pupil_radius: None,
            object_size: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1");
        }
        if self.sc_start < 1 {
            return bad("sc_start must be >= 1");
        }
        if !(self.tolerance > 0.0) || self.patience == 0 {
            return bad("tolerance must be > 0 and patience >= 1");
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return bad("alpha and beta must be > 0");
        }
        if !(self.divergence_factor > 1.0) {
            return bad("divergence_factor must exceed 1");
        }
        if self.pupil_radius.is_some_and(|r| !(r > 0.0)) {
            return bad("pupil_radius must be > 0");
        }
        Ok(())
    }
}

/// Where the solver's starting angles come from.
#[derive(Debug, Clone)]
pub enum AngleInit<'a> {
    /// The stack's expected angles.
    Nominal,
    Angles(Vec<KVector>),
    /// Calibrated angles and radius from the brightfield stage.
    BrightField(&'a BfCalResult),
}

#[derive(Debug, Clone)]
pub struct ReconstructionState {
    pub params: SystemParams,
    /// Centered object spectrum on the object grid.
    pub object: Array2<Complex64>,
    /// Pupil on the image grid; zero outside `support`.
    pub pupil: Array2<Complex64>,
    pub support: Array2<bool>,
    pub radius: f64,
    pub angles: Vec<KVector>,
    /// Integer spectrum shift used for each image.
    pub shifts: Vec<[i64; 2]>,
    pub iteration: usize,
    pub costs: Vec<f64>,
    /// Mean angle change per image in each iteration, NA.
    pub moved_na: Vec<f64>,
}

impl ReconstructionState {
    /// Complex object on the object grid.
    pub fn object_field(&self) -> Array2<Complex64> {
        let mut f = self.object.clone();
        crate::field::Fft2::new(f.nrows()).inverse(&mut f);
        f
    }

    pub fn object_amplitude(&self) -> Array2<f64> {
        self.object_field().mapv(|z| z.norm())
    }
}

/// Angles and diagnostics from one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub angles: Vec<KVector>,
    pub angles_na: Vec<[f64; 2]>,
    pub initial_na: Vec<[f64; 2]>,
    /// Number of non-zero SC moves per image.
    pub sc_moves: Vec<usize>,
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub radius: f64,
}

impl CalibrationResult {
    pub fn final_cost(&self) -> f64 {
        self.costs.last().copied().unwrap_or(f64::NAN)
    }
}
