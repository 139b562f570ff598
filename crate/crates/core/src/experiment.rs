//! Simulation experiments: the misalignment sweep, calibration modes and
//! error metrics against simulator truth.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bfcal::{self, BfCalConfig, BfCalResult, SearchWindow};
use crate::error::{Error, Result};
use crate::field::Fft2;
use crate::fpm::{reconstruct, AngleInit, CalibrationResult, ReconstructionState, SolverConfig};
use crate::optics::{KVector, SystemParams};
use crate::simulate::{
    apply_perturbation, simulate, GeometryConfig, NoiseConfig, ObjectSpec, Perturbation, Simulation, SimulationConfig,
};

/// How the solver's angles are initialized and refined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CalibrationMode {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "bf")]
    Bf,
    #[serde(rename = "bf+sc")]
    BfSc,
}

impl fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CalibrationMode::None => "none",
            CalibrationMode::Bf => "bf",
            CalibrationMode::BfSc => "bf+sc",
        })
    }
}

impl FromStr for CalibrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CalibrationMode::None),
            "bf" => Ok(CalibrationMode::Bf),
            "bf+sc" | "bf-sc" => Ok(CalibrationMode::BfSc),
            _ => Err(Error::InvalidConfig(format!("unknown mode `{s}` (none, bf, bf+sc)"))),
        }
    }
}

/// Brightfield calibration with a solver run on top, as selected by `mode`.
#[derive(Debug, Clone)]
pub struct ModeRun {
    pub mode: CalibrationMode,
    pub bf: Option<BfCalResult>,
    pub state: ReconstructionState,
    pub result: CalibrationResult,
}

/// Runs one calibration mode end to end. With no brightfield images the
/// `bf` stages fall back to the nominal angles.
pub fn run_mode(
    stack: &crate::simulate::ImageStack,
    mode: CalibrationMode,
    bf_cfg: &BfCalConfig,
    solver: &SolverConfig,
) -> Result<ModeRun> {
    let bf = match mode {
        CalibrationMode::None => None,
        _ => match bfcal::calibrate(stack, bf_cfg) {
            Ok(r) => Some(r),
            Err(Error::NoBrightfield) => {
                warn!("no brightfield images; skipping brightfield calibration");
                None
            }
            Err(e) => return Err(e),
        },
    };
    let init = bf.as_ref().map_or(AngleInit::Nominal, AngleInit::BrightField);
    let cfg = SolverConfig { sc: mode == CalibrationMode::BfSc, ..solver.clone() };
    let (state, result) = reconstruct(stack, init, &cfg)?;
    Ok(ModeRun { mode, bf, state, result })
}

/// Summary of per-image angle errors, NA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleErrors {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub count: usize,
}

impl AngleErrors {
    pub fn of(estimated_na: &[[f64; 2]], truth: &[KVector], wavelength: f64) -> AngleErrors {
        let errors = per_image_errors(estimated_na, truth, wavelength);
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let count = sorted.len();
        let median = match count {
            0 => f64::NAN,
            c if c % 2 == 1 => sorted[c / 2],
            c => 0.5 * (sorted[c / 2 - 1] + sorted[c / 2]),
        };
        AngleErrors {
            mean: if count == 0 { f64::NAN } else { sorted.iter().sum::<f64>() / count as f64 },
            median,
            max: sorted.last().copied().unwrap_or(f64::NAN),
            count,
        }
    }
}

pub fn per_image_errors(estimated_na: &[[f64; 2]], truth: &[KVector], wavelength: f64) -> Vec<f64> {
    estimated_na
        .iter()
        .zip(truth)
        .map(|(e, t)| {
            let t = t.to_na(wavelength);
            (e[0] - t[0]).hypot(e[1] - t[1])
        })
        .collect()
}

/// Object spectrum support covered by pupils at the given integer shifts.
pub fn recovered_band(n: usize, radius: f64, shifts: &[[i64; 2]]) -> Array2<bool> {
    let h = (n / 2) as f64;
    let mut band = Array2::from_elem((n, n), false);
    for s in shifts {
        for ((r, c), b) in band.indexed_iter_mut() {
            if !*b {
                let x = c as f64 - h - s[0] as f64;
                let y = r as f64 - h - s[1] as f64;
                *b = x.hypot(y) <= radius;
            }
        }
    }
    band
}

/// Amplitude of `field` after restricting its spectrum to `band`.
pub fn band_limited_amplitude(field: &Array2<Complex64>, band: &Array2<bool>) -> Array2<f64> {
    let fft = Fft2::new(field.nrows());
    let mut spec = field.clone();
    fft.forward(&mut spec);
    spec.zip_mut_with(band, |z, &keep| {
        if !keep {
            *z = Complex64::new(0.0, 0.0);
        }
    });
    fft.inverse(&mut spec);
    spec.mapv(|z| z.norm())
}

/// `‖a·x - y‖ / ‖y‖` with the least-squares gain `a`, so a global amplitude
/// scale does not count as error.
pub fn relative_rmse(estimate: &Array2<f64>, truth: &Array2<f64>) -> f64 {
    let xy: f64 = estimate.iter().zip(truth).map(|(x, y)| x * y).sum();
    let xx: f64 = estimate.iter().map(|x| x * x).sum();
    let yy: f64 = truth.iter().map(|y| y * y).sum();
    let a = if xx > 0.0 { xy / xx } else { 0.0 };
    let err: f64 = estimate.iter().zip(truth).map(|(x, y)| (a * x - y).powi(2)).sum();
    (err / yy).sqrt()
}

/// Amplitude RMSE of a reconstruction against the simulated object, both
/// limited to the band the true illumination covers.
pub fn amplitude_rmse(sim: &Simulation, state: &ReconstructionState) -> Result<f64> {
    let n = sim.object.size();
    if state.object.nrows() != n {
        return Err(Error::InvalidConfig(format!(
            "reconstruction grid {} differs from the object grid {n}",
            state.object.nrows()
        )));
    }
    let shifts = sim.stack.rendered.clone().unwrap_or_else(|| {
        sim.stack
            .truth
            .as_ref()
            .map_or_else(Vec::new, |t| t.iter().map(|k| k.rounded_pixels(&sim.stack.params)).collect())
    });
    let band = recovered_band(n, sim.pupil.radius, &shifts);
    let truth = band_limited_amplitude(&sim.object.field.data, &band);
    let estimate = band_limited_amplitude(&state.object_field(), &band);
    Ok(relative_rmse(&estimate, &truth))
}

/// The simulation study's system: 0.041 NA pitch grid out to 0.41 NA,
/// 532 nm, 10x/0.25 NA objective, 2x relay, 6.5 µm pixels.
pub fn study_config(patch_pixels: usize, object: ObjectSpec) -> SimulationConfig {
    SimulationConfig {
        params: SystemParams { patch_pixels, ..SystemParams::default() },
        geometry: GeometryConfig::planar(0.041, 0.41),
        perturbation: Perturbation::IDENTITY,
        object,
        pupil_scale: 1.0,
        noise: NoiseConfig::default(),
    }
}

/// Which misalignment a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Degrees.
    Rotation,
    /// NA along x.
    ShiftX,
    /// NA along y.
    ShiftY,
    Scale,
}

impl SweepAxis {
    pub fn perturbation(self, value: f64) -> Perturbation {
        match self {
            SweepAxis::Rotation => Perturbation::rotation(value),
            SweepAxis::ShiftX => Perturbation::shift([value, 0.0]),
            SweepAxis::ShiftY => Perturbation::shift([0.0, value]),
            SweepAxis::Scale => Perturbation::scaled(value),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Rotation => "rotation",
            SweepAxis::ShiftX => "shift-x",
            SweepAxis::ShiftY => "shift-y",
            SweepAxis::Scale => "scale",
        }
    }
}

/// Evenly spaced values of one axis, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub axis: SweepAxis,
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl SweepRange {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.from],
            // Rounded to 12 decimals so that tables show 0.06, not 0.060000000000000005.
            p => (0..p)
                .map(|i| self.from + (self.to - self.from) * i as f64 / (p - 1) as f64)
                .map(|v| (v * 1e12).round() / 1e12)
                .collect(),
        }
    }

    /// The rotation, shift and scale ranges of the simulation study.
    pub fn study() -> Vec<SweepRange> {
        vec![
            SweepRange { axis: SweepAxis::Rotation, from: -45.0, to: 45.0, points: 19 },
            SweepRange { axis: SweepAxis::ShiftX, from: -0.1, to: 0.1, points: 11 },
            SweepRange { axis: SweepAxis::Scale, from: 0.5, to: 1.75, points: 11 },
        ]
    }
}

/// Everything a sweep needs besides the ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub simulation: SimulationConfig,
    pub bfcal: BfCalConfig,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            simulation: study_config(256, ObjectSpec::random_smooth(0)),
            bfcal: BfCalConfig { window: SearchWindow::BrightfieldDisk, ..BfCalConfig::default() },
            solver: SolverConfig { max_iterations: 8, ..SolverConfig::default() },
            seed: 0,
        }
    }
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub perturbation: SweepAxis,
    pub value: f64,
    pub seed: u64,
    pub error_uncal: f64,
    pub error_bf: f64,
    pub error_bf_sc: f64,
    pub max_error_bf_sc: f64,
    pub final_cost: f64,
    pub failed: bool,
    pub message: String,
    pub seconds: f64,
}

impl SweepRow {
    pub const HEADER: &'static str =
        "perturbation,value,seed,error_uncal,error_bf,error_bf_sc,max_error_bf_sc,final_cost,failed,message,seconds";

    /// CSV line; wall time is kept out of the deterministic columns by `with_time`.
    pub fn csv(&self, with_time: bool) -> String {
        let secs = if with_time { format!("{:.2}", self.seconds) } else { String::new() };
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6e},{},{},{}",
            self.perturbation.name(),
            self.value,
            self.seed,
            self.error_uncal,
            self.error_bf,
            self.error_bf_sc,
            self.max_error_bf_sc,
            self.final_cost,
            self.failed,
            self.message.replace([',', '\n'], ";"),
            secs
        )
    }
}

/// Seed of point `index` derived from the master seed.
pub fn point_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64 + 1);
    rng.next_u64()
}

/// Renders the true dataset once; each sweep point only changes the expected angles.
pub fn sweep_dataset(cfg: &SweepConfig) -> Result<Simulation> {
    let sim_cfg = SimulationConfig { perturbation: Perturbation::IDENTITY, ..cfg.simulation.clone() };
    simulate(&sim_cfg)
}

/// Calibrates one misalignment: the true angles stay fixed while the
/// expected angles are perturbed.
pub fn run_point(sim: &Simulation, cfg: &SweepConfig, axis: SweepAxis, value: f64, seed: u64) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow {
        perturbation: axis,
        value,
        seed,
        error_uncal: f64::NAN,
        error_bf: f64::NAN,
        error_bf_sc: f64::NAN,
        max_error_bf_sc: f64::NAN,
        final_cost: f64::NAN,
        failed: false,
        message: String::new(),
        seconds: 0.0,
    };
    let outcome = (|| -> Result<()> {
        let mut stack = sim.stack.clone();
        let truth = stack.truth.clone().ok_or_else(|| Error::InvalidConfig("dataset has no truth".into()))?;
        let lambda = stack.params.wavelength;
        stack.set_expected_from(&apply_perturbation(&sim.nominal, &axis.perturbation(value)))?;
        let expected: Vec<[f64; 2]> = stack.expected.iter().map(|k| k.to_na(lambda)).collect();
        row.error_uncal = AngleErrors::of(&expected, &truth, lambda).mean;
        let bf_cfg = BfCalConfig { seed, ..cfg.bfcal };
        let bf = bfcal::calibrate(&stack, &bf_cfg)?;
        let bf_na: Vec<[f64; 2]> = bf.images.iter().map(|im| im.calibrated_na).collect();
        row.error_bf = AngleErrors::of(&bf_na, &truth, lambda).mean;
        let solver = SolverConfig { sc: true, ..cfg.solver.clone() };
        let (_, result) = reconstruct(&stack, AngleInit::BrightField(&bf), &solver)?;
        let e = AngleErrors::of(&result.angles_na, &truth, lambda);
        row.error_bf_sc = e.mean;
        row.max_error_bf_sc = e.max;
        row.final_cost = result.final_cost();
        Ok(())
    })();
    if let Err(e) = outcome {
        row.failed = true;
        row.message = e.to_string();
        warn!("{} = {value}: {e}", axis.name());
    }
    row.seconds = start.elapsed().as_secs_f64();
    info!(
        "{} = {value}: uncal {:.4}, bf {:.4}, bf+sc {:.4} NA ({:.1} s)",
        axis.name(),
        row.error_uncal,
        row.error_bf,
        row.error_bf_sc,
        row.seconds
    );
    row
}

/// Runs every point of every range on one dataset. Points are independent;
/// a failed point becomes a flagged row.
pub fn run_sweep(cfg: &SweepConfig, ranges: &[SweepRange]) -> Result<Vec<SweepRow>> {
    let sim = sweep_dataset(cfg)?;
    let points: Vec<(SweepAxis, f64)> =
        ranges.iter().flat_map(|r| r.values().into_iter().map(move |v| (r.axis, v))).collect();
    use rayon::prelude::*;
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, (axis, v))| run_point(&sim, cfg, *axis, *v, point_seed(cfg.seed, i)))
        .collect())
}

/// `sweep.csv` contents.
pub fn sweep_csv(rows: &[SweepRow], with_time: bool) -> String {
    let mut out = String::from(SweepRow::HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv(with_time));
        out.push('\n');
    }
    out
}
