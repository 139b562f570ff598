//! Brightfield calibration.
//!
//! Every brightfield spectrum `|Ĩ_i|` carries two circles of the pupil radius
//! centered at `±k_i`. After dividing out the stack-mean spectrum and
//! smoothing, each circle's edge is found by summing radial derivatives along
//! the arc that does not overlap its twin. The pupil radius is calibrated the
//! same way, and a robust transform fit carries the result to the darkfield
//! sources.

mod center;
mod edge;
mod fit;
mod preprocess;
mod radius;

pub use center::{
    candidate_set, center_residual, find_center, CenterEstimate, CenterOutcome, CenterRules, CenterSearch,
};
pub use edge::{
    arc_angles, bilinear, candidate_fits, circular_edge_metrics, edge_e1, edge_pair, prominence, CandidateGrid,
    EdgeMetrics, EdgeSettings, RadialProfileSet,
};
pub use fit::{fit_and_extrapolate, Extrapolation, FitModel, RansacSettings};
pub use preprocess::{gaussian_blur, preprocess_spectra, Preprocessed};
pub use radius::{calibrate_radius, RadiusCalibration, RadiusSearch};

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{real_spectrum, Fft2};
use crate::forward::SupportIndex;
use crate::optics::{pupil_radius_pixels, support_mask, KVector};
use crate::simulate::{GeometryConfig, ImageStack};
use crate::transform::{Family, Transform};

/// Where to look for each circle center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SearchWindow {
    /// Square of half-width `half_na` around the expected vector.
    Square { half_na: f64 },
    /// Every center inside the pupil radius, for large misalignments.
    BrightfieldDisk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiusConfig {
    pub enabled: bool,
    pub subset_size: usize,
    pub step_px: f64,
    /// Search bounds as multiples of the nominal radius.
    pub bounds_rel: (f64, f64),
    pub min_prominence: f64,
}

impl Default for RadiusConfig {
    fn default() -> Self {
        RadiusConfig { enabled: true, subset_size: 8, step_px: 0.25, bounds_rel: (0.9, 1.15), min_prominence: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfCalConfig {
    /// Gaussian smoothing, spectrum pixels.
    pub sigma: f64,
    /// Mean-spectrum regularizer relative to its maximum.
    pub eps: f64,
    pub lines: usize,
    pub step_px: f64,
    pub arc_margin_deg: f64,
    pub window: SearchWindow,
    pub near_max_std: f64,
    pub min_prominence: f64,
    /// Darkfield spectra leave a center residual near 0.5, brightfield ones below 0.1.
    pub max_residual: f64,
    /// Images with mean intensity at least this fraction of the brightest are brightfield.
    pub bf_fraction: f64,
    pub radius: RadiusConfig,
    /// `None` picks similarity for planar grids and per-board affine for domes.
    pub family: Option<Family>,
    /// RANSAC inlier distance in spectrum pixels.
    pub ransac_threshold_px: f64,
    pub ransac_iterations: usize,
    pub seed: u64,
}

impl Default for BfCalConfig {
    fn default() -> Self {
        BfCalConfig {
            sigma: 2.0,
            eps: 1e-3,
            lines: 64,
            step_px: 0.5,
            arc_margin_deg: 10.0,
            window: SearchWindow::Square { half_na: 0.08 },
            near_max_std: 0.1,
            min_prominence: 4.5,
            max_residual: 0.15,
            bf_fraction: 0.5,
            radius: RadiusConfig::default(),
            family: None,
            ransac_threshold_px: 1.5,
            ransac_iterations: 500,
            seed: 0,
        }
    }
}

impl BfCalConfig {
    pub fn edge(&self) -> EdgeSettings {
        EdgeSettings { sigma: self.sigma, lines: self.lines, step: self.step_px, arc_margin_deg: self.arc_margin_deg }
    }

    pub fn rules(&self) -> CenterRules {
        CenterRules {
            edge: self.edge(),
            near_max_std: self.near_max_std,
            min_prominence: self.min_prominence,
            max_residual: self.max_residual,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.lines < 8 {
            return bad("at least 8 radial lines are required");
        }
        if !(self.step_px > 0.0 && self.step_px <= 1.0) {
            return bad("radial step must be in (0, 1] pixel");
        }
        if !(self.sigma >= 0.0) {
            return bad("sigma must be non-negative");
        }
        if !(self.max_residual > 0.0) {
            return bad("max_residual must be positive");
        }
        if !(self.bf_fraction > 0.0 && self.bf_fraction < 1.0) {
            return bad("bf_fraction must be in (0, 1)");
        }
        if let SearchWindow::Square { half_na } = self.window {
            if !(half_na > 0.0) {
                return bad("search window must be positive");
            }
        }
        Ok(())
    }

    fn fit_model(&self, geometry: Option<&GeometryConfig>) -> FitModel {
        match (self.family, geometry) {
            (Some(f), _) => FitModel::Global(f),
            (None, Some(GeometryConfig::DomeBoards(_))) => FitModel::AffinePerBoard,
            (None, _) => FitModel::Global(Family::Similarity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfImage {
    pub index: usize,
    pub brightfield: bool,
    pub prior_na: [f64; 2],
    pub calibrated_na: [f64; 2],
    /// Center residual of a found brightfield circle.
    pub residual: Option<f64>,
    pub prominence: Option<f64>,
    pub found: bool,
    pub outlier: bool,
    /// False when the conjugate tie was settled by proximity to the prior.
    pub residual_decided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfCalResult {
    pub radius: f64,
    pub radius_calibrated: bool,
    pub family: FitModel,
    pub transform: Transform,
    pub board_transforms: Vec<Transform>,
    pub images: Vec<BfImage>,
}

impl BfCalResult {
    pub fn angles(&self, wavelength: f64) -> Vec<KVector> {
        self.images.iter().map(|im| KVector::from_na(im.calibrated_na, wavelength)).collect()
    }

    pub fn brightfield_count(&self) -> usize {
        self.images.iter().filter(|i| i.brightfield).count()
    }

    pub fn to_json(&self) -> BfCalJson {
        BfCalJson {
            radius_px: self.radius,
            radius_calibrated: self.radius_calibrated,
            family: match self.family {
                FitModel::Global(f) => format!("{f:?}").to_lowercase(),
                FitModel::AffinePerBoard => "affine-per-board".into(),
            },
            transform: self.transform.to_homogeneous(),
            board_transforms: self.board_transforms.iter().map(|t| t.to_homogeneous()).collect(),
            images: self.images.clone(),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

/// Serialized calibration: NA units, transforms as row-major 3x3 homogeneous matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfCalJson {
    pub radius_px: f64,
    pub radius_calibrated: bool,
    pub family: String,
    pub transform: [[f64; 3]; 3],
    pub board_transforms: Vec<[[f64; 3]; 3]>,
    pub images: Vec<BfImage>,
}

impl BfCalJson {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn angles(&self, wavelength: f64) -> Vec<KVector> {
        self.images.iter().map(|im| KVector::from_na(im.calibrated_na, wavelength)).collect()
    }
}

/// Brightfield flags from mean intensity.
pub fn classify_brightfield(stack: &ImageStack, fraction: f64) -> Vec<bool> {
    let means: Vec<f64> = stack.images.iter().map(|im| im.mean().unwrap_or(0.0)).collect();
    let max = means.iter().cloned().fold(0.0, f64::max);
    means.iter().map(|&m| max > 0.0 && m >= fraction * max).collect()
}

/// Candidate grid for one image.
pub fn search_grid(window: &SearchWindow, expected_px: [f64; 2], radius: f64, spectrum_pixel_na: f64) -> CandidateGrid {
    match *window {
        SearchWindow::Square { half_na } => {
            let half = (half_na / spectrum_pixel_na).round().max(1.0) as i64;
            CandidateGrid::square([expected_px[0].round() as i64, expected_px[1].round() as i64], half)
        }
        SearchWindow::BrightfieldDisk => CandidateGrid::disk(radius),
    }
}

/// Runs the full brightfield pipeline on `stack`.
pub fn calibrate(stack: &ImageStack, cfg: &BfCalConfig) -> Result<BfCalResult> {
    cfg.validate()?;
    stack.validate()?;
    let params = &stack.params;
    let lambda = params.wavelength;
    let px_na = params.spectrum_pixel_na();
    let m = params.patch_pixels;

    let bright = classify_brightfield(stack, cfg.bf_fraction);
    let bf_idx: Vec<usize> = (0..stack.len()).filter(|&i| bright[i]).collect();
    if bf_idx.is_empty() {
        return Err(Error::NoBrightfield);
    }
    let pre = preprocess_spectra(stack, cfg.sigma, cfg.eps)?;
    let expected_px: Vec<[f64; 2]> = stack.expected.iter().map(|k| k.to_pixels(params)).collect();

    let nominal = pupil_radius_pixels(params);
    let mut radius = nominal;
    let mut radius_calibrated = false;
    if cfg.radius.enabled && bf_idx.len() >= 3 {
        let grids: Vec<CandidateGrid> =
            bf_idx.iter().map(|&i| search_grid(&cfg.window, expected_px[i], nominal, px_na)).collect();
        let specs: Vec<_> = bf_idx.iter().map(|&i| &pre.spectra[i]).collect();
        let grid_refs: Vec<_> = grids.iter().collect();
        let search = RadiusSearch {
            bounds: (nominal * cfg.radius.bounds_rel.0, nominal * cfg.radius.bounds_rel.1),
            step: cfg.radius.step_px,
            subset_size: cfg.radius.subset_size.max(3),
            seed: cfg.seed,
            min_prominence: cfg.radius.min_prominence,
            local_half: 3,
        };
        match calibrate_radius(&specs, &grid_refs, nominal, &search, &cfg.edge()) {
            Ok(r) => {
                radius = r.radius;
                radius_calibrated = true;
                info!("calibrated pupil radius {radius:.2} px (nominal {nominal:.2})");
            }
            Err(Error::RadiusIndeterminate { fallback }) => {
                warn!("radius response is flat; keeping {fallback:.2} px");
            }
            Err(e) => return Err(e),
        }
    }
    if radius >= (m / 2) as f64 {
        return Err(Error::ApertureExceedsGrid { radius, grid: m });
    }

    let support = SupportIndex::new(&support_mask(m, radius));
    let fft = Fft2::new(m);
    let rules = cfg.rules();
    let outcomes: Vec<(usize, CenterOutcome)> = bf_idx
        .par_iter()
        .map(|&i| {
            let spectrum = real_spectrum(&stack.images[i], &fft);
            let grid = search_grid(&cfg.window, expected_px[i], radius, px_na);
            let search = CenterSearch {
                spec: &pre.spectra[i],
                intensity: &stack.images[i],
                spectrum: &spectrum,
                radius,
                expected_px: expected_px[i],
                grid: &grid,
            };
            (i, find_center(&search, &rules, &support, &fft).0)
        })
        .collect();

    let mut measured = vec![None; stack.len()];
    let mut outcome_of = vec![None; stack.len()];
    for (i, o) in &outcomes {
        if let Some(e) = o.estimate() {
            measured[*i] = Some([e.center_px[0] as f64 * px_na, e.center_px[1] as f64 * px_na]);
        }
        outcome_of[*i] = Some(*o);
    }
    let found = measured.iter().filter(|m| m.is_some()).count();
    info!("brightfield centers found: {found} of {}", bf_idx.len());
    if found < 3 {
        warn!(
            "only {found} brightfield circles passed min_prominence {} and max_residual {}; \
             patches much smaller than 256 px usually need a lower min_prominence",
            cfg.min_prominence, cfg.max_residual
        );
    }

    let expected_na: Vec<[f64; 2]> = stack.expected.iter().map(|k| k.to_na(lambda)).collect();
    let model = cfg.fit_model(stack.geometry.as_ref());
    let ransac = RansacSettings {
        threshold: cfg.ransac_threshold_px * px_na,
        iterations: cfg.ransac_iterations,
        seed: cfg.seed,
    };
    let ex = fit_and_extrapolate(&expected_na, &measured, &stack.boards, model, &ransac)?;

    let images = (0..stack.len())
        .map(|i| {
            let est = outcome_of[i].and_then(|o| o.estimate().copied());
            BfImage {
                index: i,
                brightfield: bright[i],
                prior_na: expected_na[i],
                calibrated_na: ex.angles_na[i],
                residual: est.map(|e| e.residual),
                prominence: outcome_of[i].map(|o| match o {
                    CenterOutcome::Found(e) => e.prominence,
                    CenterOutcome::NotFound { prominence } => prominence,
                }),
                found: est.is_some(),
                outlier: ex.outlier[i],
                residual_decided: est.is_some_and(|e| e.residual_decided),
            }
        })
        .collect();
    Ok(BfCalResult {
        radius,
        radius_calibrated,
        family: model,
        transform: ex.transform,
        board_transforms: ex.board_transforms,
        images,
    })
}
