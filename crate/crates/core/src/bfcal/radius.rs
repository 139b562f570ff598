use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::edge::{candidate_fits, circular_edge_metrics, edge_e1, prominence, CandidateGrid, EdgeSettings};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusCalibration {
    pub radius: f64,
    /// `(R, Σ peak E1)` for every tested radius.
    pub scores: Vec<(f64, f64)>,
    /// Stack indices used.
    pub subset: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusSearch {
    pub bounds: (f64, f64),
    pub step: f64,
    pub subset_size: usize,
    pub seed: u64,
    /// Minimum prominence of the score curve.
    pub min_prominence: f64,
    /// Half-width of the local re-search around each coarse center, pixels.
    pub local_half: i64,
}

/// Self-calibrated pupil radius: the `R` maximizing the summed peak E1 over a
/// random subset of brightfield spectra.
///
/// Centers are first located once at `nominal`; each trial radius then only
/// re-searches a small square around those centers.
pub fn calibrate_radius(
    spectra: &[&Array2<f64>],
    grids: &[&CandidateGrid],
    nominal: f64,
    search: &RadiusSearch,
    edge: &EdgeSettings,
) -> Result<RadiusCalibration> {
    if search.subset_size < 3 {
        return Err(Error::InvalidConfig(format!("radius subset size {} must be >= 3", search.subset_size)));
    }
    let (lo, hi) = search.bounds;
    if !(lo > 2.0 * edge.sigma && hi >= lo && search.step > 0.0) {
        return Err(Error::InvalidConfig(format!("radius bounds ({lo}, {hi}) are unusable")));
    }
    if spectra.len() != grids.len() {
        return Err(Error::InvalidConfig("one candidate grid per spectrum is required".into()));
    }
    let k = search.subset_size.min(spectra.len());
    if k == 0 {
        return Err(Error::NoBrightfield);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut subset = sample(&mut rng, spectra.len(), k).into_vec();
    subset.sort_unstable();

    let coarse: Vec<[i64; 2]> = subset
        .par_iter()
        .map(|&i| {
            let m = circular_edge_metrics(spectra[i], nominal, grids[i], edge);
            m.argmax_e1().map_or([0, 0], |j| m.grid.points[j])
        })
        .collect();

    let n_steps = ((hi - lo) / search.step + 1e-9).floor() as usize;
    let radii: Vec<f64> = (0..=n_steps).map(|j| lo + j as f64 * search.step).collect();
    let scores: Vec<(f64, f64)> = radii
        .par_iter()
        .map(|&r| {
            let total: f64 = subset
                .iter()
                .zip(&coarse)
                .map(|(&i, c)| {
                    let spec = spectra[i];
                    let local = CandidateGrid::square(*c, search.local_half);
                    local
                        .points
                        .iter()
                        .filter(|p| candidate_fits(spec.nrows(), **p, r, edge))
                        .map(|p| edge_e1(spec, [p[0] as f64, p[1] as f64], r, edge))
                        .fold(f64::MIN, f64::max)
                })
                .filter(|v| v.is_finite())
                .sum();
            (r, total)
        })
        .collect();
    let values: Vec<f64> = scores.iter().map(|s| s.1).collect();
    if prominence(&values) < search.min_prominence {
        return Err(Error::RadiusIndeterminate { fallback: nominal });
    }
    let best = scores.iter().copied().fold((nominal, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    Ok(RadiusCalibration { radius: best.0, scores, subset })
}
