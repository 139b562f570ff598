use log::warn;

use crate::error::{Error, Result};
use crate::transform::{ransac_fit, Family, Transform};

/// Robust fit settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacSettings {
    /// Inlier distance, NA.
    pub threshold: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Which transform model explains the illuminator misalignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    Global(Family),
    /// Affine per board; boards with too few brightfield centers inherit a
    /// global similarity fit.
    AffinePerBoard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    /// Global transform (the similarity fallback for per-board fits).
    pub transform: Transform,
    /// Per-board transform actually applied, indexed by board id.
    pub board_transforms: Vec<Transform>,
    /// Initial angle per image, NA.
    pub angles_na: Vec<[f64; 2]>,
    /// True when a measured center was rejected by RANSAC.
    pub outlier: Vec<bool>,
}

/// Fits `expected -> measured` over measured images and fills in the rest.
///
/// `measured[i]` is `None` for darkfield images and centers that were not
/// found. Inliers keep their measurement; everything else receives the
/// transformed prior.
pub fn fit_and_extrapolate(
    expected_na: &[[f64; 2]],
    measured: &[Option<[f64; 2]>],
    boards: &[usize],
    model: FitModel,
    ransac: &RansacSettings,
) -> Result<Extrapolation> {
    let n = expected_na.len();
    if measured.len() != n || boards.len() != n {
        return Err(Error::InvalidConfig("per-image inputs differ in length".into()));
    }
    let idx: Vec<usize> = (0..n).filter(|&i| measured[i].is_some()).collect();
    let src: Vec<[f64; 2]> = idx.iter().map(|&i| expected_na[i]).collect();
    let dst: Vec<[f64; 2]> = idx.iter().map(|&i| measured[i].unwrap()).collect();

    let global_family = match model {
        FitModel::Global(f) => f,
        FitModel::AffinePerBoard => Family::Similarity,
    };
    let needed = global_family.min_points() + 1;
    if src.len() < needed {
        return Err(Error::TransformUnfit { inliers: src.len(), needed });
    }
    let global = ransac_fit(global_family, &src, &dst, ransac.threshold, ransac.iterations, ransac.seed)?;
    let mut inlier = vec![false; n];
    for (j, &i) in idx.iter().enumerate() {
        inlier[i] = global.inliers[j];
    }

    let board_count = boards.iter().copied().max().map_or(0, |b| b + 1);
    let mut board_transforms = vec![global.transform; board_count];
    if model == FitModel::AffinePerBoard {
        for (b, slot) in board_transforms.iter_mut().enumerate() {
            let members: Vec<usize> = (0..idx.len()).filter(|&j| boards[idx[j]] == b).collect();
            if members.len() < 4 {
                continue;
            }
            let s: Vec<[f64; 2]> = members.iter().map(|&j| src[j]).collect();
            let d: Vec<[f64; 2]> = members.iter().map(|&j| dst[j]).collect();
            match ransac_fit(Family::Affine, &s, &d, ransac.threshold, ransac.iterations, ransac.seed ^ b as u64) {
                Ok(fit) => {
                    *slot = fit.transform;
                    for (k, &j) in members.iter().enumerate() {
                        inlier[idx[j]] = fit.inliers[k];
                    }
                }
                Err(e) => warn!("board {b}: {e}; using the global fit"),
            }
        }
    }

    let mut outlier = vec![false; n];
    let angles_na = (0..n)
        .map(|i| match measured[i] {
            Some(m) if inlier[i] => m,
            Some(_) => {
                outlier[i] = true;
                board_transforms[boards[i]].apply(expected_na[i])
            }
            None => board_transforms[boards[i]].apply(expected_na[i]),
        })
        .collect();
    Ok(Extrapolation { transform: global.transform, board_transforms, angles_na, outlier })
}
