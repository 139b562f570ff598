//! Planar transforms between illumination maps, least-squares fits and RANSAC.
//!
//! Points are NA-unit 2-vectors. A transform maps `v -> L v + t`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Rigid,
    Similarity,
    Affine,
}

impl Family {
    /// Points in a RANSAC minimal sample.
    pub fn min_points(self) -> usize {
        match self {
            Family::Rigid | Family::Similarity => 2,
            Family::Affine => 3,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rigid" => Ok(Family::Rigid),
            "similarity" => Ok(Family::Similarity),
            "affine" => Ok(Family::Affine),
            other => Err(Error::InvalidConfig(format!("unknown transform family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub family: Family,
    /// Row-major linear part.
    pub linear: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl Transform {
    pub fn identity(family: Family) -> Self {
        Transform { family, linear: [[1.0, 0.0], [0.0, 1.0]], translation: [0.0, 0.0] }
    }

    /// `v -> scale · Rot(deg) · v + shift`.
    pub fn similarity(rotation_deg: f64, scale: f64, shift: [f64; 2]) -> Self {
        let (s, c) = crate::simulate::sin_cos_deg(rotation_deg);
        Transform {
            family: Family::Similarity,
            linear: [[scale * c, -scale * s], [scale * s, scale * c]],
            translation: shift,
        }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let l = &self.linear;
        [l[0][0] * v[0] + l[0][1] * v[1] + self.translation[0], l[1][0] * v[0] + l[1][1] * v[1] + self.translation[1]]
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Transform) -> Transform {
        let (a, b) = (&self.linear, &other.linear);
        let mut linear = [[0.0; 2]; 2];
        for (i, row) in linear.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        let t = self.apply(other.translation);
        let family = if self.family == other.family { self.family } else { Family::Affine };
        Transform { family, linear, translation: t }
    }

    pub fn determinant(&self) -> f64 {
        self.linear[0][0] * self.linear[1][1] - self.linear[0][1] * self.linear[1][0]
    }

    pub fn inverse(&self) -> Option<Transform> {
        let det = self.determinant();
        if det.abs() < 1e-300 || !det.is_finite() {
            return None;
        }
        let l = &self.linear;
        let inv = [[l[1][1] / det, -l[0][1] / det], [-l[1][0] / det, l[0][0] / det]];
        let t = self.translation;
        let translation = [-(inv[0][0] * t[0] + inv[0][1] * t[1]), -(inv[1][0] * t[0] + inv[1][1] * t[1])];
        Some(Transform { family: self.family, linear: inv, translation })
    }

    /// Rotation in degrees; exact for rigid and similarity transforms.
    pub fn rotation_deg(&self) -> f64 {
        self.linear[1][0].atan2(self.linear[0][0]).to_degrees()
    }

    /// Isotropic scale `sqrt(|det L|)`.
    pub fn scale(&self) -> f64 {
        self.determinant().abs().sqrt()
    }

    pub fn shift(&self) -> [f64; 2] {
        self.translation
    }

    pub fn to_homogeneous(&self) -> [[f64; 3]; 3] {
        let l = &self.linear;
        let t = &self.translation;
        [[l[0][0], l[0][1], t[0]], [l[1][0], l[1][1], t[1]], [0.0, 0.0, 1.0]]
    }

    pub fn from_homogeneous(family: Family, m: &[[f64; 3]; 3]) -> Self {
        Transform { family, linear: [[m[0][0], m[0][1]], [m[1][0], m[1][1]]], translation: [m[0][2], m[1][2]] }
    }

    /// Weighted RMS distance between `apply(src)` and `dst`.
    pub fn rms_residual(&self, src: &[[f64; 2]], dst: &[[f64; 2]]) -> f64 {
        if src.is_empty() {
            return 0.0;
        }
        let ss: f64 = src.iter().zip(dst).map(|(s, d)| dist2(self.apply(*s), *d)).sum();
        (ss / src.len() as f64).sqrt()
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Weighted least-squares fit of `family` taking `src` onto `dst`.
pub fn fit(family: Family, src: &[[f64; 2]], dst: &[[f64; 2]], weights: Option<&[f64]>) -> Result<Transform> {
    if src.len() != dst.len() || weights.is_some_and(|w| w.len() != src.len()) {
        return Err(Error::InvalidConfig("point lists differ in length".into()));
    }
    if src.len() < family.min_points() {
        return Err(Error::RankDeficient);
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let wsum: f64 = (0..src.len()).map(w).sum();
    if !(wsum > 0.0) || (0..src.len()).any(|i| !(w(i) >= 0.0)) {
        return Err(Error::InvalidConfig("weights must be non-negative with a positive sum".into()));
    }
    let mut ms = [0.0; 2];
    let mut md = [0.0; 2];
    for i in 0..src.len() {
        for d in 0..2 {
            ms[d] += w(i) * src[i][d] / wsum;
            md[d] += w(i) * dst[i][d] / wsum;
        }
    }
    // Second moments of the centered sets.
    let (mut saa, mut sxx, mut sxy, mut syx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
    for i in 0..src.len() {
        let a = [src[i][0] - ms[0], src[i][1] - ms[1]];
        let b = [dst[i][0] - md[0], dst[i][1] - md[1]];
        let wi = w(i);
        saa += wi * (a[0] * a[0] + a[1] * a[1]);
        sxx += wi * b[0] * a[0];
        sxy += wi * b[0] * a[1];
        syx += wi * b[1] * a[0];
        syy += wi * b[1] * a[1];
        cxx += wi * a[0] * a[0];
        cxy += wi * a[0] * a[1];
        cyy += wi * a[1] * a[1];
    }
    let scale_ref = saa.max(f64::MIN_POSITIVE);
    let linear = match family {
        Family::Rigid | Family::Similarity => {
            if saa <= 1e-24 * wsum {
                return Err(Error::RankDeficient);
            }
            // Closed-form 2-D Procrustes.
            let p = sxx + syy;
            let q = syx - sxy;
            let theta = q.atan2(p);
            let (s, c) = theta.sin_cos();
            let k = if family == Family::Rigid { 1.0 } else { p.hypot(q) / saa };
            [[k * c, -k * s], [k * s, k * c]]
        }
        Family::Affine => {
            let det = cxx * cyy - cxy * cxy;
            if det <= 1e-12 * scale_ref * scale_ref {
                return Err(Error::RankDeficient);
            }
            let inv = [[cyy / det, -cxy / det], [-cxy / det, cxx / det]];
            [
                [sxx * inv[0][0] + sxy * inv[1][0], sxx * inv[0][1] + sxy * inv[1][1]],
                [syx * inv[0][0] + syy * inv[1][0], syx * inv[0][1] + syy * inv[1][1]],
            ]
        }
    };
    let translation =
        [md[0] - (linear[0][0] * ms[0] + linear[0][1] * ms[1]), md[1] - (linear[1][0] * ms[0] + linear[1][1] * ms[1])];
    Ok(Transform { family, linear, translation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub transform: Transform,
    pub inliers: Vec<bool>,
}

impl RansacFit {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Seeded RANSAC: best consensus, ties broken by the lower refit residual and
/// then the earlier iteration; the result is refit on the winning consensus.
pub fn ransac_fit(
    family: Family,
    src: &[[f64; 2]],
    dst: &[[f64; 2]],
    threshold: f64,
    iterations: usize,
    seed: u64,
) -> Result<RansacFit> {
    if src.len() != dst.len() {
        return Err(Error::InvalidConfig("point lists differ in length".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidConfig(format!("RANSAC threshold {threshold} must be positive")));
    }
    let k = family.min_points();
    let n = src.len();
    if n < k {
        return Err(Error::TransformUnfit { inliers: n, needed: k });
    }
    let t2 = threshold * threshold;
    let consensus =
        |t: &Transform| -> Vec<bool> { src.iter().zip(dst).map(|(s, d)| dist2(t.apply(*s), *d) <= t2).collect() };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, f64, Vec<bool>)> = None;
    for _ in 0..iterations.max(1) {
        let idx = sample(&mut rng, n, k).into_vec();
        let s: Vec<[f64; 2]> = idx.iter().map(|&i| src[i]).collect();
        let d: Vec<[f64; 2]> = idx.iter().map(|&i| dst[i]).collect();
        let Ok(model) = fit(family, &s, &d, None) else { continue };
        let mask = consensus(&model);
        let count = mask.iter().filter(|&&b| b).count();
        if count < k {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bc, _, _)) if count > *bc => true,
            Some((bc, _, _)) if count < *bc => false,
            Some((_, br, _)) => refit_residual(family, src, dst, &mask).is_some_and(|r| r < *br),
        };
        if better {
            let r = refit_residual(family, src, dst, &mask).unwrap_or(f64::INFINITY);
            best = Some((count, r, mask));
        }
    }
    let Some((count, _, mask)) = best else {
        return Err(Error::TransformUnfit { inliers: 0, needed: k });
    };
    let (s, d) = select(src, dst, &mask);
    let transform = fit(family, &s, &d, None).map_err(|_| Error::TransformUnfit { inliers: count, needed: k })?;
    Ok(RansacFit { transform, inliers: mask })
}

fn select(src: &[[f64; 2]], dst: &[[f64; 2]], mask: &[bool]) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    src.iter().zip(dst).zip(mask).filter(|(_, &m)| m).map(|((s, d), _)| (*s, *d)).unzip()
}

fn refit_residual(family: Family, src: &[[f64; 2]], dst: &[[f64; 2]], mask: &[bool]) -> Option<f64> {
    let (s, d) = select(src, dst, mask);
    fit(family, &s, &d, None).ok().map(|t| t.rms_residual(&s, &d))
}
