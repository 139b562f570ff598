//! Circular edge metrics on preprocessed spectra.
//!
//! Coordinates are centered spectrum pixels `(x, y)`; `x` runs along columns.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Bilinear sample of a centered spectrum; zero outside the array.
#[inline]
pub fn bilinear(spec: &Array2<f64>, x: f64, y: f64) -> f64 {
    let (rows, cols) = spec.dim();
    let fx = x + (cols / 2) as f64;
    let fy = y + (rows / 2) as f64;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let (tx, ty) = (fx - x0, fy - y0);
    let (c0, r0) = (x0 as isize, y0 as isize);
    if let Some(data) = spec.as_slice() {
        if r0 >= 0 && c0 >= 0 && (r0 as usize) + 1 < rows && (c0 as usize) + 1 < cols {
            let i = r0 as usize * cols + c0 as usize;
            let top = data[i] * (1.0 - tx) + data[i + 1] * tx;
            let bottom = data[i + cols] * (1.0 - tx) + data[i + cols + 1] * tx;
            return top * (1.0 - ty) + bottom * ty;
        }
    }
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            0.0
        } else {
            spec[[r as usize, c as usize]]
        }
    };
    let top = at(r0, c0) * (1.0 - tx) + at(r0, c0 + 1) * tx;
    let bottom = at(r0 + 1, c0) * (1.0 - tx) + at(r0 + 1, c0 + 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Angles (radians) of the `n` radial lines around `center`.
///
/// When the circle at `center` overlaps its conjugate at `-center`, the arc
/// within `acos(|c| / R) + margin` of the direction to `-center` is skipped and
/// the lines are spread evenly over the rest.
pub fn arc_angles(center: [f64; 2], radius: f64, n: usize, margin_deg: f64) -> Vec<f64> {
    let d = center[0].hypot(center[1]);
    if d > 0.0 && d < radius {
        let excl = (d / radius).acos() + margin_deg.to_radians();
        let toward = (-center[1]).atan2(-center[0]);
        let span = 2.0 * std::f64::consts::PI - 2.0 * excl;
        (0..n).map(|j| toward + excl + (j as f64 + 0.5) * span / n as f64).collect()
    } else {
        (0..n).map(|j| j as f64 * 2.0 * std::f64::consts::PI / n as f64).collect()
    }
}

/// Samples `f(r, φ_n)` of a spectrum along radial lines about one center.
#[derive(Debug, Clone)]
pub struct RadialProfileSet {
    pub center: [f64; 2],
    pub angles: Vec<f64>,
    pub radii: Vec<f64>,
    /// `samples[[n, j]] = f(radii[j], angles[n])`.
    pub samples: Array2<f64>,
}

impl RadialProfileSet {
    pub fn sample(spec: &Array2<f64>, center: [f64; 2], angles: Vec<f64>, radii: Vec<f64>) -> Self {
        let samples = Array2::from_shape_fn((angles.len(), radii.len()), |(n, j)| {
            let (s, c) = angles[n].sin_cos();
            bilinear(spec, center[0] + radii[j] * c, center[1] + radii[j] * s)
        });
        RadialProfileSet { center, angles, radii, samples }
    }

    /// Profile averaged over all lines.
    pub fn mean_profile(&self) -> Vec<f64> {
        let n = self.angles.len().max(1) as f64;
        (0..self.radii.len()).map(|j| self.samples.column(j).sum() / n).collect()
    }
}

/// Candidate circle centers, one spectrum pixel apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub points: Vec<[i64; 2]>,
}

impl CandidateGrid {
    /// Square of half-width `half` pixels around `center`.
    pub fn square(center: [i64; 2], half: i64) -> Self {
        let mut points = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
        for dy in -half..=half {
            for dx in -half..=half {
                points.push([center[0] + dx, center[1] + dy]);
            }
        }
        CandidateGrid { points }
    }

    /// Every pixel strictly inside a disk of `radius` about DC.
    pub fn disk(radius: f64) -> Self {
        let h = radius.ceil() as i64;
        let mut points = Vec::new();
        for y in -h..=h {
            for x in -h..=h {
                if ((x * x + y * y) as f64) < radius * radius {
                    points.push([x, y]);
                }
            }
        }
        CandidateGrid { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Settings shared by every edge-metric evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSettings {
    pub sigma: f64,
    pub lines: usize,
    /// Finite-difference step in pixels.
    pub step: f64,
    pub arc_margin_deg: f64,
}

impl Default for EdgeSettings {
    fn default() -> Self {
        EdgeSettings { sigma: 2.0, lines: 64, step: 0.5, arc_margin_deg: 10.0 }
    }
}

/// E1 and E2 over a candidate grid; invalid entries hold 0.
#[derive(Debug, Clone)]
pub struct EdgeMetrics {
    pub grid: CandidateGrid,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub valid: Vec<bool>,
}

impl EdgeMetrics {
    pub fn argmax_e1(&self) -> Option<usize> {
        argmax(&self.e1, &self.valid)
    }

    pub fn argmax_e2(&self) -> Option<usize> {
        argmax(&self.e2, &self.valid)
    }

    /// `(max - median) / std` of the valid E1 values; 0 for a flat map.
    pub fn e1_prominence(&self) -> f64 {
        let v: Vec<f64> = self.e1.iter().zip(&self.valid).filter(|(_, ok)| **ok).map(|(e, _)| *e).collect();
        prominence(&v)
    }
}

fn argmax(v: &[f64], valid: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in 0..v.len() {
        if valid[i] && best.is_none_or(|b| v[i] > v[b]) {
            best = Some(i);
        }
    }
    best
}

/// `(max - median) / std`, or 0 when the spread vanishes.
pub fn prominence(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    if !(std > 1e-12 * max.abs().max(1e-300)) {
        return 0.0;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    (max - median) / std
}

/// True when every sample the metrics need lies inside the spectrum.
pub fn candidate_fits(size: usize, center: [i64; 2], radius: f64, s: &EdgeSettings) -> bool {
    let reach = (radius + s.sigma + s.step).ceil() as i64 + 1;
    let lo = -((size / 2) as i64);
    let hi = (size / 2) as i64 - 1;
    center.iter().all(|&c| c - reach >= lo && c + reach <= hi)
}

/// E1 at `R` (falling edge positive) and E2 at `R + σ` for one center.
pub fn edge_pair(spec: &Array2<f64>, center: [f64; 2], radius: f64, s: &EdgeSettings) -> (f64, f64) {
    let h = s.step;
    let r2 = radius + s.sigma;
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for phi in arc_angles(center, radius, s.lines, s.arc_margin_deg) {
        let (sn, cs) = phi.sin_cos();
        let f = |r: f64| bilinear(spec, center[0] + r * cs, center[1] + r * sn);
        e1 += -(f(radius + h) - f(radius - h)) / (2.0 * h);
        e2 += (f(r2 + h) - 2.0 * f(r2) + f(r2 - h)) / (h * h);
    }
    (e1, e2)
}

/// E1 alone; used when only the first-derivative peak matters.
pub fn edge_e1(spec: &Array2<f64>, center: [f64; 2], radius: f64, s: &EdgeSettings) -> f64 {
    let h = s.step;
    arc_angles(center, radius, s.lines, s.arc_margin_deg)
        .into_iter()
        .map(|phi| {
            let (sn, cs) = phi.sin_cos();
            let f = |r: f64| bilinear(spec, center[0] + r * cs, center[1] + r * sn);
            -(f(radius + h) - f(radius - h)) / (2.0 * h)
        })
        .sum()
}

pub fn circular_edge_metrics(spec: &Array2<f64>, radius: f64, grid: &CandidateGrid, s: &EdgeSettings) -> EdgeMetrics {
    let size = spec.nrows();
    let n = grid.len();
    let mut e1 = vec![0.0; n];
    let mut e2 = vec![0.0; n];
    let mut valid = vec![false; n];
    for (i, c) in grid.points.iter().enumerate() {
        if candidate_fits(size, *c, radius, s) {
            let (a, b) = edge_pair(spec, [c[0] as f64, c[1] as f64], radius, s);
            e1[i] = a;
            e2[i] = b;
            valid[i] = true;
        }
    }
    EdgeMetrics { grid: grid.clone(), e1, e2, valid }
}
