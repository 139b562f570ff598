use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::edge::{circular_edge_metrics, CandidateGrid, EdgeMetrics, EdgeSettings};
use crate::field::Fft2;
use crate::forward::SupportIndex;

/// Relative residual `‖√I - α|g|‖ / ‖√I‖` where `g` is the measured spectrum
/// re-centered at `center`, cut to the pupil support and transformed back,
/// and `α` is the least-squares scale.
///
/// The value is identical for `center` and `-center`: the spectrum of a real
/// image is Hermitian, so the two re-centred fields are complex conjugates
/// of each other up to a flip.
pub fn center_residual(
    intensity: &Array2<f64>,
    spectrum: &Array2<Complex64>,
    center: [i64; 2],
    support: &SupportIndex,
    fft: &Fft2,
) -> f64 {
    let m = spectrum.nrows() as i64;
    let mut g = Array2::<Complex64>::zeros(spectrum.dim());
    for &(r, c) in &support.pixels {
        // G(k) = Ĩ(k - center)
        let sr = r as i64 - center[1];
        let sc = c as i64 - center[0];
        if (0..m).contains(&sr) && (0..m).contains(&sc) {
            g[[r, c]] = spectrum[[sr as usize, sc as usize]];
        }
    }
    fft.inverse_from_band(&mut g, support.reach as usize);
    let mut ag = 0.0;
    let mut gg = 0.0;
    let mut aa = 0.0;
    for (i, z) in intensity.iter().zip(g.iter()) {
        let a = i.max(0.0).sqrt();
        let gm = z.norm_sqr().sqrt();
        ag += a * gm;
        gg += gm * gm;
        aa += a * a;
    }
    if aa == 0.0 {
        return 0.0;
    }
    let alpha = if gg > 0.0 { ag / gg } else { 0.0 };
    let mut ss = 0.0;
    for (i, z) in intensity.iter().zip(g.iter()) {
        let d = i.max(0.0).sqrt() - alpha * z.norm_sqr().sqrt();
        ss += d * d;
    }
    (ss / aa).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterEstimate {
    /// Winning center in spectrum pixels.
    pub center_px: [i64; 2],
    pub residual: f64,
    /// E1 peak prominence of the search map.
    pub prominence: f64,
    /// False when the two branches scored equal and proximity to the prior decided.
    pub residual_decided: bool,
    /// Candidates that survived the near-max test.
    pub candidates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CenterOutcome {
    Found(CenterEstimate),
    NotFound { prominence: f64 },
}

impl CenterOutcome {
    pub fn estimate(&self) -> Option<&CenterEstimate> {
        match self {
            CenterOutcome::Found(e) => Some(e),
            CenterOutcome::NotFound { .. } => None,
        }
    }
}

/// Inputs for one image's center search.
pub struct CenterSearch<'a> {
    pub spec: &'a Array2<f64>,
    pub intensity: &'a Array2<f64>,
    pub spectrum: &'a Array2<Complex64>,
    pub radius: f64,
    /// Prior center in (fractional) pixels.
    pub expected_px: [f64; 2],
    pub grid: &'a CandidateGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterRules {
    pub edge: EdgeSettings,
    /// Near-max band in units of the map's standard deviation.
    pub near_max_std: f64,
    /// Minimum E1 prominence for a circle to count as present.
    pub min_prominence: f64,
    /// Largest center residual still taken as a pupil circle.
    pub max_residual: f64,
}

/// Candidates with `v >= max - k·std` among the valid entries.
fn near_max(v: &[f64], valid: &[bool], k: f64) -> Vec<usize> {
    let vals: Vec<f64> = v.iter().zip(valid).filter(|(_, ok)| **ok).map(|(x, _)| *x).collect();
    if vals.is_empty() {
        return Vec::new();
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = (vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    let max = vals.iter().cloned().fold(f64::MIN, f64::max);
    let cut = max - k * std;
    (0..v.len()).filter(|&i| valid[i] && v[i] >= cut).collect()
}

/// Select the candidates from an edge-metric map.
pub fn candidate_set(metrics: &EdgeMetrics, near_max_std: f64) -> Vec<[i64; 2]> {
    let a = near_max(&metrics.e1, &metrics.valid, near_max_std);
    let b = near_max(&metrics.e2, &metrics.valid, near_max_std);
    let both: Vec<usize> = a.iter().copied().filter(|i| b.contains(i)).collect();
    let chosen = if both.is_empty() { a } else { both };
    chosen.into_iter().map(|i| metrics.grid.points[i]).collect()
}

pub fn find_center(
    search: &CenterSearch<'_>,
    rules: &CenterRules,
    support: &SupportIndex,
    fft: &Fft2,
) -> (CenterOutcome, EdgeMetrics) {
    let metrics = circular_edge_metrics(search.spec, search.radius, search.grid, &rules.edge);
    let prominence = metrics.e1_prominence();
    if !(prominence >= rules.min_prominence) {
        return (CenterOutcome::NotFound { prominence }, metrics);
    }
    let cands = candidate_set(&metrics, rules.near_max_std);
    if cands.is_empty() {
        return (CenterOutcome::NotFound { prominence }, metrics);
    }
    // Score each candidate and its conjugate.
    let mut scored: Vec<([i64; 2], f64)> = Vec::with_capacity(2 * cands.len());
    for c in &cands {
        for p in [*c, [-c[0], -c[1]]] {
            if !scored.iter().any(|(q, _)| *q == p) {
                scored.push((p, center_residual(search.intensity, search.spectrum, p, support, fft)));
            }
        }
    }
    let e = search.expected_px;
    let dist = |p: &[i64; 2]| (p[0] as f64 - e[0]).hypot(p[1] as f64 - e[1]);
    let tied = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
    let best_res = scored.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let best = scored
        .iter()
        .filter(|s| tied(s.1, best_res))
        .min_by(|a, b| dist(&a.0).total_cmp(&dist(&b.0)).then(a.0.cmp(&b.0)))
        .copied()
        .expect("non-empty");
    if !(best.1 <= rules.max_residual) {
        return (CenterOutcome::NotFound { prominence }, metrics);
    }
    let conj = [-best.0[0], -best.0[1]];
    let conj_res = scored.iter().find(|s| s.0 == conj).map(|s| s.1).unwrap_or(f64::INFINITY);
    let residual_decided = !tied(best.1, conj_res);
    let outcome = CenterOutcome::Found(CenterEstimate {
        center_px: best.0,
        residual: best.1,
        prominence,
        residual_decided,
        candidates: cands.len(),
    });
    (outcome, metrics)
}
