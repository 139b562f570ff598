use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bfcal::bilinear;
use crate::error::Result;
use crate::simulate::{BarElement, BarOrientation, BarTarget};

/// Minimum relative dip between bars and gaps for a group to count as resolved.
pub const RESOLVED_DIP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupContrast {
    pub period_px: f64,
    /// Dip of each element, in the group's element order.
    pub dips: Vec<f64>,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub groups: Vec<GroupContrast>,
    /// Finest period of the run of resolved groups that starts at the coarsest.
    pub finest_px: Option<f64>,
}

/// `(I_max - I_min) / I_max` across one three-bar element: the weakest bar
/// peak against the strongest gap.
pub fn bar_contrast(amplitude: &Array2<f64>, period: f64, e: &BarElement) -> f64 {
    let n = amplitude.nrows();
    let centered = |x: f64, y: f64| bilinear(amplitude, x - (n / 2) as f64, y - (n / 2) as f64);
    let span = 2.5 * period;
    let lines: Vec<f64> = (0..9).map(|j| span * (0.2 + 0.6 * j as f64 / 8.0)).collect();
    let profile = |u: f64| -> f64 {
        let sum: f64 = lines
            .iter()
            .map(|&v| match e.orientation {
                BarOrientation::Vertical => centered(e.origin[0] + u, e.origin[1] + v),
                BarOrientation::Horizontal => centered(e.origin[0] + v, e.origin[1] + u),
            })
            .sum();
        sum / lines.len() as f64
    };
    // Pixel centers sit at integer coordinates, so a bar covering [a, b) in
    // continuous terms is sampled over [a - 0.5, b - 0.5).
    let window = |a: f64, b: f64, pick: fn(f64, f64) -> f64, init: f64| -> f64 {
        let steps = 16;
        (0..=steps).map(|j| profile(a - 0.5 + (b - a) * j as f64 / steps as f64)).fold(init, pick)
    };
    let peak = (0..3)
        .map(|j| window(j as f64 * period, (j as f64 + 0.5) * period, f64::max, f64::MIN))
        .fold(f64::MAX, f64::min);
    let gap = (0..2)
        .map(|j| window((j as f64 + 0.5) * period, (j as f64 + 1.0) * period, f64::min, f64::MAX))
        .fold(f64::MIN, f64::max);
    if !(peak > 0.0) {
        return 0.0;
    }
    (peak - gap) / peak
}

/// Bar contrast of every group and the finest resolved period.
pub fn measure_resolution(amplitude: &Array2<f64>, target: &BarTarget) -> Result<ResolutionReport> {
    target.check_fits(amplitude.nrows().min(amplitude.ncols()))?;
    let groups: Vec<GroupContrast> = target
        .groups
        .iter()
        .map(|g| {
            let dips: Vec<f64> = g.elements.iter().map(|e| bar_contrast(amplitude, g.period_px, e)).collect();
            let resolved = !dips.is_empty() && dips.iter().all(|d| *d > RESOLVED_DIP);
            GroupContrast { period_px: g.period_px, dips, resolved }
        })
        .collect();
    let finest_px = groups.iter().take_while(|g| g.resolved).last().map(|g| g.period_px);
    Ok(ResolutionReport { groups, finest_px })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendered_target_resolves_every_group() {
        let t = BarTarget::standard(128, 10.0, 3.0).unwrap();
        let r = measure_resolution(&t.render(128), &t).unwrap();
        assert_eq!(r.finest_px, Some(t.groups.last().unwrap().period_px));
    }

    #[test]
    fn uniform_image_resolves_nothing() {
        let t = BarTarget::standard(128, 10.0, 3.0).unwrap();
        let r = measure_resolution(&Array2::from_elem((128, 128), 0.7), &t).unwrap();
        assert_eq!(r.finest_px, None);
    }

    #[test]
    fn layout_outside_the_image_is_a_registration_error() {
        let t = BarTarget::standard(256, 12.0, 3.0).unwrap();
        assert!(measure_resolution(&Array2::zeros((64, 64)), &t).is_err());
    }
}
