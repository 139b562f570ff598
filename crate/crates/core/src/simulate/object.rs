use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Domain, Fft2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    SiemensStarPhase,
    BarTargetAmplitude,
    RandomSmooth,
}

/// Declarative description of a test object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectSpec {
    SiemensStarPhase { spokes: usize, phase: f64 },
    BarTargetAmplitude { target: BarTarget },
    RandomSmooth { seed: u64, correlation_px: f64 },
}

impl ObjectSpec {
    pub fn siemens_star() -> Self {
        ObjectSpec::SiemensStarPhase { spokes: 36, phase: 1.0 }
    }

    pub fn random_smooth(seed: u64) -> Self {
        ObjectSpec::RandomSmooth { seed, correlation_px: 0.75 }
    }

    pub fn kind(&self) -> ObjectKind {
        match self {
            ObjectSpec::SiemensStarPhase { .. } => ObjectKind::SiemensStarPhase,
            ObjectSpec::BarTargetAmplitude { .. } => ObjectKind::BarTargetAmplitude,
            ObjectSpec::RandomSmooth { .. } => ObjectKind::RandomSmooth,
        }
    }
}

/// Thin complex transmittance on the (possibly super-resolved) object grid.
#[derive(Debug, Clone)]
pub struct GroundTruthObject {
    pub field: ComplexField,
    pub kind: ObjectKind,
}

impl GroundTruthObject {
    pub fn generate(spec: &ObjectSpec, n: usize) -> Result<Self> {
        if !n.is_multiple_of(2) || n < 16 {
            return Err(Error::InvalidConfig(format!("object grid {n} must be even and >= 16")));
        }
        let data = match spec {
            ObjectSpec::SiemensStarPhase { spokes, phase } => siemens_star(n, *spokes, *phase)?,
            ObjectSpec::BarTargetAmplitude { target } => {
                target.check_fits(n)?;
                target.render(n).mapv(|a| Complex64::new(a, 0.0))
            }
            ObjectSpec::RandomSmooth { seed, correlation_px } => random_smooth(n, *seed, *correlation_px),
        };
        Ok(GroundTruthObject { field: ComplexField::new(data, Domain::RealSpace), kind: spec.kind() })
    }

    pub fn size(&self) -> usize {
        self.field.size()
    }

    pub fn amplitude(&self) -> Array2<f64> {
        self.field.data.mapv(|z| z.norm())
    }
}

const SUPERSAMPLE: usize = 4;

fn supersampled<F: Fn(f64, f64) -> Complex64>(n: usize, f: F) -> Array2<Complex64> {
    let s = SUPERSAMPLE as f64;
    Array2::from_shape_fn((n, n), |(r, c)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..SUPERSAMPLE {
            for b in 0..SUPERSAMPLE {
                let y = r as f64 + (a as f64 + 0.5) / s - 0.5;
                let x = c as f64 + (b as f64 + 0.5) / s - 0.5;
                acc += f(x, y);
            }
        }
        acc / (s * s)
    })
}

fn siemens_star(n: usize, spokes: usize, phase: f64) -> Result<Array2<Complex64>> {
    if spokes == 0 || !(phase.abs() <= std::f64::consts::PI) {
        return Err(Error::InvalidConfig("star needs spokes > 0 and |phase| <= pi".into()));
    }
    let c = (n / 2) as f64;
    let outer = 0.45 * n as f64;
    Ok(supersampled(n, |x, y| {
        let (dx, dy) = (x - c, y - c);
        let r = dx.hypot(dy);
        let level = if r > outer {
            0.5
        } else if (spokes as f64 * dy.atan2(dx)).sin() > 0.0 {
            1.0
        } else {
            0.0
        };
        Complex64::from_polar(1.0, phase * level)
    }))
}

fn random_smooth(n: usize, seed: u64, correlation_px: f64) -> Array2<Complex64> {
    let fft = Fft2::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let smooth = |rng: &mut ChaCha8Rng| {
        let mut f = Array2::from_shape_fn((n, n), |_| {
            let v: f64 = StandardNormal.sample(rng);
            Complex64::new(v, 0.0)
        });
        fft.forward(&mut f);
        let half = (n / 2) as f64;
        let w = std::f64::consts::PI * correlation_px / n as f64;
        for ((r, c), z) in f.indexed_iter_mut() {
            let ky = r as f64 - half;
            let kx = c as f64 - half;
            *z *= (-2.0 * (kx * kx + ky * ky) * w * w).exp();
        }
        fft.inverse(&mut f);
        f.mapv(|z| z.re)
    };
    let a = smooth(&mut rng);
    let p = smooth(&mut rng);
    let (amin, amax) = a.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let pmax = p.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let span = (amax - amin).max(f64::MIN_POSITIVE);
    ndarray::Zip::from(&a).and(&p).map_collect(|&av, &pv| {
        let amp = 0.4 + 0.6 * (av - amin) / span;
        Complex64::from_polar(amp, 1.5 * pv / pmax)
    })
}

/// Orientation of the bars in one element: `Vertical` bars vary along x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarOrientation {
    Vertical,
    Horizontal,
}

/// Three bars of width `period / 2`, spanning `2.5 · period` by `5 · period / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarElement {
    pub orientation: BarOrientation,
    /// Top-left corner `(x, y)` in object pixels.
    pub origin: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarGroup {
    pub period_px: f64,
    pub elements: Vec<BarElement>,
}

impl BarGroup {
    pub fn span(&self) -> f64 {
        2.5 * self.period_px
    }

    pub fn length(&self) -> f64 {
        2.5 * self.period_px
    }
}

/// Amplitude resolution target with groups ordered coarse to fine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarTarget {
    pub groups: Vec<BarGroup>,
    pub background: f64,
    pub bar_level: f64,
}

impl BarTarget {
    /// Shelf-packed groups with periods `coarse · ratio^-g`, down to `finest` pixels.
    pub fn standard(n: usize, coarse: f64, finest: f64) -> Result<Self> {
        let ratio = 2f64.powf(1.0 / 6.0);
        let margin = 6.0;
        let mut groups = Vec::new();
        let (mut x, mut y, mut row_h) = (margin, margin, 0.0f64);
        let mut p = coarse;
        while p >= finest - 1e-9 {
            let gap = p.max(3.0);
            let w = 2.5 * p + gap + 2.5 * p;
            let h = 2.5 * p;
            if x + w > n as f64 - margin {
                x = margin;
                y += row_h + gap.max(4.0);
                row_h = 0.0;
            }
            if y + h > n as f64 - margin {
                return Err(Error::InvalidConfig(format!("bar target does not fit a {n} px grid")));
            }
            groups.push(BarGroup {
                period_px: p,
                elements: vec![
                    BarElement { orientation: BarOrientation::Vertical, origin: [x, y] },
                    BarElement { orientation: BarOrientation::Horizontal, origin: [x + 2.5 * p + gap, y] },
                ],
            });
            x += w + gap.max(4.0);
            row_h = row_h.max(h);
            p /= ratio;
        }
        Ok(BarTarget { groups, background: 0.1, bar_level: 1.0 })
    }

    pub fn check_fits(&self, n: usize) -> Result<()> {
        for g in &self.groups {
            for e in &g.elements {
                let (w, h) = (g.span(), g.length());
                if e.origin[0] < 1.0
                    || e.origin[1] < 1.0
                    || e.origin[0] + w > n as f64 - 1.0
                    || e.origin[1] + h > n as f64 - 1.0
                {
                    return Err(Error::Registration(format!(
                        "group with period {:.2} px lies outside a {n} px image",
                        g.period_px
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, n: usize) -> Array2<f64> {
        supersampled(n, |x, y| {
            let on = self.groups.iter().any(|g| g.elements.iter().any(|e| bar_covers(g.period_px, e, x, y)));
            Complex64::new(if on { self.bar_level } else { self.background }, 0.0)
        })
        .mapv(|z| z.re)
    }
}

fn bar_covers(period: f64, e: &BarElement, x: f64, y: f64) -> bool {
    let (u, v) = match e.orientation {
        BarOrientation::Vertical => (x - e.origin[0], y - e.origin[1]),
        BarOrientation::Horizontal => (y - e.origin[1], x - e.origin[0]),
    };
    let span = 2.5 * period;
    if u < 0.0 || u >= span || v < 0.0 || v >= span {
        return false;
    }
    (u / period).fract() < 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objects_stay_in_range() {
        for spec in [ObjectSpec::siemens_star(), ObjectSpec::random_smooth(3)] {
            let o = GroundTruthObject::generate(&spec, 64).unwrap();
            for z in o.field.data.iter() {
                assert!(z.norm() <= 1.0 + 1e-12);
                assert!(z.arg().abs() <= std::f64::consts::PI);
            }
        }
    }

    #[test]
    fn bar_target_levels() {
        let t = BarTarget::standard(256, 10.0, 2.0).unwrap();
        assert!(t.groups.len() > 10);
        let o = GroundTruthObject::generate(&ObjectSpec::BarTargetAmplitude { target: t }, 256).unwrap();
        let amp = o.amplitude();
        assert!(amp.iter().all(|&a| (0.1 - 1e-12..=1.0 + 1e-12).contains(&a)));
        assert!(amp.iter().any(|&a| a > 0.99));
    }

    #[test]
    fn bar_target_too_large_fails() {
        assert!(BarTarget::standard(64, 20.0, 2.0).is_err());
    }

    #[test]
    fn random_smooth_is_seeded() {
        let a = GroundTruthObject::generate(&ObjectSpec::random_smooth(9), 64).unwrap();
        let b = GroundTruthObject::generate(&ObjectSpec::random_smooth(9), 64).unwrap();
        let c = GroundTruthObject::generate(&ObjectSpec::random_smooth(10), 64).unwrap();
        assert_eq!(a.field.data, b.field.data);
        assert_ne!(a.field.data, c.field.data);
    }
}
