//! Ground-truth objects, illuminators and rendered intensity stacks.

mod illuminator;
mod object;

pub use illuminator::{
    apply_perturbation, build_illuminator, sin_cos_deg, DomeConfig, GeometryConfig, IlluminatorKind, IlluminatorModel,
    Perturbation,
};
pub use object::{BarElement, BarGroup, BarOrientation, BarTarget, GroundTruthObject, ObjectKind, ObjectSpec};

use log::warn;
use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Domain, Fft2};
use crate::forward::{predict_intensity, SupportIndex};
use crate::optics::{pupil_radius_pixels, KVector, Pupil, SystemParams};

/// Ordered intensity images with their expected illumination vectors.
#[derive(Debug, Clone)]
pub struct ImageStack {
    pub params: SystemParams,
    pub images: Vec<Array2<f64>>,
    /// Prior belief `k_{i,0}` for every image.
    pub expected: Vec<KVector>,
    /// Continuous true vectors, when simulated.
    pub truth: Option<Vec<KVector>>,
    /// Integer spectrum shift actually used by the renderer, when simulated.
    pub rendered: Option<Vec<[i64; 2]>>,
    /// Index of the illuminator source behind each image.
    pub sources: Vec<usize>,
    pub boards: Vec<usize>,
    pub geometry: Option<GeometryConfig>,
}

impl ImageStack {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let n = self.images.len();
        let m = self.params.patch_pixels;
        if self.expected.len() != n || self.sources.len() != n || self.boards.len() != n {
            return Err(Error::Format("per-image metadata length differs from image count".into()));
        }
        if self.truth.as_ref().is_some_and(|t| t.len() != n) || self.rendered.as_ref().is_some_and(|t| t.len() != n) {
            return Err(Error::Format("provenance length differs from image count".into()));
        }
        for (i, img) in self.images.iter().enumerate() {
            if img.dim() != (m, m) {
                return Err(Error::Format(format!("image {i} is {:?}, expected {m}x{m}", img.dim())));
            }
            if img.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Format(format!("image {i} has negative or non-finite pixels")));
            }
        }
        for k in &self.expected {
            let na = k.na_norm(self.params.wavelength);
            if !(na < 1.0) {
                return Err(Error::UnphysicalNa(na));
            }
        }
        Ok(())
    }

    /// Replace the expected vectors by the sources of `model`, matched by source index.
    pub fn set_expected_from(&mut self, model: &IlluminatorModel) -> Result<()> {
        let ks = model.kvectors(self.params.wavelength);
        for (e, &s) in self.expected.iter_mut().zip(&self.sources) {
            *e = *ks.get(s).ok_or_else(|| Error::InvalidConfig(format!("source {s} missing from illuminator")))?;
        }
        self.geometry = Some(model.geometry.clone());
        Ok(())
    }

    /// Keeps the images whose index satisfies `keep`.
    pub fn filtered(&self, keep: impl Fn(usize) -> bool) -> ImageStack {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        let pick = |v: &Vec<KVector>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        ImageStack {
            params: self.params,
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            expected: pick(&self.expected),
            truth: self.truth.as_ref().map(pick),
            rendered: self.rendered.as_ref().map(|r| idx.iter().map(|&i| r[i]).collect()),
            sources: idx.iter().map(|&i| self.sources[i]).collect(),
            boards: idx.iter().map(|&i| self.boards[i]).collect(),
            geometry: self.geometry.clone(),
        }
    }
}

/// Optional measurement noise, off by default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Additive Gaussian std as a fraction of each image's mean intensity.
    pub gaussian_relative: f64,
    /// Photons collected at intensity 1.0; `None` disables shot noise.
    pub photons: Option<f64>,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn is_off(&self) -> bool {
        self.gaussian_relative == 0.0 && self.photons.is_none()
    }

    fn apply(&self, img: &mut Array2<f64>, index: usize) -> Result<()> {
        if self.is_off() {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        if let Some(photons) = self.photons {
            if !(photons > 0.0) {
                return Err(Error::InvalidConfig(format!("photon count {photons} must be positive")));
            }
            for v in img.iter_mut() {
                let lambda = *v * photons;
                if lambda > 0.0 {
                    let d = Poisson::new(lambda).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                    *v = d.sample(&mut rng) / photons;
                }
            }
        }
        if self.gaussian_relative > 0.0 {
            let sigma = self.gaussian_relative * img.mean().unwrap_or(0.0);
            if sigma > 0.0 {
                let d = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                for v in img.iter_mut() {
                    *v = (*v + d.sample(&mut rng)).max(0.0);
                }
            }
        } else if self.gaussian_relative < 0.0 {
            return Err(Error::InvalidConfig("gaussian noise level must be non-negative".into()));
        }
        Ok(())
    }
}

/// Smallest even object grid `n >= M` that holds every shifted pupil.
pub fn object_grid_size(params: &SystemParams, pupil_radius: f64, max_illum_na: f64) -> usize {
    let m = params.patch_pixels;
    let shift = (max_illum_na / params.spectrum_pixel_na()).ceil() as usize;
    let need = 2 * (shift + pupil_radius.ceil() as usize + 2);
    let n = m.max(need);
    n + n % 2
}

/// Renders one image per usable source of `model`.
///
/// Each source is rendered at the nearest integer spectrum shift of its true
/// direction; the continuous truth and the integer shift are both recorded.
/// The expected vectors start equal to the truth; callers replace them with
/// a nominal model via [`ImageStack::set_expected_from`].
pub fn render_stack(
    object: &GroundTruthObject,
    model: &IlluminatorModel,
    params: &SystemParams,
    pupil: &Pupil,
    noise: &NoiseConfig,
) -> Result<ImageStack> {
    params.validate()?;
    let m = params.patch_pixels;
    if pupil.size() != m {
        return Err(Error::InvalidConfig(format!("pupil is {} px, patch is {m} px", pupil.size())));
    }
    let n = object.size();
    if n < m {
        return Err(Error::Coverage { grid: n, shift: 0.0, radius: pupil.radius });
    }
    let spectrum = object.field.transformed(&Fft2::new(n)).data;
    let support = SupportIndex::new(&pupil.support);

    let mut jobs = Vec::new();
    for (i, &pos) in model.positions.iter().enumerate() {
        if !model.usable[i] {
            warn!("source {i} at NA {:.3} is unphysical; dropped", pos[0].hypot(pos[1]));
            continue;
        }
        let k = KVector::from_na(pos, params.wavelength);
        let shift = k.rounded_pixels(params);
        if !support.fits(shift, n) {
            let s = (shift[0] as f64).hypot(shift[1] as f64);
            return Err(Error::Coverage { grid: n, shift: s, radius: pupil.radius });
        }
        jobs.push((i, k, shift));
    }

    let fft = Fft2::new(m);
    let images = jobs
        .par_iter()
        .map(|&(i, _, shift)| {
            let mut field = Array2::<Complex64>::zeros((m, m));
            let mut img = predict_intensity(&spectrum, &pupil.values, &support, shift, &fft, &mut field);
            noise.apply(&mut img, i)?;
            // Quantize to the container precision so a saved stack reloads bit-exactly.
            img.mapv_inplace(|v| (v.max(0.0) as f32) as f64);
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ImageStack {
        params: *params,
        images,
        expected: jobs.iter().map(|j| j.1).collect(),
        truth: Some(jobs.iter().map(|j| j.1).collect()),
        rendered: Some(jobs.iter().map(|j| j.2).collect()),
        sources: jobs.iter().map(|j| j.0).collect(),
        boards: jobs.iter().map(|j| model.boards[j.0]).collect(),
        geometry: Some(model.geometry.clone()),
    })
}

/// Centered spectrum `Ĩ` of an intensity image.
pub fn spectrum(image: &Array2<f64>) -> ComplexField {
    let n = image.nrows();
    let data = crate::field::real_spectrum(image, &Fft2::new(n));
    ComplexField::new(data, Domain::KSpace)
}

/// Everything needed to simulate one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub params: SystemParams,
    pub geometry: GeometryConfig,
    /// Misalignment between the nominal and the true illuminator.
    #[serde(default)]
    pub perturbation: Perturbation,
    pub object: ObjectSpec,
    /// True pupil radius as a multiple of the nominal one.
    #[serde(default = "one")]
    pub pupil_scale: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
}

fn one() -> f64 {
    1.0
}

/// A rendered stack plus the objects that produced it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub stack: ImageStack,
    pub object: GroundTruthObject,
    pub nominal: IlluminatorModel,
    pub actual: IlluminatorModel,
    pub pupil: Pupil,
}

/// Build, perturb, render, and set the nominal illuminator as the prior.
pub fn simulate(cfg: &SimulationConfig) -> Result<Simulation> {
    cfg.params.validate()?;
    let nominal = build_illuminator(&cfg.geometry)?;
    let actual = apply_perturbation(&nominal, &cfg.perturbation);
    if !(cfg.pupil_scale > 0.0) {
        return Err(Error::InvalidConfig("pupil_scale must be positive".into()));
    }
    let radius = pupil_radius_pixels(&cfg.params) * cfg.pupil_scale;
    let pupil = Pupil::ideal(cfg.params.patch_pixels, radius)?;
    let max_na = actual
        .positions
        .iter()
        .zip(&actual.usable)
        .filter(|(_, u)| **u)
        .map(|(p, _)| p[0].hypot(p[1]))
        .fold(0.0, f64::max);
    let n = object_grid_size(&cfg.params, radius, max_na + cfg.params.spectrum_pixel_na());
    let object = GroundTruthObject::generate(&cfg.object, n)?;
    let mut stack = render_stack(&object, &actual, &cfg.params, &pupil, &cfg.noise)?;
    stack.set_expected_from(&nominal)?;
    Ok(Simulation { stack, object, nominal, actual, pupil })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::make_pupil;

    fn small_params() -> SystemParams {
        SystemParams { patch_pixels: 64, ..SystemParams::default() }
    }

    #[test]
    fn flat_object_on_axis_is_uniform() {
        let p = small_params();
        let pupil = make_pupil(&p, None).unwrap();
        let obj = GroundTruthObject {
            field: ComplexField::new(Array2::from_elem((96, 96), Complex64::new(1.0, 0.0)), Domain::RealSpace),
            kind: ObjectKind::RandomSmooth,
        };
        let model = build_illuminator(&GeometryConfig::planar(0.041, 0.0)).unwrap();
        let stack = render_stack(&obj, &model, &p, &pupil, &NoiseConfig::default()).unwrap();
        let gain = pupil.dc_gain().norm_sqr();
        for v in stack.images[0].iter() {
            assert!((v - gain).abs() < 1e-6);
        }
    }

    #[test]
    fn spectra_are_hermitian() {
        let cfg = SimulationConfig {
            params: small_params(),
            geometry: GeometryConfig::planar(0.041, 0.1),
            perturbation: Perturbation::IDENTITY,
            object: ObjectSpec::random_smooth(1),
            pupil_scale: 1.0,
            noise: NoiseConfig::default(),
        };
        let sim = simulate(&cfg).unwrap();
        let n = 64;
        for img in &sim.stack.images {
            let s = spectrum(img).data;
            for r in 1..n {
                for c in 1..n {
                    assert!((s[[r, c]].norm() - s[[n - r, n - c]].norm()).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn too_small_object_grid_is_a_coverage_error() {
        let p = small_params();
        let pupil = make_pupil(&p, None).unwrap();
        let obj = GroundTruthObject::generate(&ObjectSpec::random_smooth(2), 64).unwrap();
        let model = build_illuminator(&GeometryConfig::planar(0.041, 0.9)).unwrap();
        let err = render_stack(&obj, &model, &p, &pupil, &NoiseConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Coverage { .. }));
    }

    #[test]
    fn rendering_is_deterministic_with_noise() {
        let cfg = SimulationConfig {
            params: small_params(),
            geometry: GeometryConfig::planar(0.041, 0.05),
            perturbation: Perturbation::rotation(3.0),
            object: ObjectSpec::siemens_star(),
            pupil_scale: 1.0,
            noise: NoiseConfig { gaussian_relative: 0.01, photons: Some(1e4), seed: 5 },
        };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.stack.images, b.stack.images);
        assert!(a.stack.validate().is_ok());
    }

    #[test]
    fn unusable_sources_are_dropped() {
        let cfg = SimulationConfig {
            params: small_params(),
            geometry: GeometryConfig::planar(0.2, 0.45),
            perturbation: Perturbation::scaled(2.4),
            object: ObjectSpec::random_smooth(3),
            pupil_scale: 1.0,
            noise: NoiseConfig::default(),
        };
        let sim = simulate(&cfg).unwrap();
        assert!(sim.stack.len() < sim.nominal.len());
        assert_eq!(sim.stack.len(), sim.actual.usable.iter().filter(|u| **u).count());
    }
}
