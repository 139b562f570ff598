//! Optical constants, spatial-frequency units and the ideal pupil.
//!
//! Every spectrum in this crate uses the centered layout: an `n x n` array
//! whose element `(row, col)` holds spatial frequency
//! `(kx, ky) = (col - n/2, row - n/2)` spectrum pixels. One spectrum pixel is
//! `1 / fov`, the sampling step of a discrete Fourier transform over the
//! patch.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Imaging-system constants that fix every unit conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Objective numerical aperture.
    pub na_obj: f64,
    /// Illumination wavelength in µm.
    pub wavelength: f64,
    /// Camera pixel pitch in µm.
    pub pixel_size: f64,
    /// Total magnification between sample and camera.
    pub magnification: f64,
    /// Patch edge length `M` in camera pixels; images are `M x M`.
    pub patch_pixels: usize,
}

impl Default for SystemParams {
    /// 10x / 0.25 NA objective behind a 2x relay, 6.5 µm pixels, 532 nm, 256 px patch.
    fn default() -> Self {
        SystemParams { na_obj: 0.25, wavelength: 0.532, pixel_size: 6.5, magnification: 20.0, patch_pixels: 256 }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.na_obj > 0.0 && self.na_obj < 1.0) {
            return fail(format!("na_obj {} not in (0, 1)", self.na_obj));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return fail(format!("wavelength {} must be positive", self.wavelength));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return fail(format!("pixel_size {} must be positive", self.pixel_size));
        }
        if !(self.magnification > 0.0 && self.magnification.is_finite()) {
            return fail(format!("magnification {} must be positive", self.magnification));
        }
        if self.patch_pixels < 64 || !self.patch_pixels.is_multiple_of(2) {
            return fail(format!("patch size {} must be even and >= 64", self.patch_pixels));
        }
        Ok(())
    }

    /// Field of view of one patch in µm.
    pub fn fov(&self) -> f64 {
        self.patch_pixels as f64 * self.pixel_size / self.magnification
    }

    /// Sample-plane pixel pitch in µm.
    pub fn sample_pixel(&self) -> f64 {
        self.pixel_size / self.magnification
    }

    /// Width of one spectrum pixel in 1/µm (`1 / fov`).
    pub fn spectrum_pixel(&self) -> f64 {
        1.0 / self.fov()
    }

    /// Spectrum pixel expressed in NA units.
    pub fn spectrum_pixel_na(&self) -> f64 {
        self.wavelength / self.fov()
    }
}

/// Nyquist-limited angular resolution `2 / fov` in 1/µm.
pub fn k_space_step(params: &SystemParams) -> f64 {
    2.0 / params.fov()
}

/// Radius of the pupil support in spectrum pixels: `(NA / λ) · (p_s · M / mag)`.
pub fn pupil_radius_pixels(params: &SystemParams) -> f64 {
    params.na_obj / params.wavelength * (params.pixel_size * params.patch_pixels as f64 / params.magnification)
}

/// An illumination spatial frequency, stored in 1/µm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KVector {
    pub kx: f64,
    pub ky: f64,
}

impl KVector {
    pub const ZERO: KVector = KVector { kx: 0.0, ky: 0.0 };

    pub fn new(kx: f64, ky: f64) -> Self {
        KVector { kx, ky }
    }

    pub fn from_na(na: [f64; 2], wavelength: f64) -> Self {
        KVector::new(na[0] / wavelength, na[1] / wavelength)
    }

    pub fn to_na(self, wavelength: f64) -> [f64; 2] {
        [self.kx * wavelength, self.ky * wavelength]
    }

    pub fn from_pixels(px: [f64; 2], params: &SystemParams) -> Self {
        let fov = params.fov();
        KVector::new(px[0] / fov, px[1] / fov)
    }

    /// Pixel coordinates; values within 1e-9 px of an integer snap to it so
    /// that integer grid points survive a round trip exactly.
    pub fn to_pixels(self, params: &SystemParams) -> [f64; 2] {
        let fov = params.fov();
        [snap(self.kx * fov), snap(self.ky * fov)]
    }

    /// Nearest spectrum pixel.
    pub fn rounded_pixels(self, params: &SystemParams) -> [i64; 2] {
        let p = self.to_pixels(params);
        [p[0].round() as i64, p[1].round() as i64]
    }

    pub fn norm(self) -> f64 {
        self.kx.hypot(self.ky)
    }

    pub fn na_norm(self, wavelength: f64) -> f64 {
        self.norm() * wavelength
    }

    pub fn distance(self, other: KVector) -> f64 {
        (self.kx - other.kx).hypot(self.ky - other.ky)
    }
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

impl std::ops::Add for KVector {
    type Output = KVector;
    fn add(self, o: KVector) -> KVector {
        KVector::new(self.kx + o.kx, self.ky + o.ky)
    }
}

impl std::ops::Sub for KVector {
    type Output = KVector;
    fn sub(self, o: KVector) -> KVector {
        KVector::new(self.kx - o.kx, self.ky - o.ky)
    }
}

impl std::ops::Neg for KVector {
    type Output = KVector;
    fn neg(self) -> KVector {
        KVector::new(-self.kx, -self.ky)
    }
}

/// Coherent transfer function of the objective on the centered `M x M` grid.
#[derive(Debug, Clone)]
pub struct Pupil {
    pub values: Array2<Complex64>,
    pub radius: f64,
    pub support: Array2<bool>,
}

impl Pupil {
    /// Ideal circular pupil: unit modulus on `|k| <= radius`, zero elsewhere.
    pub fn ideal(n: usize, radius: f64) -> Result<Pupil> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParams(format!("pupil radius {radius} must be positive")));
        }
        if radius >= (n / 2) as f64 {
            return Err(Error::ApertureExceedsGrid { radius, grid: n });
        }
        let support = support_mask(n, radius);
        let values = support.mapv(|s| if s { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        Ok(Pupil { values, radius, support })
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn support_count(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }

    /// Value at DC.
    pub fn dc_gain(&self) -> Complex64 {
        let c = self.size() / 2;
        self.values[[c, c]]
    }
}

/// Boolean disk `kx² + ky² <= radius²` on a centered `n x n` grid.
pub fn support_mask(n: usize, radius: f64) -> Array2<bool> {
    let half = (n / 2) as i64;
    let r2 = radius * radius;
    Array2::from_shape_fn((n, n), |(r, c)| {
        let ky = r as i64 - half;
        let kx = c as i64 - half;
        ((kx * kx + ky * ky) as f64) <= r2
    })
}

/// Build the ideal pupil for `params`, optionally overriding the radius (pixels).
pub fn make_pupil(params: &SystemParams, radius_override: Option<f64>) -> Result<Pupil> {
    params.validate()?;
    let radius = radius_override.unwrap_or_else(|| pupil_radius_pixels(params));
    Pupil::ideal(params.patch_pixels, radius)
}
