//! Thin-sample forward model shared by the simulator and the solver.
//!
//! Under illumination with spectrum-pixel shift `s`, the exit field spectrum
//! at pupil coordinate `k` is `O(k - s) · P(k)`. The object spectrum lives on
//! its own centered `N x N` grid (`N >= M`) with the same pixel width as the
//! `M x M` image spectrum.

use ndarray::Array2;
use num_complex::Complex64;

use crate::field::Fft2;

/// Precomputed pupil-support geometry used to address object sub-regions.
#[derive(Debug, Clone)]
pub struct SupportIndex {
    pub image_size: usize,
    /// `(row, col)` of every pupil-support pixel in the image grid.
    pub pixels: Vec<(usize, usize)>,
    /// Largest `|kx|` or `|ky|` reached by the support.
    pub reach: i64,
}

impl SupportIndex {
    pub fn new(support: &Array2<bool>) -> Self {
        let m = support.nrows();
        let half = (m / 2) as i64;
        let mut pixels = Vec::new();
        let mut reach = 0;
        for ((r, c), &s) in support.indexed_iter() {
            if s {
                pixels.push((r, c));
                reach = reach.max((r as i64 - half).abs()).max((c as i64 - half).abs());
            }
        }
        SupportIndex { image_size: m, pixels, reach }
    }

    /// True if every `k - shift` with `k` in the support lands inside an `n x n` grid.
    pub fn fits(&self, shift: [i64; 2], n: usize) -> bool {
        let half = (n / 2) as i64;
        let lo = -half;
        let hi = half - 1;
        let ok = |s: i64| -self.reach - s >= lo && self.reach - s <= hi;
        ok(shift[0]) && ok(shift[1])
    }

    /// Object-grid index of image pixel `(r, c)` under `shift`.
    #[inline]
    pub fn object_index(&self, (r, c): (usize, usize), shift: [i64; 2], n: usize) -> (usize, usize) {
        let off = (n / 2) as i64 - (self.image_size / 2) as i64;
        let orow = r as i64 + off - shift[1];
        let ocol = c as i64 + off - shift[0];
        (orow as usize, ocol as usize)
    }
}

/// Amplitude factor that keeps intensities independent of the object grid size.
pub fn grid_scale(image_size: usize, object_size: usize) -> f64 {
    image_size as f64 / object_size as f64
}

/// Low-resolution exit field spectrum `O(k - s) P(k)` on the image grid.
pub fn field_spectrum(
    object_spectrum: &Array2<Complex64>,
    pupil: &Array2<Complex64>,
    support: &SupportIndex,
    shift: [i64; 2],
    out: &mut Array2<Complex64>,
) {
    let n = object_spectrum.nrows();
    let scale = grid_scale(support.image_size, n);
    out.fill(Complex64::new(0.0, 0.0));
    for &(r, c) in &support.pixels {
        let (orow, ocol) = support.object_index((r, c), shift, n);
        out[[r, c]] = object_spectrum[[orow, ocol]] * pupil[[r, c]] * scale;
    }
}

/// Predicted intensity `|F^-1{O(k - s) P(k)}|²`. `field` is left holding the complex exit field.
pub fn predict_intensity(
    object_spectrum: &Array2<Complex64>,
    pupil: &Array2<Complex64>,
    support: &SupportIndex,
    shift: [i64; 2],
    fft: &Fft2,
    field: &mut Array2<Complex64>,
) -> Array2<f64> {
    field_spectrum(object_spectrum, pupil, support, shift, field);
    fft.inverse_from_band(field, support.reach as usize);
    field.mapv(|z| z.norm_sqr())
}

/// `Σ (I - |ψ|²)²` for the prediction at `shift`.
pub fn intensity_cost(
    measured: &Array2<f64>,
    object_spectrum: &Array2<Complex64>,
    pupil: &Array2<Complex64>,
    support: &SupportIndex,
    shift: [i64; 2],
    fft: &Fft2,
) -> f64 {
    let m = support.image_size;
    let mut field = Array2::zeros((m, m));
    field_spectrum(object_spectrum, pupil, support, shift, &mut field);
    fft.inverse_from_band(&mut field, support.reach as usize);
    measured
        .iter()
        .zip(field.iter())
        .map(|(&i, z)| {
            let d = i - z.norm_sqr();
            d * d
        })
        .sum()
}
