use log::warn;
use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{real_spectrum, Fft2};
use crate::simulate::ImageStack;

/// Spectra normalized by the stack mean and smoothed.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub spectra: Vec<Array2<f64>>,
    /// Images that were all zero; they are left out of the mean.
    pub empty: Vec<bool>,
}

/// `|Ĩ_i| / (mean + eps · max(mean))`, then a Gaussian blur of std `sigma` pixels.
pub fn preprocess_spectra(stack: &ImageStack, sigma: f64, eps: f64) -> Result<Preprocessed> {
    if stack.len() < 2 {
        return Err(Error::TooFewImages { needed: 2, got: stack.len() });
    }
    if !(sigma >= 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidConfig("sigma must be >= 0 and eps > 0".into()));
    }
    let m = stack.params.patch_pixels;
    let fft = Fft2::new(m);
    let mags: Vec<Array2<f64>> =
        stack.images.par_iter().map(|img| real_spectrum(img, &fft).mapv(|z| z.norm_sqr().sqrt())).collect();
    let empty: Vec<bool> = stack.images.iter().map(|img| img.iter().all(|&v| v == 0.0)).collect();
    let used = empty.iter().filter(|e| !**e).count();
    if used == 0 {
        return Err(Error::InvalidConfig("every image in the stack is zero".into()));
    }
    for (i, e) in empty.iter().enumerate() {
        if *e {
            warn!("image {i} is all zero; excluded from the mean spectrum");
        }
    }
    let mut mean = Array2::<f64>::zeros((m, m));
    for (mag, e) in mags.iter().zip(&empty) {
        if !e {
            mean += mag;
        }
    }
    mean /= used as f64;
    let peak = mean.iter().fold(0.0f64, |a, &b| a.max(b));
    let denom = mean.mapv(|v| v + eps * peak);
    let spectra = mags.into_par_iter().map(|mag| gaussian_blur(&(mag / &denom), sigma)).collect();
    Ok(Preprocessed { spectra, empty })
}

/// Separable Gaussian blur with periodic boundaries, truncated at 4σ.
pub fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let half = (4.0 * sigma).ceil() as usize;
    let mut kernel: Vec<f64> =
        (0..=2 * half).map(|j| j as f64 - half as f64).map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let rows_pass = |src: &Array2<f64>| -> Array2<f64> {
        let (rows, cols) = src.dim();
        let src = src.as_standard_layout();
        let mut out = Array2::<f64>::zeros((rows, cols));
        let mut padded = vec![0.0; cols + 2 * half];
        for (row_in, mut row_out) in src.outer_iter().zip(out.outer_iter_mut()) {
            for (j, p) in padded.iter_mut().enumerate() {
                *p = row_in[(j + cols * (half / cols + 1) - half) % cols];
            }
            for (c, o) in row_out.iter_mut().enumerate() {
                *o = kernel.iter().zip(&padded[c..c + 2 * half + 1]).map(|(k, v)| k * v).sum();
            }
        }
        out
    };
    let once = rows_pass(img);
    rows_pass(&once.t().as_standard_layout().into_owned()).t().as_standard_layout().into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_sum_and_constants() {
        let img = Array2::from_shape_fn((32, 32), |(r, c)| ((r * 31 + c * 7) % 11) as f64);
        let b = gaussian_blur(&img, 2.0);
        assert!((b.sum() - img.sum()).abs() < 1e-9);
        let flat = gaussian_blur(&Array2::from_elem((16, 16), 3.0), 1.5);
        assert!(flat.iter().all(|v| (v - 3.0).abs() < 1e-12));
        assert_eq!(gaussian_blur(&img, 0.0), img);
    }
}
