//! Complex fields and the centered, unitary 2-D Fourier transform.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    RealSpace,
    KSpace,
}

/// Square complex array tagged with the domain it lives in.
#[derive(Debug, Clone)]
pub struct ComplexField {
    pub data: Array2<Complex64>,
    pub domain: Domain,
}

impl ComplexField {
    pub fn new(data: Array2<Complex64>, domain: Domain) -> Self {
        assert_eq!(data.nrows(), data.ncols(), "fields are square");
        ComplexField { data, domain }
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Transform to the other domain.
    pub fn transformed(&self, fft: &Fft2) -> ComplexField {
        let mut data = self.data.clone();
        let domain = match self.domain {
            Domain::RealSpace => {
                fft.forward(&mut data);
                Domain::KSpace
            }
            Domain::KSpace => {
                fft.inverse(&mut data);
                Domain::RealSpace
            }
        };
        ComplexField { data, domain }
    }
}

/// Planned `n x n` transform with DC at `(n/2, n/2)` and `1/n` scaling each way.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        assert!(n.is_multiple_of(2) && n > 0, "transform size must be even");
        let mut planner = FftPlanner::new();
        Fft2 { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.fwd, self.n / 2, false);
    }

    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.run(data, &self.inv, self.n / 2, false);
    }

    /// Inverse transform of data that is zero outside the centered square
    /// `|r - n/2|, |c - n/2| <= half`.
    pub fn inverse_from_band(&self, data: &mut Array2<Complex64>, half: usize) {
        self.run(data, &self.inv, half, true);
    }

    /// Forward transform computed only inside the centered square of
    /// half-width `half`; everything outside it is set to zero.
    pub fn forward_to_band(&self, data: &mut Array2<Complex64>, half: usize) {
        self.run(data, &self.fwd, half, false);
        let n = self.n;
        let (lo, hi) = band(n, half);
        if hi - lo < n {
            for (r, mut row) in data.outer_iter_mut().enumerate() {
                for (c, z) in row.iter_mut().enumerate() {
                    if r < lo || r >= hi || c < lo || c >= hi {
                        *z = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }

    // For even n the centered transform equals the plain one with the input
    // and the output both multiplied by (-1)^(row + col). With a band, the
    // first pass skips zero input rows (`input_band`) or the second pass skips
    // output columns outside it.
    fn run(&self, data: &mut Array2<Complex64>, plan: &Arc<dyn Fft<f64>>, half: usize, input_band: bool) {
        let n = self.n;
        assert_eq!(data.dim(), (n, n), "transform size mismatch");
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        let (lo, hi) = band(n, half);
        let buf = data.as_slice_mut().expect("standard layout");
        SCRATCH.with_borrow_mut(|(scratch, other)| {
            scratch.resize(plan.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
            other.clear();
            other.resize(n * n, Complex64::new(0.0, 0.0));
            let rows = if input_band { lo..hi } else { 0..n };
            checkerboard(&mut buf[rows.start * n..rows.end * n], n, rows.start);
            plan.process_with_scratch(&mut buf[rows.start * n..rows.end * n], scratch);
            transpose_into(buf, other, n, rows.clone(), 0..n, 1.0, false);
            let cols = if input_band { 0..n } else { lo..hi };
            plan.process_with_scratch(&mut other[cols.start * n..cols.end * n], scratch);
            transpose_into(other, buf, n, cols, 0..n, 1.0 / n as f64, true);
        });
    }
}

thread_local! {
    // FFT scratch and transpose buffer, reused across calls on one thread.
    static SCRATCH: std::cell::RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { std::cell::RefCell::new((Vec::new(), Vec::new())) };
}

fn band(n: usize, half: usize) -> (usize, usize) {
    let h = half.min(n / 2);
    (n / 2 - h, (n / 2 + h + 1).min(n))
}

fn checkerboard(buf: &mut [Complex64], n: usize, first_row: usize) {
    for (r, row) in buf.chunks_exact_mut(n).enumerate() {
        for z in row.iter_mut().skip(1 - (r + first_row) % 2).step_by(2) {
            *z = -*z;
        }
    }
}

// Tiled out-of-place transpose of `src[rows, cols]`, optionally applying the
// checkerboard sign.
fn transpose_into(
    src: &[Complex64],
    dst: &mut [Complex64],
    n: usize,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    scale: f64,
    signs: bool,
) {
    const TILE: usize = 8;
    for r0 in rows.clone().step_by(TILE) {
        for c0 in cols.clone().step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows.end) {
                let src_row = &src[r * n..(r + 1) * n];
                for c in c0..(c0 + TILE).min(cols.end) {
                    let s = if signs && (r + c) % 2 == 1 { -scale } else { scale };
                    dst[c * n + r] = src_row[c] * s;
                }
            }
        }
    }
}

/// Centered spectrum of a real image.
pub fn real_spectrum(image: &Array2<f64>, fft: &Fft2) -> Array2<Complex64> {
    let mut data = image.mapv(|v| Complex64::new(v, 0.0));
    fft.forward(&mut data);
    data
}
