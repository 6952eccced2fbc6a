//! Unitary 2D FFTs over `ndarray` buffers, with per-thread plan caching.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// In-place unnormalized 2D FFT (rows, then columns).
fn fft2_raw(values: &mut Array2<Complex64>, direction: FftDirection) {
    let (ny, nx) = values.dim();

    let row_fft = plan(nx, direction);
    let mut scratch = vec![Complex64::ZERO; row_fft.get_inplace_scratch_len()];
    for mut row in values.rows_mut() {
        let slice = row.as_slice_mut().expect("contiguous row");
        row_fft.process_with_scratch(slice, &mut scratch);
    }

    let col_fft = plan(ny, direction);
    let mut scratch = vec![Complex64::ZERO; col_fft.get_inplace_scratch_len()];
    let mut col = vec![Complex64::ZERO; ny];
    for ix in 0..nx {
        for iy in 0..ny {
            col[iy] = values[[iy, ix]];
        }
        col_fft.process_with_scratch(&mut col, &mut scratch);
        for iy in 0..ny {
            values[[iy, ix]] = col[iy];
        }
    }
}

/// Unitary forward 2D FFT: scaled by 1/sqrt(N) so Parseval holds symmetrically.
pub fn fft2(values: &mut Array2<Complex64>) {
    let norm = 1.0 / (values.len() as f64).sqrt();
    fft2_raw(values, FftDirection::Forward);
    values.mapv_inplace(|v| v * norm);
}

/// Unitary inverse 2D FFT.
pub fn ifft2(values: &mut Array2<Complex64>) {
    let norm = 1.0 / (values.len() as f64).sqrt();
    fft2_raw(values, FftDirection::Inverse);
    values.mapv_inplace(|v| v * norm);
}

/// Swap quadrants so the zero-frequency / zero-position bin moves between
/// index 0 and the centered index n/2. For even sizes this is an involution.
pub fn fftshift2(values: &Array2<Complex64>) -> Array2<Complex64> {
    shift2(values, |n| n / 2)
}

/// Inverse of [`fftshift2`] (differs from it only for odd sizes).
pub fn ifftshift2(values: &Array2<Complex64>) -> Array2<Complex64> {
    shift2(values, |n| n.div_ceil(2))
}

fn shift2(values: &Array2<Complex64>, offset: fn(usize) -> usize) -> Array2<Complex64> {
    let (ny, nx) = values.dim();
    let (oy, ox) = (offset(ny), offset(nx));
    Array2::from_shape_fn((ny, nx), |(iy, ix)| {
        values[[(iy + oy) % ny, (ix + ox) % nx]]
    })
}
