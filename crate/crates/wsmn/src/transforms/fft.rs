//! Thin 2-D FFT layer over rustfft.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::image::Plane;

/// Row-major complex spectrum with cached forward/inverse plans per size.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    fwd_row: Arc<dyn Fft<f64>>,
    fwd_col: Arc<dyn Fft<f64>>,
    inv_row: Arc<dyn Fft<f64>>,
    inv_col: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            fwd_row: planner.plan_fft_forward(cols),
            fwd_col: planner.plan_fft_forward(rows),
            inv_row: planner.plan_fft_inverse(cols),
            inv_col: planner.plan_fft_inverse(rows),
        }
    }

    pub fn forward(&self, plane: &Plane) -> Vec<Complex<f64>> {
        assert_eq!((plane.rows, plane.cols), (self.rows, self.cols));
        let mut buf: Vec<Complex<f64>> =
            plane.data.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.fwd_row, &self.fwd_col);
        buf
    }

    /// Unnormalized inverse of `forward`; divides by rows*cols and returns
    /// the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex<f64>>) -> Plane {
        self.transform(&mut spectrum, &self.inv_row, &self.inv_col);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        Plane {
            rows: self.rows,
            cols: self.cols,
            data: spectrum.iter().map(|c| c.re * scale).collect(),
        }
    }

    fn transform(
        &self,
        buf: &mut [Complex<f64>],
        row_plan: &Arc<dyn Fft<f64>>,
        col_plan: &Arc<dyn Fft<f64>>,
    ) {
        for row in buf.chunks_exact_mut(self.cols) {
            row_plan.process(row);
        }
        let mut column = vec![Complex::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = buf[r * self.cols + c];
            }
            col_plan.process(&mut column);
            for r in 0..self.rows {
                buf[r * self.cols + c] = column[r];
            }
        }
    }
}

/// Signed DFT bin frequency in cycles/sample, in [-0.5, 0.5).
pub fn bin_freq(index: usize, n: usize) -> f64 {
    let k = if index <= (n - 1) / 2 {
        index as isize
    } else {
        index as isize - n as isize
    };
    k as f64 / n as f64
}
