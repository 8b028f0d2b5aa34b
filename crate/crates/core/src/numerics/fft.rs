use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::Tensor;
use crate::error::{arg_err, Result};

/// Complex 2-D grid, row-major, split into real and imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    pub h: usize,
    pub w: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexGrid {
    pub fn zeros(h: usize, w: usize) -> Self {
        ComplexGrid { h, w, re: vec![0.0; h * w], im: vec![0.0; h * w] }
    }

    pub fn new(h: usize, w: usize, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || re.len() != h * w || im.len() != h * w {
            return Err(arg_err!(
                "complex grid {h}x{w} needs {} values per plane, got re={} im={}",
                h * w,
                re.len(),
                im.len()
            ));
        }
        Ok(ComplexGrid { h, w, re, im })
    }

    fn to_complex(&self) -> Vec<Complex64> {
        self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)).collect()
    }

    fn from_complex(h: usize, w: usize, buf: &[Complex64]) -> Self {
        ComplexGrid { h, w, re: buf.iter().map(|c| c.re).collect(), im: buf.iter().map(|c| c.im).collect() }
    }

    pub fn magnitude(&self) -> Tensor {
        Tensor::image(self.h, self.w, |r, c| {
            let i = r * self.w + c;
            self.re[i].hypot(self.im[i])
        })
    }

    pub fn real(&self) -> Tensor {
        Tensor::new(vec![self.h, self.w], self.re.clone()).expect("grid extents are positive")
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).sum()
    }
}

fn transform_2d(buf: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let plan = |n: usize, planner: &mut FftPlanner<f64>| -> Arc<dyn Fft<f64>> {
        if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        }
    };
    let row_fft = plan(w, &mut planner);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = plan(h, &mut planner);
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = buf[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            buf[r * w + c] = col[r];
        }
    }
}

/// Unnormalized forward 2-D DFT of an `[H, W]` image.
pub fn fft2d(img: &Tensor) -> Result<ComplexGrid> {
    let (h, w) = img.dims2()?;
    let mut buf: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_2d(&mut buf, h, w, false);
    Ok(ComplexGrid::from_complex(h, w, &buf))
}

/// Inverse 2-D DFT with the `1/(H·W)` normalization, complex result.
pub fn ifft2d_complex(ks: &ComplexGrid) -> ComplexGrid {
    let mut buf = ks.to_complex();
    transform_2d(&mut buf, ks.h, ks.w, true);
    let norm = 1.0 / (ks.h * ks.w) as f64;
    buf.iter_mut().for_each(|c| *c *= norm);
    ComplexGrid::from_complex(ks.h, ks.w, &buf)
}

/// Inverse 2-D DFT, real part. Use [`ifft2d_complex`] + [`ComplexGrid::magnitude`]
/// for magnitude reconstructions.
pub fn ifft2d(ks: &ComplexGrid) -> Tensor {
    ifft2d_complex(ks).real()
}
