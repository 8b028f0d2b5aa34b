use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

/// Dense row-major `f64` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn volume(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(arg_err!("tensor extents must be positive, got {shape:?}"));
        }
        if volume(&shape) != data.len() {
            return Err(arg_err!("shape {shape:?} needs {} values, got {}", volume(&shape), data.len()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero extent in {shape:?}");
        Tensor { shape: shape.to_vec(), data: vec![value; volume(shape)] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = volume(shape);
        Tensor { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    /// Build an `[h, w]` image from a function of `(row, col)`.
    pub fn image(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::from_fn(&[h, w], |i| f(i / w, i % w))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Trailing two extents `(h, w)`; errors on tensors with fewer than two axes.
    pub fn hw(&self) -> Result<(usize, usize)> {
        let n = self.shape.len();
        if n < 2 {
            return Err(arg_err!("expected at least 2 axes, got {:?}", self.shape));
        }
        Ok((self.shape[n - 2], self.shape[n - 1]))
    }

    /// `(h, w)` of a strictly 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[h, w] => Ok((h, w)),
            s => Err(arg_err!("expected a 2-D image, got shape {s:?}")),
        }
    }

    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[self.shape.len() - 1] + c]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if volume(shape) != self.data.len() || shape.contains(&0) {
            return Err(arg_err!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    pub fn ensure_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(arg_err!("{what}: shape mismatch {:?} vs {:?}", self.shape, other.shape))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Like [`Tensor::map`] but visits elements in order with a stateful closure.
    pub fn map_with(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise combination; panics on shape mismatch.
    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Tensor { shape: self.shape.clone(), data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Swap the two axes of a 2-D tensor.
    pub fn transpose2(&self) -> Result<Tensor> {
        let (h, w) = self.dims2()?;
        Ok(Tensor::image(w, h, |r, c| self.data[c * w + r]))
    }

    /// Channel `c` of a `[C, H, W]` tensor as an `[H, W]` image.
    pub fn channel(&self, c: usize) -> Result<Tensor> {
        match self.shape.as_slice() {
            &[ch, h, w] if c < ch => Tensor::new(vec![h, w], self.data[c * h * w..(c + 1) * h * w].to_vec()),
            s => Err(arg_err!("channel {c} not available in shape {s:?}")),
        }
    }

    /// Drop leading unit axes until the tensor is 2-D (e.g. `[1, H, W]` → `[H, W]`).
    pub fn squeeze_to_image(&self) -> Result<Tensor> {
        let mut shape = self.shape.clone();
        while shape.len() > 2 && shape[0] == 1 {
            shape.remove(0);
        }
        if shape.len() != 2 {
            return Err(arg_err!("cannot view {:?} as an image", self.shape));
        }
        self.clone().reshape(&shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn transpose_roundtrip() {
        let t = Tensor::image(3, 5, |r, c| (r * 10 + c) as f64);
        let tt = t.transpose2().unwrap();
        assert_eq!(tt.shape(), &[5, 3]);
        assert_eq!(tt.at2(4, 2), 24.0);
        assert_eq!(tt.transpose2().unwrap(), t);
    }

    #[test]
    fn squeeze_unit_axes() {
        let t = Tensor::zeros(&[1, 4, 6]);
        assert_eq!(t.squeeze_to_image().unwrap().shape(), &[4, 6]);
        assert!(Tensor::zeros(&[2, 4, 6]).squeeze_to_image().is_err());
    }
}
