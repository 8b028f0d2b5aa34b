use super::Tensor;
use crate::error::{arg_err, Result};

/// Replicate-padded read of an `[h, w]` row-major buffer.
#[inline]
fn clamped(data: &[f64], h: usize, w: usize, r: isize, c: isize) -> f64 {
    let r = r.clamp(0, h as isize - 1) as usize;
    let c = c.clamp(0, w as isize - 1) as usize;
    data[r * w + c]
}

/// Horizontal and vertical Sobel responses with replicate padding.
pub fn sobel_components(img: &Tensor) -> Result<(Tensor, Tensor)> {
    let (h, w) = img.dims2()?;
    if h < 3 || w < 3 {
        return Err(arg_err!("sobel needs an image of at least 3x3, got {h}x{w}"));
    }
    let d = img.data();
    let px = |r: usize, c: usize, dr: isize, dc: isize| clamped(d, h, w, r as isize + dr, c as isize + dc);
    let gx = Tensor::image(h, w, |r, c| {
        (px(r, c, -1, 1) + 2.0 * px(r, c, 0, 1) + px(r, c, 1, 1))
            - (px(r, c, -1, -1) + 2.0 * px(r, c, 0, -1) + px(r, c, 1, -1))
    });
    let gy = Tensor::image(h, w, |r, c| {
        (px(r, c, 1, -1) + 2.0 * px(r, c, 1, 0) + px(r, c, 1, 1))
            - (px(r, c, -1, -1) + 2.0 * px(r, c, -1, 0) + px(r, c, -1, 1))
    });
    Ok((gx, gy))
}

/// Per-pixel Sobel gradient magnitude `sqrt(gx² + gy²)`.
pub fn sobel_gradients(img: &Tensor) -> Result<Tensor> {
    let (gx, gy) = sobel_components(img)?;
    Ok(gx.zip_map(&gy, f64::hypot))
}
