//! Raw forward/backward kernels over `[C, H, W]` row-major buffers.

/// 3×3 zero-padded convolution. `weight` is `[cout, cin, 3, 3]`.
pub(crate) fn conv3x3(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    cout: usize,
) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; cout * hw];
    for co in 0..cout {
        let o = &mut out[co * hw..(co + 1) * hw];
        o.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..cin {
            let x = &input[ci * hw..(ci + 1) * hw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = weight[((co * cin + ci) * 3 + ky) * 3 + kx];
                    for_each_overlap(h, w, ky, kx, |orow, irow, c0, c1, shift| {
                        let dst = &mut o[orow * w + c0..orow * w + c1];
                        let src =
                            &x[irow * w + (c0 as isize + shift) as usize..irow * w + (c1 as isize + shift) as usize];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    });
                }
            }
        }
    }
    out
}

/// Gradients of [`conv3x3`]: returns `(grad_input, grad_weight, grad_bias)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    cout: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hw = h * w;
    let mut gin = vec![0.0; cin * hw];
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; cout];
    for co in 0..cout {
        let go = &grad_out[co * hw..(co + 1) * hw];
        gb[co] = go.iter().sum();
        for ci in 0..cin {
            let x = &input[ci * hw..(ci + 1) * hw];
            let gx = &mut gin[ci * hw..(ci + 1) * hw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((co * cin + ci) * 3 + ky) * 3 + kx;
                    let wv = weight[widx];
                    let mut acc = 0.0;
                    for_each_overlap(h, w, ky, kx, |orow, irow, c0, c1, shift| {
                        let g = &go[orow * w + c0..orow * w + c1];
                        let lo = irow * w + (c0 as isize + shift) as usize;
                        let hi = irow * w + (c1 as isize + shift) as usize;
                        for (gv, xv) in g.iter().zip(&x[lo..hi]) {
                            acc += gv * xv;
                        }
                        for (d, gv) in gx[lo..hi].iter_mut().zip(g) {
                            *d += wv * gv;
                        }
                    });
                    gw[widx] += acc;
                }
            }
        }
    }
    (gin, gw, gb)
}

/// Enumerate output rows whose 3×3 tap `(ky, kx)` lands inside the input.
/// Calls `f(out_row, in_row, col_start, col_end, col_shift)`.
#[inline]
fn for_each_overlap(h: usize, w: usize, ky: usize, kx: usize, mut f: impl FnMut(usize, usize, usize, usize, isize)) {
    let dy = ky as isize - 1;
    let dx = kx as isize - 1;
    let c0 = if dx < 0 { 1 } else { 0 };
    let c1 = if dx > 0 { w - 1 } else { w };
    if c0 >= c1 {
        return;
    }
    for r in 0..h {
        let ir = r as isize + dy;
        if ir < 0 || ir >= h as isize {
            continue;
        }
        f(r, ir as usize, c0, c1, dx);
    }
}

/// Dense layer: `weight` is `[out, in]`.
pub(crate) fn dense(input: &[f64], weight: &[f64], bias: &[f64], out: usize) -> Vec<f64> {
    let n = input.len();
    (0..out).map(|o| bias[o] + weight[o * n..(o + 1) * n].iter().zip(input).map(|(a, b)| a * b).sum::<f64>()).collect()
}

pub(crate) fn dense_backward(
    input: &[f64],
    weight: &[f64],
    out: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = input.len();
    let mut gin = vec![0.0; n];
    let mut gw = vec![0.0; out * n];
    for o in 0..out {
        let g = grad_out[o];
        let row = &weight[o * n..(o + 1) * n];
        for i in 0..n {
            gw[o * n + i] = g * input[i];
            gin[i] += g * row[i];
        }
    }
    (gin, gw, grad_out.to_vec())
}

pub(crate) fn avgpool2(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (h / 2, w / 2);
    let mut out = vec![0.0; c * h2 * w2];
    for ch in 0..c {
        let x = &input[ch * h * w..];
        for r in 0..h2 {
            for col in 0..w2 {
                let i = 2 * r * w + 2 * col;
                out[(ch * h2 + r) * w2 + col] = 0.25 * (x[i] + x[i + 1] + x[i + w] + x[i + w + 1]);
            }
        }
    }
    out
}

/// Backward of [`avgpool2`]; `h`, `w` are the input extents.
pub(crate) fn avgpool2_backward(grad_out: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (h / 2, w / 2);
    let mut gin = vec![0.0; c * h * w];
    for ch in 0..c {
        for r in 0..h {
            for col in 0..w {
                gin[(ch * h + r) * w + col] = 0.25 * grad_out[(ch * h2 + r / 2) * w2 + col / 2];
            }
        }
    }
    gin
}

/// Nearest-neighbour 2× upsampling; `h`, `w` are the input extents.
pub(crate) fn upsample2(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h2 * w2];
    for ch in 0..c {
        for r in 0..h2 {
            for col in 0..w2 {
                out[(ch * h2 + r) * w2 + col] = input[(ch * h + r / 2) * w + col / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(grad_out: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut gin = vec![0.0; c * h * w];
    for ch in 0..c {
        for r in 0..h2 {
            for col in 0..w2 {
                gin[(ch * h + r / 2) * w + col / 2] += grad_out[(ch * h2 + r) * w2 + col];
            }
        }
    }
    gin
}

/// Per-channel PReLU over `channels` contiguous planes of `plane` values.
pub(crate) fn prelu(z: &[f64], slope: &[f64], plane: usize) -> Vec<f64> {
    z.iter().enumerate().map(|(i, &v)| if v > 0.0 { v } else { slope[i / plane] * v }).collect()
}

/// Returns `(grad_z, grad_slope)`.
pub(crate) fn prelu_backward(z: &[f64], slope: &[f64], plane: usize, grad_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut gs = vec![0.0; slope.len()];
    let gz = z
        .iter()
        .zip(grad_out)
        .enumerate()
        .map(|(i, (&v, &g))| {
            if v > 0.0 {
                g
            } else {
                gs[i / plane] += g * v;
                slope[i / plane] * g
            }
        })
        .collect();
    (gz, gs)
}
