//! Spatial resampling: bicubic resize (Keys kernel, a = -0.5, half-pixel
//! centers, edge clamping) and separable Gaussian blur with reflect padding.
//! Both are linear in the image, so their backward passes are the transposed
//! gather/scatter through the same coefficient tables.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Keys cubic interpolation kernel with a = -0.5.
pub fn keys_cubic(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0)
    } else {
        0.0
    }
}

/// Four (clamped index, weight) taps per output coordinate along one axis.
fn cubic_taps(n_in: usize, n_out: usize, scale: f64) -> Vec<[(usize, f64); 4]> {
    (0..n_out)
        .map(|o| {
            let src = (o as f64 + 0.5) / scale - 0.5;
            let base = src.floor();
            let mut taps = [(0usize, 0.0f64); 4];
            for (k, tap) in taps.iter_mut().enumerate() {
                let idx = base as isize - 1 + k as isize;
                let w = keys_cubic(src - idx as f64);
                let clamped = idx.clamp(0, n_in as isize - 1) as usize;
                *tap = (clamped, w);
            }
            taps
        })
        .collect()
}

fn check_image(op: &'static str, input: &Tensor) -> Result<(usize, usize, usize)> {
    if input.rank() != 3 {
        return Err(Error::shape(op, "[C,H,W]", format!("{:?}", input.shape())));
    }
    Ok((input.shape()[0], input.shape()[1], input.shape()[2]))
}

/// Resize a [C,H,W] image by `scale` with the separable Keys cubic kernel.
/// Output dimensions are floor(scale * H) x floor(scale * W).
pub fn bicubic_resize(input: &Tensor, scale: f64) -> Result<Tensor> {
    let (c, h, w) = check_image("bicubic_resize", input)?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid("bicubic_resize", format!("scale must be positive, got {scale}")));
    }
    let h_out = (scale * h as f64).floor() as usize;
    let w_out = (scale * w as f64).floor() as usize;
    if h_out == 0 || w_out == 0 {
        return Err(Error::invalid("bicubic_resize", format!("scale {scale} collapses {h}x{w} to zero size")));
    }
    let taps_w = cubic_taps(w, w_out, scale);
    let taps_h = cubic_taps(h, h_out, scale);

    // Pass 1: width axis.
    let mut tmp = vec![0.0; c * h * w_out];
    for cy in 0..c * h {
        let src = &input.data()[cy * w..(cy + 1) * w];
        let dst = &mut tmp[cy * w_out..(cy + 1) * w_out];
        for (o, taps) in taps_w.iter().enumerate() {
            dst[o] = taps.iter().map(|&(i, wt)| wt * src[i]).sum();
        }
    }
    // Pass 2: height axis.
    let mut out = Tensor::zeros(&[c, h_out, w_out]);
    let dst = out.data_mut();
    for ch in 0..c {
        let plane_in = &tmp[ch * h * w_out..(ch + 1) * h * w_out];
        let plane_out = &mut dst[ch * h_out * w_out..(ch + 1) * h_out * w_out];
        for (o, taps) in taps_h.iter().enumerate() {
            let row = &mut plane_out[o * w_out..(o + 1) * w_out];
            for &(i, wt) in taps {
                for (d, s) in row.iter_mut().zip(&plane_in[i * w_out..(i + 1) * w_out]) {
                    *d += wt * s;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of `bicubic_resize` for an input of shape `input_shape`.
pub fn bicubic_resize_backward(input_shape: &[usize], scale: f64, grad_out: &Tensor) -> Tensor {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (h_out, w_out) = (grad_out.shape()[1], grad_out.shape()[2]);
    let taps_w = cubic_taps(w, w_out, scale);
    let taps_h = cubic_taps(h, h_out, scale);

    // Adjoint of pass 2 (height axis): scatter rows.
    let mut tmp = vec![0.0; c * h * w_out];
    for ch in 0..c {
        let g_plane = &grad_out.data()[ch * h_out * w_out..(ch + 1) * h_out * w_out];
        let t_plane = &mut tmp[ch * h * w_out..(ch + 1) * h * w_out];
        for (o, taps) in taps_h.iter().enumerate() {
            let g_row = &g_plane[o * w_out..(o + 1) * w_out];
            for &(i, wt) in taps {
                for (d, s) in t_plane[i * w_out..(i + 1) * w_out].iter_mut().zip(g_row) {
                    *d += wt * s;
                }
            }
        }
    }
    // Adjoint of pass 1 (width axis).
    let mut grad_in = Tensor::zeros(input_shape);
    let dst = grad_in.data_mut();
    for cy in 0..c * h {
        let g_row = &tmp[cy * w_out..(cy + 1) * w_out];
        let d_row = &mut dst[cy * w..(cy + 1) * w];
        for (o, taps) in taps_w.iter().enumerate() {
            for &(i, wt) in taps {
                d_row[i] += wt * g_row[o];
            }
        }
    }
    grad_in
}

/// Mirror index without repeating the edge sample (period 2n-2).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = (2 * n - 2) as isize;
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Normalized Gaussian taps with radius ceil(4 sigma).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= sum;
    }
    taps
}

fn blur_axis(data: &[f64], rows: usize, width: usize, taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() / 2) as isize;
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        let src = &data[r * width..(r + 1) * width];
        let dst = &mut out[r * width..(r + 1) * width];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &wt) in taps.iter().enumerate() {
                acc += wt * src[reflect(x as isize + k as isize - radius, width)];
            }
            *d = acc;
        }
    }
    out
}

fn blur_axis_adjoint(grad: &[f64], rows: usize, width: usize, taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() / 2) as isize;
    let mut out = vec![0.0; grad.len()];
    for r in 0..rows {
        let g = &grad[r * width..(r + 1) * width];
        let dst = &mut out[r * width..(r + 1) * width];
        for (x, &gv) in g.iter().enumerate() {
            for (k, &wt) in taps.iter().enumerate() {
                dst[reflect(x as isize + k as isize - radius, width)] += wt * gv;
            }
        }
    }
    out
}

/// Transpose H and W of every channel plane (helper for the separable passes).
fn transpose_planes(data: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for ch in 0..c {
        let src = &data[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                dst[x * h + y] = src[y * w + x];
            }
        }
    }
    out
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(input: &Tensor, sigma: f64) -> Result<Tensor> {
    let (c, h, w) = check_image("gaussian_blur", input)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("gaussian_blur", format!("sigma must be positive, got {sigma}")));
    }
    let taps = gaussian_kernel(sigma);
    let pass_w = blur_axis(input.data(), c * h, w, &taps);
    let t = transpose_planes(&pass_w, c, h, w);
    let pass_h = blur_axis(&t, c * w, h, &taps);
    let data = transpose_planes(&pass_h, c, w, h);
    Tensor::from_vec(vec![c, h, w], data)
}

/// Adjoint of `gaussian_blur`.
pub fn gaussian_blur_backward(input_shape: &[usize], sigma: f64, grad_out: &Tensor) -> Tensor {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let taps = gaussian_kernel(sigma);
    let g_t = transpose_planes(grad_out.data(), c, h, w);
    let adj_h = blur_axis_adjoint(&g_t, c * w, h, &taps);
    let back = transpose_planes(&adj_h, c, w, h);
    let adj_w = blur_axis_adjoint(&back, c * h, w, &taps);
    Tensor::from_vec(vec![c, h, w], adj_w).expect("shape preserved")
}
