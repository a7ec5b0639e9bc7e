//! 2D and 3D convolution with "same" zero padding and stride 1.
//!
//! Cross-correlation semantics: the kernel is not flipped. Forward and both
//! backward passes are written as shift-and-accumulate loops over contiguous
//! rows so they vectorize; work is split per output (or input) channel, which
//! keeps results bit-identical for any thread count.

use crate::error::{Error, Result};
use crate::parallel::par_chunks_mut;
use crate::tensor::Tensor;

/// Kernel geometry for a convolution site. Stride is always 1 and padding is
/// always "same" zero padding in this network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    kernel: Vec<usize>,
}

impl ConvSpec {
    pub fn same(kernel: &[usize]) -> Result<ConvSpec> {
        if kernel.iter().any(|&k| k % 2 == 0 || k == 0) {
            return Err(Error::invalid(
                "conv",
                format!("kernel extents must be odd and positive, got {kernel:?}"),
            ));
        }
        Ok(ConvSpec { kernel: kernel.to_vec() })
    }

    pub fn same2d(kh: usize, kw: usize) -> Result<ConvSpec> {
        ConvSpec::same(&[kh, kw])
    }

    pub fn same3d(kd: usize, kh: usize, kw: usize) -> Result<ConvSpec> {
        ConvSpec::same(&[kd, kh, kw])
    }

    pub fn kernel(&self) -> &[usize] {
        &self.kernel
    }
}

fn check2d(input: &Tensor, weight: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<()> {
    if input.rank() != 3 || weight.rank() != 4 {
        return Err(Error::shape(
            "conv2d",
            "input [C_in,H,W], weight [C_out,C_in,kh,kw]",
            format!("input {:?}, weight {:?}", input.shape(), weight.shape()),
        ));
    }
    let (c_in, c_out) = (input.shape()[0], weight.shape()[0]);
    if weight.shape()[1] != c_in {
        return Err(Error::shape(
            "conv2d",
            format!("weight C_in = {c_in}"),
            format!("weight C_in = {}", weight.shape()[1]),
        ));
    }
    if bias.shape() != [c_out] {
        return Err(Error::shape("conv2d", format!("bias [{c_out}]"), format!("{:?}", bias.shape())));
    }
    if spec.kernel() != &weight.shape()[2..] {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {:?}", spec.kernel()),
            format!("weight kernel {:?}", &weight.shape()[2..]),
        ));
    }
    Ok(())
}

/// Shifted row accumulate: dst[x] += w * src[x + dx] over the in-range span.
#[inline]
fn axpy_shift(dst: &mut [f64], src: &[f64], w: f64, dx: isize) {
    let width = dst.len() as isize;
    let x_lo = 0.max(-dx) as usize;
    let x_hi = width.min(width - dx) as usize;
    if x_lo >= x_hi {
        return;
    }
    let s = &src[(x_lo as isize + dx) as usize..(x_hi as isize + dx) as usize];
    for (d, s) in dst[x_lo..x_hi].iter_mut().zip(s) {
        *d += w * s;
    }
}

/// Shifted row dot product: sum over x of a[x] * b[x + dx] on the in-range span.
#[inline]
fn dot_shift(a: &[f64], b: &[f64], dx: isize) -> f64 {
    let width = a.len() as isize;
    let x_lo = 0.max(-dx) as usize;
    let x_hi = width.min(width - dx) as usize;
    if x_lo >= x_hi {
        return 0.0;
    }
    let s = &b[(x_lo as isize + dx) as usize..(x_hi as isize + dx) as usize];
    a[x_lo..x_hi].iter().zip(s).map(|(x, y)| x * y).sum()
}

/// out[co,y,x] = bias[co] + sum over ci,ky,kx of w[co,ci,ky,kx] * in[ci, y+ky-rh, x+kx-rw]
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    check2d(input, weight, bias, spec)?;
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kh, kw) = (weight.shape()[0], weight.shape()[2], weight.shape()[3]);
    let (rh, rw) = ((kh / 2) as isize, (kw / 2) as isize);
    let plane = h * w;
    let mut out = Tensor::zeros(&[c_out, h, w]);
    let (inp, wt, b) = (input.data(), weight.data(), bias.data());
    par_chunks_mut(out.data_mut(), plane, |co, out_plane| {
        out_plane.fill(b[co]);
        for ci in 0..c_in {
            let in_plane = &inp[ci * plane..(ci + 1) * plane];
            let w_base = ((co * c_in) + ci) * kh * kw;
            for ky in 0..kh {
                let dy = ky as isize - rh;
                let y_lo = 0.max(-dy) as usize;
                let y_hi = (h as isize).min(h as isize - dy) as usize;
                for kx in 0..kw {
                    let wv = wt[w_base + ky * kw + kx];
                    let dx = kx as isize - rw;
                    for y in y_lo..y_hi {
                        let src = &in_plane[((y as isize + dy) as usize) * w..][..w];
                        let dst = &mut out_plane[y * w..y * w + w];
                        axpy_shift(dst, src, wv, dx);
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of `conv2d` with respect to (input, weight, bias).
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kh, kw) = (weight.shape()[0], weight.shape()[2], weight.shape()[3]);
    if grad_out.shape() != [c_out, h, w] {
        return Err(Error::shape(
            "conv2d_backward",
            format!("[{c_out}, {h}, {w}]"),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let (rh, rw) = ((kh / 2) as isize, (kw / 2) as isize);
    let plane = h * w;
    let (inp, wt, go) = (input.data(), weight.data(), grad_out.data());

    let mut grad_bias = Tensor::zeros(&[c_out]);
    for co in 0..c_out {
        grad_bias.data_mut()[co] = go[co * plane..(co + 1) * plane].iter().sum();
    }

    // d/d weight: per (co,ci,ky,kx), dot of grad rows against shifted input rows.
    let mut grad_weight = Tensor::zeros(weight.shape());
    let wchunk = c_in * kh * kw;
    par_chunks_mut(grad_weight.data_mut(), wchunk, |co, gw| {
        let go_plane = &go[co * plane..(co + 1) * plane];
        for ci in 0..c_in {
            let in_plane = &inp[ci * plane..(ci + 1) * plane];
            for ky in 0..kh {
                let dy = ky as isize - rh;
                let y_lo = 0.max(-dy) as usize;
                let y_hi = (h as isize).min(h as isize - dy) as usize;
                for kx in 0..kw {
                    let dx = kx as isize - rw;
                    let mut acc = 0.0;
                    for y in y_lo..y_hi {
                        let g_row = &go_plane[y * w..y * w + w];
                        let i_row = &in_plane[((y as isize + dy) as usize) * w..][..w];
                        acc += dot_shift(g_row, i_row, dx);
                    }
                    gw[(ci * kh + ky) * kw + kx] = acc;
                }
            }
        }
    });

    // d/d input: correlation of grad_out with the flipped kernel, gathered per
    // input channel so writes stay disjoint.
    let mut grad_input = Tensor::zeros(input.shape());
    par_chunks_mut(grad_input.data_mut(), plane, |ci, gi_plane| {
        for co in 0..c_out {
            let go_plane = &go[co * plane..(co + 1) * plane];
            let w_base = ((co * c_in) + ci) * kh * kw;
            for ky in 0..kh {
                let dy = rh - ky as isize; // flipped displacement
                let y_lo = 0.max(-dy) as usize;
                let y_hi = (h as isize).min(h as isize - dy) as usize;
                for kx in 0..kw {
                    let wv = wt[w_base + ky * kw + kx];
                    let dx = rw - kx as isize;
                    for y in y_lo..y_hi {
                        let src = &go_plane[((y as isize + dy) as usize) * w..][..w];
                        let dst = &mut gi_plane[y * w..y * w + w];
                        axpy_shift(dst, src, wv, dx);
                    }
                }
            }
        }
    });

    Ok((grad_input, grad_weight, grad_bias))
}

fn check3d(input: &Tensor, weight: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<()> {
    if input.rank() != 4 || weight.rank() != 5 {
        return Err(Error::shape(
            "conv3d",
            "input [C_in,D,H,W], weight [C_out,C_in,kd,kh,kw]",
            format!("input {:?}, weight {:?}", input.shape(), weight.shape()),
        ));
    }
    let (c_in, c_out) = (input.shape()[0], weight.shape()[0]);
    if weight.shape()[1] != c_in {
        return Err(Error::shape(
            "conv3d",
            format!("weight C_in = {c_in}"),
            format!("weight C_in = {}", weight.shape()[1]),
        ));
    }
    if bias.shape() != [c_out] {
        return Err(Error::shape("conv3d", format!("bias [{c_out}]"), format!("{:?}", bias.shape())));
    }
    if spec.kernel() != &weight.shape()[2..] {
        return Err(Error::shape(
            "conv3d",
            format!("kernel {:?}", spec.kernel()),
            format!("weight kernel {:?}", &weight.shape()[2..]),
        ));
    }
    Ok(())
}

/// Same-padded stride-1 cross-correlation over depth, height and width.
pub fn conv3d(input: &Tensor, weight: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    check3d(input, weight, bias, spec)?;
    let (c_in, d, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let (c_out, kd, kh, kw) = (weight.shape()[0], weight.shape()[2], weight.shape()[3], weight.shape()[4]);
    let (rd, rh, rw) = ((kd / 2) as isize, (kh / 2) as isize, (kw / 2) as isize);
    let plane = h * w;
    let vol = d * plane;
    let mut out = Tensor::zeros(&[c_out, d, h, w]);
    let (inp, wt, b) = (input.data(), weight.data(), bias.data());
    par_chunks_mut(out.data_mut(), vol, |co, out_vol| {
        out_vol.fill(b[co]);
        for ci in 0..c_in {
            let in_vol = &inp[ci * vol..(ci + 1) * vol];
            let w_base = ((co * c_in) + ci) * kd * kh * kw;
            for kz in 0..kd {
                let dz = kz as isize - rd;
                let z_lo = 0.max(-dz) as usize;
                let z_hi = (d as isize).min(d as isize - dz) as usize;
                for ky in 0..kh {
                    let dy = ky as isize - rh;
                    let y_lo = 0.max(-dy) as usize;
                    let y_hi = (h as isize).min(h as isize - dy) as usize;
                    for kx in 0..kw {
                        let wv = wt[w_base + (kz * kh + ky) * kw + kx];
                        let dx = kx as isize - rw;
                        for z in z_lo..z_hi {
                            let in_plane = &in_vol[((z as isize + dz) as usize) * plane..][..plane];
                            let out_plane = &mut out_vol[z * plane..(z + 1) * plane];
                            for y in y_lo..y_hi {
                                let src = &in_plane[((y as isize + dy) as usize) * w..][..w];
                                let dst = &mut out_plane[y * w..y * w + w];
                                axpy_shift(dst, src, wv, dx);
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of `conv3d` with respect to (input, weight, bias).
pub fn conv3d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c_in, d, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let (c_out, kd, kh, kw) = (weight.shape()[0], weight.shape()[2], weight.shape()[3], weight.shape()[4]);
    if grad_out.shape() != [c_out, d, h, w] {
        return Err(Error::shape(
            "conv3d_backward",
            format!("[{c_out}, {d}, {h}, {w}]"),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let (rd, rh, rw) = ((kd / 2) as isize, (kh / 2) as isize, (kw / 2) as isize);
    let plane = h * w;
    let vol = d * plane;
    let (inp, wt, go) = (input.data(), weight.data(), grad_out.data());

    let mut grad_bias = Tensor::zeros(&[c_out]);
    for co in 0..c_out {
        grad_bias.data_mut()[co] = go[co * vol..(co + 1) * vol].iter().sum();
    }

    let mut grad_weight = Tensor::zeros(weight.shape());
    let wchunk = c_in * kd * kh * kw;
    par_chunks_mut(grad_weight.data_mut(), wchunk, |co, gw| {
        let go_vol = &go[co * vol..(co + 1) * vol];
        for ci in 0..c_in {
            let in_vol = &inp[ci * vol..(ci + 1) * vol];
            for kz in 0..kd {
                let dz = kz as isize - rd;
                let z_lo = 0.max(-dz) as usize;
                let z_hi = (d as isize).min(d as isize - dz) as usize;
                for ky in 0..kh {
                    let dy = ky as isize - rh;
                    let y_lo = 0.max(-dy) as usize;
                    let y_hi = (h as isize).min(h as isize - dy) as usize;
                    for kx in 0..kw {
                        let dx = kx as isize - rw;
                        let mut acc = 0.0;
                        for z in z_lo..z_hi {
                            let g_plane = &go_vol[z * plane..(z + 1) * plane];
                            let i_plane = &in_vol[((z as isize + dz) as usize) * plane..][..plane];
                            for y in y_lo..y_hi {
                                let g_row = &g_plane[y * w..y * w + w];
                                let i_row = &i_plane[((y as isize + dy) as usize) * w..][..w];
                                acc += dot_shift(g_row, i_row, dx);
                            }
                        }
                        gw[((ci * kd + kz) * kh + ky) * kw + kx] = acc;
                    }
                }
            }
        }
    });

    let mut grad_input = Tensor::zeros(input.shape());
    par_chunks_mut(grad_input.data_mut(), vol, |ci, gi_vol| {
        for co in 0..c_out {
            let go_vol = &go[co * vol..(co + 1) * vol];
            let w_base = ((co * c_in) + ci) * kd * kh * kw;
            for kz in 0..kd {
                let dz = rd - kz as isize;
                let z_lo = 0.max(-dz) as usize;
                let z_hi = (d as isize).min(d as isize - dz) as usize;
                for ky in 0..kh {
                    let dy = rh - ky as isize;
                    let y_lo = 0.max(-dy) as usize;
                    let y_hi = (h as isize).min(h as isize - dy) as usize;
                    for kx in 0..kw {
                        let wv = wt[w_base + (kz * kh + ky) * kw + kx];
                        let dx = rw - kx as isize;
                        for z in z_lo..z_hi {
                            let g_plane = &go_vol[((z as isize + dz) as usize) * plane..][..plane];
                            let gi_plane = &mut gi_vol[z * plane..(z + 1) * plane];
                            for y in y_lo..y_hi {
                                let src = &g_plane[((y as isize + dy) as usize) * w..][..w];
                                let dst = &mut gi_plane[y * w..y * w + w];
                                axpy_shift(dst, src, wv, dx);
                            }
                        }
                    }
                }
            }
        }
    });

    Ok((grad_input, grad_weight, grad_bias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.next_uniform(1.0)).collect()).unwrap()
    }

    /// Direct quadruple-loop evaluation with explicit zero padding. Slow but
    /// obviously faithful to the definition; the fast kernels are checked
    /// against it element by element.
    fn conv2d_direct(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
        let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (c_out, kh, kw) = (weight.shape()[0], weight.shape()[2], weight.shape()[3]);
        let (rh, rw) = (kh as isize / 2, kw as isize / 2);
        let mut out = Tensor::zeros(&[c_out, h, w]);
        for co in 0..c_out {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = bias.data()[co];
                    for ci in 0..c_in {
                        for ky in 0..kh as isize {
                            for kx in 0..kw as isize {
                                let (sy, sx) = (y + ky - rh, x + kx - rw);
                                if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc += weight.get(&[co, ci, ky as usize, kx as usize])
                                    * input.get(&[ci, sy as usize, sx as usize]);
                            }
                        }
                    }
                    out.set(&[co, y as usize, x as usize], acc);
                }
            }
        }
        out
    }

    fn conv3d_direct(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
        let (c_in, d, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
        let (c_out, kd, kh, kw) =
            (weight.shape()[0], weight.shape()[2], weight.shape()[3], weight.shape()[4]);
        let (rd, rh, rw) = (kd as isize / 2, kh as isize / 2, kw as isize / 2);
        let mut out = Tensor::zeros(&[c_out, d, h, w]);
        for co in 0..c_out {
            for z in 0..d as isize {
                for y in 0..h as isize {
                    for x in 0..w as isize {
                        let mut acc = bias.data()[co];
                        for ci in 0..c_in {
                            for kz in 0..kd as isize {
                                for ky in 0..kh as isize {
                                    for kx in 0..kw as isize {
                                        let (sz, sy, sx) = (z + kz - rd, y + ky - rh, x + kx - rw);
                                        if sz < 0
                                            || sz >= d as isize
                                            || sy < 0
                                            || sy >= h as isize
                                            || sx < 0
                                            || sx >= w as isize
                                        {
                                            continue;
                                        }
                                        acc += weight
                                            .get(&[co, ci, kz as usize, ky as usize, kx as usize])
                                            * input.get(&[ci, sz as usize, sy as usize, sx as usize]);
                                    }
                                }
                            }
                        }
                        out.set(&[co, z as usize, y as usize, x as usize], acc);
                    }
                }
            }
        }
        out
    }

    fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
            assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
        }
    }

    #[test]
    fn conv2d_matches_direct_sum() {
        let mut rng = SplitMix64::new(11);
        for &(c_in, c_out, kh, kw, h, w) in
            &[(1, 1, 3, 3, 5, 5), (3, 2, 3, 3, 7, 6), (2, 4, 1, 1, 4, 9), (2, 3, 5, 3, 6, 5)]
        {
            let input = random(&[c_in, h, w], &mut rng);
            let weight = random(&[c_out, c_in, kh, kw], &mut rng);
            let bias = random(&[c_out], &mut rng);
            let spec = ConvSpec::same2d(kh, kw).unwrap();
            let fast = conv2d(&input, &weight, &bias, &spec).unwrap();
            assert_close(&fast, &conv2d_direct(&input, &weight, &bias), 1e-12);
        }
    }

    #[test]
    fn conv3d_matches_direct_sum() {
        let mut rng = SplitMix64::new(12);
        for &(c_in, c_out, kd, kh, kw, d, h, w) in
            &[(1, 1, 3, 3, 3, 3, 4, 4), (2, 3, 1, 3, 3, 3, 5, 4), (3, 2, 3, 3, 3, 2, 3, 5), (2, 2, 1, 1, 1, 3, 4, 3)]
        {
            let input = random(&[c_in, d, h, w], &mut rng);
            let weight = random(&[c_out, c_in, kd, kh, kw], &mut rng);
            let bias = random(&[c_out], &mut rng);
            let spec = ConvSpec::same3d(kd, kh, kw).unwrap();
            let fast = conv3d(&input, &weight, &bias, &spec).unwrap();
            assert_close(&fast, &conv3d_direct(&input, &weight, &bias), 1e-12);
        }
    }

    #[test]
    fn one_by_one_kernel_is_channel_mix() {
        // A 1x1 kernel with identity weights and zero bias must reproduce the
        // input exactly.
        let mut rng = SplitMix64::new(13);
        let input = random(&[3, 4, 5], &mut rng);
        let mut weight = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            weight.set(&[c, c, 0, 0], 1.0);
        }
        let bias = Tensor::zeros(&[3]);
        let out = conv2d(&input, &weight, &bias, &ConvSpec::same2d(1, 1).unwrap()).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn same_padding_shrinks_border_sums() {
        // All-ones input and 3x3 all-ones kernel: interior outputs are 9,
        // edges 6, corners 4. Pins the zero-padding convention.
        let input = Tensor::full(&[1, 4, 4], 1.0);
        let weight = Tensor::full(&[1, 1, 3, 3], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &weight, &bias, &ConvSpec::same2d(3, 3).unwrap()).unwrap();
        assert_eq!(out.get(&[0, 1, 1]), 9.0);
        assert_eq!(out.get(&[0, 0, 1]), 6.0);
        assert_eq!(out.get(&[0, 0, 0]), 4.0);
    }

    #[test]
    fn conv2d_backward_matches_direct_differences() {
        // Backward against the direct forward: d loss / d theta for
        // loss = sum(out * probe) equals the probe-weighted direct sums.
        let mut rng = SplitMix64::new(14);
        let input = random(&[2, 5, 4], &mut rng);
        let weight = random(&[3, 2, 3, 3], &mut rng);
        let bias = random(&[3], &mut rng);
        let probe = random(&[3, 5, 4], &mut rng);
        let (di, dw, db) = conv2d_backward(&input, &weight, &probe).unwrap();

        let eps = 1e-5;
        let loss = |inp: &Tensor, wt: &Tensor, b: &Tensor| {
            let out = conv2d_direct(inp, wt, b);
            out.data().iter().zip(probe.data()).map(|(o, p)| o * p).sum::<f64>()
        };
        for (grad, base) in [(&di, &input), (&dw, &weight), (&db, &bias)] {
            for i in 0..base.numel() {
                let mut plus = (*base).clone();
                plus.data_mut()[i] += eps;
                let mut minus = (*base).clone();
                minus.data_mut()[i] -= eps;
                let (fp, fm) = match base.rank() {
                    3 => (loss(&plus, &weight, &bias), loss(&minus, &weight, &bias)),
                    4 => (loss(&input, &plus, &bias), loss(&input, &minus, &bias)),
                    _ => (loss(&input, &weight, &plus), loss(&input, &weight, &minus)),
                };
                let numeric = (fp - fm) / (2.0 * eps);
                assert!(
                    (grad.data()[i] - numeric).abs() < 1e-6,
                    "index {i}: {} vs {}",
                    grad.data()[i],
                    numeric
                );
            }
        }
    }

    #[test]
    fn conv3d_backward_matches_direct_differences() {
        let mut rng = SplitMix64::new(15);
        let input = random(&[2, 3, 3, 4], &mut rng);
        let weight = random(&[2, 2, 1, 3, 3], &mut rng);
        let bias = random(&[2], &mut rng);
        let probe = random(&[2, 3, 3, 4], &mut rng);
        let (di, dw, db) = conv3d_backward(&input, &weight, &probe).unwrap();

        let eps = 1e-5;
        let loss = |inp: &Tensor, wt: &Tensor, b: &Tensor| {
            let out = conv3d_direct(inp, wt, b);
            out.data().iter().zip(probe.data()).map(|(o, p)| o * p).sum::<f64>()
        };
        for (grad, base) in [(&di, &input), (&dw, &weight), (&db, &bias)] {
            for i in 0..base.numel() {
                let mut plus = (*base).clone();
                plus.data_mut()[i] += eps;
                let mut minus = (*base).clone();
                minus.data_mut()[i] -= eps;
                let (fp, fm) = match base.rank() {
                    4 => (loss(&plus, &weight, &bias), loss(&minus, &weight, &bias)),
                    5 => (loss(&input, &plus, &bias), loss(&input, &minus, &bias)),
                    _ => (loss(&input, &weight, &plus), loss(&input, &weight, &minus)),
                };
                let numeric = (fp - fm) / (2.0 * eps);
                assert!(
                    (grad.data()[i] - numeric).abs() < 1e-6,
                    "index {i}: {} vs {}",
                    grad.data()[i],
                    numeric
                );
            }
        }
    }

    #[test]
    fn rejects_even_kernels_and_bad_shapes() {
        assert!(ConvSpec::same2d(2, 3).is_err());
        assert!(ConvSpec::same3d(3, 0, 3).is_err());
        let input = Tensor::zeros(&[2, 4, 4]);
        let weight = Tensor::zeros(&[1, 3, 3, 3]); // claims 3 input channels
        let bias = Tensor::zeros(&[1]);
        let spec = ConvSpec::same2d(3, 3).unwrap();
        assert!(conv2d(&input, &weight, &bias, &spec).is_err());
    }

    #[test]
    fn identical_results_for_any_thread_count() {
        let mut rng = SplitMix64::new(16);
        let input = random(&[3, 8, 8], &mut rng);
        let weight = random(&[4, 3, 3, 3], &mut rng);
        let bias = random(&[4], &mut rng);
        let spec = ConvSpec::same2d(3, 3).unwrap();
        crate::parallel::set_threads(1);
        let a = conv2d(&input, &weight, &bias, &spec).unwrap();
        crate::parallel::set_threads(3);
        let b = conv2d(&input, &weight, &bias, &spec).unwrap();
        crate::parallel::set_threads(1);
        assert_eq!(a.data(), b.data());
    }
}
