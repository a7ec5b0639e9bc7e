//! Y-channel PSNR and SSIM.
//!
//! Both metrics convert RGB to BT.601 limited-range luma first and score on
//! the [16,235] scale with peak 255, the usual convention in the
//! super-resolution literature.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::video::rgb_to_y;

/// Sentinel PSNR for a zero-MSE (identical) pair.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_RANGE: f64 = 255.0;

#[derive(Clone, Copy, Debug)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
}

fn check_pair(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

/// Drop `border` pixels from every edge of a `[C,H,W]` image.
pub fn crop_border(frame: &Tensor, border: usize) -> Result<Tensor> {
    if border == 0 {
        return Ok(frame.clone());
    }
    let (c, h, w) = (frame.shape()[0], frame.shape()[1], frame.shape()[2]);
    if 2 * border >= h || 2 * border >= w {
        return Err(Error::invalid(
            "crop_border",
            format!("border {border} leaves no pixels of a {h}x{w} frame"),
        ));
    }
    let (oh, ow) = (h - 2 * border, w - 2 * border);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                out.set(&[ch, y, x], frame.get(&[ch, y + border, x + border]));
            }
        }
    }
    Ok(out)
}

/// Y-channel peak signal-to-noise ratio in dB; identical inputs return the
/// 100 dB cap instead of infinity.
pub fn psnr_y(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_pair("psnr_y", a, b)?;
    let ya = rgb_to_y(a)?;
    let yb = rgb_to_y(b)?;
    let mse = ya
        .data()
        .iter()
        .zip(yb.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / ya.numel() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (SSIM_RANGE * SSIM_RANGE / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Valid-region separable filter: rows then columns with the same 1D window.
/// Input is a flat H x W plane; output is (H-n+1) x (W-n+1).
fn window_filter(plane: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let n = win.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, wv) in win.iter().enumerate() {
                acc += wv * plane[y * w + x + k];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, wv) in win.iter().enumerate() {
                acc += wv * rows[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Single-scale SSIM on the Y channel: 11x11 Gaussian window (sigma 1.5),
/// K1=0.01, K2=0.03, range 255, mean over valid (unpadded) window positions.
pub fn ssim_y(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_pair("ssim_y", a, b)?;
    let (h, w) = (a.shape()[1], a.shape()[2]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim_y",
            format!("image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let ya = rgb_to_y(a)?;
    let yb = rgb_to_y(b)?;
    let win = gaussian_window();
    let pa = ya.data();
    let pb = yb.data();
    let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();

    let mu_a = window_filter(pa, h, w, &win);
    let mu_b = window_filter(pb, h, w, &win);
    let e_aa = window_filter(&aa, h, w, &win);
    let e_bb = window_filter(&bb, h, w, &win);
    let e_ab = window_filter(&ab, h, w, &win);

    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

pub fn score_pair(pred: &Tensor, truth: &Tensor, border: usize) -> Result<MetricReport> {
    let p = crop_border(pred, border)?;
    let t = crop_border(truth, border)?;
    Ok(MetricReport { psnr_db: psnr_y(&p, &t)?, ssim: ssim_y(&p, &t)? })
}
