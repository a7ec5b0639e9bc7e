//! Composite reconstruction loss: mean-absolute reconstruction error plus a
//! weighted mean-absolute error of the plain bicubic upsample against the
//! same truth. The bicubic term carries no parameter gradient; it only
//! shifts the reported value.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_ir: f64,
    pub l_up: f64,
    pub total: f64,
}

fn mean_abs_error(a: &Tensor, b: &Tensor, op: &'static str) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    let total: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.numel() as f64)
}

pub fn composite_loss(
    reconstructed: &Tensor,
    upsampled: &Tensor,
    truth: &Tensor,
    lambda_up: f64,
) -> Result<LossBreakdown> {
    if lambda_up < 0.0 {
        return Err(Error::invalid("composite_loss", format!("negative lambda_up {lambda_up}")));
    }
    let l_ir = mean_abs_error(reconstructed, truth, "composite_loss")?;
    let l_up = mean_abs_error(upsampled, truth, "composite_loss")?;
    Ok(LossBreakdown { l_ir, l_up, total: l_ir + lambda_up * l_up })
}
