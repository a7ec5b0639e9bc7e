//! Sub-pixel rearrangement: r*r channel groups become an r-times larger
//! spatial grid. out[c, r*y+a, r*x+b] = in[c*r*r + a*r + b, y, x].

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(Error::shape("pixel_shuffle", "[C,H,W]", format!("{:?}", input.shape())));
    }
    if r == 0 {
        return Err(Error::invalid("pixel_shuffle", "upscale factor must be positive".to_string()));
    }
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if c_in % (r * r) != 0 {
        return Err(Error::shape(
            "pixel_shuffle",
            format!("channels divisible by {}", r * r),
            format!("{c_in} channels"),
        ));
    }
    let c_out = c_in / (r * r);
    let mut out = Tensor::zeros(&[c_out, r * h, r * w]);
    let (src, dst) = (input.data(), out.data_mut());
    for c in 0..c_out {
        for a in 0..r {
            for b in 0..r {
                let in_plane = &src[(c * r * r + a * r + b) * h * w..][..h * w];
                for y in 0..h {
                    for x in 0..w {
                        dst[(c * r * h + r * y + a) * r * w + r * x + b] = in_plane[y * w + x];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of `pixel_shuffle`: routes each output-position gradient back to
/// the channel-group element it came from.
pub fn pixel_shuffle_backward(input_shape: &[usize], r: usize, grad_out: &Tensor) -> Tensor {
    let (c_in, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let c_out = c_in / (r * r);
    debug_assert_eq!(grad_out.shape(), [c_out, r * h, r * w]);
    let mut grad_in = Tensor::zeros(input_shape);
    let (src, dst) = (grad_out.data(), grad_in.data_mut());
    for c in 0..c_out {
        for a in 0..r {
            for b in 0..r {
                let gi_plane = &mut dst[(c * r * r + a * r + b) * h * w..][..h * w];
                for y in 0..h {
                    for x in 0..w {
                        gi_plane[y * w + x] = src[(c * r * h + r * y + a) * r * w + r * x + b];
                    }
                }
            }
        }
    }
    grad_in
}
