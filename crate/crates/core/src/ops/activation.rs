//! Elementwise and axis-wise nonlinearities.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| x.max(0.0))
}

/// d relu / d input, using the convention relu'(0) = 0.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(input.shape(), grad_out.shape());
    let mut grad = grad_out.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    grad
}

/// Numerically stable softmax along `axis`: exponentials are taken after
/// subtracting the per-lane maximum.
pub fn softmax_axis(input: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= input.rank() {
        return Err(Error::invalid(
            "softmax_axis",
            format!("axis {axis} out of range for shape {:?}", input.shape()),
        ));
    }
    let n = input.shape()[axis];
    let inner: usize = input.shape()[axis + 1..].iter().product();
    let outer: usize = input.shape()[..axis].iter().product();
    let mut out = input.clone();
    let data = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            let mut max = f64::NEG_INFINITY;
            for k in 0..n {
                max = max.max(data[base + k * inner]);
            }
            let mut sum = 0.0;
            for k in 0..n {
                let e = (data[base + k * inner] - max).exp();
                data[base + k * inner] = e;
                sum += e;
            }
            for k in 0..n {
                data[base + k * inner] /= sum;
            }
        }
    }
    Ok(out)
}

/// d softmax / d input from the softmax output itself:
/// dx = y * (g - sum over the lane of g*y).
pub fn softmax_backward(output: &Tensor, axis: usize, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(output.shape(), grad_out.shape());
    let n = output.shape()[axis];
    let inner: usize = output.shape()[axis + 1..].iter().product();
    let outer: usize = output.shape()[..axis].iter().product();
    let mut grad = Tensor::zeros(output.shape());
    let (y, g, dx) = (output.data(), grad_out.data(), grad.data_mut());
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            let mut dot = 0.0;
            for k in 0..n {
                dot += g[base + k * inner] * y[base + k * inner];
            }
            for k in 0..n {
                let idx = base + k * inner;
                dx[idx] = y[idx] * (g[idx] - dot);
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_cases() {
        let t = Tensor::from_vec(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::full(&[4], -3.0);
        assert!(relu(&neg).data().iter().all(|&x| x == 0.0));
        let pos = Tensor::from_vec(vec![2], vec![0.5, 7.0]).unwrap();
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn softmax_equal_entries() {
        let t = Tensor::full(&[4], 1.7);
        let s = softmax_axis(&t, 0).unwrap();
        for &v in s.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_singleton_axis() {
        let t = Tensor::from_vec(vec![1, 3], vec![-2.0, 0.0, 5.0]).unwrap();
        let s = softmax_axis(&t, 0).unwrap();
        assert!(s.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn softmax_closed_form() {
        let t = Tensor::from_vec(vec![2], vec![0.0, 3.0f64.ln()]).unwrap();
        let s = softmax_axis(&t, 0).unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-15);
        assert!((s.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_invalid_axis() {
        let t = Tensor::zeros(&[2, 2]);
        assert!(softmax_axis(&t, 2).is_err());
    }
}
