//! Batch normalization over the channel axis (axis 0 of an unbatched feature
//! tensor). Statistics use the biased (population) variance; train mode
//! returns an updated state instead of mutating, so the op stays pure.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> BatchNormState {
        BatchNormState {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    fn check(&self, input: &Tensor) -> Result<usize> {
        let channels = input.shape()[0];
        if self.gamma.shape() != [channels]
            || self.beta.shape() != [channels]
            || self.running_mean.shape() != [channels]
            || self.running_var.shape() != [channels]
        {
            return Err(Error::shape(
                "batchnorm",
                format!("per-channel vectors of length {channels}"),
                format!("gamma {:?}", self.gamma.shape()),
            ));
        }
        if !(0.0 < self.momentum && self.momentum < 1.0) || self.epsilon <= 0.0 {
            return Err(Error::invalid(
                "batchnorm",
                format!("momentum {} / epsilon {} out of range", self.momentum, self.epsilon),
            ));
        }
        Ok(channels)
    }
}

/// Per-channel mean and biased variance over all non-channel axes.
pub fn channel_stats(input: &Tensor) -> (Tensor, Tensor) {
    let channels = input.shape()[0];
    let plane = input.numel() / channels;
    let mut mean = Tensor::zeros(&[channels]);
    let mut var = Tensor::zeros(&[channels]);
    for c in 0..channels {
        let slice = &input.data()[c * plane..(c + 1) * plane];
        let m = slice.iter().sum::<f64>() / plane as f64;
        let v = slice.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / plane as f64;
        mean.data_mut()[c] = m;
        var.data_mut()[c] = v;
    }
    (mean, var)
}

/// Returns the normalized output and the (possibly updated) state. Eval mode
/// normalizes with the running statistics and returns the state unchanged;
/// train mode uses batch statistics and folds them into the running values
/// with `running = (1 - momentum) * running + momentum * batch`.
pub fn batchnorm(input: &Tensor, state: &BatchNormState, mode: BnMode) -> Result<(Tensor, BatchNormState)> {
    let channels = state.check(input)?;
    let plane = input.numel() / channels;
    let (mean, var) = match mode {
        BnMode::Train => channel_stats(input),
        BnMode::Eval => (state.running_mean.clone(), state.running_var.clone()),
    };
    let mut out = Tensor::zeros(input.shape());
    for c in 0..channels {
        let inv = 1.0 / (var.data()[c] + state.epsilon).sqrt();
        let (g, b, m) = (state.gamma.data()[c], state.beta.data()[c], mean.data()[c]);
        let src = &input.data()[c * plane..(c + 1) * plane];
        let dst = &mut out.data_mut()[c * plane..(c + 1) * plane];
        for (d, &x) in dst.iter_mut().zip(src) {
            *d = g * (x - m) * inv + b;
        }
    }
    let next = match mode {
        BnMode::Eval => state.clone(),
        BnMode::Train => {
            let mut next = state.clone();
            for c in 0..channels {
                let rm = &mut next.running_mean.data_mut()[c];
                *rm = (1.0 - state.momentum) * *rm + state.momentum * mean.data()[c];
                let rv = &mut next.running_var.data_mut()[c];
                *rv = (1.0 - state.momentum) * *rv + state.momentum * var.data()[c];
            }
            next
        }
    };
    Ok((out, next))
}

/// Gradients for train mode, which must account for the dependence of the
/// batch statistics on the input. Returns (d input, d gamma, d beta).
pub fn batchnorm_backward_train(
    input: &Tensor,
    gamma: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    epsilon: f64,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let channels = input.shape()[0];
    let plane = input.numel() / channels;
    let m_f = plane as f64;
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_gamma = Tensor::zeros(&[channels]);
    let mut grad_beta = Tensor::zeros(&[channels]);
    for c in 0..channels {
        let inv = 1.0 / (var.data()[c] + epsilon).sqrt();
        let mu = mean.data()[c];
        let g = gamma.data()[c];
        let x = &input.data()[c * plane..(c + 1) * plane];
        let dy = &grad_out.data()[c * plane..(c + 1) * plane];
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for (&xi, &dyi) in x.iter().zip(dy) {
            sum_dy += dyi;
            sum_dy_xhat += dyi * (xi - mu) * inv;
        }
        grad_beta.data_mut()[c] = sum_dy;
        grad_gamma.data_mut()[c] = sum_dy_xhat;
        // dx = gamma*inv/M * (M*dy - sum(dy) - xhat * sum(dy*xhat))
        let dx = &mut grad_in.data_mut()[c * plane..(c + 1) * plane];
        for ((d, &xi), &dyi) in dx.iter_mut().zip(x).zip(dy) {
            let xhat = (xi - mu) * inv;
            *d = g * inv / m_f * (m_f * dyi - sum_dy - xhat * sum_dy_xhat);
        }
    }
    (grad_in, grad_gamma, grad_beta)
}

/// Gradients for eval mode, where the running statistics are constants.
pub fn batchnorm_backward_eval(
    input: &Tensor,
    gamma: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    epsilon: f64,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let channels = input.shape()[0];
    let plane = input.numel() / channels;
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_gamma = Tensor::zeros(&[channels]);
    let mut grad_beta = Tensor::zeros(&[channels]);
    for c in 0..channels {
        let inv = 1.0 / (running_var.data()[c] + epsilon).sqrt();
        let mu = running_mean.data()[c];
        let g = gamma.data()[c];
        let x = &input.data()[c * plane..(c + 1) * plane];
        let dy = &grad_out.data()[c * plane..(c + 1) * plane];
        let dx = &mut grad_in.data_mut()[c * plane..(c + 1) * plane];
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for ((d, &xi), &dyi) in dx.iter_mut().zip(x).zip(dy) {
            sum_dy += dyi;
            sum_dy_xhat += dyi * (xi - mu) * inv;
            *d = g * inv * dyi;
        }
        grad_beta.data_mut()[c] = sum_dy;
        grad_gamma.data_mut()[c] = sum_dy_xhat;
    }
    (grad_in, grad_gamma, grad_beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn eval_with_identity_state_is_near_identity() {
        let state = BatchNormState::new(2);
        let input = Tensor::from_vec(vec![2, 3], vec![0.5, -1.0, 2.0, 0.0, 1.0, -0.5]).unwrap();
        let (out, next) = batchnorm(&input, &state, BnMode::Eval).unwrap();
        // running_mean 0, running_var 1, gamma 1, beta 0: only epsilon shrinks values.
        for (o, i) in out.data().iter().zip(input.data()) {
            assert!((o - i).abs() <= 1e-5 * i.abs() + 1e-12, "{o} vs {i}");
        }
        assert_eq!(next, state);
    }

    #[test]
    fn train_constant_channel_maps_to_beta() {
        let mut state = BatchNormState::new(1);
        state.beta = Tensor::full(&[1], 0.7);
        let input = Tensor::full(&[1, 8], 3.0);
        let (out, _) = batchnorm(&input, &state, BnMode::Train).unwrap();
        for &v in out.data() {
            assert!((v - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn train_normalizes_to_zero_mean_unit_variance() {
        // Spread large enough that the epsilon term is below the 1e-6 bound.
        let mut rng = SplitMix64::new(11);
        let input = Tensor::from_vec(vec![1, 4], (0..4).map(|_| rng.next_uniform(50.0)).collect()).unwrap();
        let state = BatchNormState::new(1);
        let (out, next) = batchnorm(&input, &state, BnMode::Train).unwrap();
        let mean = out.mean();
        let var = out.data().iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-10, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-6, "var {var}");
        // running stats moved toward the batch stats
        assert!(next.running_mean.data()[0] != 0.0);
    }

    #[test]
    fn zero_variance_channel_is_safe() {
        let state = BatchNormState::new(1);
        let input = Tensor::full(&[1, 5], 1.0);
        let (out, _) = batchnorm(&input, &state, BnMode::Train).unwrap();
        assert!(out.is_finite());
    }

    #[test]
    fn eval_is_pure() {
        let state = BatchNormState::new(2);
        let input = Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (a, sa) = batchnorm(&input, &state, BnMode::Eval).unwrap();
        let (b, sb) = batchnorm(&input, &state, BnMode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }
}
