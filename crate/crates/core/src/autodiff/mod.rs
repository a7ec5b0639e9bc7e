//! Reverse-mode differentiation over a tape of tensor operations.
//!
//! Forward calls append nodes to an arena; node ids are already in topological
//! order, so the backward sweep is a single reverse pass that hands each
//! node's output gradient to a stored closure. The closures delegate to the
//! explicit backward functions in `ops`.

mod gradcheck;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_GRAD_EPS};

use crate::error::{Error, Result};
use crate::ops;
use crate::ops::{BnMode, ConvSpec};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

type BackFn = Box<dyn Fn(&Tensor, &Tensor, &[&Tensor]) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    back: Option<BackFn>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Graph::backward`]. Leaves keep their
/// accumulated gradient; interior gradients are dropped once consumed.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register a leaf holding `value`. Leaves accumulate gradients.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None)
    }

    /// Register an arbitrary operation node. `back` receives (output
    /// gradient, output value, parent values) and must return one gradient
    /// per parent. All built-in ops funnel through here, and custom ops may
    /// use it directly.
    pub fn push_op(
        &mut self,
        value: Tensor,
        parents: &[Var],
        back: impl Fn(&Tensor, &Tensor, &[&Tensor]) -> Vec<Tensor> + 'static,
    ) -> Var {
        self.push(value, parents.to_vec(), Some(Box::new(back)))
    }

    fn push(&mut self, value: Tensor, parents: Vec<Var>, back: Option<BackFn>) -> Var {
        self.nodes.push(Node { value, parents, back });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a single-element output node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).numel() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("output must be a scalar, got shape {:?}", self.shape(output)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[output.0] = Some(Tensor::full(self.value(output).shape(), 1.0));
        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            let Some(back) = &node.back else { continue };
            let Some(gout) = grads[id].take() else { continue };
            let parent_values: Vec<&Tensor> = node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let parent_grads = back(&gout, &node.value, &parent_values);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                debug_assert_eq!(pg.shape(), self.nodes[p.0].value.shape());
                match &mut grads[p.0] {
                    Some(acc) => acc.add_assign(&pg)?,
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }

    // ---- tensor-core operations ------------------------------------------

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let spec = ConvSpec::same(&self.value(weight).shape()[2..])?;
        let out = ops::conv2d(self.value(input), self.value(weight), self.value(bias), &spec)?;
        Ok(self.push_op(out, &[input, weight, bias], |g, _, ps| {
            let (di, dw, db) = ops::conv2d_backward(ps[0], ps[1], g).expect("shapes checked in forward");
            vec![di, dw, db]
        }))
    }

    pub fn conv3d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let spec = ConvSpec::same(&self.value(weight).shape()[2..])?;
        let out = ops::conv3d(self.value(input), self.value(weight), self.value(bias), &spec)?;
        Ok(self.push_op(out, &[input, weight, bias], |g, _, ps| {
            let (di, dw, db) = ops::conv3d_backward(ps[0], ps[1], g).expect("shapes checked in forward");
            vec![di, dw, db]
        }))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = ops::relu(self.value(input));
        self.push_op(out, &[input], |g, _, ps| vec![ops::relu_backward(ps[0], g)])
    }

    pub fn softmax_axis(&mut self, input: Var, axis: usize) -> Result<Var> {
        let out = ops::softmax_axis(self.value(input), axis)?;
        Ok(self.push_op(out, &[input], move |g, value, _| {
            vec![ops::softmax_backward(value, axis, g)]
        }))
    }

    /// Batch normalization. Train mode also returns the updated running
    /// (mean, var) pair, which is optimizer state rather than graph data.
    pub fn batchnorm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor,
        running_var: &Tensor,
        momentum: f64,
        epsilon: f64,
        mode: BnMode,
    ) -> Result<(Var, Option<(Tensor, Tensor)>)> {
        let state = ops::BatchNormState {
            gamma: self.value(gamma).clone(),
            beta: self.value(beta).clone(),
            running_mean: running_mean.clone(),
            running_var: running_var.clone(),
            momentum,
            epsilon,
        };
        let (out, next) = ops::batchnorm(self.value(input), &state, mode)?;
        let var = match mode {
            BnMode::Train => {
                let (mean, var) = ops::channel_stats(self.value(input));
                self.push_op(out, &[input, gamma, beta], move |g, _, ps| {
                    let (dx, dg, db) = ops::batchnorm_backward_train(ps[0], ps[1], &mean, &var, epsilon, g);
                    vec![dx, dg, db]
                })
            }
            BnMode::Eval => {
                let (rm, rv) = (running_mean.clone(), running_var.clone());
                self.push_op(out, &[input, gamma, beta], move |g, _, ps| {
                    let (dx, dg, db) = ops::batchnorm_backward_eval(ps[0], ps[1], &rm, &rv, epsilon, g);
                    vec![dx, dg, db]
                })
            }
        };
        let updated = match mode {
            BnMode::Train => Some((next.running_mean, next.running_var)),
            BnMode::Eval => None,
        };
        Ok((var, updated))
    }

    pub fn pixel_shuffle(&mut self, input: Var, r: usize) -> Result<Var> {
        let in_shape = self.value(input).shape().to_vec();
        let out = ops::pixel_shuffle(self.value(input), r)?;
        Ok(self.push_op(out, &[input], move |g, _, _| {
            vec![ops::pixel_shuffle_backward(&in_shape, r, g)]
        }))
    }

    pub fn bicubic_resize(&mut self, input: Var, scale: f64) -> Result<Var> {
        let in_shape = self.value(input).shape().to_vec();
        let out = ops::bicubic_resize(self.value(input), scale)?;
        Ok(self.push_op(out, &[input], move |g, _, _| {
            vec![ops::bicubic_resize_backward(&in_shape, scale, g)]
        }))
    }

    pub fn gaussian_blur(&mut self, input: Var, sigma: f64) -> Result<Var> {
        let in_shape = self.value(input).shape().to_vec();
        let out = ops::gaussian_blur(self.value(input), sigma)?;
        Ok(self.push_op(out, &[input], move |g, _, _| {
            vec![ops::gaussian_blur_backward(&in_shape, sigma, g)]
        }))
    }

    // ---- structural and arithmetic helpers -------------------------------

    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::concat(axis, &values)?;
        let extents: Vec<usize> = values.iter().map(|t| t.shape()[axis]).collect();
        Ok(self.push_op(out, parts, move |g, _, _| {
            let mut grads = Vec::with_capacity(extents.len());
            let mut start = 0;
            for &len in &extents {
                grads.push(g.slice_axis(axis, start, len).expect("extents match forward"));
                start += len;
            }
            grads
        }))
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        let in_shape = self.value(input).shape().to_vec();
        let out = self.value(input).reshape(shape)?;
        Ok(self.push_op(out, &[input], move |g, _, _| {
            vec![g.reshape(in_shape.clone()).expect("same element count")]
        }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push_op(out, &[a, b], |g, _, _| vec![g.clone(), g.clone()]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push_op(out, &[a, b], |g, _, _| vec![g.clone(), g.scale(-1.0)]))
    }

    pub fn scale(&mut self, input: Var, c: f64) -> Var {
        let out = self.value(input).scale(c);
        self.push_op(out, &[input], move |g, _, _| vec![g.scale(c)])
    }

    pub fn abs(&mut self, input: Var) -> Var {
        let out = self.value(input).map(f64::abs);
        self.push_op(out, &[input], |g, _, ps| {
            let mut grad = g.clone();
            for (gv, &x) in grad.data_mut().iter_mut().zip(ps[0].data()) {
                *gv *= if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
            vec![grad]
        })
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let out = Tensor::scalar(self.value(input).sum());
        self.push_op(out, &[input], |g, _, ps| vec![Tensor::full(ps[0].shape(), g.item())])
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let out = Tensor::scalar(self.value(input).mean());
        self.push_op(out, &[input], |g, _, ps| {
            vec![Tensor::full(ps[0].shape(), g.item() / ps[0].numel() as f64)]
        })
    }

    /// Multiply features of shape [C, ...] by weights of shape [1, ...],
    /// broadcasting the weights over the channel axis.
    pub fn mul_broadcast_channel(&mut self, features: Var, weights: Var) -> Result<Var> {
        let f = self.value(features);
        let w = self.value(weights);
        if w.shape()[0] != 1 || w.shape()[1..] != f.shape()[1..] {
            return Err(Error::shape(
                "mul_broadcast_channel",
                format!("[1, {:?}]", &f.shape()[1..]),
                format!("{:?}", w.shape()),
            ));
        }
        let channels = f.shape()[0];
        let plane = w.numel();
        let mut out = Tensor::zeros(f.shape());
        for c in 0..channels {
            let src = &f.data()[c * plane..(c + 1) * plane];
            let dst = &mut out.data_mut()[c * plane..(c + 1) * plane];
            for ((d, &x), &wv) in dst.iter_mut().zip(src).zip(w.data()) {
                *d = x * wv;
            }
        }
        Ok(self.push_op(out, &[features, weights], move |g, _, ps| {
            let (f, w) = (ps[0], ps[1]);
            let mut df = Tensor::zeros(f.shape());
            let mut dw = Tensor::zeros(w.shape());
            for c in 0..channels {
                let gs = &g.data()[c * plane..(c + 1) * plane];
                let fs = &f.data()[c * plane..(c + 1) * plane];
                let dfs = &mut df.data_mut()[c * plane..(c + 1) * plane];
                for i in 0..plane {
                    dfs[i] = gs[i] * w.data()[i];
                    dw.data_mut()[i] += gs[i] * fs[i];
                }
            }
            vec![df, dw]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_requires_scalar_output() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 2]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        // f = sum(x + x) so df/dx = 2 everywhere.
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![2], vec![3.0, 4.0]).unwrap());
        let y = g.add(x, x).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn concat_routes_gradients_to_parts() {
        let mut g = Graph::new();
        let a = g.input(Tensor::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let b = g.input(Tensor::from_vec(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = g.concat(0, &[a, b]).unwrap();
        let doubled = g.scale(c, 2.0);
        let s = g.sum(doubled);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[2.0, 2.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[2.0, 2.0, 2.0, 2.0]);
    }
}
