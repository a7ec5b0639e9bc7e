//! Dense row-major tensor of binary64 values. This is the universal value
//! type: frames, feature maps, parameters and gradients are all `Tensor`s.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from an explicit shape and row-major data.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid("tensor", format!("zero extent in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("{numel} elements for shape {shape:?}"),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel] }
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(value: f64) -> Tensor {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in index.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            off = off * self.shape[i] + ix;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    /// Same data reinterpreted under a new shape with equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::from_vec(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, format!("{:?}", self.shape), format!("{:?}", other.shape)));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| x * c)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add_assign", format!("{:?}", self.shape), format!("{:?}", other.shape)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.numel() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(axis: usize, parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat", "no tensors given".to_string()))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::invalid("concat", format!("axis {axis} out of range for rank {rank}")));
        }
        let mut out_shape = first.shape.clone();
        out_shape[axis] = 0;
        for t in parts {
            if t.rank() != rank {
                return Err(Error::shape("concat", format!("rank {rank}"), format!("rank {}", t.rank())));
            }
            for (i, (&a, &b)) in first.shape.iter().zip(t.shape.iter()).enumerate() {
                if i != axis && a != b {
                    return Err(Error::shape("concat", format!("{:?}", first.shape), format!("{:?}", t.shape)));
                }
            }
            out_shape[axis] += t.shape[axis];
        }
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for t in parts {
                let span = t.shape[axis] * inner;
                data.extend_from_slice(&t.data[o * span..(o + 1) * span]);
            }
        }
        Tensor::from_vec(out_shape, data)
    }

    /// Copy of the sub-tensor `[start, start+len)` along `axis`.
    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || start + len > self.shape[axis] {
            return Err(Error::invalid(
                "slice_axis",
                format!("range {start}..{} on axis {axis} of shape {:?}", start + len, self.shape),
            ));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let span = self.shape[axis] * inner;
        let mut out_shape = self.shape.clone();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * span + start * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        Tensor::from_vec(out_shape, data)
    }

    /// Reverse the order of elements along `axis`.
    pub fn flip_axis(&self, axis: usize) -> Tensor {
        debug_assert!(axis < self.rank());
        let outer: usize = self.shape[..axis].iter().product();
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut data = vec![0.0; self.data.len()];
        for o in 0..outer {
            for i in 0..n {
                let src = (o * n + i) * inner;
                let dst = (o * n + (n - 1 - i)) * inner;
                data[dst..dst + inner].copy_from_slice(&self.data[src..src + inner]);
            }
        }
        Tensor { shape: self.shape.clone(), data }
    }
}
