//! Central-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Graph, Var};

/// Step size used by the verification suites.
pub const DEFAULT_GRAD_EPS: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub op: String,
    /// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), maximized
    /// over input elements.
    pub max_rel_error: f64,
    /// Flat input index where the maximum occurred.
    pub max_index: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < tolerance
    }
}

/// Compare the analytic gradient of `build` (a scalar-valued function of one
/// tensor, expressed as graph construction) against central differences.
pub fn grad_check<F>(op: &str, build: F, input: &Tensor, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::invalid("grad_check", "eps must be positive"));
    }
    let eval = |x: &Tensor| -> Result<(f64, Option<(Graph, Var, Var)>)> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let out = build(&mut g, xv)?;
        if g.value(out).numel() != 1 {
            return Err(Error::invalid(
                "grad_check",
                format!("function must be scalar-valued, got shape {:?}", g.shape(out)),
            ));
        }
        let y = g.value(out).item();
        if !y.is_finite() {
            return Err(Error::NonFinite { op: "grad_check".into() });
        }
        Ok((y, Some((g, xv, out))))
    };

    let (_, built) = eval(input)?;
    let (graph, xv, out) = built.unwrap();
    let grads = graph.backward(out)?;
    let analytic = match grads.get(xv) {
        Some(t) => t.clone(),
        None => Tensor::zeros(input.shape()),
    };

    let mut max_rel_error = 0.0f64;
    let mut max_index = 0usize;
    for i in 0..input.numel() {
        let mut plus = input.clone();
        plus.data_mut()[i] += eps;
        let mut minus = input.clone();
        minus.data_mut()[i] -= eps;
        let (fp, _) = eval(&plus)?;
        let (fm, _) = eval(&minus)?;
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > max_rel_error {
            max_rel_error = rel;
            max_index = i;
        }
    }
    Ok(GradCheckReport { op: op.into(), max_rel_error, max_index })
}
