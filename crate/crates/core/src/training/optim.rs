use crate::autodiff::Tensor;
use crate::error::{LmptError, Result};
use crate::model::ParamSet;
use crate::scalar::Scalar;

/// AdamW moments and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub step: u64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(params: &ParamSet<S>) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
        Self { m: zeros(), v: zeros(), step: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

/// One AdamW update with decoupled weight decay:
/// `p ← p − lr·(m̂/(√v̂ + eps) + wd·p)`.
pub fn adamw_step<S: Scalar>(
    params: &mut ParamSet<S>,
    grads: &[Tensor<S>],
    state: &mut OptimizerState<S>,
    hp: &AdamW,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(LmptError::Shape(format!(
            "{} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let (b1, b2) = (S::lit(hp.betas.0), S::lit(hp.betas.1));
    let one = S::one();
    let t = state.step as i32;
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    let (lr, eps, wd) = (S::lit(hp.lr), S::lit(hp.eps), S::lit(hp.weight_decay));
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = &grads[i];
        if g.shape() != p.shape() {
            return Err(LmptError::Shape(format!("gradient {i} has shape {:?}, parameter {:?}", g.shape(), p.shape())));
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            let gj = g.data()[j];
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *x -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *x);
        }
    }
    Ok(())
}
