use crate::error::{mismatch, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<E: Scalar = f32> {
    step: u64,
    first: Vec<Vec<E>>,
    second: Vec<Vec<E>>,
}

impl<E: Scalar> AdamState<E> {
    pub fn new(params: &[Tensor<E>]) -> Self {
        Self {
            step: 0,
            first: params.iter().map(|p| vec![E::zero(); p.numel()]).collect(),
            second: params.iter().map(|p| vec![E::zero(); p.numel()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Each parameter is replaced by a fresh leaf
/// holding the updated values; a parameter without a gradient is treated as
/// having a zero gradient.
pub fn adam_step<E: Scalar>(params: &mut [Tensor<E>], state: &mut AdamState<E>, cfg: &AdamConfig) -> Result<()> {
    if state.first.len() != params.len() {
        return Err(mismatch("adam_step", &[params.len()], &[state.first.len()]));
    }
    for (p, m) in params.iter().zip(&state.first) {
        if p.numel() != m.len() {
            return Err(mismatch("adam_step", p.shape(), &[m.len()]));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (b1, b2, lr, eps) = (E::of(b1), E::of(b2), E::of(cfg.lr), E::of(cfg.eps));
    let (c1, c2) = (E::of(c1), E::of(c2));
    for ((p, m), v) in params.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        let grad = p.grad().unwrap_or_else(|| vec![E::zero(); p.numel()]);
        let mut data = p.to_vec();
        for (((x, g), mi), vi) in data.iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (E::one() - b1) * *g;
            *vi = b2 * *vi + (E::one() - b2) * *g * *g;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        *p = Tensor::param(data, p.shape())?;
    }
    Ok(())
}
