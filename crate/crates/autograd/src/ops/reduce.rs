use crate::error::{geometry, AutogradError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl<E: Scalar> Tensor<E> {
    pub fn sum(&self) -> Result<Tensor<E>> {
        let total = self.data().iter().fold(E::zero(), |s, &v| s + v);
        let n = self.numel();
        let backward = Box::new(move |g: &[E]| vec![Some(vec![g[0]; n])]);
        Tensor::from_op("sum", vec![total], vec![1], vec![self.clone()], backward)
    }

    pub fn mean(&self) -> Result<Tensor<E>> {
        let n = self.numel();
        if n == 0 {
            return Err(geometry("mean", "empty tensor"));
        }
        let inv = E::one() / E::of(n as f64);
        let total = self.data().iter().fold(E::zero(), |s, &v| s + v);
        let backward = Box::new(move |g: &[E]| vec![Some(vec![g[0] * inv; n])]);
        Tensor::from_op("mean", vec![total * inv], vec![1], vec![self.clone()], backward)
    }

    /// Mean over the trailing spatial axes: `[B, C, H, W] -> [B, C]`.
    pub fn spatial_mean(&self) -> Result<Tensor<E>> {
        let &[b, c, h, w] = self.shape() else {
            return Err(geometry("spatial_mean", format!("expected rank 4, got {:?}", self.shape())));
        };
        let hw = h * w;
        if hw == 0 {
            return Err(geometry("spatial_mean", "empty spatial extent"));
        }
        let inv = E::one() / E::of(hw as f64);
        let data: Vec<E> = self
            .data()
            .chunks(hw)
            .map(|plane| plane.iter().fold(E::zero(), |s, &v| s + v) * inv)
            .collect();
        let backward = Box::new(move |g: &[E]| {
            let mut gx = Vec::with_capacity(g.len() * hw);
            for &gi in g {
                gx.extend(std::iter::repeat(gi * inv).take(hw));
            }
            vec![Some(gx)]
        });
        Tensor::from_op("spatial_mean", data, vec![b, c], vec![self.clone()], backward)
    }

    /// Row-wise log-softmax of a `[B, C]` tensor, stabilized by max subtraction.
    pub fn log_softmax(&self) -> Result<Tensor<E>> {
        let &[b, c] = self.shape() else {
            return Err(geometry("log_softmax", format!("expected rank 2, got {:?}", self.shape())));
        };
        if c < 2 {
            return Err(geometry("log_softmax", "need at least 2 classes"));
        }
        let mut data = Vec::with_capacity(b * c);
        for row in self.data().chunks(c) {
            let max = row.iter().fold(E::neg_infinity(), |m, &v| m.max(v));
            let lse = row.iter().fold(E::zero(), |s, &v| s + (v - max).exp()).ln() + max;
            data.extend(row.iter().map(|&v| v - lse));
        }
        let out = data.clone();
        let backward = Box::new(move |g: &[E]| {
            let mut gx = Vec::with_capacity(g.len());
            for (grow, yrow) in g.chunks(c).zip(out.chunks(c)) {
                let gsum = grow.iter().fold(E::zero(), |s, &v| s + v);
                gx.extend(grow.iter().zip(yrow).map(|(&gi, &yi)| gi - yi.exp() * gsum));
            }
            vec![Some(gx)]
        });
        Tensor::from_op("log_softmax", data, vec![b, c], vec![self.clone()], backward)
    }

    /// Picks `self[i, index[i]]` from a `[B, C]` tensor, giving `[B]`.
    pub fn gather_rows(&self, index: &[usize]) -> Result<Tensor<E>> {
        let &[b, c] = self.shape() else {
            return Err(geometry("gather_rows", format!("expected rank 2, got {:?}", self.shape())));
        };
        if index.len() != b {
            return Err(geometry("gather_rows", format!("{} indices for batch {b}", index.len())));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= c) {
            return Err(AutogradError::TargetOutOfRange { target: bad, classes: c });
        }
        let data = index.iter().enumerate().map(|(i, &j)| self.data()[i * c + j]).collect();
        let index = index.to_vec();
        let backward = Box::new(move |g: &[E]| {
            let mut gx = vec![E::zero(); b * c];
            for (i, &j) in index.iter().enumerate() {
                gx[i * c + j] = g[i];
            }
            vec![Some(gx)]
        });
        Tensor::from_op("gather_rows", data, vec![b], vec![self.clone()], backward)
    }

    /// Mean over the batch of `-logp[i, target[i]]`.
    pub fn nll_loss(&self, targets: &[usize]) -> Result<Tensor<E>> {
        self.gather_rows(targets)?.mean()?.scale(-E::one())
    }
}

/// Plain softmax of one row of logits, outside any graph.
pub fn softmax<E: Scalar>(logits: &[E]) -> Vec<E> {
    let max = logits.iter().fold(E::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<E> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total = exps.iter().fold(E::zero(), |s, &v| s + v);
    exps.into_iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_of_equal_logits_is_minus_ln2() {
        let x = Tensor::<f64>::new(vec![0.0, 0.0], &[1, 2]).unwrap();
        let y = x.log_softmax().unwrap();
        for v in y.data() {
            assert!((v + std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn log_softmax_rows_exponentiate_to_one() {
        let x = Tensor::<f32>::new(vec![1000.0, -3.0, 2.0, 0.5, 0.25, -7.0], &[2, 3]).unwrap();
        let y = x.log_softmax().unwrap();
        for row in y.data().chunks(3) {
            let s: f32 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn nll_of_certain_prediction_is_zero() {
        let x = Tensor::<f32>::new(vec![60.0, -60.0], &[1, 2]).unwrap();
        let loss = x.log_softmax().unwrap().nll_loss(&[0]).unwrap();
        assert!(loss.item().abs() < 1e-6);
    }

    #[test]
    fn nll_rejects_target_out_of_range() {
        let x = Tensor::<f32>::new(vec![0.0, 0.0], &[1, 2]).unwrap();
        let err = x.log_softmax().unwrap().nll_loss(&[2]).unwrap_err();
        assert!(matches!(err, AutogradError::TargetOutOfRange { target: 2, classes: 2 }));
    }

    #[test]
    fn sum_backward_is_all_ones() {
        let x = Tensor::<f32>::param(vec![0.3; 6], &[2, 3]).unwrap();
        x.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let x = Tensor::<f32>::param(vec![1.0, 2.0], &[2]).unwrap();
        x.square().unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let x = Tensor::<f32>::param(vec![1.0, 2.0], &[2]).unwrap();
        let err = x.scale(2.0).unwrap().backward().unwrap_err();
        assert!(matches!(err, AutogradError::NonScalarLoss(_)));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::<f32>::param(vec![1.0, 2.0], &[2]).unwrap();
        let loss = x.sum().unwrap();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }
}
