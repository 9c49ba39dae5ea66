use crate::error::{geometry, mismatch, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Row-major `c = a · b` (or `+=` when `accumulate`), with optional transposes
/// expressed through strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_rm<E: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[E],
    a_t: bool,
    b: &[E],
    b_t: bool,
    c: &mut [E],
    accumulate: bool,
) {
    let sa = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let sb = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { E::one() } else { E::zero() };
    E::gemm(m, k, n, E::one(), a, sa, b, sb, beta, c, (n as isize, 1));
}

impl<E: Scalar> Tensor<E> {
    /// `[m, k] · [k, n] -> [m, n]`.
    pub fn matmul(&self, rhs: &Tensor<E>) -> Result<Tensor<E>> {
        let (&[m, k], &[k2, n]) = (self.shape(), rhs.shape()) else {
            return Err(mismatch("matmul", self.shape(), rhs.shape()));
        };
        if k != k2 {
            return Err(mismatch("matmul", self.shape(), rhs.shape()));
        }
        let mut out = vec![E::zero(); m * n];
        gemm_rm(m, k, n, self.data(), false, rhs.data(), false, &mut out, false);
        let (a, b) = (self.clone(), rhs.clone());
        let backward = Box::new(move |g: &[E]| {
            let ga = a.requires_grad().then(|| {
                let mut ga = vec![E::zero(); m * k];
                gemm_rm(m, n, k, g, false, b.data(), true, &mut ga, false);
                ga
            });
            let gb = b.requires_grad().then(|| {
                let mut gb = vec![E::zero(); k * n];
                gemm_rm(k, m, n, a.data(), true, g, false, &mut gb, false);
                gb
            });
            vec![ga, gb]
        });
        Tensor::from_op("matmul", out, vec![m, n], vec![self.clone(), rhs.clone()], backward)
    }

    /// Applies one `[m, k]` matrix to every item of a `[B, k, n]` batch,
    /// giving `[B, m, n]`. `self` is the matrix.
    pub fn matmul_batched(&self, batch: &Tensor<E>) -> Result<Tensor<E>> {
        let (&[m, k], &[bsz, k2, n]) = (self.shape(), batch.shape()) else {
            return Err(mismatch("matmul_batched", self.shape(), batch.shape()));
        };
        if k != k2 {
            return Err(mismatch("matmul_batched", self.shape(), batch.shape()));
        }
        let mut out = vec![E::zero(); bsz * m * n];
        for (xi, oi) in batch.data().chunks(k * n).zip(out.chunks_mut(m * n)) {
            gemm_rm(m, k, n, self.data(), false, xi, false, oi, false);
        }
        let (w, x) = (self.clone(), batch.clone());
        let backward = Box::new(move |g: &[E]| {
            let gw = w.requires_grad().then(|| {
                let mut gw = vec![E::zero(); m * k];
                for (gi, xi) in g.chunks(m * n).zip(x.data().chunks(k * n)) {
                    gemm_rm(m, n, k, gi, false, xi, true, &mut gw, true);
                }
                gw
            });
            let gx = x.requires_grad().then(|| {
                let mut gx = vec![E::zero(); bsz * k * n];
                for (gi, gxi) in g.chunks(m * n).zip(gx.chunks_mut(k * n)) {
                    gemm_rm(k, m, n, w.data(), true, gi, false, gxi, false);
                }
                gx
            });
            vec![gw, gx]
        });
        Tensor::from_op("matmul_batched", out, vec![bsz, m, n], vec![self.clone(), batch.clone()], backward)
    }

    /// Adds a per-channel bias along axis 1 of a `[B, C, ...]` tensor.
    pub fn add_channel_bias(&self, bias: &Tensor<E>) -> Result<Tensor<E>> {
        if self.rank() < 2 || bias.shape() != [self.shape()[1]] {
            return Err(mismatch("add_channel_bias", self.shape(), bias.shape()));
        }
        let c = self.shape()[1];
        let inner: usize = self.shape()[2..].iter().product();
        if inner == 0 {
            return Err(geometry("add_channel_bias", "empty trailing extent"));
        }
        let bvals = bias.data();
        let data = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bvals[(i / inner) % c])
            .collect();
        let (x_req, b_req) = (self.requires_grad(), bias.requires_grad());
        let backward = Box::new(move |g: &[E]| {
            let gx = x_req.then(|| g.to_vec());
            let gb = b_req.then(|| {
                let mut gb = vec![E::zero(); c];
                for (i, &gi) in g.iter().enumerate() {
                    gb[(i / inner) % c] += gi;
                }
                gb
            });
            vec![gx, gb]
        });
        Tensor::from_op("add_channel_bias", data, self.shape().to_vec(), vec![self.clone(), bias.clone()], backward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul_is_noop() {
        let i = Tensor::<f32>::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let x = Tensor::<f32>::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        assert_eq!(i.matmul(&x).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn row_times_column() {
        let a = Tensor::<f32>::new(vec![1.0, 2.0], &[1, 2]).unwrap();
        let b = Tensor::<f32>::new(vec![3.0, 4.0], &[2, 1]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn inner_dimension_mismatch() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[2, 3]);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn batched_matches_per_item_matmul() {
        let w = Tensor::<f64>::new((0..6).map(|v| v as f64).collect(), &[2, 3]).unwrap();
        let x = Tensor::<f64>::new((0..12).map(|v| v as f64 * 0.5).collect(), &[2, 3, 2]).unwrap();
        let y = w.matmul_batched(&x).unwrap();
        for b in 0..2 {
            let xi = Tensor::new(x.data()[b * 6..(b + 1) * 6].to_vec(), &[3, 2]).unwrap();
            let yi = w.matmul(&xi).unwrap();
            assert_eq!(&y.data()[b * 4..(b + 1) * 4], yi.data());
        }
    }
}
