use lmac_autograd::{Scalar, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

/// He-normal weights for a ReLU layer with `fan_in` inputs.
pub fn he_normal<E: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<E> {
    let std = (2.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| E::of(std * rng.sample::<f64, _>(StandardNormal))).collect();
    Tensor::param(data, shape).expect("shape matches data")
}

/// Uniform in `±1/sqrt(fan_in)`.
pub fn fan_in_uniform<E: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<E> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| E::of(rng.gen_range(-bound..bound))).collect();
    Tensor::param(data, shape).expect("shape matches data")
}

pub fn zeros_param<E: Scalar>(shape: &[usize]) -> Tensor<E> {
    Tensor::param(vec![E::zero(); shape.iter().product()], shape).expect("shape matches data")
}
