use rand::Rng;

use super::scalar::Scalar;
use super::tensor::Tensor;

/// He-uniform weights for a `fan_in × fan_out` layer followed by a leaky
/// rectifier with negative slope `slope`.
pub fn kaiming_uniform<T: Scalar, R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    slope: f64,
    rng: &mut R,
) -> Tensor<T> {
    let bound = (6.0 / (fan_in.max(1) as f64 * (1.0 + slope * slope))).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::of(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches data")
}

pub fn zeros_bias<T: Scalar>(n: usize) -> Tensor<T> {
    Tensor::zeros(vec![n])
}
