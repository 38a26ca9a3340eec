//! Weight initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::scalar::Scalar;
use super::tensor::Tensor;

/// Normal(0, std) truncated to two standard deviations, by rejection.
pub fn trunc_normal<T: Scalar, R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(0.0f64, std).expect("std must be positive");
    let bound = 2.0 * std;
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = loop {
            let s = dist.sample(rng);
            if s.abs() <= bound {
                break T::from_f64(s);
            }
        };
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn trunc_normal_is_bounded_and_deterministic() {
        let mut r1 = stream(3, "init", 0);
        let mut r2 = stream(3, "init", 0);
        let a: Tensor<f32> = trunc_normal(&[64, 8], 0.02, &mut r1);
        let b: Tensor<f32> = trunc_normal(&[64, 8], 0.02, &mut r2);
        assert!(a.bit_equal(&b));
        assert!(a.data().iter().all(|v| v.abs() <= 0.04));
    }
}
