use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::tensor::{Parameter, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Parameter<T>]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape().to_vec()))
                .collect()
        };
        AdamState {
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected ADAM update using the gradients stored on `params`.
pub fn adam_step<T: Scalar>(params: &mut [Parameter<T>], state: &mut AdamState<T>, config: &AdamConfig) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let g = p.grad.data();
        let (md, vd) = (m.data_mut(), v.data_mut());
        for (i, w) in p.value.data_mut().iter_mut().enumerate() {
            let gi = g[i].as_f64();
            let mi = config.beta1 * md[i].as_f64() + (1.0 - config.beta1) * gi;
            let vi = config.beta2 * vd[i].as_f64() + (1.0 - config.beta2) * gi * gi;
            md[i] = T::of(mi);
            vd[i] = T::of(vi);
            let step = config.lr * (mi / c1) / ((vi / c2).sqrt() + config.eps);
            *w = T::of(w.as_f64() - step);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64, g: f64) -> Parameter<f64> {
        let mut p = Parameter::new("w", Tensor::new(vec![1], vec![v]).unwrap());
        p.grad = Tensor::new(vec![1], vec![g]).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut ps = vec![param(0.7, 0.0)];
        let mut st = AdamState::new(&ps);
        adam_step(&mut ps, &mut st, &AdamConfig::default());
        assert_eq!(ps[0].value.data()[0], 0.7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1e-4, 0.3, 50.0, -2.0] {
            let mut ps = vec![param(1.0, g)];
            let mut st = AdamState::new(&ps);
            adam_step(&mut ps, &mut st, &AdamConfig::default());
            let moved = 1.0 - ps[0].value.data()[0];
            assert!((moved - 1e-3 * g.signum()).abs() < 1e-6, "g={g} moved {moved}");
        }
    }

    #[test]
    fn quadratic_descends_monotonically() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut ps = vec![param(1.0, 0.0)];
        let mut st = AdamState::new(&ps);
        let mut last = 1.0;
        for _ in 0..50 {
            let w = ps[0].value.data()[0];
            ps[0].grad.data_mut()[0] = 2.0 * w;
            adam_step(&mut ps, &mut st, &cfg);
            let loss = ps[0].value.data()[0].powi(2);
            assert!(loss < last);
            last = loss;
        }
    }
}
