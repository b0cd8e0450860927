//! Adam optimizer state and update, plus plain SGD.

use super::Params;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS_HAT: f64 = 1e-8;

/// First/second moment vectors, step counter, and learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub t: u64,
    pub lr: S,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(param_count: usize, lr: S) -> Self {
        AdamState {
            m: vec![S::zero(); param_count],
            v: vec![S::zero(); param_count],
            t: 0,
            lr,
        }
    }

    /// One Adam step with bias correction:
    /// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
    /// `θ ← θ − γ·m̂/(√v̂ + ε̂)`.
    pub fn step(&mut self, params: &mut Params<S>, grads: &[S]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::invalid(format!(
                "gradient length {} does not match parameter count {}",
                grads.len(),
                params.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                layer: params.layer_of(i),
            });
        }
        let b1 = S::of(ADAM_BETA1);
        let b2 = S::of(ADAM_BETA2);
        let eps = S::of(ADAM_EPS_HAT);
        self.t += 1;
        let t = self.t as i32;
        let corr1 = S::one() - b1.powi(t);
        let corr2 = S::one() - b2.powi(t);
        let values = params.values_mut();
        for i in 0..values.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (S::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (S::one() - b2) * g * g;
            let m_hat = self.m[i] / corr1;
            let v_hat = self.v[i] / corr2;
            values[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Plain SGD: `θ ← θ − lr·g`.
pub fn sgd_step<S: Scalar>(params: &mut Params<S>, grads: &[S], lr: S) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::invalid(format!(
            "gradient length {} does not match parameter count {}",
            grads.len(),
            params.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            layer: params.layer_of(i),
        });
    }
    for (p, &g) in params.values_mut().iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpSpec};

    fn scalar_params(v: f64) -> Params<f64> {
        // Single 1x1 weight, no bias... layout always has a bias; use weight
        // only and keep bias gradient zero in tests.
        let spec = MlpSpec::new(vec![1, 1], Activation::LeakyRelu(0.2)).unwrap();
        let mut p = Params::zeros(spec);
        p.set_weight(0, &crate::tensor::Tensor::scalar(v)).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params_and_increments_t() {
        let mut p = scalar_params(0.3);
        let before = p.values().to_vec();
        let mut adam = AdamState::new(p.len(), 1e-4);
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p.values(), &before[..]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_matches_hand_recursion() {
        // t: 0→1, g = 0.1, γ = 1e-4:
        // m = 0.1(1-β₁) → m̂ = 0.1; v = 0.01(1-β₂) → v̂ = 0.01
        // Δ = −γ·0.1/(0.1 + ε̂) ≈ −1.0e-4.
        let mut p = scalar_params(1.0);
        let mut adam = AdamState::new(p.len(), 1e-4);
        adam.step(&mut p, &[0.1, 0.0]).unwrap();
        let delta = p.values()[0] - 1.0;
        let want = -1e-4 * 0.1 / (0.1 + 1e-8);
        assert!((delta - want).abs() < 1e-12, "delta {delta} vs {want}");
    }

    #[test]
    fn repeated_identical_gradient_keeps_update_sign() {
        let mut p = scalar_params(0.0);
        let mut adam = AdamState::new(p.len(), 1e-3);
        let mut prev = p.values()[0];
        for _ in 0..50 {
            adam.step(&mut p, &[0.25, 0.0]).unwrap();
            let cur = p.values()[0];
            assert!(cur < prev, "update must keep descending");
            prev = cur;
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = scalar_params(0.7);
        let before = p.values().to_vec();
        let mut adam = AdamState::new(p.len(), 0.0);
        adam.step(&mut p, &[5.0, -3.0]).unwrap();
        assert_eq!(p.values(), &before[..]);
    }

    #[test]
    fn non_finite_gradient_names_the_layer() {
        let spec = MlpSpec::new(vec![2, 4, 1], Activation::LeakyRelu(0.2)).unwrap();
        let mut p: Params<f64> = Params::zeros(spec);
        let mut g = vec![0.0; p.len()];
        let last_layer_start = p.layout()[1].w_offset;
        g[last_layer_start] = f64::NAN;
        let mut adam = AdamState::new(p.len(), 1e-3);
        match adam.step(&mut p, &g) {
            Err(Error::NonFiniteGradient { layer }) => assert_eq!(layer, 1),
            other => panic!("expected layer-naming error, got {other:?}"),
        }
    }

    #[test]
    fn sgd_matches_hand_update() {
        let mut p = scalar_params(2.0);
        sgd_step(&mut p, &[0.5, 0.0], 0.1).unwrap();
        assert!((p.values()[0] - 1.95).abs() < 1e-15);
    }
}
