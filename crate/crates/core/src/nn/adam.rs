//! Adam optimizer operating in place on a [`ParameterStore`].

use crate::error::{Error, Result};
use crate::nn::store::ParameterStore;
use crate::nn::tensor::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// One bias-corrected Adam update with the standard moment decays. Consumes
/// the accumulated gradients: they are zeroed afterwards and the step count
/// is incremented.
pub fn adam_step<T: Scalar>(store: &mut ParameterStore<T>, lr: T) -> Result<()> {
    adam_step_with(store, lr, BETA1, BETA2, EPS)
}

pub fn adam_step_with<T: Scalar>(
    store: &mut ParameterStore<T>,
    lr: T,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    let t = store.step() + 1;
    let b1 = T::from_f64(beta1);
    let b2 = T::from_f64(beta2);
    let one_minus_b1 = T::from_f64(1.0 - beta1);
    let one_minus_b2 = T::from_f64(1.0 - beta2);
    let m_corr = T::from_f64(1.0 / (1.0 - beta1.powi(t as i32)));
    let v_corr = T::from_f64(1.0 / (1.0 - beta2.powi(t as i32)));
    let eps = T::from_f64(eps);

    let mut bad: Option<String> = None;
    for (name, p) in store.params_mut() {
        let grad = p.grad.data();
        let m = p.adam_m.data_mut();
        let v = p.adam_v.data_mut();
        let value = p.value.data_mut();
        for i in 0..grad.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + one_minus_b1 * g;
            v[i] = b2 * v[i] + one_minus_b2 * g * g;
            let m_hat = m[i] * m_corr;
            let v_hat = v[i] * v_corr;
            value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        if bad.is_none() && !value.iter().all(|x| x.is_finite()) {
            bad = Some(name.to_string());
        }
        p.grad.fill(T::zero());
    }
    store.set_step(t);
    if let Some(name) = bad {
        return Err(Error::NonFinite {
            op: format!("adam_step on {name}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;
    use approx::assert_abs_diff_eq;

    fn store_with(value: f64, grad: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert("p", Tensor::from_vec(&[1], vec![value]).unwrap()).unwrap();
        s.accumulate_grad("p", &Tensor::from_vec(&[1], vec![grad]).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_identity() {
        let mut s = store_with(1.5, 0.0);
        adam_step(&mut s, 6e-4).unwrap();
        assert_eq!(s.get("p").unwrap().data(), &[1.5]);
    }

    #[test]
    fn zero_learning_rate_is_identity_on_values() {
        let mut s = store_with(1.5, 0.7);
        adam_step(&mut s, 0.0).unwrap();
        assert_eq!(s.get("p").unwrap().data(), &[1.5]);
        // Moments still advanced.
        assert!(s.param("p").unwrap().adam_m.data()[0] != 0.0);
    }

    #[test]
    fn first_step_matches_hand_computed_update() {
        // m̂ = g, v̂ = g² after bias correction at t = 1, so the update is
        // lr·g/(|g|+ε) ≈ lr·sign(g).
        let mut s = store_with(1.0, 0.5);
        adam_step(&mut s, 6e-4).unwrap();
        assert_abs_diff_eq!(s.get("p").unwrap().data()[0], 0.9994, epsilon = 1e-7);
    }

    #[test]
    fn step_count_increments_and_grads_zero() {
        let mut s = store_with(1.0, 0.5);
        assert_eq!(s.step(), 0);
        adam_step(&mut s, 1e-3).unwrap();
        assert_eq!(s.step(), 1);
        assert_eq!(s.grad("p").unwrap().data(), &[0.0]);
    }

    #[test]
    fn identical_stores_update_bit_identically() {
        let build = || {
            let mut s = ParameterStore::<f32>::new();
            s.insert("w", Tensor::from_fn(&[17], |i| (i as f32 * 0.37).sin())).unwrap();
            s
        };
        let mut a = build();
        let mut b = build();
        for step in 0..5 {
            let g = Tensor::from_fn(&[17], |i| ((i + step) as f32 * 0.11).cos());
            a.accumulate_grad("w", &g).unwrap();
            b.accumulate_grad("w", &g).unwrap();
            adam_step(&mut a, 3e-4).unwrap();
            adam_step(&mut b, 3e-4).unwrap();
        }
        let bits = |s: &ParameterStore<f32>| -> Vec<u32> {
            s.get("w").unwrap().data().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn nonfinite_update_is_reported() {
        let mut s = store_with(1.0, f64::INFINITY);
        assert!(matches!(adam_step(&mut s, 1e-3), Err(Error::NonFinite { .. })));
    }
}
