//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::nn::Param;

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPS: f32 = 1e-8;

/// One Adam update over the given parameters. Increments each param's step
/// counter and zeroes its gradient afterwards. A non-finite gradient aborts
/// with the parameter's name before anything is touched.
pub fn adam_step(
    params: &mut [&mut Param],
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
) -> Result<()> {
    for p in params.iter() {
        if !p.grad.all_finite() {
            return Err(Error::numeric(format!(
                "non-finite gradient in parameter '{}'",
                p.name
            )));
        }
    }
    for p in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let bc1 = 1.0 - f64::from(beta1).powi(t);
        let bc2 = 1.0 - f64::from(beta2).powi(t);
        let (value, grad, m, v) = (
            p.value.data_mut(),
            p.grad.data_mut(),
            p.m.data_mut(),
            p.v.data_mut(),
        );
        for i in 0..value.len() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = (f64::from(m[i]) / bc1) as f32;
            let v_hat = (f64::from(v[i]) / bc2) as f32;
            value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            grad[i] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_param(value: f32, grad: f32) -> Param {
        let mut p = Param::new("p", Tensor::from_vec(&[1], vec![value]).unwrap());
        p.grad.data_mut()[0] = grad;
        p
    }

    #[test]
    fn first_step_delta_matches_hand_evaluation() {
        // g=2: m_hat=2, v_hat=4, delta = -lr*2/(2+eps) ~ -lr
        let mut p = scalar_param(1.0, 2.0);
        adam_step(&mut [&mut p], 1e-3, 0.9, 0.999, 1e-8).unwrap();
        let delta = p.value.data()[0] - 1.0;
        assert!((delta + 1e-3).abs() < 1e-7, "delta {delta}");
        assert_eq!(p.step_count, 1);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn zero_gradient_is_identity_on_value() {
        let mut p = scalar_param(0.75, 0.0);
        for _ in 0..10 {
            adam_step(&mut [&mut p], 1e-3, 0.9, 0.999, 1e-8).unwrap();
        }
        assert_eq!(p.value.data()[0], 0.75);
    }

    #[test]
    fn identical_params_stay_bit_identical() {
        let mut a = scalar_param(0.5, 0.0);
        let mut b = scalar_param(0.5, 0.0);
        for step in 0..25 {
            let g = (step as f32 * 0.31).sin();
            a.grad.data_mut()[0] = g;
            b.grad.data_mut()[0] = g;
            adam_step(&mut [&mut a, &mut b], 2e-4, 0.9, 0.999, 1e-8).unwrap();
            assert_eq!(a.value.data()[0].to_bits(), b.value.data()[0].to_bits());
            assert_eq!(a.m.data()[0].to_bits(), b.m.data()[0].to_bits());
            assert_eq!(a.v.data()[0].to_bits(), b.v.data()[0].to_bits());
        }
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = scalar_param(0.5, f32::NAN);
        let err = adam_step(&mut [&mut p], 1e-3, 0.9, 0.999, 1e-8).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'p'"), "message should name the param: {msg}");
        // value untouched on failure
        assert_eq!(p.value.data()[0], 0.5);
    }
}
