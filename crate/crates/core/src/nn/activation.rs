//! Elementwise activations with their backward companions.

use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

pub fn tanh(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.tanh()).collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

pub fn sigmoid_scalar(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// ReLU layer; the gradient at exactly 0 is defined as 0.
#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Relu {
        Relu { mask: None }
    }

    pub fn forward(&mut self, input: &Tensor, cache: bool) -> Tensor {
        if cache {
            self.mask = Some(input.data().iter().map(|&v| v > 0.0).collect());
        }
        relu(input)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let mask = self.mask.as_ref().expect("backward before forward");
        let data = grad_out
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m { g } else { 0.0 })
            .collect();
        Tensor::from_vec(grad_out.shape(), data).expect("same shape")
    }
}

/// Sigmoid layer; backward uses the cached output (`s * (1 - s)`).
#[derive(Clone, Debug, Default)]
pub struct Sigmoid {
    out: Option<Tensor>,
}

impl Sigmoid {
    pub fn new() -> Sigmoid {
        Sigmoid { out: None }
    }

    pub fn forward(&mut self, input: &Tensor, cache: bool) -> Tensor {
        let out = sigmoid(input);
        if cache {
            self.out = Some(out.clone());
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let out = self.out.as_ref().expect("backward before forward");
        let data = grad_out
            .data()
            .iter()
            .zip(out.data())
            .map(|(&g, &s)| g * s * (1.0 - s))
            .collect();
        Tensor::from_vec(grad_out.shape(), data).expect("same shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_values() {
        let x = Tensor::from_vec(&[3], vec![-2.5, 0.0, 3.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 3.0]);
        let s = sigmoid(&Tensor::from_vec(&[1], vec![0.0]).unwrap());
        assert!((s.data()[0] - 0.5).abs() < 1e-7);
        let t = tanh(&Tensor::from_vec(&[1], vec![0.0]).unwrap());
        assert_eq!(t.data()[0], 0.0);
    }

    #[test]
    fn sigmoid_derivative_at_zero_matches_finite_difference() {
        let eps = 1e-3f32;
        let fd = (sigmoid_scalar(eps) - sigmoid_scalar(-eps)) / (2.0 * eps);
        assert!((fd - 0.25).abs() < 1e-4);

        let mut layer = Sigmoid::new();
        let out = layer.forward(&Tensor::from_vec(&[1], vec![0.0]).unwrap(), true);
        assert!((out.data()[0] - 0.5).abs() < 1e-7);
        let grad = layer.backward(&Tensor::from_vec(&[1], vec![1.0]).unwrap());
        assert!((grad.data()[0] - fd).abs() < 1e-4);
    }

    #[test]
    fn relu_gradient_is_zero_at_zero_input() {
        let mut layer = Relu::new();
        layer.forward(&Tensor::from_vec(&[2], vec![0.0, 1.0]).unwrap(), true);
        let grad = layer.backward(&Tensor::from_vec(&[2], vec![5.0, 5.0]).unwrap());
        assert_eq!(grad.data(), &[0.0, 5.0]);
    }
}
