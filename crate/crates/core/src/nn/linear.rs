//! Fully connected layer: `out = input · weight + bias`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::nn::Param;
use crate::tensor::Tensor;
use rand::Rng;

/// `input B×F`, `weight F×G`, `bias G` → `B×G`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [b, f]: [usize; 2] = dims2(input, "linear input")?;
    let [wf, g]: [usize; 2] = dims2(weight, "linear weight")?;
    if wf != f {
        return Err(Error::config(format!(
            "linear feature mismatch: input has {f}, weight expects {wf}"
        )));
    }
    if bias.shape() != [g] {
        return Err(Error::config("linear bias shape must be [out_features]"));
    }
    let mut out = Tensor::zeros(&[b, g]);
    for row in out.data_mut().chunks_mut(g) {
        row.copy_from_slice(bias.data());
    }
    linalg::mm_acc(out.data_mut(), input.data(), weight.data(), b, f, g);
    Ok(out)
}

/// Gradients wrt input, weight and bias.
pub fn linear_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [b, f]: [usize; 2] = dims2(input, "linear input")?;
    let [_, g]: [usize; 2] = dims2(weight, "linear weight")?;
    let mut d_input = Tensor::zeros(&[b, f]);
    let mut d_weight = Tensor::zeros(weight.shape());
    let mut d_bias = Tensor::zeros(&[g]);

    // dW = X^T  dY ; dX = dY  W^T ; db = column sums of dY
    linalg::mm_at_b_acc(d_weight.data_mut(), input.data(), grad_out.data(), f, b, g);
    linalg::mm_a_bt_acc(d_input.data_mut(), grad_out.data(), weight.data(), b, g, f);
    for row in grad_out.data().chunks(g) {
        linalg::axpy(d_bias.data_mut(), 1.0, row);
    }
    Ok((d_input, d_weight, d_bias))
}

fn dims2(t: &Tensor, what: &str) -> Result<[usize; 2]> {
    t.shape()
        .try_into()
        .map_err(|_| Error::config(format!("{what} must be 2-dimensional, got {:?}", t.shape())))
}

/// Trainable fully connected layer.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new<R: Rng>(name: &str, in_features: usize, out_features: usize, rng: &mut R) -> Linear {
        Linear {
            weight: Param::uniform(
                format!("{name}.weight"),
                &[in_features, out_features],
                in_features,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_features]),
            input: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor, cache: bool) -> Result<Tensor> {
        if cache {
            self.input = Some(input.clone());
        }
        linear(input, &self.weight.value, &self.bias.value)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.input.as_ref().expect("backward before forward");
        let (dx, dw, db) = linear_backward(input, &self.weight.value, grad_out)?;
        linalg::axpy(self.weight.grad.data_mut(), 1.0, dw.data());
        linalg::axpy(self.bias.grad.data_mut(), 1.0, db.data());
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_is_identity() {
        let input = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let eye = Tensor::from_vec(
            &[3, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let out = linear(&input, &eye, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn affine_example() {
        let input = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let bias = Tensor::from_vec(&[2], vec![3.0, 3.0]).unwrap();
        let out = linear(&input, &eye, &bias).unwrap();
        assert_eq!(out.data(), &[4.0, 5.0]);
    }

    #[test]
    fn feature_mismatch_is_config_error() {
        let input = Tensor::zeros(&[1, 3]);
        let weight = Tensor::zeros(&[4, 2]);
        assert!(linear(&input, &weight, &Tensor::zeros(&[2])).is_err());
    }
}
