//! Minimal deterministic neural-network engine.
//!
//! Every layer the five architectures need, each with a hand-derived
//! backward pass: 2D/3D convolution, 2D/3D max pooling, ReLU/sigmoid/tanh,
//! fully connected, a standard LSTM recurrence, binary cross entropy and
//! Adam. No autodiff graph: layers cache what their backward needs during
//! the forward pass.

pub mod activation;
pub mod conv;
pub mod gradcheck;
pub mod linear;
pub mod loss;
pub mod lstm;
pub mod optim;
pub mod pool;

pub use activation::{relu, sigmoid, tanh, Relu, Sigmoid};
pub use conv::{conv2d, conv2d_backward, conv3d, conv3d_backward, Conv2d, Conv3d};
pub use gradcheck::{grad_check, Fragment, GradCheckReport, OpFragment};
pub use linear::{linear, linear_backward, Linear};
pub use loss::bce_loss;
pub use lstm::LstmLayer;
pub use optim::{adam_step, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use pool::{MaxPool2d, MaxPool3d};

use crate::tensor::Tensor;
use rand::Rng;

/// A trainable tensor with its gradient and Adam moment slots.
///
/// `value`, `grad`, `m` and `v` always share one shape; `m`/`v` stay zero
/// until the first optimizer step.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub step_count: u64,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Param {
        let shape = value.shape().to_vec();
        Param {
            name: name.into(),
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            step_count: 0,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Param {
        Param::new(name, Tensor::zeros(shape))
    }

    /// Weight init: uniform in `±sqrt(1/fan_in)`.
    pub fn uniform<R: Rng>(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Param {
        let bound = (1.0 / fan_in as f32).sqrt();
        Param::new(name, Tensor::rand_uniform(shape, -bound, bound, rng))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn count(&self) -> usize {
        self.value.len()
    }
}
