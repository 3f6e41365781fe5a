//! Finite-difference verification of analytic gradients.
//!
//! A [`Fragment`] is any small differentiable piece (a single layer, a whole
//! network on a fixed input) that can report a scalar loss and populate its
//! parameters' gradients. The checker perturbs every parameter element by
//! `±eps` and compares the central difference against the analytic value.
//!
//! Elements sitting on a non-differentiable point (a ReLU kink, a pooling
//! argmax switch) are detected through the second difference
//! `|f(θ+ε)+f(θ-ε)-2f(θ)|`, which is O(ε) at a kink but O(ε²) on smooth
//! regions; such elements are flagged and excluded instead of failing the
//! check.

use crate::error::Result;
use crate::nn::Param;

/// Relative error uses `max(|analytic|, |numeric|, REL_FLOOR)` as the
/// denominator; below the floor the comparison is effectively absolute,
/// which is all float32 central differences can certify.
pub const REL_FLOOR: f32 = 0.1;

const KINK_CURVATURE_FACTOR: f32 = 50.0;

pub trait Fragment {
    /// Forward pass to a scalar loss; must be deterministic.
    fn loss(&mut self) -> Result<f32>;
    /// Forward + backward, accumulating parameter gradients.
    fn loss_and_grads(&mut self) -> Result<f32>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f32,
    pub flagged: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f32,
    pub flagged_total: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f32) -> bool {
        self.max_rel_err < tol
    }
}

/// Adapts a bare op (forward + backward closures over a parameter list) to
/// a [`Fragment`] by projecting the op output onto fixed coefficients, so
/// arbitrary output gradients get exercised. Gradients wrt an op *input*
/// are checked the same way: the input is just another entry in `params`.
pub struct OpFragment<F, B> {
    pub params: Vec<Param>,
    /// `(params) -> output tensor`
    pub forward: F,
    /// `(params, grad_out) -> gradient per param, same order`
    pub backward: B,
    /// Projection coefficients, one per output element.
    pub proj: Vec<f32>,
}

impl<F, B> OpFragment<F, B>
where
    F: FnMut(&[Param]) -> Result<crate::tensor::Tensor>,
    B: FnMut(&[Param], &crate::tensor::Tensor) -> Result<Vec<crate::tensor::Tensor>>,
{
    fn project(&mut self) -> Result<(f32, crate::tensor::Tensor)> {
        let out = (self.forward)(&self.params)?;
        if out.len() != self.proj.len() {
            return Err(crate::error::Error::config(
                "projection length does not match op output",
            ));
        }
        let loss = out
            .data()
            .iter()
            .zip(&self.proj)
            .map(|(&o, &r)| o * r)
            .sum();
        let grad = crate::tensor::Tensor::from_vec(out.shape(), self.proj.clone())?;
        Ok((loss, grad))
    }
}

impl<F, B> Fragment for OpFragment<F, B>
where
    F: FnMut(&[Param]) -> Result<crate::tensor::Tensor>,
    B: FnMut(&[Param], &crate::tensor::Tensor) -> Result<Vec<crate::tensor::Tensor>>,
{
    fn loss(&mut self) -> Result<f32> {
        Ok(self.project()?.0)
    }

    fn loss_and_grads(&mut self) -> Result<f32> {
        let (loss, grad_out) = self.project()?;
        let grads = (self.backward)(&self.params, &grad_out)?;
        for (p, g) in self.params.iter_mut().zip(&grads) {
            crate::linalg::axpy(p.grad.data_mut(), 1.0, g.data());
        }
        Ok(loss)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.params.iter_mut().collect()
    }
}

pub fn grad_check(frag: &mut dyn Fragment, eps: f32) -> Result<GradCheckReport> {
    for p in frag.params_mut() {
        p.zero_grad();
    }
    frag.loss_and_grads()?;
    let analytic: Vec<(String, Vec<f32>)> = frag
        .params_mut()
        .iter()
        .map(|p| (p.name.clone(), p.grad.data().to_vec()))
        .collect();
    let f0 = frag.loss()?;

    let n_params = analytic.len();
    let mut report = GradCheckReport {
        params: Vec::with_capacity(n_params),
        max_rel_err: 0.0,
        flagged_total: 0,
    };

    for pi in 0..n_params {
        let n_elems = analytic[pi].1.len();
        let mut max_rel = 0.0f32;
        let mut flagged = 0usize;
        for j in 0..n_elems {
            let orig = frag.params_mut()[pi].value.data()[j];
            frag.params_mut()[pi].value.data_mut()[j] = orig + eps;
            let f_plus = frag.loss()?;
            frag.params_mut()[pi].value.data_mut()[j] = orig - eps;
            let f_minus = frag.loss()?;
            frag.params_mut()[pi].value.data_mut()[j] = orig;

            let curvature = (f_plus + f_minus - 2.0 * f0).abs();
            if curvature > KINK_CURVATURE_FACTOR * eps * eps {
                flagged += 1;
                continue;
            }
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic[pi].1[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_rel = max_rel.max(rel);
        }
        report.max_rel_err = report.max_rel_err.max(max_rel);
        report.flagged_total += flagged;
        report.params.push(ParamCheck {
            name: analytic[pi].0.clone(),
            max_rel_err: max_rel,
            flagged,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{linear, linear_backward, relu, Linear, Param};
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Linear layer under a fixed random projection loss.
    struct LinearFragment {
        layer: Linear,
        input: Tensor,
        proj: Vec<f32>,
    }

    impl Fragment for LinearFragment {
        fn loss(&mut self) -> Result<f32> {
            let out = self.layer.forward(&self.input, false)?;
            Ok(out
                .data()
                .iter()
                .zip(&self.proj)
                .map(|(&o, &r)| o * r)
                .sum())
        }
        fn loss_and_grads(&mut self) -> Result<f32> {
            let out = self.layer.forward(&self.input, true)?;
            let loss = out
                .data()
                .iter()
                .zip(&self.proj)
                .map(|(&o, &r)| o * r)
                .sum();
            let grad = Tensor::from_vec(out.shape(), self.proj.clone()).unwrap();
            self.layer.backward(&grad)?;
            Ok(loss)
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.layer.weight, &mut self.layer.bias]
        }
    }

    #[test]
    fn linear_fragment_passes() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let layer = Linear::new("fc", 3, 4, &mut rng);
        let input = Tensor::rand_uniform(&[2, 3], -1.0, 1.0, &mut rng);
        let proj = (0..8).map(|i| ((i as f32) * 0.7).sin()).collect();
        let mut frag = LinearFragment { layer, input, proj };
        let report = grad_check(&mut frag, 1e-3).unwrap();
        assert!(report.passes(1e-3), "max rel err {}", report.max_rel_err);
        assert_eq!(report.flagged_total, 0);
    }

    /// y = sum(relu(x * w)) with w = 0 puts every element exactly on the
    /// kink; the report must flag it rather than fail.
    struct ReluKinkFragment {
        w: Param,
        input: Tensor,
    }

    impl ReluKinkFragment {
        fn eval(&self) -> f32 {
            let scaled: Vec<f32> = self
                .input
                .data()
                .iter()
                .map(|&x| x * self.w.value.data()[0])
                .collect();
            relu(&Tensor::from_vec(self.input.shape(), scaled).unwrap())
                .data()
                .iter()
                .sum()
        }
    }

    impl Fragment for ReluKinkFragment {
        fn loss(&mut self) -> Result<f32> {
            Ok(self.eval())
        }
        fn loss_and_grads(&mut self) -> Result<f32> {
            // relu'(0) = 0 by definition, so the analytic gradient is 0.
            Ok(self.eval())
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.w]
        }
    }

    #[test]
    fn relu_kink_is_flagged_not_failed() {
        let mut frag = ReluKinkFragment {
            w: Param::new("w", Tensor::from_vec(&[1], vec![0.0]).unwrap()),
            input: Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap(),
        };
        let report = grad_check(&mut frag, 1e-3).unwrap();
        assert_eq!(report.flagged_total, 1);
        assert!(report.passes(1e-3));
    }

    /// Input gradients get the same treatment by wrapping the input in a
    /// Param.
    struct LinearInputFragment {
        weight: Tensor,
        bias: Tensor,
        input: Param,
        proj: Vec<f32>,
    }

    impl Fragment for LinearInputFragment {
        fn loss(&mut self) -> Result<f32> {
            let out = linear(&self.input.value, &self.weight, &self.bias)?;
            Ok(out
                .data()
                .iter()
                .zip(&self.proj)
                .map(|(&o, &r)| o * r)
                .sum())
        }
        fn loss_and_grads(&mut self) -> Result<f32> {
            let out = linear(&self.input.value, &self.weight, &self.bias)?;
            let loss = out
                .data()
                .iter()
                .zip(&self.proj)
                .map(|(&o, &r)| o * r)
                .sum();
            let grad = Tensor::from_vec(out.shape(), self.proj.clone()).unwrap();
            let (dx, _, _) = linear_backward(&self.input.value, &self.weight, &grad)?;
            crate::linalg::axpy(self.input.grad.data_mut(), 1.0, dx.data());
            Ok(loss)
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.input]
        }
    }

    #[test]
    fn linear_input_gradient_passes() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut frag = LinearInputFragment {
            weight: Tensor::rand_uniform(&[3, 4], -0.6, 0.6, &mut rng),
            bias: Tensor::rand_uniform(&[4], -0.1, 0.1, &mut rng),
            input: Param::new("input", Tensor::rand_uniform(&[2, 3], -1.0, 1.0, &mut rng)),
            proj: (0..8).map(|i| ((i as f32) * 1.3).cos()).collect(),
        };
        let report = grad_check(&mut frag, 1e-3).unwrap();
        assert!(report.passes(1e-3), "max rel err {}", report.max_rel_err);
    }
}
