//! Standard LSTM recurrence with hand-derived backward-through-time.
//!
//! Gates: `i = σ(W_i[x,h] + b_i)`, `f = σ(W_f[x,h] + b_f)`,
//! `g = tanh(W_g[x,h] + b_g)`, `o = σ(W_o[x,h] + b_o)`,
//! `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`, one bias vector per gate.
//!
//! Weights are stored input-major (`w_ih: F×4H`, `w_hh: H×4H`, gate order
//! `[i|f|g|o]` along the 4H axis) so the input projection for all timesteps
//! runs as a single matrix product.

use crate::error::{Error, Result};
use crate::linalg;
use crate::nn::activation::sigmoid_scalar;
use crate::nn::Param;
use crate::tensor::Tensor;
use rand::Rng;

/// `4·(H·(F+H)+H)`: four gates, each with an `(F+H)×H` weight block and one
/// bias vector.
pub fn lstm_param_count(input: usize, hidden: usize) -> usize {
    4 * (hidden * (input + hidden) + hidden)
}

#[derive(Clone, Debug)]
struct BpttCache {
    xs_flat: Tensor,      // (t·B)×F
    gates: Vec<Tensor>,   // t × B×4H, post-activation [i|f|g|o]
    cs: Vec<Tensor>,      // t × B×H
    tanh_cs: Vec<Tensor>, // t × B×H
    hs: Vec<Tensor>,      // t × B×H
    h0: Tensor,
    c0: Tensor,
    batch: usize,
}

#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub w_ih: Param,
    pub w_hh: Param,
    pub bias: Param,
    pub input_size: usize,
    pub hidden_size: usize,
    cache: Option<BpttCache>,
}

impl LstmLayer {
    pub fn new<R: Rng>(name: &str, input_size: usize, hidden_size: usize, rng: &mut R) -> LstmLayer {
        LstmLayer {
            w_ih: Param::uniform(
                format!("{name}.w_ih"),
                &[input_size, 4 * hidden_size],
                input_size,
                rng,
            ),
            w_hh: Param::uniform(
                format!("{name}.w_hh"),
                &[hidden_size, 4 * hidden_size],
                hidden_size,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[4 * hidden_size]),
            input_size,
            hidden_size,
            cache: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w_ih.count() + self.w_hh.count() + self.bias.count()
    }

    /// Runs the recurrence over the sequence. Returns the hidden state at
    /// every step plus the final `(h, c)`.
    pub fn forward(
        &mut self,
        xs: &[Tensor],
        h0: &Tensor,
        c0: &Tensor,
        cache: bool,
    ) -> Result<(Vec<Tensor>, Tensor, Tensor)> {
        let t = xs.len();
        if t == 0 {
            return Err(Error::config("LSTM input sequence is empty"));
        }
        let [b, f]: [usize; 2] = xs[0]
            .shape()
            .try_into()
            .map_err(|_| Error::config("LSTM step inputs must be 2-dimensional"))?;
        if f != self.input_size {
            return Err(Error::config(format!(
                "LSTM input size mismatch: got {f}, expected {}",
                self.input_size
            )));
        }
        for x in xs {
            if x.shape() != [b, f] {
                return Err(Error::config("LSTM sequence elements must share one shape"));
            }
        }
        let hn = self.hidden_size;
        if h0.shape() != [b, hn] || c0.shape() != [b, hn] {
            return Err(Error::config("LSTM initial state shape mismatch"));
        }

        // One projection for every timestep at once.
        let mut xs_flat = Tensor::zeros(&[t * b, f]);
        for (i, x) in xs.iter().enumerate() {
            xs_flat.data_mut()[i * b * f..(i + 1) * b * f].copy_from_slice(x.data());
        }
        let mut gates_x = Tensor::zeros(&[t * b, 4 * hn]);
        linalg::mm_acc(
            gates_x.data_mut(),
            xs_flat.data(),
            self.w_ih.value.data(),
            t * b,
            f,
            4 * hn,
        );

        let mut hs = Vec::with_capacity(t);
        let mut cs = Vec::with_capacity(t);
        let mut gates_acts = Vec::with_capacity(t);
        let mut tanh_cs = Vec::with_capacity(t);
        let mut h_prev = h0.clone();
        let mut c_prev = c0.clone();
        for step in 0..t {
            let mut gates = Tensor::zeros(&[b, 4 * hn]);
            gates
                .data_mut()
                .copy_from_slice(&gates_x.data()[step * b * 4 * hn..(step + 1) * b * 4 * hn]);
            for row in gates.data_mut().chunks_mut(4 * hn) {
                linalg::axpy(row, 1.0, self.bias.value.data());
            }
            linalg::mm_acc(
                gates.data_mut(),
                h_prev.data(),
                self.w_hh.value.data(),
                b,
                hn,
                4 * hn,
            );

            let mut c_new = Tensor::zeros(&[b, hn]);
            let mut h_new = Tensor::zeros(&[b, hn]);
            let mut tanh_c = Tensor::zeros(&[b, hn]);
            {
                let gd = gates.data_mut();
                let cd = c_new.data_mut();
                let hd = h_new.data_mut();
                let td = tanh_c.data_mut();
                let cp = c_prev.data();
                for bi in 0..b {
                    let row = &mut gd[bi * 4 * hn..(bi + 1) * 4 * hn];
                    for j in 0..hn {
                        let i_g = sigmoid_scalar(row[j]);
                        let f_g = sigmoid_scalar(row[hn + j]);
                        let g_g = row[2 * hn + j].tanh();
                        let o_g = sigmoid_scalar(row[3 * hn + j]);
                        row[j] = i_g;
                        row[hn + j] = f_g;
                        row[2 * hn + j] = g_g;
                        row[3 * hn + j] = o_g;
                        let c = f_g * cp[bi * hn + j] + i_g * g_g;
                        let tc = c.tanh();
                        cd[bi * hn + j] = c;
                        td[bi * hn + j] = tc;
                        hd[bi * hn + j] = o_g * tc;
                    }
                }
            }
            hs.push(h_new.clone());
            cs.push(c_new.clone());
            gates_acts.push(gates);
            tanh_cs.push(tanh_c);
            h_prev = h_new;
            c_prev = c_new;
        }

        let final_h = hs[t - 1].clone();
        let final_c = cs[t - 1].clone();
        if cache {
            self.cache = Some(BpttCache {
                xs_flat,
                gates: gates_acts,
                cs,
                tanh_cs,
                hs: hs.clone(),
                h0: h0.clone(),
                c0: c0.clone(),
                batch: b,
            });
        }
        Ok((hs, final_h, final_c))
    }

    /// Backward through time given the loss gradient on every step's hidden
    /// output. Accumulates parameter gradients, returns gradients wrt the
    /// step inputs.
    pub fn backward(&mut self, grad_hs: &[Tensor]) -> Result<Vec<Tensor>> {
        let cache = self.cache.take().expect("backward before forward");
        let t = cache.gates.len();
        if grad_hs.len() != t {
            return Err(Error::config("LSTM backward expects one gradient per step"));
        }
        let b = cache.batch;
        let hn = self.hidden_size;
        let f = self.input_size;

        let mut d_gates_all = Tensor::zeros(&[t * b, 4 * hn]);
        let mut dh_chain = vec![0.0f32; b * hn];
        let mut dc_chain = vec![0.0f32; b * hn];

        for step in (0..t).rev() {
            let gates = cache.gates[step].data();
            let tanh_c = cache.tanh_cs[step].data();
            let c_prev = if step == 0 {
                cache.c0.data()
            } else {
                cache.cs[step - 1].data()
            };
            let h_prev = if step == 0 {
                cache.h0.data()
            } else {
                cache.hs[step - 1].data()
            };
            let g_in = grad_hs[step].data();

            let d_gates =
                &mut d_gates_all.data_mut()[step * b * 4 * hn..(step + 1) * b * 4 * hn];
            for bi in 0..b {
                let grow = &gates[bi * 4 * hn..(bi + 1) * 4 * hn];
                let drow = &mut d_gates[bi * 4 * hn..(bi + 1) * 4 * hn];
                for j in 0..hn {
                    let idx = bi * hn + j;
                    let dh = g_in[idx] + dh_chain[idx];
                    let (i_g, f_g, g_g, o_g) =
                        (grow[j], grow[hn + j], grow[2 * hn + j], grow[3 * hn + j]);
                    let tc = tanh_c[idx];
                    let dc = dc_chain[idx] + dh * o_g * (1.0 - tc * tc);
                    drow[j] = dc * g_g * i_g * (1.0 - i_g);
                    drow[hn + j] = dc * c_prev[idx] * f_g * (1.0 - f_g);
                    drow[2 * hn + j] = dc * i_g * (1.0 - g_g * g_g);
                    drow[3 * hn + j] = dh * tc * o_g * (1.0 - o_g);
                    dc_chain[idx] = dc * f_g;
                }
            }

            // dh_prev = d_gates · W_hh^T ; dW_hh += h_prev^T · d_gates
            dh_chain.iter_mut().for_each(|v| *v = 0.0);
            linalg::mm_a_bt_acc(
                &mut dh_chain,
                d_gates,
                self.w_hh.value.data(),
                b,
                4 * hn,
                hn,
            );
            linalg::mm_at_b_acc(
                self.w_hh.grad.data_mut(),
                h_prev,
                d_gates,
                hn,
                b,
                4 * hn,
            );
            for row in d_gates.chunks(4 * hn) {
                linalg::axpy(self.bias.grad.data_mut(), 1.0, row);
            }
        }

        // dW_ih += X^T · dG and dX = dG · W_ih^T, batched over all steps.
        linalg::mm_at_b_acc(
            self.w_ih.grad.data_mut(),
            cache.xs_flat.data(),
            d_gates_all.data(),
            f,
            t * b,
            4 * hn,
        );
        let mut dxs_flat = Tensor::zeros(&[t * b, f]);
        linalg::mm_a_bt_acc(
            dxs_flat.data_mut(),
            d_gates_all.data(),
            self.w_ih.value.data(),
            t * b,
            4 * hn,
            f,
        );
        let mut dxs = Vec::with_capacity(t);
        for step in 0..t {
            let mut dx = Tensor::zeros(&[b, f]);
            dx.data_mut()
                .copy_from_slice(&dxs_flat.data()[step * b * f..(step + 1) * b * f]);
            dxs.push(dx);
        }
        Ok(dxs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_weights_give_zero_hidden_states() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut layer = LstmLayer::new("lstm", 3, 4, &mut rng);
        layer.w_ih.value.fill(0.0);
        layer.w_hh.value.fill(0.0);
        let xs = vec![Tensor::filled(&[2, 3], 1.0); 5];
        let h0 = Tensor::zeros(&[2, 4]);
        let c0 = Tensor::zeros(&[2, 4]);
        let (hs, final_h, _) = layer.forward(&xs, &h0, &c0, false).unwrap();
        for h in &hs {
            assert!(h.data().iter().all(|&v| v == 0.0));
        }
        assert!(final_h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_count_formula_matches_enumeration() {
        assert_eq!(lstm_param_count(64, 100), 66_000);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let layer = LstmLayer::new("lstm", 64, 100, &mut rng);
        assert_eq!(layer.param_count(), 66_000);
    }

    #[test]
    fn empty_sequence_is_config_error() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut layer = LstmLayer::new("lstm", 3, 4, &mut rng);
        let err = layer
            .forward(&[], &Tensor::zeros(&[1, 4]), &Tensor::zeros(&[1, 4]), false)
            .unwrap_err();
        assert!(matches!(err, crate::error::Error::Config(_)));
    }
}
