//! Fused (bi)directional LSTM over a batch of sequences with full
//! backpropagation through time.
//!
//! Gate layout inside every `4H` block is `[input, forget, cell, output]`.

use crate::error::{AutodiffError, Result};
use crate::gemm::{gemm, MatRef};
use crate::ops::elementwise::sigmoid_scalar as sigmoid;
use crate::tape::{Grads, Op, Tape, Var};
use crate::tensor::Tensor;

/// Weights of one LSTM direction.
///
/// `w_ih` is `[d_in, 4H]`, `w_hh` is `[H, 4H]` and `bias` is `[4H]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

pub(crate) struct LstmSaved {
    x: Var,
    batch: usize,
    steps: usize,
    d_in: usize,
    hidden: usize,
    dirs: Vec<DirSaved>,
}

struct DirSaved {
    weights: LstmWeights,
    reverse: bool,
    /// Post-activation gates, `[batch, steps, 4H]`.
    gates: Vec<f64>,
    /// Cell states, `[batch, steps, H]`.
    cells: Vec<f64>,
    /// Hidden states, `[batch, steps, H]`.
    states: Vec<f64>,
}

impl Tape {
    /// Runs an LSTM with zero initial state over `x`, shaped `[T, d_in]` or
    /// `[batch, T, d_in]`. With `backward` weights the reversed pass is
    /// concatenated after the forward one, giving `2H` output features.
    pub fn lstm(&mut self, x: Var, forward: LstmWeights, backward: Option<LstmWeights>) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (batch, steps, d_in) = match shape[..] {
            [t, d] => (1, t, d),
            [b, t, d] => (b, t, d),
            _ => {
                return Err(AutodiffError::Invalid {
                    op: "lstm",
                    msg: format!("expected rank 2 or 3 input, got {shape:?}"),
                })
            }
        };
        let hidden = self.check_lstm_weights(forward, d_in, &shape)?;
        if let Some(b) = backward {
            if self.check_lstm_weights(b, d_in, &shape)? != hidden {
                return Err(AutodiffError::ShapeMismatch {
                    op: "lstm",
                    lhs: self.shape(forward.w_hh).to_vec(),
                    rhs: self.shape(b.w_hh).to_vec(),
                });
            }
        }

        let mut dirs = vec![self.lstm_direction(x, forward, false, batch, steps, d_in, hidden)];
        if let Some(b) = backward {
            dirs.push(self.lstm_direction(x, b, true, batch, steps, d_in, hidden));
        }
        let d_out = hidden * dirs.len();
        let mut out = vec![0.0; batch * steps * d_out];
        for (k, dir) in dirs.iter().enumerate() {
            for (row_out, row_h) in out.chunks_exact_mut(d_out).zip(dir.states.chunks_exact(hidden)) {
                row_out[k * hidden..(k + 1) * hidden].copy_from_slice(row_h);
            }
        }
        let out_shape = if shape.len() == 2 {
            vec![steps, d_out]
        } else {
            vec![batch, steps, d_out]
        };
        let mut inputs = vec![x, forward.w_ih, forward.w_hh, forward.bias];
        if let Some(b) = backward {
            inputs.extend([b.w_ih, b.w_hh, b.bias]);
        }
        let value = Tensor::new(&out_shape, out)?;
        let saved = LstmSaved {
            x,
            batch,
            steps,
            d_in,
            hidden,
            dirs,
        };
        Ok(self.push("lstm", value, Op::Lstm(Box::new(saved)), &inputs))
    }

    fn check_lstm_weights(&self, w: LstmWeights, d_in: usize, x_shape: &[usize]) -> Result<usize> {
        let mismatch = |v: Var| AutodiffError::ShapeMismatch {
            op: "lstm",
            lhs: x_shape.to_vec(),
            rhs: self.shape(v).to_vec(),
        };
        let hidden = match *self.shape(w.w_hh) {
            [h, g] if g == 4 * h => h,
            _ => return Err(mismatch(w.w_hh)),
        };
        if self.shape(w.w_ih) != [d_in, 4 * hidden] {
            return Err(mismatch(w.w_ih));
        }
        if self.shape(w.bias) != [4 * hidden] {
            return Err(mismatch(w.bias));
        }
        Ok(hidden)
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_direction(
        &self,
        x: Var,
        w: LstmWeights,
        reverse: bool,
        batch: usize,
        steps: usize,
        d_in: usize,
        hidden: usize,
    ) -> DirSaved {
        let g4 = 4 * hidden;
        let rows = batch * steps;
        let mut xw = vec![0.0; rows * g4];
        gemm(
            1.0,
            MatRef::new(self.data(x), rows, d_in),
            MatRef::new(self.data(w.w_ih), d_in, g4),
            0.0,
            &mut xw,
            g4,
        );
        let bias = self.data(w.bias);
        let w_hh = self.data(w.w_hh);
        let mut gates = vec![0.0; rows * g4];
        let mut cells = vec![0.0; rows * hidden];
        let mut states = vec![0.0; rows * hidden];
        let mut pre = vec![0.0; batch * g4];

        for step in 0..steps {
            let t = if reverse { steps - 1 - step } else { step };
            let prev_t = if reverse { t + 1 } else { t.wrapping_sub(1) };
            for b in 0..batch {
                let src = &xw[(b * steps + t) * g4..(b * steps + t + 1) * g4];
                let dst = &mut pre[b * g4..(b + 1) * g4];
                for ((d, s), bi) in dst.iter_mut().zip(src).zip(bias) {
                    *d = s + bi;
                }
            }
            if step > 0 {
                let h_prev = MatRef {
                    data: &states[prev_t * hidden..],
                    rows: batch,
                    cols: hidden,
                    row_stride: steps * hidden,
                    trans: false,
                };
                gemm(1.0, h_prev, MatRef::new(w_hh, hidden, g4), 1.0, &mut pre, g4);
            }
            for b in 0..batch {
                let p = &pre[b * g4..(b + 1) * g4];
                let row = b * steps + t;
                let gate = &mut gates[row * g4..(row + 1) * g4];
                for j in 0..hidden {
                    let i_g = sigmoid(p[j]);
                    let f_g = sigmoid(p[hidden + j]);
                    let c_g = p[2 * hidden + j].tanh();
                    let o_g = sigmoid(p[3 * hidden + j]);
                    gate[j] = i_g;
                    gate[hidden + j] = f_g;
                    gate[2 * hidden + j] = c_g;
                    gate[3 * hidden + j] = o_g;
                    let c_prev = if step > 0 {
                        cells[(b * steps + prev_t) * hidden + j]
                    } else {
                        0.0
                    };
                    let c = f_g * c_prev + i_g * c_g;
                    cells[row * hidden + j] = c;
                    states[row * hidden + j] = o_g * c.tanh();
                }
            }
        }
        DirSaved {
            weights: w,
            reverse,
            gates,
            cells,
            states,
        }
    }
}

pub(crate) fn backward(tape: &Tape, saved: &LstmSaved, g: &[f64], grads: &mut Grads) {
    let &LstmSaved {
        x,
        batch,
        steps,
        d_in,
        hidden,
        ..
    } = saved;
    let g4 = 4 * hidden;
    let rows = batch * steps;
    let d_out = hidden * saved.dirs.len();

    for (k, dir) in saved.dirs.iter().enumerate() {
        let w = dir.weights;
        let w_hh = tape.data(w.w_hh);
        let mut dpre = vec![0.0; rows * g4];
        let mut dh_next = vec![0.0; batch * hidden];
        let mut dc_next = vec![0.0; batch * hidden];

        for step in (0..steps).rev() {
            let t = if dir.reverse { steps - 1 - step } else { step };
            let prev_t = if dir.reverse { t + 1 } else { t.wrapping_sub(1) };
            for b in 0..batch {
                let row = b * steps + t;
                let gate = &dir.gates[row * g4..(row + 1) * g4];
                let dp = &mut dpre[row * g4..(row + 1) * g4];
                for j in 0..hidden {
                    let dh = g[row * d_out + k * hidden + j] + dh_next[b * hidden + j];
                    let (i_g, f_g, c_g, o_g) = (gate[j], gate[hidden + j], gate[2 * hidden + j], gate[3 * hidden + j]);
                    let tc = dir.cells[row * hidden + j].tanh();
                    let c_prev = if step > 0 {
                        dir.cells[(b * steps + prev_t) * hidden + j]
                    } else {
                        0.0
                    };
                    let dc = dc_next[b * hidden + j] + dh * o_g * (1.0 - tc * tc);
                    dc_next[b * hidden + j] = dc * f_g;
                    dp[j] = dc * c_g * i_g * (1.0 - i_g);
                    dp[hidden + j] = dc * c_prev * f_g * (1.0 - f_g);
                    dp[2 * hidden + j] = dc * i_g * (1.0 - c_g * c_g);
                    dp[3 * hidden + j] = dh * tc * o_g * (1.0 - o_g);
                }
            }
            if step > 0 {
                let dp_t = MatRef {
                    data: &dpre[t * g4..],
                    rows: batch,
                    cols: g4,
                    row_stride: steps * g4,
                    trans: false,
                };
                gemm(1.0, dp_t, MatRef::new(w_hh, hidden, g4).t(), 0.0, &mut dh_next, hidden);
            }
        }

        if grads.needs(w.w_hh) {
            let mut h_prev = vec![0.0; rows * hidden];
            for b in 0..batch {
                for step in 1..steps {
                    let t = if dir.reverse { steps - 1 - step } else { step };
                    let prev_t = if dir.reverse { t + 1 } else { t - 1 };
                    let src = &dir.states[(b * steps + prev_t) * hidden..(b * steps + prev_t + 1) * hidden];
                    h_prev[(b * steps + t) * hidden..(b * steps + t + 1) * hidden].copy_from_slice(src);
                }
            }
            let slot = grads.slot(w.w_hh).expect("tracked");
            gemm(
                1.0,
                MatRef::new(&h_prev, rows, hidden).t(),
                MatRef::new(&dpre, rows, g4),
                1.0,
                slot,
                g4,
            );
        }
        if let Some(slot) = grads.slot(w.w_ih) {
            gemm(
                1.0,
                MatRef::new(tape.data(x), rows, d_in).t(),
                MatRef::new(&dpre, rows, g4),
                1.0,
                slot,
                g4,
            );
        }
        if let Some(slot) = grads.slot(w.bias) {
            for row in dpre.chunks_exact(g4) {
                slot.iter_mut().zip(row).for_each(|(s, d)| *s += d);
            }
        }
        if let Some(slot) = grads.slot(x) {
            gemm(
                1.0,
                MatRef::new(&dpre, rows, g4),
                MatRef::new(tape.data(w.w_ih), d_in, g4).t(),
                1.0,
                slot,
                d_in,
            );
        }
    }
}
