use crate::error::{AutodiffError, Result};
use crate::tape::{Grads, Op, Tape, Var};
use crate::tensor::{split_axis, Tensor};

/// Calls `f` with the flat indices of every 1-D lane along `axis`.
fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(&mut dyn Iterator<Item = usize>)) {
    let (outer, len, inner) = split_axis(shape, axis);
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut it = (0..len).map(move |j| base + j * inner);
            f(&mut it);
        }
    }
}

fn lanes(shape: &[usize], axis: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_lane(shape, axis, |it| out.push(it.collect()));
    out
}

impl Tape {
    /// Softmax along `axis`, stabilised by subtracting the lane maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::InvalidAxis {
                op: "softmax",
                axis,
                rank: shape.len(),
            });
        }
        let src = self.data(x);
        let mut out = vec![0.0; src.len()];
        let (_, len, inner) = split_axis(&shape, axis);
        if inner == 1 {
            for (row_in, row_out) in src.chunks_exact(len).zip(out.chunks_exact_mut(len)) {
                softmax_row(row_in, row_out);
            }
        } else {
            let mut buf_in = vec![0.0; len];
            let mut buf_out = vec![0.0; len];
            for lane in lanes(&shape, axis) {
                for (b, &i) in buf_in.iter_mut().zip(&lane) {
                    *b = src[i];
                }
                softmax_row(&buf_in, &mut buf_out);
                for (b, &i) in buf_out.iter().zip(&lane) {
                    out[i] = *b;
                }
            }
        }
        let value = Tensor::new(&shape, out)?;
        Ok(self.push("softmax", value, Op::Softmax { x, axis }, &[x]))
    }

    /// Normalises each lane along `axis` to zero mean and unit variance,
    /// then applies `gain` and `bias` (both of the lane length).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, axis: usize, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::InvalidAxis {
                op: "layer_norm",
                axis,
                rank: shape.len(),
            });
        }
        let len = shape[axis];
        for p in [gain, bias] {
            if self.shape(p) != [len] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: shape.clone(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let src = self.data(x);
        let (g, b) = (self.data(gain), self.data(bias));
        let mut xhat = vec![0.0; src.len()];
        let mut out = vec![0.0; src.len()];
        let mut rstd = Vec::new();
        for_each_lane(&shape, axis, |lane| {
            let idx: Vec<usize> = lane.collect();
            let mean = idx.iter().map(|&i| src[i]).sum::<f64>() / len as f64;
            let var = idx.iter().map(|&i| (src[i] - mean).powi(2)).sum::<f64>() / len as f64;
            let r = 1.0 / (var + eps).sqrt();
            for (j, &i) in idx.iter().enumerate() {
                let h = (src[i] - mean) * r;
                xhat[i] = h;
                out[i] = h * g[j] + b[j];
            }
            rstd.push(r);
        });
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                axis,
                xhat,
                rstd,
            },
            &[x, gain, bias],
        ))
    }
}

fn softmax_row(input: &[f64], out: &mut [f64]) {
    let max = input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, x) in out.iter_mut().zip(input) {
        *o = (x - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

pub(crate) fn softmax_backward(out: &Tensor, x: Var, axis: usize, g: &[f64], grads: &mut Grads) {
    let Some(slot) = grads.slot(x) else {
        return;
    };
    let y = out.data();
    let (_, len, inner) = split_axis(out.shape(), axis);
    if inner == 1 {
        for ((yr, gr), sr) in y
            .chunks_exact(len)
            .zip(g.chunks_exact(len))
            .zip(slot.chunks_exact_mut(len))
        {
            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
            for ((s, y), g) in sr.iter_mut().zip(yr).zip(gr) {
                *s += y * (g - dot);
            }
        }
        return;
    }
    for_each_lane(out.shape(), axis, |lane| {
        let idx: Vec<usize> = lane.collect();
        let dot: f64 = idx.iter().map(|&i| y[i] * g[i]).sum();
        for &i in &idx {
            slot[i] += y[i] * (g[i] - dot);
        }
    });
}

pub(crate) fn layer_norm_backward(
    tape: &Tape,
    (x, gain, bias): (Var, Var, Var),
    axis: usize,
    xhat: &[f64],
    rstd: &[f64],
    g: &[f64],
    grads: &mut Grads,
) {
    let shape = tape.shape(x).to_vec();
    let len = shape[axis];
    let gv = tape.data(gain);
    if grads.needs(gain) || grads.needs(bias) {
        let mut dg = vec![0.0; len];
        let mut db = vec![0.0; len];
        for_each_lane(&shape, axis, |lane| {
            for (j, i) in lane.enumerate() {
                dg[j] += g[i] * xhat[i];
                db[j] += g[i];
            }
        });
        grads.add(gain, &dg);
        grads.add(bias, &db);
    }
    if let Some(slot) = grads.slot(x) {
        let n = len as f64;
        let mut lane_no = 0;
        for_each_lane(&shape, axis, |lane| {
            let idx: Vec<usize> = lane.collect();
            let r = rstd[lane_no];
            lane_no += 1;
            let mut mean_d = 0.0;
            let mut mean_dx = 0.0;
            for (j, &i) in idx.iter().enumerate() {
                let d = g[i] * gv[j];
                mean_d += d;
                mean_dx += d * xhat[i];
            }
            mean_d /= n;
            mean_dx /= n;
            for (j, &i) in idx.iter().enumerate() {
                let d = g[i] * gv[j];
                slot[i] += r * (d - mean_d - xhat[i] * mean_dx);
            }
        });
    }
}
