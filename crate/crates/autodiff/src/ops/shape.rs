use crate::error::{AutodiffError, Result};
use crate::tape::{Grads, Op, Tape, Var};
use crate::tensor::{split_axis, Tensor};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For each output position of `permute(shape, axes)`, the flat source index.
fn permute_index(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let src_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let gather: Vec<usize> = axes.iter().map(|&a| src_strides[a]).collect();
    let n: usize = shape.iter().product();
    let mut idx = Vec::with_capacity(n);
    let mut counter = vec![0usize; out_shape.len()];
    let mut offset = 0usize;
    for _ in 0..n {
        idx.push(offset);
        for d in (0..counter.len()).rev() {
            counter[d] += 1;
            offset += gather[d];
            if counter[d] < out_shape[d] {
                break;
            }
            offset -= gather[d] * out_shape[d];
            counter[d] = 0;
        }
    }
    idx
}

impl Tape {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?.with_requires_grad(false);
        Ok(self.push("reshape", value, Op::Reshape(x), &[x]))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len()
            || axes
                .iter()
                .any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true))
        {
            return Err(AutodiffError::Invalid {
                op: "permute",
                msg: format!("{axes:?} is not a permutation of the axes of {shape:?}"),
            });
        }
        let src = self.data(x);
        let data = permute_index(&shape, axes).into_iter().map(|i| src[i]).collect();
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.push("permute", value, Op::Permute { x, axes: axes.to_vec() }, &[x]))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(AutodiffError::InvalidAxis {
                op: "narrow",
                axis,
                rank: shape.len(),
            });
        }
        if len == 0 || start + len > shape[axis] {
            return Err(AutodiffError::Invalid {
                op: "narrow",
                msg: format!("range {start}..{} outside axis of length {}", start + len, shape[axis]),
            });
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let src = self.data(x);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.push("narrow", value, Op::Narrow { x, axis, start }, &[x]))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*inputs.first().ok_or(AutodiffError::Invalid {
                op: "concat",
                msg: "no inputs".into(),
            })?)
            .to_vec();
        if axis >= first.len() {
            return Err(AutodiffError::InvalidAxis {
                op: "concat",
                axis,
                rank: first.len(),
            });
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible =
                s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let len = self.shape(*v)[axis];
                data.extend_from_slice(&self.data(*v)[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut out_shape = first;
        out_shape[axis] = total;
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.push(
            "concat",
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Trims or right-pads with zeros along the last axis to length `len`.
    pub fn resize_last(&mut self, x: Var, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let cur = *shape.last().expect("non-empty shape");
        let src = self.data(x);
        let keep = cur.min(len);
        let rows = src.len() / cur;
        let mut data = vec![0.0; rows * len];
        for r in 0..rows {
            data[r * len..r * len + keep].copy_from_slice(&src[r * cur..r * cur + keep]);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().expect("non-empty shape") = len;
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.push("resize_last", value, Op::ResizeLast { x }, &[x]))
    }
}

pub(crate) fn permute_backward(out: &Tensor, x: Var, axes: &[usize], g: &[f64], grads: &mut Grads) {
    let Some(slot) = grads.slot(x) else {
        return;
    };
    // Recover the input shape from the output shape and the permutation.
    let mut in_shape = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        in_shape[a] = out.shape()[i];
    }
    for (g, src) in g.iter().zip(permute_index(&in_shape, axes)) {
        slot[src] += g;
    }
}

pub(crate) fn narrow_backward(
    tape: &Tape,
    out: &Tensor,
    x: Var,
    axis: usize,
    start: usize,
    g: &[f64],
    grads: &mut Grads,
) {
    let full = tape.shape(x)[axis];
    let (outer, len, inner) = split_axis(out.shape(), axis);
    let Some(slot) = grads.slot(x) else {
        return;
    };
    for o in 0..outer {
        let base = o * full * inner + start * inner;
        let gs = &g[o * len * inner..(o + 1) * len * inner];
        slot[base..base + len * inner]
            .iter_mut()
            .zip(gs)
            .for_each(|(s, g)| *s += g);
    }
}

pub(crate) fn concat_backward(tape: &Tape, out: &Tensor, inputs: &[Var], axis: usize, g: &[f64], grads: &mut Grads) {
    let (outer, total, inner) = split_axis(out.shape(), axis);
    let mut offset = 0;
    for v in inputs {
        let len = tape.shape(*v)[axis];
        if let Some(slot) = grads.slot(*v) {
            for o in 0..outer {
                let src = &g[o * total * inner + offset * inner..o * total * inner + (offset + len) * inner];
                slot[o * len * inner..(o + 1) * len * inner]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(s, g)| *s += g);
            }
        }
        offset += len;
    }
}

pub(crate) fn resize_last_backward(tape: &Tape, out: &Tensor, x: Var, g: &[f64], grads: &mut Grads) {
    let cur = *tape.shape(x).last().expect("non-empty shape");
    let len = *out.shape().last().expect("non-empty shape");
    let keep = cur.min(len);
    let Some(slot) = grads.slot(x) else {
        return;
    };
    let rows = slot.len() / cur;
    for r in 0..rows {
        slot[r * cur..r * cur + keep]
            .iter_mut()
            .zip(&g[r * len..r * len + keep])
            .for_each(|(s, g)| *s += g);
    }
}
