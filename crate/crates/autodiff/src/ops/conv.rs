use crate::error::{AutodiffError, Result};
use crate::tape::{Grads, Op, Tape, Var};
use crate::tensor::Tensor;

fn dims2(tape: &Tape, v: Var, op: &'static str, other: Var) -> Result<(usize, usize)> {
    match *tape.shape(v) {
        [a, b] => Ok((a, b)),
        _ => Err(AutodiffError::ShapeMismatch {
            op,
            lhs: tape.shape(v).to_vec(),
            rhs: tape.shape(other).to_vec(),
        }),
    }
}

fn dims3(tape: &Tape, v: Var, op: &'static str, other: Var) -> Result<(usize, usize, usize)> {
    match *tape.shape(v) {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(AutodiffError::ShapeMismatch {
            op,
            lhs: tape.shape(other).to_vec(),
            rhs: tape.shape(v).to_vec(),
        }),
    }
}

fn check_stride(op: &'static str, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(AutodiffError::Invalid {
            op,
            msg: "stride must be positive".into(),
        });
    }
    Ok(())
}

impl Tape {
    /// Strided cross-correlation (no kernel flip).
    ///
    /// `input` is `[c_in, t]`, `kernels` is `[c_out, c_in, w]`; the output
    /// is `[c_out, (t - w) / stride + 1]`.
    pub fn conv1d(&mut self, input: Var, kernels: Var, stride: usize) -> Result<Var> {
        check_stride("conv1d", stride)?;
        let (c_in, t) = dims2(self, input, "conv1d", kernels)?;
        let (c_out, kc, w) = dims3(self, kernels, "conv1d", input)?;
        if kc != c_in {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv1d",
                lhs: self.shape(input).to_vec(),
                rhs: self.shape(kernels).to_vec(),
            });
        }
        if t < w {
            return Err(AutodiffError::InputTooShort {
                op: "conv1d",
                len: t,
                width: w,
            });
        }
        let l = (t - w) / stride + 1;
        let (x, k) = (self.data(input), self.data(kernels));
        let mut out = vec![0.0; c_out * l];
        for o in 0..c_out {
            let row = &mut out[o * l..(o + 1) * l];
            for c in 0..c_in {
                let kern = &k[(o * c_in + c) * w..(o * c_in + c + 1) * w];
                let xs = &x[c * t..(c + 1) * t];
                for (j, y) in row.iter_mut().enumerate() {
                    let frame = &xs[j * stride..j * stride + w];
                    *y += frame.iter().zip(kern).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        let value = Tensor::new(&[c_out, l], out)?;
        Ok(self.push(
            "conv1d",
            value,
            Op::Conv1d { input, kernels, stride },
            &[input, kernels],
        ))
    }

    /// Adjoint of [`Tape::conv1d`] with respect to its input.
    ///
    /// `input` is `[c_in, l]`, `kernels` is `[c_in, c_out, w]`; the output
    /// is `[c_out, (l - 1) * stride + w]`.
    pub fn conv1d_transpose(&mut self, input: Var, kernels: Var, stride: usize) -> Result<Var> {
        check_stride("conv1d_transpose", stride)?;
        let (c_in, l) = dims2(self, input, "conv1d_transpose", kernels)?;
        let (kc, c_out, w) = dims3(self, kernels, "conv1d_transpose", input)?;
        if kc != c_in {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv1d_transpose",
                lhs: self.shape(input).to_vec(),
                rhs: self.shape(kernels).to_vec(),
            });
        }
        let t = (l - 1) * stride + w;
        let (x, k) = (self.data(input), self.data(kernels));
        let mut out = vec![0.0; c_out * t];
        for c in 0..c_in {
            let xs = &x[c * l..(c + 1) * l];
            for o in 0..c_out {
                let kern = &k[(c * c_out + o) * w..(c * c_out + o + 1) * w];
                let ys = &mut out[o * t..(o + 1) * t];
                for (j, xv) in xs.iter().enumerate() {
                    let frame = &mut ys[j * stride..j * stride + w];
                    frame.iter_mut().zip(kern).for_each(|(y, k)| *y += xv * k);
                }
            }
        }
        let value = Tensor::new(&[c_out, t], out)?;
        Ok(self.push(
            "conv1d_transpose",
            value,
            Op::Conv1dTranspose { input, kernels, stride },
            &[input, kernels],
        ))
    }
}

pub(crate) fn conv1d_backward(tape: &Tape, input: Var, kernels: Var, stride: usize, g: &[f64], grads: &mut Grads) {
    let (c_in, t) = (tape.shape(input)[0], tape.shape(input)[1]);
    let (c_out, w) = (tape.shape(kernels)[0], tape.shape(kernels)[2]);
    let l = g.len() / c_out;
    let (x, k) = (tape.data(input), tape.data(kernels));
    if let Some(slot) = grads.slot(input) {
        for o in 0..c_out {
            let gr = &g[o * l..(o + 1) * l];
            for c in 0..c_in {
                let kern = &k[(o * c_in + c) * w..(o * c_in + c + 1) * w];
                let dx = &mut slot[c * t..(c + 1) * t];
                for (j, gv) in gr.iter().enumerate() {
                    let frame = &mut dx[j * stride..j * stride + w];
                    frame.iter_mut().zip(kern).for_each(|(d, k)| *d += gv * k);
                }
            }
        }
    }
    if let Some(slot) = grads.slot(kernels) {
        for o in 0..c_out {
            let gr = &g[o * l..(o + 1) * l];
            for c in 0..c_in {
                let dk = &mut slot[(o * c_in + c) * w..(o * c_in + c + 1) * w];
                let xs = &x[c * t..(c + 1) * t];
                for (j, gv) in gr.iter().enumerate() {
                    let frame = &xs[j * stride..j * stride + w];
                    dk.iter_mut().zip(frame).for_each(|(d, x)| *d += gv * x);
                }
            }
        }
    }
}

pub(crate) fn conv1d_transpose_backward(
    tape: &Tape,
    input: Var,
    kernels: Var,
    stride: usize,
    g: &[f64],
    grads: &mut Grads,
) {
    let (c_in, l) = (tape.shape(input)[0], tape.shape(input)[1]);
    let (c_out, w) = (tape.shape(kernels)[1], tape.shape(kernels)[2]);
    let t = g.len() / c_out;
    let (x, k) = (tape.data(input), tape.data(kernels));
    if let Some(slot) = grads.slot(input) {
        for c in 0..c_in {
            let dx = &mut slot[c * l..(c + 1) * l];
            for o in 0..c_out {
                let kern = &k[(c * c_out + o) * w..(c * c_out + o + 1) * w];
                let gs = &g[o * t..(o + 1) * t];
                for (j, d) in dx.iter_mut().enumerate() {
                    let frame = &gs[j * stride..j * stride + w];
                    *d += frame.iter().zip(kern).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
    if let Some(slot) = grads.slot(kernels) {
        for c in 0..c_in {
            let xs = &x[c * l..(c + 1) * l];
            for o in 0..c_out {
                let dk = &mut slot[(c * c_out + o) * w..(c * c_out + o + 1) * w];
                let gs = &g[o * t..(o + 1) * t];
                for (j, xv) in xs.iter().enumerate() {
                    let frame = &gs[j * stride..j * stride + w];
                    dk.iter_mut().zip(frame).for_each(|(d, g)| *d += xv * g);
                }
            }
        }
    }
}
