use crate::error::{AutodiffError, Result};
use crate::gemm::{gemm, MatRef};
use crate::tape::{Grads, Op, Tape, Var};
use crate::tensor::Tensor;

impl Tape {
    /// Matrix product of `[m, k] x [k, n]`, or the batched product of
    /// `[b, m, k] x [b, k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let dims = match (sa.as_slice(), sb.as_slice()) {
            (&[m, k], &[k2, n]) if k == k2 => (1, m, k, n),
            (&[ba, m, k], &[bb, k2, n]) if ba == bb && k == k2 => (ba, m, k, n),
            _ => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "matmul",
                    lhs: sa,
                    rhs: sb,
                })
            }
        };
        let (batch, m, k, n) = dims;
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.data(a), self.data(b));
        for i in 0..batch {
            gemm(
                1.0,
                MatRef::new(&da[i * m * k..(i + 1) * m * k], m, k),
                MatRef::new(&db[i * k * n..(i + 1) * k * n], k, n),
                0.0,
                &mut out[i * m * n..(i + 1) * m * n],
                n,
            );
        }
        let shape = if sa.len() == 2 { vec![m, n] } else { vec![batch, m, n] };
        let value = Tensor::new(&shape, out)?;
        Ok(self.push("matmul", value, Op::MatMul { a, b, batch, m, k, n }, &[a, b]))
    }
}

pub(crate) fn backward(
    tape: &Tape,
    a: Var,
    b: Var,
    (batch, m, k, n): (usize, usize, usize, usize),
    g: &[f64],
    grads: &mut Grads,
) {
    let (da, db) = (tape.data(a), tape.data(b));
    if let Some(slot) = grads.slot(a) {
        // dA = dY * B^T
        for i in 0..batch {
            gemm(
                1.0,
                MatRef::new(&g[i * m * n..(i + 1) * m * n], m, n),
                MatRef::new(&db[i * k * n..(i + 1) * k * n], k, n).t(),
                1.0,
                &mut slot[i * m * k..(i + 1) * m * k],
                k,
            );
        }
    }
    if let Some(slot) = grads.slot(b) {
        // dB = A^T * dY
        for i in 0..batch {
            gemm(
                1.0,
                MatRef::new(&da[i * m * k..(i + 1) * m * k], m, k).t(),
                MatRef::new(&g[i * m * n..(i + 1) * m * n], m, n),
                1.0,
                &mut slot[i * k * n..(i + 1) * k * n],
                n,
            );
        }
    }
}
