//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates the forward closure, so it is an
//! oracle independent of every backward rule.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Finite-difference step.
    pub step: f64,
    /// Lower bound on the relative-error denominator, so that gradients
    /// that are zero on both sides do not divide by zero.
    pub floor: f64,
    /// Maximum number of elements probed per input (evenly spaced).
    pub max_probes: usize,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            max_probes: usize::MAX,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input, element, analytic, numeric)` of the worst probe.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub probes: usize,
}

impl GradCheck {
    pub fn with_probes(mut self, max_probes: usize) -> Self {
        self.max_probes = max_probes;
        self
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    /// Compares the tape gradient of the scalar `f(inputs)` with central
    /// differences for every (probed) element of every input.
    pub fn run<F>(&self, inputs: &[Tensor], f: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        tape.backward(loss)?;
        let analytic: Vec<Vec<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(v, t)| {
                tape.grad(*v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; t.numel()])
            })
            .collect();

        let eval = |probe: &[Tensor]| -> Result<f64> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = probe.iter().map(|t| tape.constant(t.clone())).collect();
            let out = f(&mut tape, &vars)?;
            Ok(tape.data(out)[0])
        };

        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            probes: 0,
        };
        let mut probe: Vec<Tensor> = inputs.to_vec();
        for (which, input) in inputs.iter().enumerate() {
            let n = input.numel();
            let stride = n.div_ceil(self.max_probes.min(n)).max(1);
            for elem in (0..n).step_by(stride) {
                let orig = input.data()[elem];
                probe[which].data_mut()[elem] = orig + self.step;
                let up = eval(&probe)?;
                probe[which].data_mut()[elem] = orig - self.step;
                let down = eval(&probe)?;
                probe[which].data_mut()[elem] = orig;
                let numeric = (up - down) / (2.0 * self.step);
                let a = analytic[which][elem];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(self.floor);
                report.probes += 1;
                if rel >= report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some((which, elem, a, numeric));
                }
            }
        }
        Ok(report)
    }
}
