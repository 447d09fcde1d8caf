//! Negative SI-SDR on the tape, and the pairwise cost matrix.

use sepforge_autodiff::{CustomBackward, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::signal::metrics::{centered_reference, project, ratio_db, SI_SDR_EPS};
use crate::signal::{si_sdr, Waveform};

#[derive(Debug)]
struct NegSiSdr {
    reference: Vec<f64>,
}

impl CustomBackward for NegSiSdr {
    fn name(&self) -> &'static str {
        "neg_si_sdr"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let e = centered(inputs[0].data());
        let r = &self.reference;
        let p = project(&e, r);
        let tiny = f64::MIN_POSITIVE;
        let c = -g[0] * 10.0 / std::f64::consts::LN_10;
        let num = p.target + tiny;
        let den = p.residual + SI_SDR_EPS * p.target + tiny;
        let mut grad: Vec<f64> = e
            .iter()
            .zip(r)
            .map(|(e, r)| {
                let dt = 2.0 * p.alpha * r;
                let dres = 2.0 * (e - p.alpha * r);
                c * (dt / num - (dres + SI_SDR_EPS * dt) / den)
            })
            .collect();
        let mean = grad.iter().sum::<f64>() / grad.len() as f64;
        grad.iter_mut().for_each(|v| *v -= mean);
        vec![Some(grad)]
    }
}

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// `-si_sdr(estimate, reference)` as a `[1]` tape value.
pub fn neg_si_sdr(tape: &mut Tape, estimate: Var, reference: &[f64]) -> Result<Var> {
    let est = tape.data(estimate);
    if est.len() != reference.len() || est.is_empty() {
        return Err(Error::signal(format!(
            "SI-SDR needs equal non-zero lengths, got {} and {}",
            est.len(),
            reference.len()
        )));
    }
    let r = centered_reference(reference)?;
    let value = -ratio_db(&project(&centered(est), &r));
    let op = NegSiSdr { reference: r };
    Ok(tape.custom(&[estimate], Tensor::vector(vec![value])?, Box::new(op)))
}

/// Tape entries `(i, j) = -si_sdr(estimate_i, target_j)`.
pub fn pairwise_neg_sisdr_vars(tape: &mut Tape, estimates: &[Var], targets: &[Waveform]) -> Result<Vec<Vec<Var>>> {
    estimates
        .iter()
        .map(|&e| targets.iter().map(|t| neg_si_sdr(tape, e, t.samples())).collect())
        .collect()
}

/// Entry `(i, j) = -si_sdr(estimate_i, target_j)`.
pub fn pairwise_neg_sisdr_matrix(estimates: &[Waveform], targets: &[Waveform]) -> Result<Vec<Vec<f64>>> {
    estimates
        .iter()
        .map(|e| targets.iter().map(|t| Ok(-si_sdr(e, t)?)).collect())
        .collect()
}
