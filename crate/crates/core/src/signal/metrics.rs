use super::Waveform;
use crate::error::{Error, Result};

/// Relative floor on the distortion energy. An exact match scores
/// `10 * log10(1 / SI_SDR_EPS)` = 120 dB regardless of signal scale.
pub const SI_SDR_EPS: f64 = 1e-12;

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::signal(format!(
            "SI-SDR needs equal non-zero lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Mean-removed reference, or an error when the reference is constant.
pub(crate) fn centered_reference(reference: &[f64]) -> Result<Vec<f64>> {
    let r = centered(reference);
    let peak = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if residual <= 1e-12 * peak || residual == 0.0 {
        return Err(Error::signal("reference is constant; SI-SDR projection is undefined"));
    }
    Ok(r)
}

/// Terms of the SI-SDR ratio for mean-removed `e` and `r`.
pub(crate) struct Projection {
    pub alpha: f64,
    /// Energy of the scaled reference `alpha * r`.
    pub target: f64,
    /// Energy of `e - alpha * r`.
    pub residual: f64,
}

pub(crate) fn project(e: &[f64], r: &[f64]) -> Projection {
    let alpha = dot(e, r) / dot(r, r);
    let target = alpha * alpha * dot(r, r);
    let residual = e.iter().zip(r).map(|(e, r)| (e - alpha * r).powi(2)).sum();
    Projection {
        alpha,
        target,
        residual,
    }
}

pub(crate) fn ratio_db(p: &Projection) -> f64 {
    let tiny = f64::MIN_POSITIVE;
    10.0 * ((p.target + tiny) / (p.residual + SI_SDR_EPS * p.target + tiny)).log10()
}

/// Scale-invariant signal-to-distortion ratio in dB.
pub fn si_sdr_slices(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(estimate, reference)?;
    let r = centered_reference(reference)?;
    let e = centered(estimate);
    Ok(ratio_db(&project(&e, &r)))
}

pub fn si_sdr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    si_sdr_slices(estimate.samples(), reference.samples())
}

/// SI-SDR gain of `estimate` over the unprocessed `mixture`.
pub fn si_sdr_improvement(estimate: &Waveform, reference: &Waveform, mixture: &Waveform) -> Result<f64> {
    Ok(si_sdr(estimate, reference)? - si_sdr(mixture, reference)?)
}

/// Plain mean-removed SNR (no projection), for diagnostics.
pub fn snr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    check_lengths(estimate.samples(), reference.samples())?;
    let r = centered_reference(reference.samples())?;
    let e = centered(estimate.samples());
    let noise: f64 = e.iter().zip(&r).map(|(e, r)| (e - r).powi(2)).sum();
    Ok(10.0 * (dot(&r, &r) / (noise + SI_SDR_EPS * dot(&r, &r))).log10())
}
