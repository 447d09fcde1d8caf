use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepforge_core::signal::manifest::{load_manifest, write_manifest, ManifestRecord};
use sepforge_core::signal::wav::{write_wav, WavFormat};
use sepforge_core::signal::{
    si_sdr, si_sdr_improvement, synth_mixture, synth_sources, synth_sparse_mixture, SynthConfig, SI_SDR_EPS,
};
use sepforge_core::Waveform;

fn w(x: Vec<f64>) -> Waveform {
    Waveform::from_samples(x).unwrap()
}

/// Straight transcription of the definition: explicit target vector,
/// explicit residual vector.
fn si_sdr_oracle(est: &[f64], reference: &[f64]) -> f64 {
    let n = est.len() as f64;
    let me = est.iter().sum::<f64>() / n;
    let mr = reference.iter().sum::<f64>() / n;
    let e: Vec<f64> = est.iter().map(|v| v - me).collect();
    let r: Vec<f64> = reference.iter().map(|v| v - mr).collect();
    let alpha = e.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / r.iter().map(|v| v * v).sum::<f64>();
    let target: Vec<f64> = r.iter().map(|v| alpha * v).collect();
    let t2: f64 = target.iter().map(|v| v * v).sum();
    let d2: f64 = e.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
    10.0 * (t2 / (d2 + SI_SDR_EPS * t2)).log10()
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn hand_case_matches_oracle() {
    let r = [1.0, -1.0, 1.0, -1.0];
    let e = [1.0, -1.0, 1.0, 1.0];
    let got = si_sdr(&w(e.to_vec()), &w(r.to_vec())).unwrap();
    assert!((got - (-3.0103)).abs() < 1e-4, "{got}");
    assert!((got - si_sdr_oracle(&e, &r)).abs() < 1e-12);
}

#[test]
fn agrees_with_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.gen_range(2..300);
        let r = random_signal(&mut rng, n);
        let e = random_signal(&mut rng, n);
        let got = si_sdr(&w(e.clone()), &w(r.clone())).unwrap();
        assert!((got - si_sdr_oracle(&e, &r)).abs() < 1e-9);
    }
}

#[test]
fn scale_and_offset_invariance_over_1000_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let n = rng.gen_range(8..256);
        let r = random_signal(&mut rng, n);
        let noise = random_signal(&mut rng, n);
        let mix = rng.gen_range(0.0..2.0);
        let e: Vec<f64> = r.iter().zip(&noise).map(|(a, b)| a + mix * b).collect();
        let base = si_sdr(&w(e.clone()), &w(r.clone())).unwrap();
        let alpha = rng.gen_range(0.01..100.0) * if rng.gen() { 1.0 } else { -1.0 };
        let scaled = si_sdr(&w(e.iter().map(|v| alpha * v).collect()), &w(r.clone())).unwrap();
        let kappa = rng.gen_range(-10.0..10.0);
        let shifted = si_sdr(&w(e.iter().map(|v| v + kappa).collect()), &w(r.clone())).unwrap();
        assert!((scaled - base).abs() < 1e-9, "{scaled} vs {base}");
        assert!((shifted - base).abs() < 1e-9, "{shifted} vs {base}");
    }
}

#[test]
fn exact_match_is_capped_and_doubling_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let r = random_signal(&mut rng, 64);
    let same = si_sdr(&w(r.clone()), &w(r.clone())).unwrap();
    let doubled = si_sdr(&w(r.iter().map(|v| 2.0 * v).collect()), &w(r.clone())).unwrap();
    assert!(same >= 100.0);
    assert!((same - doubled).abs() < 1e-9);
}

#[test]
fn orthogonal_noise_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 512;
    let mut r = random_signal(&mut rng, n);
    let mr = r.iter().sum::<f64>() / n as f64;
    r.iter_mut().for_each(|v| *v -= mr);
    // Gram-Schmidt a zero-mean noise vector against r and rescale to r's energy.
    let mut nz = random_signal(&mut rng, n);
    let mn = nz.iter().sum::<f64>() / n as f64;
    nz.iter_mut().for_each(|v| *v -= mn);
    let rr: f64 = r.iter().map(|v| v * v).sum();
    let proj = nz.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
    nz.iter_mut().zip(&r).for_each(|(v, b)| *v -= proj * b);
    let k = (rr / nz.iter().map(|v| v * v).sum::<f64>()).sqrt();
    nz.iter_mut().for_each(|v| *v *= k);
    for sigma in [0.01, 0.1, 0.5, 1.0, 3.0, 10.0] {
        let e: Vec<f64> = r.iter().zip(&nz).map(|(a, b)| a + sigma * b).collect();
        let got = si_sdr(&w(e), &w(r.clone())).unwrap();
        assert!((got + 20.0 * f64::log10(sigma)).abs() < 1e-6, "sigma {sigma}: {got}");
    }
}

#[test]
fn improvement_is_the_difference_of_two_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let ex = synth_mixture(&SynthConfig::default(), &mut rng).unwrap();
    let est = ex.sources[0]
        .samples()
        .iter()
        .zip(ex.mixture.samples())
        .map(|(s, m)| 0.8 * s + 0.1 * m)
        .collect();
    let est = w(est);
    let got = si_sdr_improvement(&est, &ex.sources[0], &ex.mixture).unwrap();
    let want = si_sdr(&est, &ex.sources[0]).unwrap() - si_sdr(&ex.mixture, &ex.sources[0]).unwrap();
    assert_eq!(got, want);
    assert_eq!(
        si_sdr_improvement(&ex.mixture, &ex.sources[0], &ex.mixture).unwrap(),
        0.0
    );
    let perfect = si_sdr_improvement(&ex.sources[0], &ex.sources[0], &ex.mixture).unwrap();
    assert!(perfect >= 100.0 - si_sdr(&ex.mixture, &ex.sources[0]).unwrap());
}

/// Naive DFT energy fraction of `x` between `lo` and `hi` Hz.
fn band_energy_fraction(x: &[f64], lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let (mut inside, mut total) = (0.0, 0.0);
    for k in 0..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        let step = std::f64::consts::TAU * k as f64 / n as f64;
        for (i, v) in x.iter().enumerate() {
            let ph = step * i as f64;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        let e = re * re + im * im;
        let hz = k as f64 * 8000.0 / n as f64;
        total += e;
        if (lo..=hi).contains(&hz) {
            inside += e;
        }
    }
    inside / total
}

#[test]
fn low_band_source_keeps_its_energy_in_band() {
    let cfg = SynthConfig {
        duration_seconds: 0.5,
        ..SynthConfig::default()
    };
    for seed in 0..3 {
        let src = synth_sources(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let frac = band_energy_fraction(src[0].samples(), 150.0, 850.0);
        assert!(frac >= 0.95, "seed {seed}: {frac}");
    }
}

fn support_counts(ex: &sepforge_core::MixtureExample) -> (usize, usize) {
    let a = ex.sources[0].samples();
    let b = ex.sources[1].samples();
    let both = a.iter().zip(b).filter(|(x, y)| **x != 0.0 && **y != 0.0).count();
    let either = a.iter().zip(b).filter(|(x, y)| **x != 0.0 || **y != 0.0).count();
    (both, either)
}

#[test]
fn sparse_mixtures_hit_the_requested_overlap() {
    let cfg = SynthConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for ratio in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 0.37] {
        let ex = synth_sparse_mixture(&cfg, ratio, &mut rng).unwrap();
        let (both, either) = support_counts(&ex);
        let want = ratio * either as f64;
        assert!((both as f64 - want).abs() <= 1.0, "ratio {ratio}: {both}/{either}");
        assert_eq!(ex.overlap_ratio, Some(ratio));
    }
    let ex = synth_sparse_mixture(&cfg, 0.0, &mut rng).unwrap();
    let product: f64 = ex.sources[0]
        .samples()
        .iter()
        .zip(ex.sources[1].samples())
        .map(|(a, b)| (a * b).abs())
        .sum();
    assert_eq!(product, 0.0);
    let ex = synth_sparse_mixture(&cfg, 1.0, &mut rng).unwrap();
    let (both, either) = support_counts(&ex);
    assert_eq!(both, either);
}

#[test]
fn manifest_dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut records = Vec::new();
    for i in 0..3 {
        let ex = synth_mixture(&SynthConfig::default(), &mut rng).unwrap();
        let mix = format!("{i}_mix.wav");
        write_wav(dir.path().join(&mix), &ex.mixture, WavFormat::Pcm16).unwrap();
        let mut sources = Vec::new();
        for (k, s) in ex.sources.iter().enumerate() {
            let name = format!("{i}_s{k}.wav");
            write_wav(dir.path().join(&name), s, WavFormat::Pcm16).unwrap();
            sources.push(name);
        }
        records.push(ManifestRecord {
            mixture: mix,
            sources,
            overlap_ratio: None,
        });
    }
    let path = dir.path().join("train.jsonl");
    write_manifest(&path, &records).unwrap();
    let loaded = load_manifest(&path).unwrap();
    assert_eq!(loaded.len(), 3);
    assert!(loaded.iter().all(|(_, ex)| ex.num_sources() == 2 && ex.len() == 8000));
}

proptest! {
    #[test]
    fn mixtures_are_additive(seed in any::<u64>(), lo in -40.0f64..-10.0, span in 0.0f64..10.0) {
        let cfg = SynthConfig { gain_db_range: [lo, lo + span], duration_seconds: 0.05, ..SynthConfig::default() };
        let ex = synth_mixture(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for i in 0..ex.len() {
            let sum: f64 = ex.sources.iter().map(|s| s.samples()[i]).sum();
            prop_assert!((ex.mixture.samples()[i] - sum).abs() <= 1e-9);
        }
    }

    #[test]
    fn si_sdr_never_exceeds_the_cap(seed in any::<u64>(), n in 4usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_signal(&mut rng, n);
        let e = random_signal(&mut rng, n);
        let cap = -10.0 * SI_SDR_EPS.log10();
        prop_assert!(si_sdr(&w(e), &w(r)).unwrap() <= cap + 1e-9);
    }
}
