use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use sepforge_core::rng::stream_rng;
use sepforge_core::signal::manifest::{write_manifest, ManifestRecord};
use sepforge_core::signal::wav::{write_wav, WavFormat};
use sepforge_core::signal::{synth_mixture, synth_sparse_mixture};
use sepforge_core::MixtureExample;

use super::prepare_out_dir;
use crate::config::ExperimentConfig;
use crate::SynthArgs;

pub fn run(args: &SynthArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.validate()?;
    }
    let dir = args.out.clone().unwrap_or_else(|| cfg.data.dir.clone());
    prepare_out_dir(&dir, args.force)?;
    let data = &cfg.data;
    let splits = [
        ("train", data.train_examples),
        ("val", data.val_examples),
        ("test", data.test_examples),
    ];
    for (split, count) in splits {
        let examples = (0..count as u64).map(|i| {
            let mut rng = stream_rng(cfg.seed, &format!("data-{split}"), i);
            synth_mixture(&data.synth, &mut rng)
        });
        write_split(&dir, split, examples, data.wav_format)?;
        eprintln!("{split}: {count} mixtures");
    }
    if !data.sparse_ratios.is_empty() {
        let mut all = Vec::new();
        for (k, &ratio) in data.sparse_ratios.iter().enumerate() {
            let name = format!("sparse_{:03}", (ratio * 100.0).round() as u32);
            let examples = (0..data.sparse_examples as u64).map(|i| {
                let mut rng = stream_rng(cfg.seed, "data-sparse", ((k as u64) << 32) | i);
                synth_sparse_mixture(&data.synth, ratio, &mut rng)
            });
            all.extend(write_split(&dir, &name, examples, data.wav_format)?);
            eprintln!("{name}: {} mixtures at overlap ratio {ratio}", data.sparse_examples);
        }
        write_manifest(dir.join("sparse.jsonl"), &all)?;
    }
    Ok(())
}

/// Writes `<split>/<i>_mix.wav`, `<split>/<i>_s<k>.wav` and `<split>.jsonl`.
fn write_split(
    dir: &Path,
    split: &str,
    examples: impl Iterator<Item = sepforge_core::Result<MixtureExample>>,
    format: WavFormat,
) -> Result<Vec<ManifestRecord>> {
    let sub = dir.join(split);
    fs::create_dir_all(&sub).with_context(|| format!("creating {}", sub.display()))?;
    let mut records = Vec::new();
    for (i, ex) in examples.enumerate() {
        let ex = ex?;
        let mixture = format!("{split}/{i:05}_mix.wav");
        write_wav(dir.join(&mixture), &ex.mixture, format)?;
        let mut sources = Vec::new();
        for (k, s) in ex.sources.iter().enumerate() {
            let name = format!("{split}/{i:05}_s{}.wav", k + 1);
            write_wav(dir.join(&name), s, format)?;
            sources.push(name);
        }
        records.push(ManifestRecord {
            mixture,
            sources,
            overlap_ratio: ex.overlap_ratio,
        });
    }
    write_manifest(dir.join(format!("{split}.jsonl")), &records)?;
    Ok(records)
}
