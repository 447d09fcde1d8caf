use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sepforge_core::checkpoint;
use sepforge_core::signal::manifest::{load_manifest, ManifestRecord};
use sepforge_core::train::{probe_layers, score_estimates, EvalReport};
use sepforge_core::{MixtureExample, Model};

use super::{real, write};
use crate::{Estimates, EvalArgs, ProbeArgs, UsageError};

pub const EVAL_FILE: &str = "eval.csv";
pub const SUMMARY_FILE: &str = "eval_summary.csv";
pub const OVERLAP_FILE: &str = "eval_by_overlap.csv";
pub const PROBE_FILE: &str = "probe_layers.csv";

fn load_model(path: &Path) -> Result<Model> {
    Ok(checkpoint::load(path)?.0)
}

fn load_examples(manifest: &Path, model: Option<&Model>) -> Result<(Vec<ManifestRecord>, Vec<MixtureExample>)> {
    let (records, examples): (Vec<_>, Vec<_>) = load_manifest(manifest)?.into_iter().unzip();
    if examples.is_empty() {
        bail!(UsageError(format!("{} lists no examples", manifest.display())));
    }
    if let Some(m) = model {
        let c = m.config.separator.n_sources;
        if examples.iter().any(|ex| ex.num_sources() != c) {
            bail!(UsageError(format!(
                "{} has examples whose source count differs from the model's {c}",
                manifest.display()
            )));
        }
    }
    Ok((records, examples))
}

/// Per-example, summary and (for sparse sets) per-overlap-ratio tables.
pub fn report_csvs(records: &[ManifestRecord], report: &EvalReport) -> (String, String, Option<String>) {
    let mut per = String::from("mixture,permutation,loss,si_sdri,overlap_ratio\n");
    for (r, e) in records.iter().zip(&report.examples) {
        let perm: Vec<String> = e.permutation.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(
            per,
            "{},{},{},{},{}",
            r.mixture,
            perm.join(" "),
            real(e.loss),
            real(e.si_sdri),
            e.overlap_ratio.map(real).unwrap_or_default()
        );
    }
    let summary = format!(
        "examples,mean_loss,mean_si_sdri\n{},{},{}\n",
        report.examples.len(),
        real(report.mean_loss),
        real(report.mean_si_sdri)
    );
    let groups = report.by_overlap_ratio();
    let overlap = (!groups.is_empty()).then(|| {
        let mut out = String::from("overlap_ratio,examples,si_sdri\n");
        for (ratio, n, mean) in groups {
            let _ = writeln!(out, "{},{n},{}", real(ratio), real(mean));
        }
        out
    });
    (per, summary, overlap)
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let model = match (&args.checkpoint, args.estimates) {
        (Some(p), Estimates::Model) => Some(load_model(p)?),
        (None, Estimates::Model) => bail!(UsageError("--checkpoint is required to evaluate a model".into())),
        _ => None,
    };
    let (records, examples) = load_examples(&args.manifest, model.as_ref())?;
    let depth = match (&model, args.early_break) {
        (Some(m), Some(i)) if (1..=m.n_blocks()).contains(&i) => i,
        (Some(m), Some(i)) => bail!(UsageError(format!("--early-break {i} outside 1..={}", m.n_blocks()))),
        (Some(m), None) => m.n_blocks(),
        (None, _) => 0,
    };
    let scores = examples
        .iter()
        .map(|ex| {
            let estimates = match (&model, args.estimates) {
                (Some(m), _) => m.separate(&ex.mixture, depth)?,
                (None, Estimates::Oracle) => ex.sources.clone(),
                (None, _) => vec![ex.mixture.clone(); ex.num_sources()],
            };
            Ok(score_estimates(&estimates, ex)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::from_scores(scores)?;
    let (per, summary, overlap) = report_csvs(&records, &report);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write(&args.out.join(EVAL_FILE), per)?;
    write(&args.out.join(SUMMARY_FILE), summary)?;
    if let Some(o) = overlap {
        write(&args.out.join(OVERLAP_FILE), o)?;
    }
    println!(
        "{} examples: mean SI-SDRi {:.3} dB (loss {:.4})",
        report.examples.len(),
        report.mean_si_sdri,
        report.mean_loss
    );
    for (ratio, n, mean) in report.by_overlap_ratio() {
        println!("  overlap {ratio:.2}: {mean:.3} dB over {n}");
    }
    Ok(())
}

pub fn probe_csv(rows: &[(usize, f64)]) -> String {
    let mut out = String::from("layer_index,si_sdri\n");
    for (i, v) in rows {
        let _ = writeln!(out, "{i},{}", real(*v));
    }
    out
}

pub fn probe(args: &ProbeArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let (_, examples) = load_examples(&args.manifest, Some(&model))?;
    let rows = probe_layers(&model, &examples)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write(&args.out.join(PROBE_FILE), probe_csv(&rows))?;
    for (i, v) in &rows {
        println!("layer {i}: {v:.3} dB");
    }
    Ok(())
}
