use std::fmt::Write as _;

use anyhow::{bail, Result};
use sepforge_core::train::{evaluate, MetricsRow};

use super::train::{load_split, train_config};
use super::{prepare_out_dir, real, write};
use crate::config::ExperimentConfig;
use crate::{CompareArgs, UsageError};

pub const CURVES_FILE: &str = "compare.csv";
pub const SUMMARY_FILE: &str = "compare_summary.csv";

/// First epoch whose validation SI-SDRi reaches `threshold`.
pub fn epochs_to_threshold(history: &[MetricsRow], threshold: f64) -> Option<usize> {
    history
        .iter()
        .find(|r| r.val_sisdri.is_some_and(|v| v >= threshold))
        .map(|r| r.epoch)
}

fn epoch_rows(history: &[MetricsRow]) -> Vec<&MetricsRow> {
    history.iter().filter(|r| r.val_loss.is_some()).collect()
}

pub fn run(args: &CompareArgs) -> Result<()> {
    let [a, b] = args.config.as_slice() else {
        bail!(UsageError(format!(
            "compare needs exactly two --config, got {}",
            args.config.len()
        )));
    };
    let mut configs = [ExperimentConfig::load(a)?, ExperimentConfig::load(b)?];
    if let Some(seed) = args.seed {
        for c in &mut configs {
            c.seed = seed;
            c.validate()?;
        }
    }
    if configs[0].data != configs[1].data {
        bail!(UsageError("the two configs use different datasets".into()));
    }
    if configs[0].seed != configs[1].seed {
        bail!(UsageError(format!(
            "the two configs use different seeds ({} and {})",
            configs[0].seed, configs[1].seed
        )));
    }
    prepare_out_dir(&args.out, args.force)?;

    let labels = ["a", "b"];
    let mut runs = Vec::new();
    for (cfg, label) in configs.iter().zip(labels) {
        eprintln!("run {label}");
        let mut cfg = cfg.clone();
        let out = args.out.join(label);
        cfg.out_dir = Some(out.clone());
        runs.push(train_config(&cfg, &out, args.force, false)?);
    }

    let mut curves = String::from("epoch,step,val_loss_a,val_loss_b,val_sisdri_a,val_sisdri_b\n");
    let (ea, eb) = (epoch_rows(&runs[0].state.history), epoch_rows(&runs[1].state.history));
    for k in 0..ea.len().max(eb.len()) {
        let (ra, rb) = (ea.get(k), eb.get(k));
        let cell = |r: Option<&&MetricsRow>, f: fn(&MetricsRow) -> Option<f64>| {
            r.and_then(|r| f(r)).map(real).unwrap_or_default()
        };
        let _ = writeln!(
            curves,
            "{},{},{},{},{},{}",
            k + 1,
            ra.or(rb).map(|r| r.step).unwrap_or_default(),
            cell(ra, |r| r.val_loss),
            cell(rb, |r| r.val_loss),
            cell(ra, |r| r.val_sisdri),
            cell(rb, |r| r.val_sisdri),
        );
    }
    write(&args.out.join(CURVES_FILE), curves)?;

    let test_set = if configs[0].data.manifest("test").is_file() {
        Some(load_split(&configs[0], "test")?)
    } else {
        None
    };
    let mut summary = String::from("run,config,final_val_sisdri,test_sisdri,epochs_to_threshold\n");
    for ((run, label), path) in runs.iter().zip(labels).zip([a, b]) {
        let final_val = run.state.history.iter().rev().find_map(|r| r.val_sisdri);
        let test = match &test_set {
            Some(t) => Some(evaluate(&run.model, t, run.model.n_blocks())?.mean_si_sdri),
            None => None,
        };
        let reached = epochs_to_threshold(&run.state.history, args.threshold);
        let _ = writeln!(
            summary,
            "{label},{},{},{},{}",
            path.display(),
            final_val.map(real).unwrap_or_default(),
            test.map(real).unwrap_or_default(),
            reached.map(|e| e.to_string()).unwrap_or_default()
        );
        println!(
            "{label}: final val SI-SDRi {:.3} dB, test {}, {} dB reached at epoch {}",
            final_val.unwrap_or(f64::NAN),
            test.map(|t| format!("{t:.3} dB")).unwrap_or_else(|| "n/a".into()),
            args.threshold,
            reached.map(|e| e.to_string()).unwrap_or_else(|| "never".into())
        );
    }
    write(&args.out.join(SUMMARY_FILE), summary)?;
    Ok(())
}
