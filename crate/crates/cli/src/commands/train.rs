use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sepforge_core::checkpoint;
use sepforge_core::rng::stream_rng;
use sepforge_core::signal::manifest::load_manifest;
use sepforge_core::train::{metrics_csv, train, TrainState};
use sepforge_core::{MixtureExample, Model};

use super::{prepare_out_dir, write};
use crate::config::ExperimentConfig;
use crate::{Switch, TrainArgs, UsageError};

pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// Result of a finished training command.
pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub model: Model,
    pub state: TrainState,
}

/// Applies the command-line overrides to a loaded config.
pub fn resolve(args: &TrainArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(head) = args.head {
        cfg.model.set_head(head.into());
    }
    if let Some(hct) = args.hct {
        cfg.train.hct.enabled = hct == Switch::On;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    let Some(out) = cfg.out_dir.clone() else {
        bail!(UsageError(
            "no output directory: pass --out or set out_dir in the config".into()
        ));
    };
    Ok((cfg, out))
}

pub fn load_split(cfg: &ExperimentConfig, split: &str) -> Result<Vec<MixtureExample>> {
    let path = cfg.data.manifest(split);
    let examples: Vec<MixtureExample> = load_manifest(&path)?.into_iter().map(|(_, ex)| ex).collect();
    if let Some(ex) = examples
        .iter()
        .find(|ex| ex.num_sources() != cfg.model.separator.n_sources)
    {
        bail!(UsageError(format!(
            "{}: example with {} sources for a {}-source model",
            path.display(),
            ex.num_sources(),
            cfg.model.separator.n_sources
        )));
    }
    Ok(examples)
}

pub fn run(args: &TrainArgs) -> Result<TrainOutcome> {
    let (cfg, out) = resolve(args)?;
    train_config(&cfg, &out, args.force, args.resume)
}

/// Trains `cfg` into `out`. With `resume`, continues from `last.ckpt`.
pub fn train_config(cfg: &ExperimentConfig, out: &Path, force: bool, resume: bool) -> Result<TrainOutcome> {
    cfg.check_dataset()?;
    let (mut model, state) = if resume {
        let path = out.join(LAST_CHECKPOINT);
        let (model, state) = checkpoint::load(&path)?;
        if model.config != cfg.model {
            bail!(UsageError(format!(
                "{} was trained with a different model config",
                path.display()
            )));
        }
        let state = state.with_context(|| format!("{} has no training state", path.display()))?;
        if state.seed != cfg.seed {
            bail!(UsageError(format!(
                "{} was trained with seed {}",
                path.display(),
                state.seed
            )));
        }
        (model, state)
    } else {
        prepare_out_dir(out, force)?;
        let model = Model::init(cfg.model.clone(), &mut stream_rng(cfg.seed, "init", 0))?;
        let state = TrainState::new(&model, &cfg.train, cfg.seed);
        (model, state)
    };
    write(&out.join(CONFIG_SNAPSHOT), cfg.to_toml()?)?;
    let train_set = load_split(cfg, "train")?;
    let val_set = load_split(cfg, "val")?;
    eprintln!(
        "training {} parameters on {} mixtures ({} validation), head {}, HCT {}",
        model.params.num_values(),
        train_set.len(),
        val_set.len(),
        cfg.model.separator.head,
        if cfg.train.hct.enabled { "on" } else { "off" }
    );

    let state = train(
        &mut model,
        &train_set,
        &val_set,
        &cfg.train,
        state,
        |model, state, epoch| {
            eprintln!(
                "epoch {:3}  step {:6}  train {:9.4}  val {:9.4}  val SI-SDRi {:7.3} dB  lr {:.2e}",
                epoch.epoch, state.step, epoch.train_loss, epoch.val_loss, epoch.val_sisdri, state.lr
            );
            if epoch.improved {
                checkpoint::save(out.join(BEST_CHECKPOINT), model, Some(state))?;
            }
            checkpoint::save(out.join(LAST_CHECKPOINT), model, Some(state))?;
            let path = out.join(METRICS_FILE);
            std::fs::write(&path, metrics_csv(&state.history))
                .map_err(|source| sepforge_core::Error::Io { path, source })
        },
    )?;
    write(&out.join(METRICS_FILE), metrics_csv(&state.history))?;
    Ok(TrainOutcome {
        out_dir: out.to_path_buf(),
        model,
        state,
    })
}
