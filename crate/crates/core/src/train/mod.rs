//! PIT and HCT training, validation, evaluation and layer probing.

mod hct;
mod loss;
mod optim;
mod pit;

pub use hct::{hct_loss, sample_early_break, HctConfig};
pub use loss::{neg_si_sdr, pairwise_neg_sisdr_matrix, pairwise_neg_sisdr_vars};
pub use optim::{clip_gradients, lr_plateau_step, AdamConfig, AdamState, PlateauConfig, PlateauState};
pub use pit::{assignment_solver, brute_force_assign, pit_assign, PitResult, BRUTE_FORCE_MAX};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use sepforge_autodiff::{Tape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Binder;
use crate::rng::stream_rng;
use crate::separator::Model;
use crate::signal::{si_sdr, MixtureExample, Waveform, SAMPLE_RATE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Optimizer steps between validations; one pass over the training set
    /// when unset.
    pub steps_per_epoch: Option<usize>,
    /// Training examples longer than this are randomly cropped.
    pub segment_seconds: f64,
    /// Stops early once this many optimizer steps have run.
    pub max_steps: Option<u64>,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub adam: AdamConfig,
    pub plateau: PlateauConfig,
    pub hct: HctConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 16,
            batch_size: 4,
            steps_per_epoch: None,
            segment_seconds: 1.0,
            max_steps: None,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            adam: AdamConfig::default(),
            plateau: PlateauConfig::default(),
            hct: HctConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.steps_per_epoch == Some(0) {
            return Err(Error::config("epochs, batch_size and steps_per_epoch must be positive"));
        }
        let positive = |v: f64| v > 0.0;
        if !positive(self.segment_seconds) || !positive(self.learning_rate) || !positive(self.clip_norm) {
            return Err(Error::config(
                "segment_seconds, learning_rate and clip_norm must be positive",
            ));
        }
        self.plateau.validate()
    }

    fn segment_samples(&self) -> usize {
        (self.segment_seconds * SAMPLE_RATE as f64).round() as usize
    }
}

/// One line of the metrics log. Step rows leave the validation columns
/// empty; the row closing an epoch carries them and leaves the early-break
/// column empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_sisdri: Option<f64>,
    pub lr: f64,
    pub early_break_index: Option<usize>,
}

pub const METRICS_HEADER: &str = "epoch,step,train_loss,val_loss,val_sisdri,lr,early_break_index";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.10}")).unwrap_or_default();
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.10},{},{},{:e},{}",
            r.epoch,
            r.step,
            r.train_loss,
            opt(r.val_loss),
            opt(r.val_sisdri),
            r.lr,
            r.early_break_index.map(|i| i.to_string()).unwrap_or_default()
        );
    }
    out
}

/// Everything that evolves during training, besides the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub seed: u64,
    pub step: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub lr: f64,
    pub plateau: PlateauState,
    pub adam: AdamState,
    pub best_val_loss: Option<f64>,
    pub history: Vec<MetricsRow>,
}

impl TrainState {
    pub fn new(model: &Model, cfg: &TrainConfig, seed: u64) -> Self {
        Self {
            seed,
            step: 0,
            epoch: 0,
            lr: cfg.learning_rate,
            plateau: PlateauState::default(),
            adam: AdamState::new(&model.params, cfg.adam.clone()),
            best_val_loss: None,
            history: Vec::new(),
        }
    }

    pub fn finished(&self, cfg: &TrainConfig) -> bool {
        self.epoch >= cfg.epochs || cfg.max_steps.is_some_and(|m| self.step >= m)
    }
}

/// Summary handed to the epoch callback.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_sisdri: f64,
    pub improved: bool,
}

/// Random crop of all waveforms of an example to `len` samples.
pub fn crop_example<R: Rng>(ex: &MixtureExample, len: usize, rng: &mut R) -> Result<MixtureExample> {
    if ex.len() <= len {
        return Ok(ex.clone());
    }
    let start = rng.gen_range(0..=ex.len() - len);
    let cut = |w: &Waveform| Waveform::new(w.samples()[start..start + len].to_vec(), w.sample_rate());
    Ok(MixtureExample {
        mixture: cut(&ex.mixture)?,
        sources: ex.sources.iter().map(cut).collect::<Result<_>>()?,
        noise: ex.noise.as_ref().map(cut).transpose()?,
        overlap_ratio: ex.overlap_ratio,
    })
}

/// Forward and backward for one example. Returns the PIT loss; parameter
/// gradients of `weight * loss` are added into `grads`.
pub fn example_gradients(
    model: &Model,
    ex: &MixtureExample,
    early_break: usize,
    weight: f64,
    grads: &mut [Option<Vec<f64>>],
) -> Result<PitResult> {
    let mut tape = Tape::new();
    let mut binder = Binder::new(&model.params);
    let x = tape.constant(Tensor::new(&[1, ex.len()], ex.mixture.samples().to_vec())?);
    let out = model.forward(&mut tape, &mut binder, x, early_break)?;
    let cost_vars = pairwise_neg_sisdr_vars(&mut tape, &out.sources, &ex.sources)?;
    let cost: Vec<Vec<f64>> = cost_vars
        .iter()
        .map(|row| row.iter().map(|&v| tape.data(v)[0]).collect())
        .collect();
    let pit = pit_assign(&cost)?;
    let selected: Vec<_> = pit
        .permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| cost_vars[i][j])
        .collect();
    let mut total = selected[0];
    for &v in &selected[1..] {
        total = tape.add(total, v)?;
    }
    let loss = tape.scale(total, weight / selected.len() as f64);
    tape.backward(loss)?;
    binder.collect_grads(&tape, 1.0, grads);
    Ok(pit)
}

/// Per-example evaluation result.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleScore {
    pub permutation: Vec<usize>,
    /// Mean negative SI-SDR of the PIT-matched pairs.
    pub loss: f64,
    /// Mean SI-SDR improvement over the mixture of the matched pairs.
    pub si_sdri: f64,
    pub overlap_ratio: Option<f64>,
}

/// Scores `estimates` against an example with the PIT-optimal matching.
pub fn score_estimates(estimates: &[Waveform], ex: &MixtureExample) -> Result<ExampleScore> {
    if estimates.len() != ex.num_sources() {
        return Err(Error::signal(format!(
            "{} estimates for {} sources",
            estimates.len(),
            ex.num_sources()
        )));
    }
    let cost = pairwise_neg_sisdr_matrix(estimates, &ex.sources)?;
    let pit = pit_assign(&cost)?;
    let baseline = ex.sources.iter().map(|s| si_sdr(&ex.mixture, s)).sum::<Result<f64>>()? / ex.num_sources() as f64;
    Ok(ExampleScore {
        si_sdri: -pit.loss - baseline,
        loss: pit.loss,
        permutation: pit.permutation,
        overlap_ratio: ex.overlap_ratio,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub examples: Vec<ExampleScore>,
    pub mean_loss: f64,
    pub mean_si_sdri: f64,
}

impl EvalReport {
    pub fn from_scores(examples: Vec<ExampleScore>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::signal("nothing to evaluate"));
        }
        let n = examples.len() as f64;
        Ok(Self {
            mean_loss: examples.iter().map(|e| e.loss).sum::<f64>() / n,
            mean_si_sdri: examples.iter().map(|e| e.si_sdri).sum::<f64>() / n,
            examples,
        })
    }

    /// Mean SI-SDRi per distinct overlap ratio, in ascending ratio order.
    pub fn by_overlap_ratio(&self) -> Vec<(f64, usize, f64)> {
        let mut groups: Vec<(f64, usize, f64)> = Vec::new();
        for e in &self.examples {
            let Some(r) = e.overlap_ratio else { continue };
            match groups.iter_mut().find(|g| g.0 == r) {
                Some(g) => {
                    g.1 += 1;
                    g.2 += e.si_sdri;
                }
                None => groups.push((r, 1, e.si_sdri)),
            }
        }
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        groups.into_iter().map(|(r, n, s)| (r, n, s / n as f64)).collect()
    }
}

/// Separates every example at depth `early_break` and scores it.
pub fn evaluate(model: &Model, examples: &[MixtureExample], early_break: usize) -> Result<EvalReport> {
    let scores = examples
        .iter()
        .map(|ex| score_estimates(&model.separate(&ex.mixture, early_break)?, ex))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(scores)
}

/// Mean SI-SDRi for each depth `1..=B`.
pub fn probe_layers(model: &Model, examples: &[MixtureExample]) -> Result<Vec<(usize, f64)>> {
    (1..=model.n_blocks())
        .map(|i| Ok((i, evaluate(model, examples, i)?.mean_si_sdri)))
        .collect()
}

/// Runs one optimizer step on `batch` at depth `early_break`; returns the
/// mean (unweighted) PIT loss.
pub fn train_step(
    model: &mut Model,
    state: &mut TrainState,
    cfg: &TrainConfig,
    hct: &HctConfig,
    batch: &[MixtureExample],
    early_break: usize,
) -> Result<f64> {
    let weight = if hct.enabled { hct.weight(early_break)? } else { 1.0 };
    let mut grads = vec![None; model.params.len()];
    let mut loss = 0.0;
    for ex in batch {
        let pit = example_gradients(model, ex, early_break, weight / batch.len() as f64, &mut grads)?;
        loss += pit.loss;
    }
    loss /= batch.len() as f64;
    let grads_finite = grads.iter().flatten().flatten().all(|g| g.is_finite());
    if !loss.is_finite() || !grads_finite {
        return Err(Error::NonFinite {
            step: state.step + 1,
            early_break,
            lr: state.lr,
        });
    }
    for (i, g) in grads.into_iter().enumerate() {
        model.params.tensor_mut(i).set_grad(g);
    }
    clip_gradients(&mut model.params, cfg.clip_norm);
    state.adam.step(&mut model.params, state.lr);
    state.step += 1;
    Ok(loss)
}

/// Endless sequence of training-set indices: pass `p` is a permutation
/// shuffled by its own seed, so position `k` never depends on how steps are
/// grouped into epochs.
struct ExampleStream {
    n: usize,
    seed: u64,
    pass: Option<(u64, Vec<usize>)>,
}

impl ExampleStream {
    fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, pass: None }
    }

    fn get(&mut self, k: u64) -> usize {
        let pass = k / self.n as u64;
        if self.pass.as_ref().is_none_or(|(p, _)| *p != pass) {
            let mut order: Vec<usize> = (0..self.n).collect();
            order.shuffle(&mut stream_rng(self.seed, "shuffle", pass));
            self.pass = Some((pass, order));
        }
        self.pass.as_ref().expect("pass filled").1[(k % self.n as u64) as usize]
    }
}

/// Trains until `cfg.epochs` epochs (or `cfg.max_steps` steps) are done,
/// continuing from `state`. After every epoch the model is validated at
/// full depth and `on_epoch` is called, e.g. to write checkpoints.
pub fn train<F>(
    model: &mut Model,
    train_set: &[MixtureExample],
    val_set: &[MixtureExample],
    cfg: &TrainConfig,
    mut state: TrainState,
    mut on_epoch: F,
) -> Result<TrainState>
where
    F: FnMut(&Model, &TrainState, &EpochSummary) -> Result<()>,
{
    cfg.validate()?;
    model.config.validate()?;
    state.adam.check(&model.params)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::config("training and validation sets must be non-empty"));
    }
    let hct = cfg.hct.clone().with_blocks(model.n_blocks());
    hct.validate()?;
    if hct.enabled && hct.n_blocks < 2 {
        return Err(Error::config("HCT needs at least two blocks"));
    }
    let full = model.n_blocks();
    let seg = cfg.segment_samples();
    let steps_per_epoch = cfg
        .steps_per_epoch
        .unwrap_or_else(|| train_set.len().div_ceil(cfg.batch_size));
    let mut stream = ExampleStream::new(train_set.len(), state.seed);

    while !state.finished(cfg) {
        let epoch = state.epoch + 1;
        let mut losses = Vec::new();
        for _ in 0..steps_per_epoch {
            if cfg.max_steps.is_some_and(|m| state.step >= m) {
                break;
            }
            let step = state.step + 1;
            let early_break = sample_early_break(&hct, &mut stream_rng(state.seed, "early-break", step))?;
            let mut crop_rng = stream_rng(state.seed, "crop", step);
            let first = (step - 1) * cfg.batch_size as u64;
            let batch = (first..first + cfg.batch_size as u64)
                .map(|k| crop_example(&train_set[stream.get(k)], seg, &mut crop_rng))
                .collect::<Result<Vec<_>>>()?;
            let lr = state.lr;
            let loss = train_step(model, &mut state, cfg, &hct, &batch, early_break)?;
            losses.push(loss);
            state.history.push(MetricsRow {
                epoch,
                step,
                train_loss: loss,
                val_loss: None,
                val_sisdri: None,
                lr,
                early_break_index: Some(early_break),
            });
        }
        let val = evaluate(model, val_set, full)?;
        if !val.mean_loss.is_finite() {
            return Err(Error::NonFinite {
                step: state.step,
                early_break: full,
                lr: state.lr,
            });
        }
        let train_loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        state.history.push(MetricsRow {
            epoch,
            step: state.step,
            train_loss,
            val_loss: Some(val.mean_loss),
            val_sisdri: Some(val.mean_si_sdri),
            lr: state.lr,
            early_break_index: None,
        });
        let improved = state.best_val_loss.is_none_or(|b| val.mean_loss < b);
        if improved {
            state.best_val_loss = Some(val.mean_loss);
        }
        state.lr = lr_plateau_step(&mut state.plateau, &cfg.plateau, state.lr, val.mean_loss);
        state.epoch = epoch;
        let summary = EpochSummary {
            epoch,
            train_loss,
            val_loss: val.mean_loss,
            val_sisdri: val.mean_si_sdri,
            improved,
        };
        on_epoch(model, &state, &summary)?;
    }
    Ok(state)
}
