use std::io::Write;

use log::debug;
use serde::{Deserialize, Serialize};

use super::bptt::{accumulate_sequence, gradients_and_loss, Gradients};
use super::forward::predict;
use super::metrics::loss_mse;
use super::params::{CellKind, RnnParams};
use crate::error::{Error, Result};
use crate::geno::SequenceBatch;
use crate::linalg::Rng;

/// Default global-norm clip for the non-gated cells.
pub const DEFAULT_CLIP_NORM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// One update per epoch from the gradient of the mean loss over the batch.
    #[default]
    FullBatch,
    /// One update per sequence, visiting sequences in a seeded shuffled order
    /// that is redrawn every epoch.
    PerSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Mse,
}

/// Gradient clipping setting.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipNorm {
    /// [`DEFAULT_CLIP_NORM`] for `simple_tanh` and `relu_identity`, no
    /// clipping for `lstm`.
    #[default]
    CellDefault,
    Off,
    Norm(f64),
}

impl ClipNorm {
    pub fn resolve(self, cell: CellKind) -> Option<f64> {
        match self {
            ClipNorm::CellDefault => match cell {
                CellKind::Lstm => None,
                _ => Some(DEFAULT_CLIP_NORM),
            },
            ClipNorm::Off => None,
            ClipNorm::Norm(c) => Some(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub clip_norm: ClipNorm,
    pub loss: Loss,
    /// Drives the per-sample visiting order.
    pub seed: u64,
    pub batch_mode: BatchMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 100,
            clip_norm: ClipNorm::CellDefault,
            loss: Loss::Mse,
            seed: 0,
            batch_mode: BatchMode::FullBatch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let ClipNorm::Norm(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!(
                    "clip_norm must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss after this epoch's updates.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub records: Vec<EpochRecord>,
}

impl TrainingCurve {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_loss)
    }

    /// `epoch,train_loss,val_loss` with an empty field when there is no
    /// validation loss.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        writeln!(sink, "epoch,train_loss,val_loss")?;
        for r in &self.records {
            match r.val_loss {
                Some(v) => writeln!(sink, "{},{},{}", r.epoch, r.train_loss, v)?,
                None => writeln!(sink, "{},{},", r.epoch, r.train_loss)?,
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their global norm is at most `clip_norm` and
/// returns the norm before clipping. Gradients under the threshold are left
/// untouched.
pub fn clip_gradients(grads: &mut Gradients, clip_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    norm
}

/// `params - learning_rate * grads`, rejecting non-finite results.
pub fn sgd_step(params: &RnnParams, grads: &Gradients, learning_rate: f64) -> Result<RnnParams> {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, grads, learning_rate)?;
    Ok(next)
}

fn sgd_step_in_place(params: &mut RnnParams, grads: &Gradients, learning_rate: f64) -> Result<()> {
    for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        if p.len() != g.len() {
            return Err(Error::Shape("gradient and parameter tensors differ".into()));
        }
        for (x, d) in p.iter_mut().zip(g) {
            *x -= learning_rate * d;
        }
    }
    if params.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            stage: "rnn".into(),
            epoch: 0,
            message: "parameters became non-finite; lower the learning rate or enable clipping"
                .into(),
        })
    }
}

/// Where and why a run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceInfo {
    pub epoch: usize,
    pub message: String,
}

/// Result of [`train_tolerant`]: the last finite parameters, the curve up to
/// the last completed epoch, and divergence details if training stopped.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: RnnParams,
    pub curve: TrainingCurve,
    pub diverged: Option<DivergenceInfo>,
}

fn check_widths(params: &RnnParams, batch: &SequenceBatch, what: &str) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Input(format!("{what} batch is empty")));
    }
    if batch.chunk_width != params.n_in || batch.output_width() != params.n_out {
        return Err(Error::Shape(format!(
            "{what} batch has input width {} and target width {}, network expects {} and {}",
            batch.chunk_width,
            batch.output_width(),
            params.n_in,
            params.n_out
        )));
    }
    Ok(())
}

fn batch_loss(params: &RnnParams, batch: &SequenceBatch) -> Result<f64> {
    loss_mse(&predict(params, batch)?, &batch.targets)
}

fn diverged_at(epoch: usize, message: String) -> Error {
    Error::Divergence {
        stage: "rnn".into(),
        epoch,
        message,
    }
}

/// Trains `params` and fails with a divergence error carrying the epoch index
/// if the parameters or the loss become non-finite.
pub fn train(
    params: RnnParams,
    train_batch: &SequenceBatch,
    val_batch: Option<&SequenceBatch>,
    cfg: &TrainConfig,
) -> Result<(RnnParams, TrainingCurve)> {
    let run = train_tolerant(params, train_batch, val_batch, cfg)?;
    match run.diverged {
        Some(d) => Err(diverged_at(d.epoch, d.message)),
        None => Ok((run.params, run.curve)),
    }
}

/// Like [`train`], but a divergence ends the run normally with the curve
/// truncated at the failing epoch.
pub fn train_tolerant(
    mut params: RnnParams,
    train_batch: &SequenceBatch,
    val_batch: Option<&SequenceBatch>,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    cfg.validate()?;
    params.validate()?;
    check_widths(&params, train_batch, "training")?;
    if let Some(v) = val_batch {
        check_widths(&params, v, "validation")?;
    }
    let clip = cfg.clip_norm.resolve(params.cell);
    let mut curve = TrainingCurve::default();
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train_batch.len()).collect();
    let sample_scale = 1.0 / params.n_out as f64;

    let mut pending: Option<(Gradients, f64)> = None;
    for epoch in 0..cfg.epochs {
        let step: Result<()> = (|| {
            match cfg.batch_mode {
                BatchMode::FullBatch => {
                    let (mut g, _) = match pending.take() {
                        Some(gl) => gl,
                        None => gradients_and_loss(&params, train_batch)?,
                    };
                    if let Some(c) = clip {
                        clip_gradients(&mut g, c);
                    }
                    params = sgd_step(&params, &g, cfg.learning_rate)?;
                }
                BatchMode::PerSample => {
                    rng.shuffle(&mut order);
                    for &s in &order {
                        let mut g = Gradients::zeros_like(&params);
                        accumulate_sequence(
                            &params,
                            &train_batch.inputs[s],
                            &train_batch.targets[s],
                            sample_scale,
                            &mut g,
                        )?;
                        if let Some(c) = clip {
                            clip_gradients(&mut g, c);
                        }
                        params = sgd_step(&params, &g, cfg.learning_rate)?;
                    }
                }
            }
            Ok(())
        })();
        let train_loss = step.and_then(|()| match cfg.batch_mode {
            // The next epoch's gradient pass yields this epoch's loss for free.
            BatchMode::FullBatch => {
                let (g, l) = gradients_and_loss(&params, train_batch)?;
                pending = Some((g, l));
                Ok(l)
            }
            BatchMode::PerSample => batch_loss(&params, train_batch),
        });
        let train_loss = match train_loss {
            Ok(l) if l.is_finite() => l,
            Ok(l) => {
                return Ok(stop(
                    params,
                    curve,
                    epoch,
                    format!("training loss became {l}"),
                ));
            }
            Err(Error::Divergence { message, .. }) => {
                return Ok(stop(params, curve, epoch, message));
            }
            Err(e) => return Err(e),
        };
        let val_loss = val_batch.map(|v| batch_loss(&params, v)).transpose()?;
        debug!(
            "{} epoch {epoch}: train {train_loss:.6e}{}",
            params.cell,
            val_loss
                .map(|v| format!(", val {v:.6e}"))
                .unwrap_or_default()
        );
        curve.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok(TrainRun {
        params,
        curve,
        diverged: None,
    })
}

fn stop(params: RnnParams, curve: TrainingCurve, epoch: usize, message: String) -> TrainRun {
    TrainRun {
        params,
        curve,
        diverged: Some(DivergenceInfo { epoch, message }),
    }
}
