//! BCE training with AdamW, one full sequence per optimization step.

mod checkpoint;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
};

use crate::data::{Dataset, LabeledSequence};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport, VideoPrediction};
use crate::model::{bind_params, ModelConfig, ParamStore, Sedmamba};
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Write `last.sedc` every this many epochs; 0 disables periodic saves.
    pub checkpoint_every: usize,
    /// Probabilities are clamped to [clamp_eps, 1 - clamp_eps] before the log.
    pub clamp_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            seed: 0,
            checkpoint_every: 1,
            clamp_eps: 1e-7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("train: {m}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} outside [0, 1)"));
            }
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("eps must be positive and weight_decay non-negative".into());
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return bad(format!("clamp_eps {} outside (0, 0.5)", self.clamp_eps));
        }
        Ok(())
    }
}

/// AdamW moment buffers, keyed like the parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl OptimizerState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = |t: &Tensor| Tensor::zeros(t.shape());
        OptimizerState {
            step: 0,
            m: params.iter().map(|(k, t)| (k.clone(), zeros(t))).collect(),
            v: params.iter().map(|(k, t)| (k.clone(), zeros(t))).collect(),
        }
    }
}

/// One AdamW update with decoupled weight decay. Parameters missing from
/// `grads` are treated as having zero gradient. Non-finite gradients abort
/// the step before anything is modified.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Config(format!("gradient for unknown parameter {name}")))?;
        if p.shape() != g.shape() {
            return Err(Error::dim(
                "adamw",
                format!(
                    "{name}: gradient {:?} vs parameter {:?}",
                    g.shape(),
                    p.shape()
                ),
            ));
        }
        g.ensure_finite("adamw")?;
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (name, p) in params.iter_mut() {
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        let g = grads.get(name);
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = g.map_or(0.0, |g| g.data()[i]);
            md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gi;
            vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] = pd[i] * decay - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Mean clamped binary cross-entropy, evaluated without a graph.
pub fn bce_loss(probs: &[f64], labels: &[u8], eps: f64) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::dim(
            "bce",
            format!("{} probabilities vs {} labels", probs.len(), labels.len()),
        ));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y != 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Forward + backward on one sequence; returns the loss and named gradients.
pub fn loss_and_grads(
    model: &Sedmamba,
    seq: &LabeledSequence,
    clamp_eps: f64,
) -> Result<(f64, ParamStore)> {
    let mut g = Graph::new();
    let bound = bind_params(&mut g, model.params(), true)?;
    let x = g.constant(seq.sequence.to_tensor())?;
    let probs = model.forward(&mut g, &bound, x)?;
    let y: Vec<f64> = seq.labels.iter().map(|&l| f64::from(l)).collect();
    let loss = g.bce(probs, &y, clamp_eps)?;
    let value = g.value(loss).data()[0];
    let mut grads = g.backward(loss)?;
    let mut out = ParamStore::new();
    for (name, var) in bound.iter() {
        if let Some(t) = grads.take(var) {
            out.insert(name.to_string(), t);
        }
    }
    Ok((value, out))
}

/// Predict every sequence in parallel and score them together.
pub fn evaluate_model(
    model: &Sedmamba,
    seqs: &[LabeledSequence],
) -> Result<(Vec<VideoPrediction>, MetricsReport)> {
    let rate = seqs.first().map_or(5.0, |s| s.sequence.sample_rate);
    if seqs.iter().any(|s| s.sequence.sample_rate != rate) {
        return Err(Error::Config(
            "evaluation sequences disagree on sample rate".into(),
        ));
    }
    let preds = seqs
        .par_iter()
        .map(|s| {
            Ok(VideoPrediction {
                video_id: s.id().to_string(),
                labels: s.labels.clone(),
                probs: model.predict(&s.sequence.to_tensor())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&preds, rate)?;
    Ok((preds, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: Option<f64>,
    pub val_ap: Option<f64>,
    pub seconds: f64,
}

/// Training state that can be advanced one epoch at a time and
/// snapshotted into a [`Checkpoint`] at any epoch boundary.
#[derive(Clone, Debug)]
pub struct Trainer {
    model: Sedmamba,
    optimizer: OptimizerState,
    config: TrainConfig,
    epoch: usize,
    history: Vec<EpochLog>,
    best_epoch: Option<usize>,
    best_params: Option<ParamStore>,
}

impl Trainer {
    pub fn new(model_config: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Sedmamba::new(model_config, config.seed)?;
        let optimizer = OptimizerState::new(model.params());
        Ok(Trainer {
            model,
            optimizer,
            config,
            epoch: 0,
            history: Vec::new(),
            best_epoch: None,
            best_params: None,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.train_config.validate()?;
        let model = Sedmamba::from_params(ckpt.model_config, ckpt.params)?;
        Ok(Trainer {
            model,
            optimizer: ckpt.optimizer,
            config: ckpt.train_config,
            epoch: ckpt.epoch,
            history: ckpt.history,
            best_epoch: ckpt.best_epoch,
            best_params: ckpt.best_params,
        })
    }

    pub fn model(&self) -> &Sedmamba {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn history(&self) -> &[EpochLog] {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// Visiting order for a 1-based epoch; depends only on (seed, epoch).
    pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Run one epoch over `train`, then score `val` when it is non-empty.
    pub fn run_epoch(
        &mut self,
        train: &[LabeledSequence],
        val: &[LabeledSequence],
    ) -> Result<&EpochLog> {
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let started = Instant::now();
        let epoch = self.epoch + 1;
        let mut total = 0.0;
        for idx in Self::epoch_order(self.config.seed, epoch, train.len()) {
            let seq = &train[idx];
            let abort = |e: Error| {
                if e.is_numeric() {
                    Error::NumericAbort {
                        epoch,
                        sequence: seq.id().to_string(),
                        source: Box::new(e),
                    }
                } else {
                    e
                }
            };
            let (loss, grads) =
                loss_and_grads(&self.model, seq, self.config.clamp_eps).map_err(abort)?;
            adamw_step(
                self.model.params_mut(),
                &grads,
                &mut self.optimizer,
                &self.config,
            )
            .map_err(abort)?;
            total += loss;
        }
        let (val_auc, val_ap) = if val.is_empty() {
            (None, None)
        } else {
            let (_, report) = evaluate_model(&self.model, val)?;
            (report.frame_auc, report.frame_ap)
        };
        let improved = match (val_auc, self.best_auc()) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            _ => false,
        };
        if improved {
            self.best_epoch = Some(epoch);
            self.best_params = Some(self.model.params().clone());
        }
        self.epoch = epoch;
        self.history.push(EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            val_auc,
            val_ap,
            seconds: started.elapsed().as_secs_f64(),
        });
        Ok(self.history.last().expect("just pushed"))
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    fn best_auc(&self) -> Option<f64> {
        let e = self.best_epoch?;
        self.history.get(e - 1).and_then(|l| l.val_auc)
    }

    /// The model as of the best validation epoch, if any epoch was scored.
    pub fn best_model(&self) -> Option<Sedmamba> {
        let params = self.best_params.clone()?;
        Sedmamba::from_params(self.model.config().clone(), params).ok()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model_config: self.model.config().clone(),
            train_config: self.config.clone(),
            epoch: self.epoch,
            params: self.model.params().clone(),
            optimizer: self.optimizer.clone(),
            history: self.history.clone(),
            best_epoch: self.best_epoch,
            best_params: self.best_params.clone(),
        }
    }
}

/// Result of a complete run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: Checkpoint,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochLog>,
}

/// Train until the configured epoch count. With `out_dir`, writes
/// `last.sedc` at the checkpoint cadence, `best.sedc` whenever validation
/// AUC improves and `final.sedc` at the end.
pub fn train_run(
    dataset: &Dataset,
    model_config: ModelConfig,
    config: TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let trainer = Trainer::new(model_config, config)?;
    continue_run(trainer, dataset, out_dir, |_| Ok(()))
}

/// Advance an existing trainer (fresh or resumed) to completion, calling
/// `on_epoch` after each epoch.
pub fn continue_run(
    mut trainer: Trainer,
    dataset: &Dataset,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog) -> Result<()>,
) -> Result<TrainOutcome> {
    if dataset.train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    while !trainer.is_done() {
        let log = trainer
            .run_epoch(&dataset.train, dataset.selection_set())?
            .clone();
        on_epoch(&log)?;
        if let Some(dir) = out_dir {
            let every = trainer.config().checkpoint_every;
            if every > 0 && trainer.epoch().is_multiple_of(every) {
                save_checkpoint(&dir.join("last.sedc"), &trainer.checkpoint())?;
            }
            if trainer.best_epoch() == Some(trainer.epoch()) {
                save_checkpoint(&dir.join("best.sedc"), &trainer.checkpoint())?;
            }
        }
    }
    let final_checkpoint = trainer.checkpoint();
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("final.sedc"), &final_checkpoint)?;
    }
    Ok(TrainOutcome {
        best_epoch: trainer.best_epoch(),
        history: trainer.history().to_vec(),
        final_checkpoint,
    })
}
