//! One optimisation step over an effective batch split into micro-batches.
//!
//! The Tversky loss couples every pixel of the effective batch through its
//! soft counts, so per-micro-batch losses cannot simply be averaged. With
//! more than one micro-batch a first forward pass gathers the global
//! counts, and a second pass back-propagates each micro-batch with the
//! exact gradient of the joint loss.

use crate::error::{Error, Result};
use crate::graph::{Gradients, NormMode, NormStats, Tape};
use crate::loss::{soft_counts, tversky_from_counts, tversky_loss_grad, SoftCounts};
use crate::model::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Adam, TrainConfig};

/// Network inputs and target for a set of slices.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroBatch<T> {
    pub flair: Tensor<T>,
    pub atlas: Tensor<T>,
    pub mask: Tensor<T>,
}

impl<T: Scalar> MicroBatch<T> {
    pub fn len(&self) -> usize {
        self.flair.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Joint loss and summed gradients of an effective batch.
pub struct StepGradients<T> {
    pub loss: f64,
    pub counts: SoftCounts,
    pub grads: Gradients<T>,
    /// Batch-norm statistics of each micro-batch, in order.
    pub norm_stats: Vec<Vec<NormStats<T>>>,
}

fn norm_mode(cfg: &TrainConfig) -> NormMode {
    if cfg.freeze_batch_norm {
        NormMode::Running
    } else {
        NormMode::Batch
    }
}

fn forward_counts<T: Scalar>(net: &Network<T>, mb: &MicroBatch<T>, mode: NormMode) -> Result<SoftCounts> {
    let mut tape = Tape::new(net.params(), mode);
    let f = tape.input(mb.flair.clone());
    let a = tape.input(mb.atlas.clone());
    let out = net.forward(&mut tape, f, a)?;
    soft_counts(tape.value(out.probs).data(), mb.mask.data())
}

/// Gradient of the joint Tversky loss over all micro-batches.
pub fn compute_gradients<T: Scalar>(
    net: &Network<T>,
    micro: &[MicroBatch<T>],
    cfg: &TrainConfig,
) -> Result<StepGradients<T>> {
    if micro.is_empty() || micro.iter().any(|m| m.is_empty()) {
        return Err(Error::Data("a training step needs non-empty micro-batches".into()));
    }
    let mode = norm_mode(cfg);
    let total = if micro.len() == 1 {
        None
    } else {
        let mut c = SoftCounts::default();
        for mb in micro {
            c = c.merge(forward_counts(net, mb, mode)?);
        }
        Some(c)
    };
    let mut grads = Gradients::zeros_like(net.params());
    let mut norm_stats = Vec::with_capacity(micro.len());
    let mut seen = SoftCounts::default();
    for mb in micro {
        let mut tape = Tape::new(net.params(), mode);
        let f = tape.input(mb.flair.clone());
        let a = tape.input(mb.atlas.clone());
        let out = net.forward(&mut tape, f, a)?;
        let local = soft_counts(tape.value(out.probs).data(), mb.mask.data())?;
        seen = seen.merge(local);
        let counts = total.unwrap_or(local);
        let seed = tversky_loss_grad(mb.mask.data(), counts, cfg.alpha, cfg.smooth_eps)?;
        let seed = Tensor::from_vec(mb.mask.shape(), seed)?;
        norm_stats.push(tape.take_norm_stats());
        let g = tape.backward(out.probs, seed)?;
        grads.accumulate(&g);
    }
    let counts = total.unwrap_or(seen);
    Ok(StepGradients {
        loss: 1.0 - tversky_from_counts(counts, cfg.alpha, cfg.smooth_eps),
        counts,
        grads,
        norm_stats,
    })
}

/// Computes gradients, applies Adam and folds batch-norm statistics into
/// the running averages. Returns the joint loss.
///
/// Fails with a numerical error, leaving the network untouched, when the
/// loss or any gradient is not finite.
pub fn train_step<T: Scalar>(
    net: &mut Network<T>,
    adam: &mut Adam<T>,
    micro: &[MicroBatch<T>],
    cfg: &TrainConfig,
) -> Result<f64> {
    let step = compute_gradients(net, micro, cfg)?;
    if !step.loss.is_finite() {
        return Err(Error::Numerical(format!("loss is {}", step.loss)));
    }
    if !step.grads.all_finite() {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    adam.step(net.params_mut(), &step.grads)?;
    if !cfg.freeze_batch_norm {
        for stats in &step.norm_stats {
            net.update_running_stats(stats, cfg.bn_momentum);
        }
    }
    Ok(step.loss)
}
