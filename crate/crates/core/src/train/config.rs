use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Variant;
use crate::volume::AugmentConfig;

/// Optimisation and data-feeding settings.
///
/// The effective batch is `batch_size * accumulation_steps` slices; the
/// Tversky loss is taken jointly over all of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub accumulation_steps: usize,
    pub seed: u64,
    pub variant: Variant,
    pub smooth_eps: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub bn_momentum: f64,
    /// Normalise with running statistics during training too.
    pub freeze_batch_norm: bool,
    pub augment: AugmentConfig,
    /// Keep training slices with empty FLAIR support.
    pub keep_empty_slices: bool,
    pub threshold: f64,
    /// Slices per forward pass at validation/inference.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.7,
            lr: 2e-4,
            batch_size: 32,
            epochs: 200,
            accumulation_steps: 1,
            seed: 0,
            variant: Variant::Bagau,
            smooth_eps: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            bn_momentum: 0.1,
            freeze_batch_norm: false,
            augment: AugmentConfig::default(),
            keep_empty_slices: false,
            threshold: 0.5,
            eval_batch: 8,
        }
    }
}

impl TrainConfig {
    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.accumulation_steps
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0,1), got {}", self.alpha));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.accumulation_steps == 0 || self.eval_batch == 0 {
            return fail("batch_size, epochs, accumulation_steps and eval_batch must be >= 1".into());
        }
        if !(self.smooth_eps > 0.0) || !(self.adam_eps > 0.0) {
            return fail("smooth_eps and adam_eps must be positive".into());
        }
        for (name, b) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("bn_momentum", self.bn_momentum),
        ] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0,1), got {b}"));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail(format!("threshold must lie in [0,1], got {}", self.threshold));
        }
        self.augment.validate()
    }
}
