//! Multi-task training of the fusion network with Adam.

pub mod losses;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::fusion::{self, AblationConfig, FusionParams, LevelFeatures, DEFAULT_HIDDEN};
pub use losses::{LossBreakdown, LossWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub tau: f64,
    pub lambda_contrastive: f64,
    pub lambda_consistency: f64,
    pub lambda_diversity: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub hidden: usize,
    /// Fraction of the training split held out to pick the best epoch.
    /// Zero keeps the final epoch.
    pub validation_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 1e-3,
            batch_size: 16,
            epochs: 5,
            tau: 0.07,
            lambda_contrastive: 0.1,
            lambda_consistency: 0.05,
            lambda_diversity: 0.01,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            hidden: DEFAULT_HIDDEN,
            validation_fraction: 0.0,
        }
    }
}

impl TrainingConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            contrastive: self.lambda_contrastive,
            consistency: self.lambda_consistency,
            diversity: self.lambda_diversity,
            tau: self.tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be ≥ 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        for (n, l) in [
            ("lambda_contrastive", self.lambda_contrastive),
            ("lambda_consistency", self.lambda_consistency),
            ("lambda_diversity", self.lambda_diversity),
        ] {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("{n} must be non-negative, got {l}"));
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive".into());
        }
        if self.hidden < 2 {
            return bad(format!("hidden must be ≥ 2, got {}", self.hidden));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: FusionParams,
    v: FusionParams,
}

impl Adam {
    pub fn new(params: &FusionParams, cfg: &TrainingConfig) -> Self {
        Adam {
            lr: cfg.lr,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut FusionParams, grad: &FusionParams) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for (((_, p), (_, g)), ((_, m), (_, v))) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Step-averaged loss terms.
    pub loss: LossBreakdown,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: FusionParams,
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

pub type Example = (LevelFeatures, Label);

pub fn accuracy(params: &FusionParams, data: &[Example], ablation: &AblationConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("accuracy over zero examples".into()));
    }
    let mut correct = 0usize;
    for (f, l) in data {
        if fusion::forward(params, f, ablation)?.predicted() == *l {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn mean_breakdown(steps: &[StepLog], w: &LossWeights) -> LossBreakdown {
    let n = steps.len().max(1) as f64;
    let avg = |f: fn(&LossBreakdown) -> f64| steps.iter().map(|s| f(&s.loss)).sum::<f64>() / n;
    LossBreakdown::assemble(
        avg(|l| l.classification),
        avg(|l| l.contrastive),
        avg(|l| l.consistency),
        avg(|l| l.diversity),
        w,
        steps.iter().all(|s| s.loss.contrastive_skipped),
    )
}

/// Trains from a seeded initialization. Batches are drawn from a
/// permutation that depends only on `(seed, epoch)`.
pub fn train_network(
    train: &[Example],
    validation: Option<&[Example]>,
    cfg: &TrainingConfig,
    ablation: &AblationConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ablation.validate()?;
    let Some(first) = train.first() else {
        return Err(Error::Empty("training set".into()));
    };
    let dims = first.0.dims();
    let mut params = FusionParams::init(cfg.seed, cfg.hidden, dims)?;
    let mut opt = Adam::new(&params, cfg);
    let weights = cfg.weights();
    let validation = validation.filter(|v| !v.is_empty());

    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, FusionParams)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let first_step = steps.len();
        for (s, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&LevelFeatures, Label)> =
                chunk.iter().map(|&i| (&train[i].0, train[i].1)).collect();
            let (loss, mut grad) = fusion::backward(&params, &batch, &weights, ablation)?;
            loss.check_finite()
                .map_err(|e| Error::NonFinite(format!("epoch {epoch} step {}: {e}", s + 1)))?;
            // backward returns the gradient of B·L_total; Adam sees the mean.
            let inv_b = 1.0 / batch.len() as f64;
            grad.tensors_mut()
                .into_iter()
                .for_each(|(_, t)| t.data.iter_mut().for_each(|x| *x *= inv_b));
            opt.step(&mut params, &grad);
            if !params.is_finite() {
                return Err(Error::NonFinite(format!(
                    "parameters after epoch {epoch} step {}",
                    s + 1
                )));
            }
            steps.push(StepLog {
                epoch,
                step: s + 1,
                loss,
            });
        }
        let train_accuracy = accuracy(&params, train, ablation)?;
        let validation_accuracy = validation
            .map(|v| accuracy(&params, v, ablation))
            .transpose()?;
        if let Some(acc) = validation_accuracy {
            if best.as_ref().is_none_or(|b| acc > b.0) {
                best = Some((acc, epoch, params.clone()));
            }
        }
        epochs.push(EpochLog {
            epoch,
            loss: mean_breakdown(&steps[first_step..], &weights),
            train_accuracy,
            validation_accuracy,
        });
    }
    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (params, cfg.epochs),
    };
    Ok(TrainOutcome {
        params,
        steps,
        epochs,
        best_epoch,
    })
}
