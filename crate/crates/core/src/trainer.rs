//! SGD fine-tuning of the adapter head and the finite-difference gradient
//! checker for the full loss-through-adapter composition.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adapter::{adapter_backward, adapter_forward_batch, sgd_step, AdapterParams};
use crate::data::{AugmentationPolicy, BatchSampler, FeatureSet};
use crate::diagnostics::{augmentation_similarity, uniformity, Frame, COLLAPSE_UNIFORMITY, DEFAULT_SAMPLE_PAIRS};
use crate::error::{Error, Result};
use crate::geometry::{compute_center, norm, Center, Matrix};
use crate::losses::{batch_loss, LossConfig};
use crate::scoring::{evaluate, Gallery};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Hidden width; `None` uses the feature dimension.
    pub hidden: Option<usize>,
    pub seed: u64,
    /// Keep a parameter snapshot every this many epochs (0 disables).
    pub snapshot_every: usize,
    pub augment: AugmentationPolicy,
    /// Neighbours used for the per-epoch validation AUC.
    pub eval_k: usize,
    /// Pairs sampled for the per-epoch uniformity statistic.
    pub diag_pairs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            epochs: 25,
            batch_size: 64,
            learning_rate: 1e-2,
            weight_decay: 5e-5,
            hidden: None,
            seed: 0,
            snapshot_every: 5,
            augment: AugmentationPolicy::default(),
            eval_k: 2,
            diag_pairs: DEFAULT_SAMPLE_PAIRS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) && self.learning_rate != 0.0 {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay must be >= 0, got {}", self.weight_decay));
        }
        if self.hidden == Some(0) {
            return bad("hidden width must be >= 1".into());
        }
        if self.eval_k < 1 {
            return bad("eval k must be >= 1".into());
        }
        Ok(())
    }
}

/// Statistics recorded at an epoch boundary. Epoch 0 is the untouched
/// starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch; absent for epoch 0.
    pub loss: Option<f64>,
    pub uniformity_origin: f64,
    pub uniformity_shifted: f64,
    pub aug_similarity_origin: f64,
    pub aug_similarity_shifted: f64,
    pub val_auc: Option<f64>,
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub params: AdapterParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial: EpochRecord,
    /// One record per completed epoch, epochs `1..=E`.
    pub epochs: Vec<EpochRecord>,
    pub center: Center,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
}

impl TrainHistory {
    /// Epoch 0 followed by every completed epoch.
    pub fn records(&self) -> impl Iterator<Item = &EpochRecord> {
        std::iter::once(&self.initial).chain(&self.epochs)
    }

    pub fn collapsed(&self) -> bool {
        self.records().any(|r| r.collapsed)
    }

    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().unwrap_or(&self.initial)
    }
}

/// Fixed inputs for the per-epoch diagnostics.
struct Probe<'a> {
    train: Matrix,
    views: (Matrix, Matrix),
    val: Option<&'a FeatureSet>,
    center: &'a Center,
    pairs: usize,
    seed: u64,
    k: usize,
}

impl Probe<'_> {
    fn record(&self, epoch: usize, loss: Option<f64>, params: &AdapterParams) -> Result<EpochRecord> {
        let adapted = adapter_forward_batch(&self.train, params)?;
        let first = adapter_forward_batch(&self.views.0, params)?;
        let second = adapter_forward_batch(&self.views.1, params)?;
        let uniformity_origin = uniformity(&adapted, Frame::Origin, self.center, self.pairs, self.seed)?;
        let val_auc = match self.val {
            Some(v) if v.labels().is_some() => {
                let g = Gallery::full(&adapted)?;
                evaluate(v, params, &g, self.k.min(g.len()))?.roc_auc
            }
            _ => None,
        };
        Ok(EpochRecord {
            epoch,
            loss,
            uniformity_origin,
            uniformity_shifted: uniformity(&adapted, Frame::MeanShifted, self.center, self.pairs, self.seed)?,
            aug_similarity_origin: augmentation_similarity(&first, &second, Frame::Origin, self.center)?,
            aug_similarity_shifted: augmentation_similarity(&first, &second, Frame::MeanShifted, self.center)?,
            val_auc,
            collapsed: uniformity_origin > COLLAPSE_UNIFORMITY,
        })
    }
}

/// Fine-tunes an identity-initialized adapter on an all-normal training
/// set. The center is computed from the raw training features before the
/// first step and stays fixed.
pub fn train(train_fs: &FeatureSet, val_fs: Option<&FeatureSet>, cfg: &TrainConfig) -> Result<(AdapterParams, TrainHistory)> {
    cfg.validate()?;
    if !train_fs.is_training_split() {
        return Err(Error::InvariantViolation("training split contains rows labeled anomalous".into()));
    }
    if let Some(v) = val_fs {
        if v.dim() != train_fs.dim() {
            return Err(Error::DimensionMismatch { expected: train_fs.dim(), found: v.dim() });
        }
    }
    let d = train_fs.dim();
    let train_raw = train_fs.to_matrix();
    let center = compute_center(train_raw.iter_rows())?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = AdapterParams::identity_init(d, cfg.hidden.unwrap_or(d), &mut init_rng);

    let mut sampler = BatchSampler::new(train_fs, cfg.augment, cfg.batch_size, cfg.seed.wrapping_add(1))?;
    if !sampler.yields_batches() {
        return Err(Error::BatchTooSmall { rows: 2 * sampler.sources().min(cfg.batch_size) });
    }
    let probe_policy = AugmentationPolicy {
        seed: cfg.augment.seed ^ 0x9e37_79b9_7f4a_7c15,
        ..cfg.augment
    };
    let probe = Probe {
        views: probe_policy.view_pairs(train_fs, 0)?,
        train: train_raw,
        val: val_fs,
        center: &center,
        pairs: cfg.diag_pairs,
        seed: cfg.seed.wrapping_add(2),
        k: cfg.eval_k,
    };

    let initial = probe.record(0, None, &params)?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut snapshots = Vec::new();
    for epoch in 1..=cfg.epochs {
        let batches = sampler.next_epoch();
        let mut loss_sum = 0.0;
        for batch in &batches {
            let adapted = adapter_forward_batch(&batch.rows, &params)?;
            let loss = batch_loss(&adapted, &center, &cfg.loss)?;
            let grads = adapter_backward(&batch.rows, &params, &loss.grads)?;
            sgd_step(&mut params, &grads, cfg.learning_rate, cfg.weight_decay)?;
            loss_sum += loss.value;
        }
        let mean_loss = loss_sum / batches.len().max(1) as f64;
        epochs.push(probe.record(epoch, Some(mean_loss), &params)?);
        if cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0 {
            snapshots.push(Snapshot { epoch, params: params.clone() });
        }
    }
    Ok((
        params,
        TrainHistory {
            initial,
            epochs,
            center,
            snapshots,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub objective: String,
    pub trials: usize,
    pub tolerance: f64,
    /// Largest `||analytic - numeric|| / max(||analytic||, ||numeric||)`.
    pub max_rel_err: f64,
    pub worst_trial: Option<usize>,
    pub passed: bool,
}

pub const GRAD_CHECK_STEP: f64 = 1e-6;

/// Compares backpropagated parameter gradients of `loss(adapter(batch))`
/// against central differences on seeded random instances. Trials cycle
/// through `d in {3, 8}` and `2B in {2, 4, 8}`.
pub fn grad_check(cfg: &LossConfig, trials: usize, tolerance: f64, seed: u64) -> Result<GradCheckReport> {
    cfg.validate()?;
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be >= 0, got {tolerance}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, None);
    for t in 0..trials {
        let d = [3, 8][t % 2];
        let rows = [2, 4, 8][t % 3];
        let (params, batch, center) = random_instance(&mut rng, d, rows);
        let err = grad_check_instance(cfg, &params, &batch, &center)?;
        if worst.1.is_none() || err > worst.0 {
            worst = (err, Some(t));
        }
    }
    Ok(GradCheckReport {
        objective: cfg.objective.name().to_string(),
        trials,
        tolerance,
        max_rel_err: worst.0,
        worst_trial: worst.1,
        passed: trials > 0 && worst.0 < tolerance,
    })
}

fn random_instance(rng: &mut ChaCha8Rng, d: usize, rows: usize) -> (AdapterParams, Matrix, Center) {
    let mut params = AdapterParams::identity_init(d, d, rng);
    let small = Normal::new(0.0, 0.3).expect("positive std");
    for s in [&mut params.b1[..], params.w2.as_mut_slice(), &mut params.b2[..]] {
        for x in s.iter_mut() {
            *x = small.sample(rng);
        }
    }
    let offset: Vec<f64> = (0..d).map(|_| Distribution::<f64>::sample(&StandardNormal, rng)).collect();
    let data = (0..rows * d)
        .map(|i| offset[i % d] + 0.5 * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    let batch = Matrix::from_vec(rows, d, data).expect("shape");
    let toy: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..d).map(|j| offset[j] + 0.5 * Distribution::<f64>::sample(&StandardNormal, rng)).collect())
        .collect();
    let center = compute_center(toy.iter().map(|r| r.as_slice())).expect("non-degenerate toy set");
    (params, batch, center)
}

/// Relative error between analytic and central-difference parameter
/// gradients for one instance.
pub fn grad_check_instance(cfg: &LossConfig, params: &AdapterParams, batch: &Matrix, center: &Center) -> Result<f64> {
    let value = |p: &AdapterParams| -> Result<f64> {
        Ok(batch_loss(&adapter_forward_batch(batch, p)?, center, cfg)?.value)
    };
    let adapted = adapter_forward_batch(batch, params)?;
    let loss = batch_loss(&adapted, center, cfg)?;
    let analytic = adapter_backward(batch, params, &loss.grads)?;

    let mut diff_sq = 0.0;
    let mut numeric_sq = 0.0;
    for s in 0..4 {
        for k in 0..params.slices()[s].len() {
            let mut plus = params.clone();
            plus.slices_mut()[s][k] += GRAD_CHECK_STEP;
            let mut minus = params.clone();
            minus.slices_mut()[s][k] -= GRAD_CHECK_STEP;
            let fd = (value(&plus)? - value(&minus)?) / (2.0 * GRAD_CHECK_STEP);
            let an = analytic.slices()[s][k];
            diff_sq += (fd - an) * (fd - an);
            numeric_sq += fd * fd;
        }
    }
    let analytic_norm = analytic.slices().iter().map(|s| norm(s).powi(2)).sum::<f64>().sqrt();
    let scale = analytic_norm.max(numeric_sq.sqrt());
    Ok(if scale < 1e-12 { diff_sq.sqrt() } else { diff_sq.sqrt() / scale })
}
