//! Adam and the supervised training loop.

use nalgebra::{Point3, Vector3};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::loss::batch_smoothed_ce;
use super::network::{argmax, Mode, NetworkState, Params, BN_MOMENTUM};
use super::NnError;
use crate::augment::{mix, Augmentation, LabeledCloud, MixSpec};
use crate::geometry::PointCloud;
use crate::rng::{keyed_rng, Rng};

/// Adam with bias correction. Optionally restricted to a subset of tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Params,
    v: Params,
}

impl Adam {
    pub fn new(like: &Params, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    /// One update. `mask[i] == false` freezes tensor `i` (in [`Params::names`] order).
    pub fn step(&mut self, params: &mut Params, grads: &Params, mask: Option<&[bool]>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let g = grads.tensors();
        for (i, ((p, m), v)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .enumerate()
        {
            if mask.is_some_and(|mk| !mk[i]) {
                continue;
            }
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[i][k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[i][k] * g[i][k];
                p[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub smoothing: f64,
    /// Epochs without a validation-loss improvement of `plateau_threshold` before the lr is halved.
    pub plateau_patience: usize,
    pub plateau_threshold: f64,
    pub plateau_factor: f64,
    pub augmentation: Augmentation,
    pub lambda: f64,
    /// Draw the mixing weight from `Beta(beta, beta)` instead of using `lambda`.
    pub beta: Option<f64>,
    /// Per-axis translation bound.
    pub translate: f64,
    /// Per-axis scale range.
    pub scale: [f64; 2],
    /// Points drawn per training sample each step; `None` keeps every point.
    pub points: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            smoothing: 0.2,
            plateau_patience: 10,
            plateau_threshold: 1e-4,
            plateau_factor: 0.5,
            augmentation: Augmentation::None,
            lambda: 0.5,
            beta: None,
            translate: 0.2,
            scale: [2.0 / 3.0, 1.5],
            points: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be non-negative");
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(NnError::Smoothing(self.smoothing));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.scale[0] > 0.0 && self.scale[0] <= self.scale[1]) {
            return bad("scale range must be positive and ordered");
        }
        if !(self.translate >= 0.0) {
            return bad("translate must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.points == Some(0) {
            return bad("points must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best validation accuracy (lowest training loss without validation data).
    pub state: NetworkState,
    pub last: NetworkState,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Eval-mode mean smoothed loss and accuracy against each label's argmax.
pub fn evaluate(state: &NetworkState, data: &[LabeledCloud], smoothing: f64) -> Result<(f64, f64), NnError> {
    let clouds: Vec<&[Point3<f64>]> = data.iter().map(|d| d.cloud.points()).collect();
    let logits = state.logits(&clouds, 16)?;
    let labels: Vec<&[f64]> = data.iter().map(|d| d.label()).collect();
    let (loss, _) = batch_smoothed_ce(&logits, &labels, smoothing)?;
    let correct = data
        .iter()
        .enumerate()
        .filter(|(i, d)| argmax(logits.row(*i).iter().copied()) == d.argmax())
        .count();
    Ok((loss, correct as f64 / data.len() as f64))
}

fn subsample(cloud: &PointCloud, points: Option<usize>, rng: &mut Rng) -> PointCloud {
    match points {
        Some(k) if k < cloud.len() => {
            let mut idx = sample(rng, cloud.len(), k).into_vec();
            idx.sort_unstable();
            PointCloud::new(idx.iter().map(|&i| cloud.points()[i]).collect()).expect("nonempty subset")
        }
        _ => cloud.clone(),
    }
}

fn scale_translate(cloud: &PointCloud, config: &TrainConfig, rng: &mut Rng) -> Vec<Point3<f64>> {
    let [lo, hi] = config.scale;
    let mut draw_scale = || if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let s = Vector3::new(draw_scale(), draw_scale(), draw_scale());
    let t = config.translate;
    let mut draw_shift = || if t > 0.0 { rng.random_range(-t..=t) } else { 0.0 };
    let d = Vector3::new(draw_shift(), draw_shift(), draw_shift());
    cloud
        .points()
        .iter()
        .map(|p| Point3::from(p.coords.component_mul(&s) + d))
        .collect()
}

/// Trains a copy of `state`. Running statistics follow each batch with momentum 0.1.
pub fn train(
    state: &NetworkState,
    train_set: &[LabeledCloud],
    validation: &[LabeledCloud],
    config: &TrainConfig,
) -> Result<TrainOutcome, NnError> {
    config.validate()?;
    if train_set.len() < config.batch_size {
        return Err(NnError::DatasetTooSmall {
            samples: train_set.len(),
            batch_size: config.batch_size,
        });
    }
    let classes = state.classes();
    if let Some(d) = train_set.iter().chain(validation).find(|d| d.label().len() != classes) {
        return Err(NnError::Shape(format!(
            "label has {} classes, network has {classes}",
            d.label().len()
        )));
    }
    let mut present: Vec<usize> = train_set.iter().map(|d| d.argmax()).collect();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(NnError::SingleClass);
    }

    let mut current = state.clone();
    let mut adam = Adam::new(&current.params, config.lr, config.beta1, config.beta2, config.adam_eps);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, f64, usize, NetworkState)> = None;
    let mut plateau_best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..config.epochs {
        let mut rng = keyed_rng(&[config.seed, epoch as u64]);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let base: Vec<LabeledCloud> = chunk
                .iter()
                .map(|&i| {
                    let d = &train_set[i];
                    LabeledCloud::new(subsample(&d.cloud, config.points, &mut rng), d.label().to_vec())
                        .expect("label already valid")
                })
                .collect();
            let batch: Vec<LabeledCloud> = if config.augmentation == Augmentation::None {
                base
            } else {
                let mut partners: Vec<usize> = (0..base.len()).collect();
                partners.shuffle(&mut rng);
                let mut mixed = Vec::with_capacity(base.len());
                for (i, &j) in partners.iter().enumerate() {
                    let spec = MixSpec {
                        lambda: config.lambda,
                        seed: rng.random(),
                        beta: config.beta,
                    };
                    let (a, b) = (&base[i], &base[j]);
                    // mixing needs equal sizes; fall back to the unmixed sample otherwise
                    mixed.push(if a.cloud.len() == b.cloud.len() {
                        mix(config.augmentation, a, b, &spec)?
                    } else {
                        a.clone()
                    });
                }
                mixed
            };
            let inputs: Vec<Vec<Point3<f64>>> = batch
                .iter()
                .map(|d| scale_translate(&d.cloud, config, &mut rng))
                .collect();
            let labels: Vec<&[f64]> = batch.iter().map(|d| d.label()).collect();
            let pass = current.forward(&inputs, Mode::Train)?;
            let (loss, dlogits) = batch_smoothed_ce(&pass.logits, &labels, config.smoothing)?;
            let grads = current.backward(&pass.cache, &dlogits)?;
            adam.step(&mut current.params, &grads.params, None);
            for (stats, layer) in current
                .stats
                .iter_mut()
                .zip(pass.cache.layers.iter().chain(std::iter::once(&pass.cache.head)))
            {
                stats.blend(&layer.moments, BN_MOMENTUM);
            }
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            correct += batch
                .iter()
                .enumerate()
                .filter(|(i, d)| argmax(pass.logits.row(*i).iter().copied()) == d.argmax())
                .count();
        }
        let train_loss = loss_sum / seen as f64;
        let train_accuracy = correct as f64 / seen as f64;
        let (val_loss, val_accuracy) = if validation.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&current, validation, config.smoothing)?;
            (Some(l), Some(a))
        };
        history.push(EpochRecord {
            epoch,
            lr: adam.lr,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });

        let score = val_accuracy.unwrap_or(-train_loss);
        let tiebreak = val_loss.unwrap_or(train_loss);
        let improved = match &best {
            None => true,
            Some((s, t, _, _)) => score > *s || (score == *s && tiebreak < *t),
        };
        if improved {
            best = Some((score, tiebreak, epoch, current.clone()));
        }

        let monitored = val_loss.unwrap_or(train_loss);
        if monitored < plateau_best - config.plateau_threshold {
            plateau_best = monitored;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.plateau_patience {
                adam.lr *= config.plateau_factor;
                stale = 0;
            }
        }
    }
    let (state_best, best_epoch) = match best {
        Some((_, _, e, s)) => (s, e),
        None => (current.clone(), 0),
    };
    Ok(TrainOutcome {
        state: state_best,
        last: current,
        best_epoch,
        history,
    })
}
