//! Test-time adaptation: batch-norm statistic replacement and entropy minimization.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::loss::batch_entropy;
use super::network::{Mode, NetworkState, TensorRole};
use super::train::Adam;
use super::NnError;

fn batch_statistics<C>(state: &NetworkState, batch: &[C]) -> Result<Vec<super::network::BnStats>, NnError>
where
    C: AsRef<[Point3<f64>]> + Sync,
{
    if batch.len() < 2 {
        return Err(NnError::BatchTooSmall(batch.len()));
    }
    let pass = state.forward(batch, Mode::Adapt)?;
    let cache = pass.cache;
    Ok(cache
        .layers
        .into_iter()
        .chain(std::iter::once(cache.head))
        .map(|l| l.moments)
        .collect())
}

/// Running statistics become `blend * batch + (1 - blend) * running`; nothing else changes.
pub fn bn_adapt<C>(state: &NetworkState, batch: &[C], blend: f64) -> Result<NetworkState, NnError>
where
    C: AsRef<[Point3<f64>]> + Sync,
{
    if !(blend > 0.0 && blend <= 1.0) {
        return Err(NnError::Config(format!("blend must lie in (0, 1], got {blend}")));
    }
    let fresh = batch_statistics(state, batch)?;
    let mut out = state.clone();
    for (s, b) in out.stats.iter_mut().zip(&fresh) {
        if blend == 1.0 {
            *s = b.clone();
        } else {
            s.blend(b, blend);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TentConfig {
    pub lr: f64,
    pub steps: usize,
}

impl Default for TentConfig {
    fn default() -> Self {
        Self { lr: 1e-3, steps: 1 }
    }
}

/// Mean softmax entropy of the batch under `mode`.
pub fn mean_entropy<C>(state: &NetworkState, batch: &[C], mode: Mode) -> Result<f64, NnError>
where
    C: AsRef<[Point3<f64>]> + Sync,
{
    let pass = state.forward(batch, mode)?;
    Ok(batch_entropy(&pass.logits).0)
}

/// Replaces the statistics with batch statistics, then takes `steps` Adam
/// steps on mean prediction entropy over the batch-norm scales and shifts
/// only. Statistics are refreshed from the batch after the last step.
pub fn tent_adapt<C>(state: &NetworkState, batch: &[C], config: &TentConfig) -> Result<NetworkState, NnError>
where
    C: AsRef<[Point3<f64>]> + Sync,
{
    if !(config.lr >= 0.0 && config.lr.is_finite()) {
        return Err(NnError::Config(format!("TENT lr must be non-negative, got {}", config.lr)));
    }
    let mut out = bn_adapt(state, batch, 1.0)?;
    if config.steps == 0 || config.lr == 0.0 {
        return Ok(out);
    }
    let mask: Vec<bool> = out
        .params
        .roles()
        .into_iter()
        .map(|r| matches!(r, TensorRole::Gamma | TensorRole::Beta))
        .collect();
    let mut adam = Adam::new(&out.params, config.lr, 0.9, 0.999, 1e-8);
    for _ in 0..config.steps {
        let pass = out.forward(batch, Mode::Adapt)?;
        let (_, dlogits) = batch_entropy(&pass.logits);
        let grads = out.backward(&pass.cache, &dlogits)?;
        adam.step(&mut out.params, &grads.params, Some(&mask));
    }
    out.stats = batch_statistics(&out, batch)?;
    Ok(out)
}
