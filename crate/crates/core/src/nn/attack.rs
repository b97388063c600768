//! Point-shifting PGD under an l-infinity budget.

use nalgebra::{DMatrix, Point3};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::loss::batch_smoothed_ce;
use super::network::{Mode, NetworkState};
use super::NnError;
use crate::geometry::PointCloud;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgdConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    /// Start from `x + U(-epsilon, epsilon)` instead of `x`.
    pub random_init: bool,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            alpha: 0.01,
            steps: 7,
            random_init: true,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.alpha > 0.0 && self.alpha <= self.epsilon && self.epsilon.is_finite()) {
            return Err(NnError::Config(format!(
                "PGD needs 0 < alpha <= epsilon, got alpha {} epsilon {}",
                self.alpha, self.epsilon
            )));
        }
        if self.steps == 0 {
            return Err(NnError::Config("PGD needs at least one step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PgdOutcome {
    pub adversarial: PointCloud,
    /// The randomly initialized start point.
    pub initial: PointCloud,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Nearest value to `v` whose computed distance from `center` is at most `eps`.
pub fn project(v: f64, center: f64, eps: f64) -> f64 {
    let mut p = v.clamp(center - eps, center + eps);
    while p - center > eps {
        p = p.next_down();
    }
    while center - p > eps {
        p = p.next_up();
    }
    p
}

/// Cross-entropy of one cloud in eval mode and its gradient with respect to the points.
pub fn input_loss_gradient(
    state: &NetworkState,
    points: &[Point3<f64>],
    class: usize,
) -> Result<(f64, DMatrix<f64>), NnError> {
    if class >= state.classes() {
        return Err(NnError::ClassOutOfRange {
            class,
            classes: state.classes(),
        });
    }
    let pass = state.forward(&[points], Mode::Eval)?;
    let mut onehot = vec![0.0; state.classes()];
    onehot[class] = 1.0;
    let (loss, dlogits) = batch_smoothed_ce(&pass.logits, &[&onehot], 0.0)?;
    let grads = state.backward(&pass.cache, &dlogits)?;
    Ok((loss, grads.inputs.into_iter().next().expect("one sample")))
}

/// `x^{s+1} = clip_{[x - eps, x + eps]}(x^s + alpha sign(grad L(x^s)))` for `steps`
/// iterations, with unsmoothed cross-entropy and running batch-norm statistics.
pub fn pgd_attack(
    state: &NetworkState,
    cloud: &PointCloud,
    class: usize,
    config: &PgdConfig,
    seed: u64,
) -> Result<PgdOutcome, NnError> {
    config.validate()?;
    let eps = config.epsilon;
    let mut rng = rng_from_seed(seed);
    let origin = cloud.points();
    let mut x: Vec<Point3<f64>> = origin
        .iter()
        .map(|p| {
            if config.random_init {
                p.map(|c| project(c + rng.random_range(-eps..=eps), c, eps))
            } else {
                *p
            }
        })
        .collect();
    let initial = x.clone();
    let mut initial_loss = None;
    for _ in 0..config.steps {
        let (loss, grad) = input_loss_gradient(state, &x, class)?;
        initial_loss.get_or_insert(loss);
        for (i, p) in x.iter_mut().enumerate() {
            for a in 0..3 {
                let g = grad[(i, a)];
                let step = if g > 0.0 {
                    config.alpha
                } else if g < 0.0 {
                    -config.alpha
                } else {
                    0.0
                };
                p[a] = project(p[a] + step, origin[i][a], eps);
            }
        }
    }
    let (final_loss, _) = input_loss_gradient(state, &x, class)?;
    Ok(PgdOutcome {
        adversarial: PointCloud::new(x).map_err(|e| NnError::Shape(e.to_string()))?,
        initial: PointCloud::new(initial).map_err(|e| NnError::Shape(e.to_string()))?,
        initial_loss: initial_loss.expect("at least one step"),
        final_loss,
    })
}
