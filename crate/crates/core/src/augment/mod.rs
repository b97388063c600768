//! Mixing augmentations for training: random and kNN-region cut-mix,
//! assignment-based mixup, and rigid subset mixing.

pub mod emd;

use nalgebra::{Point3, Vector3};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use emd::{assignment_cost, emd_assign, Permutation, EXACT_LIMIT};

use crate::geometry::{KnnIndex, PointCloud};
use crate::rng::{mix_keys, rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("cloud sizes differ: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("label dimensions differ: {left} vs {right}")]
    LabelMismatch { left: usize, right: usize },
    #[error("label must be non-negative and sum to 1")]
    InvalidLabel,
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("lambda must lie in [0, 1], got {0}")]
    Lambda(f64),
    #[error("beta concentration must be positive, got {0}")]
    Concentration(f64),
    #[error("not a permutation")]
    NotAPermutation,
    #[error("cannot mix empty clouds")]
    Empty,
}

/// A cloud with a soft label over `C` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    label: Vec<f64>,
}

impl LabeledCloud {
    pub fn new(cloud: PointCloud, label: Vec<f64>) -> Result<Self, AugmentError> {
        let sum: f64 = label.iter().sum();
        if label.is_empty() || label.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(AugmentError::InvalidLabel);
        }
        Ok(Self { cloud, label })
    }

    pub fn one_hot(cloud: PointCloud, class: usize, classes: usize) -> Result<Self, AugmentError> {
        if class >= classes {
            return Err(AugmentError::ClassOutOfRange { class, classes });
        }
        let mut label = vec![0.0; classes];
        label[class] = 1.0;
        Ok(Self { cloud, label })
    }

    pub fn label(&self) -> &[f64] {
        &self.label
    }

    /// Class with the largest weight (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.label.iter().enumerate() {
            if v > self.label[best] {
                best = i;
            }
        }
        best
    }
}

/// Mixing weight and seed. With `beta` set, `lambda` is replaced by a draw
/// from `Beta(beta, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub lambda: f64,
    pub seed: u64,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl Default for MixSpec {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            seed: 0,
            beta: None,
        }
    }
}

impl MixSpec {
    pub fn new(lambda: f64, seed: u64) -> Result<Self, AugmentError> {
        let spec = Self { lambda, seed, beta: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(AugmentError::Lambda(self.lambda));
        }
        if let Some(a) = self.beta {
            if !(a > 0.0 && a.is_finite()) {
                return Err(AugmentError::Concentration(a));
            }
        }
        Ok(())
    }

    fn draw(&self) -> Result<(f64, Rng), AugmentError> {
        self.validate()?;
        let mut rng = rng_from_seed(self.seed);
        let lambda = match self.beta {
            Some(a) => Beta::new(a, a).map_err(|_| AugmentError::Concentration(a))?.sample(&mut rng),
            None => self.lambda,
        };
        Ok((lambda, rng))
    }
}

/// `lambda * y_a + (1 - lambda) * y_b`.
pub fn mix_labels(y_a: &[f64], y_b: &[f64], lambda: f64) -> Result<Vec<f64>, AugmentError> {
    if y_a.len() != y_b.len() {
        return Err(AugmentError::LabelMismatch {
            left: y_a.len(),
            right: y_b.len(),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(AugmentError::Lambda(lambda));
    }
    Ok(y_a.iter().zip(y_b).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect())
}

/// A mixed sample and where its points came from.
#[derive(Debug, Clone)]
pub struct Mixed {
    pub sample: LabeledCloud,
    /// Indices into `a` of the points kept from `a`, in output order.
    pub from_a: Vec<usize>,
    /// Indices into `b` of the points taken from `b`, in output order after `from_a`.
    pub from_b: Vec<usize>,
    /// Offset added to the `b` points (rigid mixing only).
    pub translation: Vector3<f64>,
    /// Label weight of `a`.
    pub weight_a: f64,
}

fn check_pair(a: &LabeledCloud, b: &LabeledCloud) -> Result<usize, AugmentError> {
    if a.cloud.len() != b.cloud.len() {
        return Err(AugmentError::SizeMismatch {
            left: a.cloud.len(),
            right: b.cloud.len(),
        });
    }
    if a.label.len() != b.label.len() {
        return Err(AugmentError::LabelMismatch {
            left: a.label.len(),
            right: b.label.len(),
        });
    }
    if a.cloud.is_empty() {
        return Err(AugmentError::Empty);
    }
    Ok(a.cloud.len())
}

fn assemble(
    a: &LabeledCloud,
    b: &LabeledCloud,
    from_a: Vec<usize>,
    from_b: Vec<usize>,
    translation: Vector3<f64>,
) -> Result<Mixed, AugmentError> {
    let n = a.cloud.len();
    let points: Vec<Point3<f64>> = from_a
        .iter()
        .map(|&i| a.cloud.points()[i])
        .chain(from_b.iter().map(|&j| b.cloud.points()[j] + translation))
        .collect();
    let weight_a = from_a.len() as f64 / n as f64;
    let label = mix_labels(&a.label, &b.label, weight_a)?;
    Ok(Mixed {
        sample: LabeledCloud {
            cloud: PointCloud::from_points_unchecked(points),
            label,
        },
        from_a,
        from_b,
        translation,
        weight_a,
    })
}

fn region_size(lambda: f64, n: usize) -> usize {
    ((lambda * n as f64).floor() as usize).min(n)
}

fn sorted_sample(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    let mut v = sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

/// `floor(lambda n)` random points of `a` merged with `n - floor(lambda n)` random points of `b`.
pub fn cutmix_r(a: &LabeledCloud, b: &LabeledCloud, spec: &MixSpec) -> Result<Mixed, AugmentError> {
    let n = check_pair(a, b)?;
    let (lambda, mut rng) = spec.draw()?;
    let m = region_size(lambda, n);
    let from_a = sorted_sample(&mut rng, n, m);
    let from_b = sorted_sample(&mut rng, n, n - m);
    assemble(a, b, from_a, from_b, Vector3::zeros())
}

/// The `floor(lambda n)`-NN region of a random anchor of `a`, completed by the
/// points of `b` outside its own `floor(lambda n)`-NN region around the same anchor.
pub fn cutmix_k(a: &LabeledCloud, b: &LabeledCloud, spec: &MixSpec) -> Result<Mixed, AugmentError> {
    let n = check_pair(a, b)?;
    let (lambda, mut rng) = spec.draw()?;
    let m = region_size(lambda, n);
    let anchor = a.cloud.points()[rng.random_range(0..n)];
    let from_a = KnnIndex::build(a.cloud.points())
        .query_indices(&anchor, m)
        .expect("m <= n");
    let by_distance = KnnIndex::build(b.cloud.points())
        .query_indices(&anchor, n)
        .expect("n points");
    let from_b = by_distance[m..].to_vec();
    assemble(a, b, from_a, from_b, Vector3::zeros())
}

/// Point `i` becomes `lambda a_i + (1 - lambda) b_pi(i)` with `pi` the optimal matching.
pub fn mixup_emd(a: &LabeledCloud, b: &LabeledCloud, spec: &MixSpec) -> Result<Mixed, AugmentError> {
    let n = check_pair(a, b)?;
    let (lambda, _) = spec.draw()?;
    let pi = emd_assign(a.cloud.points(), b.cloud.points())?;
    let points = (0..n)
        .map(|i| {
            let pa = a.cloud.points()[i].coords;
            let pb = b.cloud.points()[pi.apply(i)].coords;
            Point3::from(pa * lambda + pb * (1.0 - lambda))
        })
        .collect();
    Ok(Mixed {
        sample: LabeledCloud {
            cloud: PointCloud::from_points_unchecked(points),
            label: mix_labels(&a.label, &b.label, lambda)?,
        },
        from_a: (0..n).collect(),
        from_b: pi.as_slice().to_vec(),
        translation: Vector3::zeros(),
        weight_a: lambda,
    })
}

/// Replaces the `floor(lambda n)`-NN ball of a random anchor of `a` with the
/// same-size ball of a random anchor of `b`, translated onto `a`'s anchor.
pub fn rsmix(a: &LabeledCloud, b: &LabeledCloud, spec: &MixSpec) -> Result<Mixed, AugmentError> {
    let n = check_pair(a, b)?;
    let (lambda, mut rng) = spec.draw()?;
    let m = region_size(lambda, n);
    let anchor_a = a.cloud.points()[rng.random_range(0..n)];
    let anchor_b = b.cloud.points()[rng.random_range(0..n)];
    let mut removed = KnnIndex::build(a.cloud.points())
        .query_indices(&anchor_a, m)
        .expect("m <= n");
    removed.sort_unstable();
    let from_a: Vec<usize> = (0..n).filter(|i| removed.binary_search(i).is_err()).collect();
    let from_b = KnnIndex::build(b.cloud.points())
        .query_indices(&anchor_b, m)
        .expect("m <= n");
    assemble(a, b, from_a, from_b, anchor_a - anchor_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Augmentation {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "cutmix_r")]
    CutmixR,
    #[serde(rename = "cutmix_k")]
    CutmixK,
    #[serde(rename = "mixup")]
    Mixup,
    #[serde(rename = "rsmix")]
    Rsmix,
}

impl std::str::FromStr for Augmentation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| format!("unknown augmentation {s:?}; expected none, cutmix_r, cutmix_k, mixup or rsmix"))
    }
}

/// Training-config fields selecting the augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    #[serde(default)]
    pub augmentation: Augmentation,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub beta: Option<f64>,
}

fn default_lambda() -> f64 {
    0.5
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            augmentation: Augmentation::None,
            lambda: 0.5,
            beta: None,
        }
    }
}

/// Applies `kind` to one pair. `None` returns `a` untouched.
pub fn mix(kind: Augmentation, a: &LabeledCloud, b: &LabeledCloud, spec: &MixSpec) -> Result<LabeledCloud, AugmentError> {
    Ok(match kind {
        Augmentation::None => a.clone(),
        Augmentation::CutmixR => cutmix_r(a, b, spec)?.sample,
        Augmentation::CutmixK => cutmix_k(a, b, spec)?.sample,
        Augmentation::Mixup => mixup_emd(a, b, spec)?.sample,
        Augmentation::Rsmix => rsmix(a, b, spec)?.sample,
    })
}

/// Mixes each pair in parallel; pair `i` uses seed `mix_keys([seed, i])`.
pub fn mix_batch(
    kind: Augmentation,
    pairs: &[(&LabeledCloud, &LabeledCloud)],
    config: &AugmentConfig,
    seed: u64,
) -> Result<Vec<LabeledCloud>, AugmentError> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let spec = MixSpec {
                lambda: config.lambda,
                seed: mix_keys(&[seed, i as u64]),
                beta: config.beta,
            };
            mix(kind, a, b, &spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn sample_pair(n: usize, seed: u64) -> (LabeledCloud, LabeledCloud) {
        let a = crate::synthetic::shape_sample(0, n, seed, 0).cloud;
        let b = crate::synthetic::shape_sample(1, n, seed, 1).cloud;
        (
            LabeledCloud::one_hot(a, 2, 8).unwrap(),
            LabeledCloud::one_hot(b, 5, 8).unwrap(),
        )
    }

    fn key(p: &Point3<f64>) -> [u64; 3] {
        [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
    }

    /// Brute-force kNN by sorting all distances.
    fn oracle_knn(pts: &[Point3<f64>], q: &Point3<f64>, k: usize) -> BTreeSet<usize> {
        let mut d: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| ((p - q).norm_squared(), i)).collect();
        d.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        d.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn label_mixing() {
        let y = mix_labels(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 0.5, 0.0, 0.0, 0.5]);
        assert_eq!(mix_labels(&[0.3, 0.7], &[1.0, 0.0], 1.0).unwrap(), vec![0.3, 0.7]);
        assert!(mix_labels(&[1.0], &[0.5, 0.5], 0.5).is_err());
        assert!(mix_labels(&[1.0], &[1.0], 1.5).is_err());
    }

    #[test]
    fn cutmix_r_halves() {
        let (a, b) = sample_pair(1024, 1);
        let m = cutmix_r(&a, &b, &MixSpec::default()).unwrap();
        assert_eq!(m.sample.cloud.len(), 1024);
        assert_eq!((m.from_a.len(), m.from_b.len()), (512, 512));
        assert_eq!(m.weight_a, 0.5);
        assert_eq!(m.sample.label()[2], 0.5);
        let parents: BTreeSet<[u64; 3]> = a.cloud.points().iter().chain(b.cloud.points()).map(key).collect();
        assert!(m.sample.cloud.points().iter().all(|p| parents.contains(&key(p))));
        let whole = cutmix_r(&a, &b, &MixSpec::new(1.0, 3).unwrap()).unwrap();
        assert_eq!(whole.sample.cloud, a.cloud);
    }

    #[test]
    fn cutmix_k_region_is_the_knn_set() {
        let (a, b) = sample_pair(512, 2);
        for tenth in 1..=9 {
            let lambda = tenth as f64 / 10.0;
            let m = cutmix_k(&a, &b, &MixSpec::new(lambda, tenth).unwrap()).unwrap();
            assert_eq!(m.sample.cloud.len(), 512);
            let k = (lambda * 512.0).floor() as usize;
            let nearest = m.from_a[0];
            let anchor = a.cloud.points()[nearest];
            let got: BTreeSet<usize> = m.from_a.iter().copied().collect();
            assert_eq!(got, oracle_knn(a.cloud.points(), &anchor, k));
            let b_near = oracle_knn(b.cloud.points(), &anchor, k);
            assert!(m.from_b.iter().all(|j| !b_near.contains(j)));
        }
        let whole = cutmix_k(&a, &b, &MixSpec::new(1.0, 0).unwrap()).unwrap();
        let got: BTreeSet<[u64; 3]> = whole.sample.cloud.points().iter().map(key).collect();
        let want: BTreeSet<[u64; 3]> = a.cloud.points().iter().map(key).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn mixup_interpolates_matched_pairs() {
        let (a, b) = sample_pair(128, 3);
        let m = mixup_emd(&a, &b, &MixSpec::new(0.3, 0).unwrap()).unwrap();
        for (i, p) in m.sample.cloud.points().iter().enumerate() {
            let pa = a.cloud.points()[i];
            let pb = b.cloud.points()[m.from_b[i]];
            let seg = pb - pa;
            let rel = p - pa;
            assert!(seg.cross(&rel).norm() < 1e-12);
            let t = rel.dot(&seg) / seg.norm_squared();
            assert!((t - 0.7).abs() < 1e-9);
        }
        let one = mixup_emd(&a, &b, &MixSpec::new(1.0, 0).unwrap()).unwrap();
        assert_eq!(one.sample.cloud, a.cloud);
        let zero = mixup_emd(&a, &b, &MixSpec::new(0.0, 0).unwrap()).unwrap();
        let got: BTreeSet<[u64; 3]> = zero.sample.cloud.points().iter().map(key).collect();
        let want: BTreeSet<[u64; 3]> = b.cloud.points().iter().map(key).collect();
        assert_eq!(got, want);
        let same = mixup_emd(&a, &a, &MixSpec::new(0.37, 0).unwrap()).unwrap();
        for (p, q) in same.sample.cloud.points().iter().zip(a.cloud.points()) {
            assert!((p - q).norm() < 1e-15);
        }
    }

    #[test]
    fn rsmix_inserts_a_rigid_ball() {
        let (a, b) = sample_pair(512, 4);
        let m = rsmix(&a, &b, &MixSpec::default()).unwrap();
        assert_eq!(m.sample.cloud.len(), 512);
        let k = 256;
        let inserted = &m.sample.cloud.points()[512 - k..];
        for i in 0..k {
            for j in i + 1..k {
                let before = (b.cloud.points()[m.from_b[i]] - b.cloud.points()[m.from_b[j]]).norm();
                let after = (inserted[i] - inserted[j]).norm();
                assert!((before - after).abs() < 1e-12);
            }
        }
        // the b ball is centred on its nearest member, the anchor
        let anchor_b = b.cloud.points()[m.from_b[0]];
        let anchor_a = anchor_b + m.translation;
        let removed: BTreeSet<usize> = (0..512).filter(|i| !m.from_a.contains(i)).collect();
        assert_eq!(removed, oracle_knn(a.cloud.points(), &anchor_a, k));
        let from_b: BTreeSet<usize> = m.from_b.iter().copied().collect();
        assert_eq!(from_b, oracle_knn(b.cloud.points(), &anchor_b, k));
        let none = rsmix(&a, &b, &MixSpec::new(0.0, 1).unwrap()).unwrap();
        assert_eq!(none.sample.cloud, a.cloud);
        assert_eq!(none.sample.label(), a.label());
    }

    #[test]
    fn labels_stay_valid_and_sizes_fixed() {
        let (a, b) = sample_pair(300, 5);
        for kind in [Augmentation::CutmixR, Augmentation::CutmixK, Augmentation::Mixup, Augmentation::Rsmix] {
            for s in 0..4 {
                let spec = MixSpec {
                    lambda: 0.5,
                    seed: s,
                    beta: Some(1.0),
                };
                let out = mix(kind, &a, &b, &spec).unwrap();
                assert_eq!(out.cloud.len(), 300);
                assert!((out.label().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(LabeledCloud::new(out.cloud.clone(), out.label().to_vec()).is_ok());
            }
        }
        let (short, _) = sample_pair(100, 6);
        assert!(matches!(cutmix_r(&a, &short, &MixSpec::default()), Err(AugmentError::SizeMismatch { .. })));
    }

    #[test]
    fn config_json() {
        let c: AugmentConfig = serde_json::from_str(r#"{"augmentation": "cutmix_k", "lambda": 0.25}"#).unwrap();
        assert_eq!(c.augmentation, Augmentation::CutmixK);
        assert_eq!(c.lambda, 0.25);
        assert_eq!(serde_json::from_str::<AugmentConfig>("{}").unwrap(), AugmentConfig::default());
        assert!(serde_json::from_str::<AugmentConfig>(r#"{"augmentation": "saliency"}"#).is_err());
        assert_eq!("RSMIX".parse::<Augmentation>().unwrap(), Augmentation::Rsmix);
    }

    #[test]
    fn batch_is_deterministic() {
        let (a, b) = sample_pair(128, 7);
        let pairs = vec![(&a, &b), (&b, &a), (&a, &a)];
        let cfg = AugmentConfig {
            augmentation: Augmentation::CutmixR,
            ..Default::default()
        };
        let x = mix_batch(Augmentation::CutmixR, &pairs, &cfg, 11).unwrap();
        let y = mix_batch(Augmentation::CutmixR, &pairs, &cfg, 11).unwrap();
        assert_eq!(x, y);
    }
}
