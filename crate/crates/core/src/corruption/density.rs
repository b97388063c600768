//! Local density corruptions and cutout.
//!
//! Anchors are drawn one at a time from the points that are still present,
//! and each anchor's neighborhood is taken among those survivors, so removed
//! regions never overlap and output sizes depend only on the parameters.

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::CorruptionError;
use crate::geometry::{KnnIndex, PointCloud};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMode {
    Increase,
    Decrease,
}

/// A cluster removal or densification record in input-cloud indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub anchor: usize,
    /// The anchor's neighborhood, nearest first.
    pub members: Vec<usize>,
    /// Members removed (decrease/cutout) or duplicated (increase).
    pub affected: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DensityOutcome {
    pub cloud: PointCloud,
    pub clusters: Vec<ClusterRecord>,
}

/// Indices into `cloud` that are still alive, and a kNN index over them.
struct Survivors {
    alive: Vec<usize>,
}

impl Survivors {
    fn new(n: usize) -> Self {
        Self {
            alive: (0..n).collect(),
        }
    }

    /// kNN of `anchor` (an input index) among survivors, as input indices.
    fn neighborhood(&self, cloud: &PointCloud, anchor: usize, k: usize) -> Result<Vec<usize>, CorruptionError> {
        let pts: Vec<_> = self.alive.iter().map(|&i| cloud.points()[i]).collect();
        let index = KnnIndex::build(&pts);
        Ok(index
            .query_indices(&cloud.points()[anchor], k)
            .map_err(|_| CorruptionError::CountExceedsCloud {
                count: k,
                n: self.alive.len(),
            })?
            .into_iter()
            .map(|j| self.alive[j])
            .collect())
    }

    fn remove(&mut self, gone: &[usize]) {
        let mut gone = gone.to_vec();
        gone.sort_unstable();
        self.alive.retain(|i| gone.binary_search(i).is_err());
    }
}

fn keep(cloud: &PointCloud, alive: &[usize]) -> PointCloud {
    PointCloud::from_points_unchecked(alive.iter().map(|&i| cloud.points()[i]).collect())
}

/// Thins (`Decrease`) or thickens (`Increase`) `n_clusters` local regions.
///
/// Each region is the `cluster_size`-NN set of a random anchor;
/// `floor(fraction * cluster_size)` of its members are removed, or duplicated
/// with Gaussian jitter `sigma = jitter`.
pub fn local_density(
    cloud: &PointCloud,
    mode: DensityMode,
    n_clusters: usize,
    cluster_size: usize,
    fraction: f64,
    jitter: f64,
    seed: u64,
) -> Result<DensityOutcome, CorruptionError> {
    if n_clusters == 0 {
        return Err(CorruptionError::Parameter("n_clusters must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CorruptionError::Parameter(format!("fraction {fraction} outside [0, 1]")));
    }
    if cluster_size == 0 || cluster_size > cloud.len() {
        return Err(CorruptionError::CountExceedsCloud {
            count: cluster_size,
            n: cloud.len(),
        });
    }
    let per_cluster = (fraction * cluster_size as f64).floor() as usize;
    let mut rng = rng_from_seed(seed);
    let mut records = Vec::with_capacity(n_clusters);
    match mode {
        DensityMode::Decrease => {
            let mut survivors = Survivors::new(cloud.len());
            for _ in 0..n_clusters {
                if survivors.alive.len() < cluster_size {
                    return Err(CorruptionError::CountExceedsCloud {
                        count: cluster_size,
                        n: survivors.alive.len(),
                    });
                }
                let anchor = survivors.alive[rng.random_range(0..survivors.alive.len())];
                let members = survivors.neighborhood(cloud, anchor, cluster_size)?;
                let mut affected: Vec<usize> = sample(&mut rng, members.len(), per_cluster)
                    .into_iter()
                    .map(|j| members[j])
                    .collect();
                affected.sort_unstable();
                survivors.remove(&affected);
                records.push(ClusterRecord {
                    anchor,
                    members,
                    affected,
                });
            }
            Ok(DensityOutcome {
                cloud: keep(cloud, &survivors.alive),
                clusters: records,
            })
        }
        DensityMode::Increase => {
            if !(jitter >= 0.0) || !jitter.is_finite() {
                return Err(CorruptionError::Parameter(format!("jitter {jitter} must be non-negative")));
            }
            let index = KnnIndex::build(cloud.points());
            let normal = (jitter > 0.0).then(|| Normal::new(0.0, jitter).expect("positive sigma"));
            let mut points = cloud.points().to_vec();
            for _ in 0..n_clusters {
                let anchor = rng.random_range(0..cloud.len());
                let members = index
                    .query_indices(&cloud.points()[anchor], cluster_size)
                    .expect("cluster_size checked against cloud size");
                let affected: Vec<usize> = sample(&mut rng, members.len(), per_cluster)
                    .into_iter()
                    .map(|j| members[j])
                    .collect();
                for &i in &affected {
                    let offset = match &normal {
                        Some(nd) => Vector3::new(nd.sample(&mut rng), nd.sample(&mut rng), nd.sample(&mut rng)),
                        None => Vector3::zeros(),
                    };
                    points.push(cloud.points()[i] + offset);
                }
                records.push(ClusterRecord {
                    anchor,
                    members,
                    affected,
                });
            }
            Ok(DensityOutcome {
                cloud: PointCloud::from_points_unchecked(points),
                clusters: records,
            })
        }
    }
}

/// Removes the full `k`-NN neighborhoods of `n_clusters` sequentially drawn anchors.
pub fn cutout(cloud: &PointCloud, n_clusters: usize, k: usize, seed: u64) -> Result<DensityOutcome, CorruptionError> {
    if k == 0 || k >= cloud.len() {
        return Err(CorruptionError::CountExceedsCloud {
            count: k,
            n: cloud.len(),
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut survivors = Survivors::new(cloud.len());
    let mut records = Vec::with_capacity(n_clusters);
    for _ in 0..n_clusters {
        if survivors.alive.len() <= k {
            return Err(CorruptionError::CountExceedsCloud {
                count: k,
                n: survivors.alive.len(),
            });
        }
        let anchor = survivors.alive[rng.random_range(0..survivors.alive.len())];
        let members = survivors.neighborhood(cloud, anchor, k)?;
        let mut affected = members.clone();
        affected.sort_unstable();
        survivors.remove(&affected);
        records.push(ClusterRecord {
            anchor,
            members,
            affected,
        });
    }
    Ok(DensityOutcome {
        cloud: keep(cloud, &survivors.alive),
        clusters: records,
    })
}
