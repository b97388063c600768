//! Exact k-nearest-neighbor search over a fixed point set.
//!
//! The index is a kd-tree built once and then shared read-only. Results are
//! ordered by `(squared distance, source index)` so that equal distances
//! always resolve to the lower index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Point3;

use super::GeometryError;

const LEAF_SIZE: usize = 8;

/// A neighbor returned by [`KnnIndex::query`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KnnIndex {
    points: Vec<Point3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KnnIndex {
    pub fn build(points: &[Point3<f64>]) -> Self {
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build_node(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest source points to `query`, nearest first.
    pub fn query(&self, query: &Point3<f64>, k: usize) -> Result<Vec<Neighbor>, GeometryError> {
        if k > self.points.len() {
            return Err(GeometryError::KTooLarge {
                k,
                n: self.points.len(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.dist2.sqrt(),
            })
            .collect())
    }

    /// Indices only, nearest first.
    pub fn query_indices(&self, query: &Point3<f64>, k: usize) -> Result<Vec<usize>, GeometryError> {
        Ok(self.query(query, k)?.into_iter().map(|n| n.index).collect())
    }

    fn search(&self, node: usize, q: &Point3<f64>, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Candidate {
                        dist2: (self.points[i] - q).norm_squared(),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap holds k items") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // `<=` keeps equal-distance candidates with lower indices reachable
                let worst = heap.peek().map_or(f64::INFINITY, |c| c.dist2);
                if heap.len() < k || diff * diff <= worst {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(points: &[Point3<f64>], q: &Point3<f64>, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - q).norm_squared(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn collinear_points() {
        let pts: Vec<_> = (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let idx = KnnIndex::build(&pts);
        assert_eq!(idx.query_indices(&Point3::origin(), 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn self_query_returns_self() {
        let mut rng = crate::rng::rng_from_seed(4);
        use rand::Rng as _;
        let pts: Vec<_> = (0..300)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let idx = KnnIndex::build(&pts);
        for (i, p) in pts.iter().enumerate() {
            let hit = idx.query(p, 1).unwrap();
            assert_eq!(hit[0].index, i);
            assert_eq!(hit[0].distance, 0.0);
        }
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        let pts = vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, -1.0),
            Point3::new(5.0, 0.0, 0.0),
        ];
        let idx = KnnIndex::build(&pts);
        assert_eq!(idx.query_indices(&Point3::origin(), 3).unwrap(), vec![0, 1, 2]);
        // many duplicates straddling split planes
        let dup: Vec<_> = (0..50).map(|i| Point3::new((i % 3) as f64, 0.0, 0.0)).collect();
        let idx = KnnIndex::build(&dup);
        let q = Point3::new(1.0, 0.0, 0.0);
        assert_eq!(idx.query_indices(&q, 20).unwrap(), brute_force(&dup, &q, 20));
    }

    #[test]
    fn k_larger_than_cloud_is_an_error() {
        let idx = KnnIndex::build(&[Point3::origin()]);
        assert_eq!(
            idx.query(&Point3::origin(), 2),
            Err(GeometryError::KTooLarge { k: 2, n: 1 })
        );
    }

    #[test]
    fn random_200_k10_matches_scan() {
        use rand::Rng as _;
        let mut rng = crate::rng::rng_from_seed(200);
        let pts: Vec<_> = (0..200)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let idx = KnnIndex::build(&pts);
        for _ in 0..50 {
            let q = Point3::new(rng.random(), rng.random(), rng.random());
            assert_eq!(idx.query_indices(&q, 10).unwrap(), brute_force(&pts, &q, 10));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn matches_linear_scan(
            seed in any::<u64>(),
            n in 1usize..2000,
            k_frac in 0.0f64..1.0,
            grid in any::<bool>(),
        ) {
            use rand::Rng as _;
            let mut rng = crate::rng::rng_from_seed(seed);
            // grid-snapped clouds stress equal-distance ties
            let coord = |rng: &mut crate::rng::Rng| {
                let v: f64 = rng.random_range(-1.0..1.0);
                if grid { (v * 4.0).round() / 4.0 } else { v }
            };
            let pts: Vec<_> = (0..n).map(|_| Point3::new(coord(&mut rng), coord(&mut rng), coord(&mut rng))).collect();
            let idx = KnnIndex::build(&pts);
            let k = 1 + ((n - 1) as f64 * k_frac * 0.05) as usize;
            for _ in 0..5 {
                let q = Point3::new(coord(&mut rng), coord(&mut rng), coord(&mut rng));
                prop_assert_eq!(idx.query_indices(&q, k).unwrap(), brute_force(&pts, &q, k));
            }
        }
    }
}
