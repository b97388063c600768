//! Minimum-cost point matching under squared Euclidean cost.

use nalgebra::Point3;

use super::AugmentError;

/// Largest size solved exactly; above it a greedy matching is refined by 2-swaps.
pub const EXACT_LIMIT: usize = 256;

const MAX_SWAP_PASSES: usize = 16;

/// A bijection on `0..n`, stored as `image[i] = pi(i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self { image: (0..n).collect() }
    }

    /// Fails unless every index in `0..image.len()` appears exactly once.
    pub fn new(image: Vec<usize>) -> Result<Self, AugmentError> {
        let mut seen = vec![false; image.len()];
        for &j in &image {
            if j >= image.len() || std::mem::replace(&mut seen[j], true) {
                return Err(AugmentError::NotAPermutation);
            }
        }
        Ok(Self { image })
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.image[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.image
    }
}

/// `sum_i |a_i - b_pi(i)|^2`, accumulated in index order.
pub fn assignment_cost(a: &[Point3<f64>], b: &[Point3<f64>], pi: &Permutation) -> f64 {
    a.iter()
        .enumerate()
        .map(|(i, p)| (p - b[pi.apply(i)]).norm_squared())
        .sum()
}

/// Matching of `a` onto `b` minimizing total squared distance.
///
/// Exact (Hungarian, O(n^3)) for `n <= EXACT_LIMIT`; larger inputs use a
/// greedy nearest-available pass followed by pairwise swap improvement.
pub fn emd_assign(a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<Permutation, AugmentError> {
    if a.len() != b.len() {
        return Err(AugmentError::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let image = if a.len() <= EXACT_LIMIT {
        hungarian(a, b)
    } else {
        let mut image = greedy(a, b);
        two_swap(a, b, &mut image);
        image
    };
    Ok(Permutation { image })
}

fn hungarian(a: &[Point3<f64>], b: &[Point3<f64>]) -> Vec<usize> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| (a[i - 1] - b[j - 1]).norm_squared();
    // 1-based potentials; column 0 is a virtual start
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut image = vec![0; n];
    for j in 1..=n {
        image[row_of[j] - 1] = j - 1;
    }
    image
}

fn greedy(a: &[Point3<f64>], b: &[Point3<f64>]) -> Vec<usize> {
    let mut taken = vec![false; b.len()];
    a.iter()
        .map(|p| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for (j, q) in b.iter().enumerate() {
                if !taken[j] {
                    let d = (p - q).norm_squared();
                    if d < best_d {
                        best_d = d;
                        best = j;
                    }
                }
            }
            taken[best] = true;
            best
        })
        .collect()
}

fn two_swap(a: &[Point3<f64>], b: &[Point3<f64>], image: &mut [usize]) {
    let n = a.len();
    for _ in 0..MAX_SWAP_PASSES {
        let mut improved = false;
        for i in 0..n {
            for j in i + 1..n {
                let (bi, bj) = (image[i], image[j]);
                let now = (a[i] - b[bi]).norm_squared() + (a[j] - b[bj]).norm_squared();
                let swapped = (a[i] - b[bj]).norm_squared() + (a[j] - b[bi]).norm_squared();
                if swapped < now {
                    image.swap(i, j);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}
