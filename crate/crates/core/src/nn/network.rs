//! Parameters, forward pass and analytic backward pass.

use nalgebra::{DMatrix, DVector, Point3};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::rng::{rng_from_seed, splitmix64};

pub const BN_EPS: f64 = 1e-6;
pub const BN_MOMENTUM: f64 = 0.1;

/// Layer widths: shared per-point layers, the hidden head layer, and classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub point_layers: Vec<usize>,
    pub head: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn new(classes: usize) -> Self {
        Self {
            point_layers: vec![64, 128, 256],
            head: 128,
            classes,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.classes < 2 {
            return Err(NnError::Architecture("at least two classes are required".into()));
        }
        if self.point_layers.is_empty() || self.point_layers.contains(&0) || self.head == 0 {
            return Err(NnError::Architecture("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn pooled_width(&self) -> usize {
        *self.point_layers.last().expect("validated")
    }
}

/// Trainable tensors. Linear layers followed by batch norm carry no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `out x in` weights of the shared per-point layers.
    pub point_weights: Vec<DMatrix<f64>>,
    pub point_gamma: Vec<DVector<f64>>,
    pub point_beta: Vec<DVector<f64>>,
    pub head_weight: DMatrix<f64>,
    pub head_gamma: DVector<f64>,
    pub head_beta: DVector<f64>,
    pub out_weight: DMatrix<f64>,
    pub out_bias: DVector<f64>,
}

/// Which tensor of [`Params`] a flat slot refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Weight,
    Gamma,
    Beta,
    Bias,
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        let z = |m: &DMatrix<f64>| DMatrix::zeros(m.nrows(), m.ncols());
        let zv = |v: &DVector<f64>| DVector::zeros(v.len());
        Self {
            point_weights: self.point_weights.iter().map(z).collect(),
            point_gamma: self.point_gamma.iter().map(zv).collect(),
            point_beta: self.point_beta.iter().map(zv).collect(),
            head_weight: z(&self.head_weight),
            head_gamma: zv(&self.head_gamma),
            head_beta: zv(&self.head_beta),
            out_weight: z(&self.out_weight),
            out_bias: zv(&self.out_bias),
        }
    }

    /// Tensor names in declared order.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.point_weights.len() {
            names.push(format!("point{l}.weight"));
            names.push(format!("point{l}.gamma"));
            names.push(format!("point{l}.beta"));
        }
        names.extend(["head.weight", "head.gamma", "head.beta", "out.weight", "out.bias"].map(String::from));
        names
    }

    pub fn roles(&self) -> Vec<TensorRole> {
        let mut roles = Vec::new();
        for _ in &self.point_weights {
            roles.extend([TensorRole::Weight, TensorRole::Gamma, TensorRole::Beta]);
        }
        roles.extend([
            TensorRole::Weight,
            TensorRole::Gamma,
            TensorRole::Beta,
            TensorRole::Weight,
            TensorRole::Bias,
        ]);
        roles
    }

    /// Column-major storage of every tensor, in [`Self::names`] order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in 0..self.point_weights.len() {
            out.push(self.point_weights[l].as_slice());
            out.push(self.point_gamma[l].as_slice());
            out.push(self.point_beta[l].as_slice());
        }
        out.extend([
            self.head_weight.as_slice(),
            self.head_gamma.as_slice(),
            self.head_beta.as_slice(),
            self.out_weight.as_slice(),
            self.out_bias.as_slice(),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for ((w, g), b) in self
            .point_weights
            .iter_mut()
            .zip(self.point_gamma.iter_mut())
            .zip(self.point_beta.iter_mut())
        {
            out.push(w.as_mut_slice());
            out.push(g.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out.push(self.head_weight.as_mut_slice());
        out.push(self.head_gamma.as_mut_slice());
        out.push(self.head_beta.as_mut_slice());
        out.push(self.out_weight.as_mut_slice());
        out.push(self.out_bias.as_mut_slice());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Running batch-norm statistics of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
}

impl BnStats {
    fn identity(width: usize) -> Self {
        Self {
            mean: DVector::zeros(width),
            var: DVector::from_element(width, 1.0),
        }
    }

    /// `self <- (1 - w) self + w other`.
    pub fn blend(&mut self, other: &BnStats, w: f64) {
        self.mean = &self.mean * (1.0 - w) + &other.mean * w;
        self.var = &self.var * (1.0 - w) + &other.var * w;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; the caller folds them into the running statistics.
    Train,
    /// Running statistics.
    Eval,
    /// Batch statistics, running statistics left alone.
    Adapt,
}

impl Mode {
    fn batch_statistics(self) -> bool {
        !matches!(self, Mode::Eval)
    }
}

/// Complete model: architecture, trainable parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub arch: Architecture,
    pub params: Params,
    /// One entry per point layer, then the head layer.
    pub stats: Vec<BnStats>,
}

/// Per-layer values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Layer input per sample (`n_s x d_in`).
    pub input: Vec<DMatrix<f64>>,
    /// Normalized pre-activations per sample (`n_s x d_out`).
    pub xhat: Vec<DMatrix<f64>>,
    /// ReLU output per sample.
    pub output: Vec<DMatrix<f64>>,
    pub inv_std: DVector<f64>,
    /// Statistics used for normalization (batch or running).
    pub moments: BnStats,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub mode: Mode,
    pub layers: Vec<LayerCache>,
    /// Winning point per pooled feature, per sample.
    pub argmax: Vec<Vec<usize>>,
    pub head: LayerCache,
    fingerprint: u64,
}

impl ForwardCache {
    pub fn batch_len(&self) -> usize {
        self.argmax.len()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `batch x classes`.
    pub logits: DMatrix<f64>,
    pub cache: ForwardCache,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Params,
    /// `n_s x 3` per sample.
    pub inputs: Vec<DMatrix<f64>>,
}

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

/// Column means and biased variances over the rows of all matrices.
fn batch_moments(z: &[DMatrix<f64>]) -> BnStats {
    let d = z[0].ncols();
    let n: usize = z.iter().map(|m| m.nrows()).sum();
    let sums: Vec<DVector<f64>> = z.par_iter().map(|m| m.row_sum().transpose()).collect();
    let mean = sums.iter().fold(DVector::zeros(d), |a, s| a + s) / n as f64;
    let sq: Vec<DVector<f64>> = z
        .par_iter()
        .map(|m| {
            DVector::from_fn(d, |j, _| m.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum())
        })
        .collect();
    let var = sq.iter().fold(DVector::zeros(d), |a, s| a + s) / n as f64;
    BnStats { mean, var }
}

fn normalize(z: &DMatrix<f64>, moments: &BnStats, inv_std: &DVector<f64>) -> DMatrix<f64> {
    let mut x = z.clone();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let (m, s) = (moments.mean[j], inv_std[j]);
        col.apply(|v| *v = (*v - m) * s);
    }
    x
}

fn affine(xhat: &DMatrix<f64>, gamma: &DVector<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let mut y = xhat.clone();
    for (j, mut col) in y.column_iter_mut().enumerate() {
        let (g, b) = (gamma[j], beta[j]);
        col.apply(|v| *v = g * *v + b);
    }
    y
}

fn scale_columns(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.scale_mut(s[j]);
    }
    out
}

/// Linear, batch norm, ReLU over a list of per-sample matrices.
fn bn_layer(
    input: Vec<DMatrix<f64>>,
    weight: &DMatrix<f64>,
    gamma: &DVector<f64>,
    beta: &DVector<f64>,
    running: &BnStats,
    mode: Mode,
) -> LayerCache {
    let wt = weight.transpose();
    let z: Vec<DMatrix<f64>> = input.par_iter().map(|x| x * &wt).collect();
    let moments = if mode.batch_statistics() {
        batch_moments(&z)
    } else {
        running.clone()
    };
    let inv_std = moments.var.map(|v| 1.0 / (v + BN_EPS).sqrt());
    let (xhat, output): (Vec<_>, Vec<_>) = z
        .par_iter()
        .map(|zs| {
            let xh = normalize(zs, &moments, &inv_std);
            let out = relu(&affine(&xh, gamma, beta));
            (xh, out)
        })
        .unzip();
    LayerCache {
        input,
        xhat,
        output,
        inv_std,
        moments,
    }
}

/// Gradient through normalization, given `d xhat`.
fn bn_backward(dxhat: Vec<DMatrix<f64>>, layer: &LayerCache, batch_statistics: bool) -> Vec<DMatrix<f64>> {
    if !batch_statistics {
        return dxhat.par_iter().map(|d| scale_columns(d, &layer.inv_std)).collect();
    }
    let d = layer.inv_std.len();
    let n: usize = dxhat.iter().map(|m| m.nrows()).sum();
    let partial: Vec<(DVector<f64>, DVector<f64>)> = dxhat
        .par_iter()
        .zip(layer.xhat.par_iter())
        .map(|(dx, xh)| (dx.row_sum().transpose(), dx.component_mul(xh).row_sum().transpose()))
        .collect();
    let (s1, s2) = partial
        .iter()
        .fold((DVector::zeros(d), DVector::zeros(d)), |(a, b), (x, y)| (a + x, b + y));
    let nf = n as f64;
    dxhat
        .par_iter()
        .zip(layer.xhat.par_iter())
        .map(|(dx, xh)| {
            let mut out = dx.clone();
            for j in 0..d {
                let k = layer.inv_std[j] / nf;
                for i in 0..out.nrows() {
                    out[(i, j)] = k * (nf * dx[(i, j)] - s1[j] - xh[(i, j)] * s2[j]);
                }
            }
            out
        })
        .collect()
}

/// Affine and ReLU backward: returns `(d xhat, d gamma, d beta)`.
fn affine_relu_backward(
    dout: &[DMatrix<f64>],
    layer: &LayerCache,
    gamma: &DVector<f64>,
) -> (Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>) {
    let d = gamma.len();
    let parts: Vec<(DMatrix<f64>, DVector<f64>, DVector<f64>)> = dout
        .par_iter()
        .zip(layer.output.par_iter())
        .zip(layer.xhat.par_iter())
        .map(|((g, out), xh)| {
            let dy = g.zip_map(out, |g, o| if o > 0.0 { g } else { 0.0 });
            let dgamma = dy.component_mul(xh).row_sum().transpose();
            let dbeta = dy.row_sum().transpose();
            (scale_columns(&dy, gamma), dgamma, dbeta)
        })
        .collect();
    let mut dgamma = DVector::zeros(d);
    let mut dbeta = DVector::zeros(d);
    let mut dxhat = Vec::with_capacity(parts.len());
    for (dx, dg, db) in parts {
        dgamma += dg;
        dbeta += db;
        dxhat.push(dx);
    }
    (dxhat, dgamma, dbeta)
}

impl NetworkState {
    /// He-normal weights, unit scale, zero shift, identity running statistics.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, NnError> {
        arch.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut he = |rows: usize, cols: usize, gain: f64| {
            let normal = Normal::new(0.0, (gain / cols as f64).sqrt()).expect("positive std");
            DMatrix::from_fn(rows, cols, |_, _| normal.sample(&mut rng))
        };
        let mut point_weights = Vec::new();
        let mut fan_in = 3;
        for &w in &arch.point_layers {
            point_weights.push(he(w, fan_in, 2.0));
            fan_in = w;
        }
        let head_weight = he(arch.head, fan_in, 2.0);
        let out_weight = he(arch.classes, arch.head, 1.0);
        let ones = |n: usize| DVector::from_element(n, 1.0);
        let params = Params {
            point_gamma: arch.point_layers.iter().map(|&w| ones(w)).collect(),
            point_beta: arch.point_layers.iter().map(|&w| DVector::zeros(w)).collect(),
            point_weights,
            head_weight,
            head_gamma: ones(arch.head),
            head_beta: DVector::zeros(arch.head),
            out_weight,
            out_bias: DVector::zeros(arch.classes),
        };
        let mut stats: Vec<BnStats> = arch.point_layers.iter().map(|&w| BnStats::identity(w)).collect();
        stats.push(BnStats::identity(arch.head));
        Ok(Self { arch, params, stats })
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    /// Hash of every parameter and statistic bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0u64;
        let mut feed = |s: &[f64]| {
            for v in s {
                h = splitmix64(h ^ v.to_bits());
            }
        };
        for t in self.params.tensors() {
            feed(t);
        }
        for s in &self.stats {
            feed(s.mean.as_slice());
            feed(s.var.as_slice());
        }
        h
    }

    pub fn forward<C>(&self, batch: &[C], mode: Mode) -> Result<ForwardPass, NnError>
    where
        C: AsRef<[Point3<f64>]> + Sync,
    {
        if batch.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        if let Some(i) = batch.iter().position(|c| c.as_ref().is_empty()) {
            return Err(NnError::EmptyCloud { index: i });
        }
        if mode.batch_statistics() && batch.len() < 2 {
            return Err(NnError::BatchTooSmall(batch.len()));
        }
        let p = &self.params;
        let mut h: Vec<DMatrix<f64>> = batch
            .par_iter()
            .map(|c| {
                let pts = c.as_ref();
                DMatrix::from_fn(pts.len(), 3, |i, j| pts[i][j])
            })
            .collect();
        let mut layers = Vec::with_capacity(p.point_weights.len());
        for l in 0..p.point_weights.len() {
            let layer = bn_layer(h, &p.point_weights[l], &p.point_gamma[l], &p.point_beta[l], &self.stats[l], mode);
            h = layer.output.clone();
            layers.push(layer);
        }
        let width = self.arch.pooled_width();
        let (argmax, pooled_rows): (Vec<Vec<usize>>, Vec<Vec<f64>>) = h
            .par_iter()
            .map(|m| {
                (0..width)
                    .map(|j| {
                        let col = m.column(j);
                        let mut best = 0;
                        for i in 1..col.len() {
                            if col[i] > col[best] {
                                best = i;
                            }
                        }
                        (best, col[best])
                    })
                    .unzip()
            })
            .unzip();
        let pooled = DMatrix::from_fn(batch.len(), width, |s, j| pooled_rows[s][j]);
        let head = bn_layer(
            vec![pooled],
            &p.head_weight,
            &p.head_gamma,
            &p.head_beta,
            self.stats.last().expect("head stats"),
            mode,
        );
        let mut logits = &head.output[0] * p.out_weight.transpose();
        for mut row in logits.row_iter_mut() {
            row += p.out_bias.transpose();
        }
        Ok(ForwardPass {
            logits,
            cache: ForwardCache {
                mode,
                layers,
                argmax,
                head,
                fingerprint: self.fingerprint(),
            },
        })
    }

    /// Gradients of a scalar loss given `d loss / d logits` (`batch x classes`).
    pub fn backward(&self, cache: &ForwardCache, dlogits: &DMatrix<f64>) -> Result<Gradients, NnError> {
        if cache.fingerprint != self.fingerprint() {
            return Err(NnError::StaleCache);
        }
        if dlogits.nrows() != cache.batch_len() || dlogits.ncols() != self.arch.classes {
            return Err(NnError::Shape(format!(
                "logit gradient is {}x{}, expected {}x{}",
                dlogits.nrows(),
                dlogits.ncols(),
                cache.batch_len(),
                self.arch.classes
            )));
        }
        let p = &self.params;
        let batch_stats = cache.mode.batch_statistics();
        let mut grads = p.zeros_like();

        let act = &cache.head.output[0];
        grads.out_weight = dlogits.transpose() * act;
        grads.out_bias = dlogits.row_sum().transpose();
        let dact = dlogits * &p.out_weight;
        let (dxhat, dg, db) = affine_relu_backward(&[dact], &cache.head, &p.head_gamma);
        grads.head_gamma = dg;
        grads.head_beta = db;
        let dz = bn_backward(dxhat, &cache.head, batch_stats);
        grads.head_weight = dz[0].transpose() * &cache.head.input[0];
        let dpooled = &dz[0] * &p.head_weight;

        let last = cache.layers.last().expect("at least one point layer");
        let mut dh: Vec<DMatrix<f64>> = last
            .output
            .par_iter()
            .enumerate()
            .map(|(s, out)| {
                let mut g = DMatrix::zeros(out.nrows(), out.ncols());
                for (j, &i) in cache.argmax[s].iter().enumerate() {
                    g[(i, j)] = dpooled[(s, j)];
                }
                g
            })
            .collect();
        for l in (0..cache.layers.len()).rev() {
            let layer = &cache.layers[l];
            let (dxhat, dg, db) = affine_relu_backward(&dh, layer, &p.point_gamma[l]);
            grads.point_gamma[l] = dg;
            grads.point_beta[l] = db;
            let dz = bn_backward(dxhat, layer, batch_stats);
            let dws: Vec<DMatrix<f64>> = dz
                .par_iter()
                .zip(layer.input.par_iter())
                .map(|(d, x)| d.tr_mul(x))
                .collect();
            let w = &p.point_weights[l];
            grads.point_weights[l] = dws.iter().fold(DMatrix::zeros(w.nrows(), w.ncols()), |a, g| a + g);
            dh = dz.par_iter().map(|d| d * w).collect();
        }
        Ok(Gradients { params: grads, inputs: dh })
    }

    /// Eval-mode logits, evaluated in chunks of `chunk` samples.
    pub fn logits<C>(&self, clouds: &[C], chunk: usize) -> Result<DMatrix<f64>, NnError>
    where
        C: AsRef<[Point3<f64>]> + Sync,
    {
        let mut rows: Vec<f64> = Vec::new();
        for part in clouds.chunks(chunk.max(1)) {
            let pass = self.forward(part, Mode::Eval)?;
            for r in pass.logits.row_iter() {
                rows.extend(r.iter());
            }
        }
        Ok(DMatrix::from_row_slice(clouds.len(), self.arch.classes, &rows))
    }

    /// Eval-mode predicted classes (lowest index on ties).
    pub fn predict<C>(&self, clouds: &[C]) -> Result<Vec<usize>, NnError>
    where
        C: AsRef<[Point3<f64>]> + Sync,
    {
        let logits = self.logits(clouds, 16)?;
        Ok(logits.row_iter().map(|r| argmax(r.iter().copied())).collect())
    }
}

/// Index of the first maximum.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}
