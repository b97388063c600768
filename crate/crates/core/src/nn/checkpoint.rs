//! Binary checkpoint container.
//!
//! Layout (little-endian): `b"TPN1"`, `u32` metadata length, metadata JSON,
//! `u32` tensor count, then per tensor `u32` rank, `u64` per dimension and
//! row-major `f64` values.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::network::{Architecture, BnStats, NetworkState, Params, BN_EPS, BN_MOMENTUM};
use super::NnError;

pub const MAGIC: &[u8; 4] = b"TPN1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub architecture: Architecture,
    pub class_names: Vec<String>,
    /// SHA-256 of the training configuration, if known.
    pub config_digest: Option<String>,
    pub tensors: Vec<String>,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

enum Tensor {
    Matrix(DMatrix<f64>),
    Vector(DVector<f64>),
}

fn layer_tensors(weight: &DMatrix<f64>, gamma: &DVector<f64>, beta: &DVector<f64>, stats: &BnStats) -> Vec<Tensor> {
    vec![
        Tensor::Matrix(weight.clone()),
        Tensor::Vector(gamma.clone()),
        Tensor::Vector(beta.clone()),
        Tensor::Vector(stats.mean.clone()),
        Tensor::Vector(stats.var.clone()),
    ]
}

fn tensor_list(state: &NetworkState) -> (Vec<String>, Vec<Tensor>) {
    let p = &state.params;
    let mut names = Vec::new();
    let mut tensors = Vec::new();
    let suffixes = ["weight", "gamma", "beta", "running_mean", "running_var"];
    for l in 0..p.point_weights.len() {
        names.extend(suffixes.map(|s| format!("point{l}.{s}")));
        tensors.extend(layer_tensors(&p.point_weights[l], &p.point_gamma[l], &p.point_beta[l], &state.stats[l]));
    }
    names.extend(suffixes.map(|s| format!("head.{s}")));
    tensors.extend(layer_tensors(
        &p.head_weight,
        &p.head_gamma,
        &p.head_beta,
        state.stats.last().expect("head stats"),
    ));
    names.extend(["out.weight".to_string(), "out.bias".to_string()]);
    tensors.push(Tensor::Matrix(p.out_weight.clone()));
    tensors.push(Tensor::Vector(p.out_bias.clone()));
    (names, tensors)
}

pub fn save_checkpoint(
    state: &NetworkState,
    class_names: &[String],
    config_digest: Option<String>,
) -> Result<Vec<u8>, NnError> {
    if class_names.len() != state.classes() {
        return Err(NnError::Shape(format!(
            "{} class names for {} classes",
            class_names.len(),
            state.classes()
        )));
    }
    let (names, tensors) = tensor_list(state);
    let meta = CheckpointMeta {
        format: "TPN1".into(),
        architecture: state.arch.clone(),
        class_names: class_names.to_vec(),
        config_digest,
        tensors: names,
        bn_eps: BN_EPS,
        bn_momentum: BN_MOMENTUM,
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        match t {
            Tensor::Matrix(m) => {
                out.extend_from_slice(&2u32.to_le_bytes());
                out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
                out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        out.extend_from_slice(&m[(r, c)].to_le_bytes());
                    }
                }
            }
            Tensor::Vector(v) => {
                out.extend_from_slice(&1u32.to_le_bytes());
                out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                for x in v.iter() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NnError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| NnError::Checkpoint("tensor too large".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn tensor(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>, NnError> {
        let rank = self.u32()? as usize;
        let dims = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if dims != shape {
            return Err(NnError::Checkpoint(format!("{name}: shape {dims:?}, expected {shape:?}")));
        }
        self.f64s(shape.iter().product())
    }

    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, NnError> {
        Ok(DMatrix::from_row_slice(rows, cols, &self.tensor(name, &[rows, cols])?))
    }

    fn vector(&mut self, name: &str, n: usize) -> Result<DVector<f64>, NnError> {
        Ok(DVector::from_vec(self.tensor(name, &[n])?))
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<(NetworkState, CheckpointMeta), NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NnError::Checkpoint("missing TPN1 magic".into()));
    }
    let len = r.u32()? as usize;
    let meta: CheckpointMeta =
        serde_json::from_slice(r.take(len)?).map_err(|e| NnError::Checkpoint(format!("metadata: {e}")))?;
    meta.architecture.validate()?;
    let arch = meta.architecture.clone();
    let count = r.u32()? as usize;
    let expected = 5 * (arch.point_layers.len() + 1) + 2;
    if count != expected {
        return Err(NnError::Checkpoint(format!("{count} tensors, expected {expected}")));
    }
    let mut point_weights = Vec::new();
    let mut point_gamma = Vec::new();
    let mut point_beta = Vec::new();
    let mut stats = Vec::new();
    let mut fan_in = 3;
    let read_stats = |r: &mut Reader, name: &str, w: usize| -> Result<BnStats, NnError> {
        let mean = r.vector(&format!("{name}.running_mean"), w)?;
        let var = r.vector(&format!("{name}.running_var"), w)?;
        if var.iter().any(|v| !(*v >= 0.0)) {
            return Err(NnError::Checkpoint(format!("{name}: negative running variance")));
        }
        Ok(BnStats { mean, var })
    };
    for (l, &w) in arch.point_layers.iter().enumerate() {
        let name = format!("point{l}");
        point_weights.push(r.matrix(&format!("{name}.weight"), w, fan_in)?);
        point_gamma.push(r.vector(&format!("{name}.gamma"), w)?);
        point_beta.push(r.vector(&format!("{name}.beta"), w)?);
        stats.push(read_stats(&mut r, &name, w)?);
        fan_in = w;
    }
    let head_weight = r.matrix("head.weight", arch.head, fan_in)?;
    let head_gamma = r.vector("head.gamma", arch.head)?;
    let head_beta = r.vector("head.beta", arch.head)?;
    stats.push(read_stats(&mut r, "head", arch.head)?);
    let out_weight = r.matrix("out.weight", arch.classes, arch.head)?;
    let out_bias = r.vector("out.bias", arch.classes)?;
    if r.pos != bytes.len() {
        return Err(NnError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let params = Params {
        point_weights,
        point_gamma,
        point_beta,
        head_weight,
        head_gamma,
        head_beta,
        out_weight,
        out_bias,
    };
    Ok((NetworkState { arch, params, stats }, meta))
}
