//! Kernels and explicit, unit-normalized feature maps φ.

pub mod kernel;
pub mod neural;
pub mod nystrom;
pub mod rff;

use std::path::Path;

use ndarray::ArrayView2;

use crate::container::{Container, ContainerKind, Role};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{normalize, Matrix};

pub use kernel::KernelSpec;
pub use neural::{pretrain_neural_embedding, NeuralMap, PretrainConfig, Pretrained};
pub use nystrom::{build_nystrom, NystromMap, DEFAULT_EIG_FLOOR};
pub use rff::{build_rff, RffMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Identity,
    Rff,
    Nystrom,
    Neural,
}

/// A frozen feature map. [`Embedding::apply`] always returns a unit-norm vector.
#[derive(Clone, Debug, PartialEq)]
pub enum Embedding {
    Identity { dim: usize },
    Rff(RffMap),
    Nystrom(NystromMap),
    Neural(NeuralMap),
}

const ROWS_PER_TASK: usize = 16;

impl Embedding {
    pub fn kind(&self) -> EmbeddingKind {
        match self {
            Embedding::Identity { .. } => EmbeddingKind::Identity,
            Embedding::Rff(_) => EmbeddingKind::Rff,
            Embedding::Nystrom(_) => EmbeddingKind::Nystrom,
            Embedding::Neural(_) => EmbeddingKind::Neural,
        }
    }

    /// Output dimension D.
    pub fn dim(&self) -> usize {
        match self {
            Embedding::Identity { dim } => *dim,
            Embedding::Rff(m) => m.dim(),
            Embedding::Nystrom(m) => m.dim(),
            Embedding::Neural(m) => m.dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Embedding::Identity { dim } => *dim,
            Embedding::Rff(m) => m.input_dim(),
            Embedding::Nystrom(m) => m.input_dim(),
            Embedding::Neural(m) => m.input_dim(),
        }
    }

    /// Features before unit normalization.
    pub fn raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Precondition(format!(
                "input of length {} for an embedding of {}-dimensional inputs",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Value("non-finite embedding input".into()));
        }
        Ok(match self {
            Embedding::Identity { .. } => x.to_vec(),
            Embedding::Rff(m) => m.raw(x),
            Embedding::Nystrom(m) => m.raw(x),
            Embedding::Neural(m) => m.raw(x),
        })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.raw(x)?;
        if normalize(&mut z) == 0.0 {
            return Err(Error::Value(format!(
                "{:?} embedding maps the input to the zero vector",
                self.kind()
            )));
        }
        Ok(z)
    }

    /// Embeds every row; rows are independent, so the result does not depend on `exec`.
    pub fn apply_rows(&self, rows: ArrayView2<f64>, exec: Exec) -> Result<Matrix> {
        let rows = rows.as_standard_layout();
        let (n, d) = rows.dim();
        let flat = rows.as_slice().expect("standard layout");
        let tasks = n.div_ceil(ROWS_PER_TASK);
        let parts = exec.map(tasks, |t| {
            let lo = t * ROWS_PER_TASK;
            let hi = (lo + ROWS_PER_TASK).min(n);
            (lo..hi)
                .map(|i| self.apply(&flat[i * d..(i + 1) * d]).map_err(|e| (i, e)))
                .collect::<std::result::Result<Vec<_>, _>>()
        });
        let dim = self.dim();
        let mut out = Matrix::zeros((n, dim));
        let mut i = 0;
        for part in parts {
            let part = part.map_err(|(row, e)| match e {
                Error::Value(m) => Error::Value(format!("row {row}: {m}")),
                other => other,
            })?;
            for z in part {
                out.row_mut(i).assign(&ndarray::ArrayView1::from(&z));
                i += 1;
            }
        }
        Ok(out)
    }

    pub fn embed_dataset(&self, dataset: &Dataset, exec: Exec) -> Result<Dataset> {
        dataset.with_features(self.apply_rows(dataset.features().view(), exec)?)
    }

    pub fn to_container(&self) -> Container {
        match self {
            Embedding::Identity { dim } => {
                let mut c = Container::new(ContainerKind::Identity);
                c.push("dim", Role::Metadata, vec![1], vec![*dim as f64]);
                c
            }
            Embedding::Rff(m) => {
                let mut c = Container::new(ContainerKind::Rff);
                c.push("gamma", Role::Metadata, vec![1], vec![m.gamma]);
                c.push("freqs", Role::Parameter, vec![m.dim(), m.input_dim()], m.freqs.iter().copied().collect());
                c.push("phases", Role::Parameter, vec![m.dim()], m.phases.clone());
                c
            }
            Embedding::Nystrom(m) => {
                let mut c = Container::new(ContainerKind::Nystrom);
                let spec = encode_kernel(&m.kernel);
                c.push("kernel", Role::Metadata, vec![spec.len()], spec);
                c.push(
                    "landmark_index",
                    Role::Metadata,
                    vec![m.landmark_index.len()],
                    m.landmark_index.iter().map(|&i| i as f64).collect(),
                );
                c.push("landmarks", Role::Parameter, vec![m.dim(), m.input_dim()], m.landmarks.iter().copied().collect());
                c.push("whitening", Role::Parameter, vec![m.dim(), m.dim()], m.whitening.iter().copied().collect());
                c
            }
            Embedding::Neural(m) => {
                let mut c = Container::new(ContainerKind::Neural);
                c.push("w1", Role::Parameter, vec![m.dim(), m.input_dim()], m.w1.iter().copied().collect());
                c
            }
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let matrix = |name: &str| -> Result<Matrix> {
            let a = c.get(name)?;
            if a.dims.len() != 2 {
                return Err(Error::Format(format!("{name} is not a matrix")));
            }
            Matrix::from_shape_vec((a.dims[0], a.dims[1]), a.data.clone())
                .map_err(|e| Error::Format(format!("{name}: {e}")))
        };
        Ok(match c.kind {
            ContainerKind::Identity => Embedding::Identity {
                dim: c.scalar("dim")? as usize,
            },
            ContainerKind::Rff => Embedding::Rff(RffMap {
                gamma: c.scalar("gamma")?,
                freqs: matrix("freqs")?,
                phases: c.get("phases")?.data.clone(),
            }),
            ContainerKind::Nystrom => {
                let kernel = decode_kernel(&c.get("kernel")?.data)?;
                kernel.validate()?;
                Embedding::Nystrom(NystromMap {
                    kernel,
                    landmarks: matrix("landmarks")?,
                    whitening: matrix("whitening")?,
                    landmark_index: c.get("landmark_index")?.data.iter().map(|&v| v as usize).collect(),
                })
            }
            ContainerKind::Neural => Embedding::Neural(NeuralMap { w1: matrix("w1")? }),
            other => {
                return Err(Error::Format(format!("container of kind {other:?} is not an embedding")))
            }
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

/// Prefix encoding: Linear `[0]`, Gaussian `[1, γ]`, ArcCosine `[2, n]`,
/// Combination `[3, P, μ_1..μ_P, base_1.., base_P..]`.
pub fn encode_kernel(k: &KernelSpec) -> Vec<f64> {
    let mut out = Vec::new();
    fn go(k: &KernelSpec, out: &mut Vec<f64>) {
        match k {
            KernelSpec::Linear => out.push(0.0),
            KernelSpec::Gaussian { gamma } => out.extend([1.0, *gamma]),
            KernelSpec::ArcCosine { order } => out.extend([2.0, f64::from(*order)]),
            KernelSpec::Combination { weights, bases } => {
                out.extend([3.0, weights.len() as f64]);
                out.extend(weights);
                for b in bases {
                    go(b, out);
                }
            }
        }
    }
    go(k, &mut out);
    out
}

pub fn decode_kernel(data: &[f64]) -> Result<KernelSpec> {
    fn go(data: &[f64], pos: &mut usize) -> Result<KernelSpec> {
        let mut next = || -> Result<f64> {
            let v = data
                .get(*pos)
                .copied()
                .ok_or_else(|| Error::Format("kernel encoding truncated".into()))?;
            *pos += 1;
            Ok(v)
        };
        Ok(match next()? as i64 {
            0 => KernelSpec::Linear,
            1 => KernelSpec::Gaussian { gamma: next()? },
            2 => KernelSpec::ArcCosine { order: next()? as u32 },
            3 => {
                let p = next()? as usize;
                let weights = (0..p).map(|_| next()).collect::<Result<Vec<_>>>()?;
                let bases = (0..p).map(|_| go(data, pos)).collect::<Result<Vec<_>>>()?;
                KernelSpec::Combination { weights, bases }
            }
            t => return Err(Error::Format(format!("unknown kernel tag {t}"))),
        })
    }
    let mut pos = 0;
    let k = go(data, &mut pos)?;
    if pos != data.len() {
        return Err(Error::Format("trailing values after kernel encoding".into()));
    }
    Ok(k)
}
