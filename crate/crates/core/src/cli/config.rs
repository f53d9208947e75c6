//! Experiment configuration: one TOML document per experiment.
//!
//! ```toml
//! seed = 0
//!
//! [dataset]
//! name = "cifar10"
//! path = "/data/cifar-10-batches-bin"
//! classes = [0, 1]
//! per_class = 500
//!
//! [embedding]
//! kind = "rff"
//! gamma = 1.0
//! dim = 1024
//!
//! [train]
//! width = 2048
//! steps = 2000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::{DEFAULT_GAUSSIAN_BANK, DEFAULT_QP_TOL};
use crate::embed::{KernelSpec, DEFAULT_EIG_FLOOR};
use crate::error::{Error, Result};
use crate::gram::EigenMethod;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub gram: GramConfig,
    #[serde(default)]
    pub train: TrainSection,
    /// Embeddings ranked by the `compare` command.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compare: Vec<EmbeddingConfig>,
    /// Where artifacts go; not part of the experiment's identity, so never echoed.
    #[serde(default, skip_serializing)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Mnist,
    Cifar10,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: DatasetName,
    /// Directory holding the canonical files (IDX for MNIST, binary batches for CIFAR-10).
    pub path: PathBuf,
    /// First class gets label +1, second −1.
    #[serde(default = "default_classes")]
    pub classes: [u8; 2],
    /// Seeded subsample of this many training rows per class; all rows when absent.
    #[serde(default)]
    pub per_class: Option<usize>,
    #[serde(default)]
    pub test_per_class: Option<usize>,
    /// Load the test split and report test loss and accuracy.
    #[serde(default = "default_true")]
    pub test: bool,
}

fn default_classes() -> [u8; 2] {
    [0, 1]
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuralSource {
    /// Pre-train on one seeded half of the training rows; downstream runs use the other half.
    SameHalf,
    /// Pre-train on another class pair of the same dataset.
    OtherClasses,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    #[default]
    Identity,
    Rff {
        gamma: f64,
        dim: usize,
    },
    Nystrom {
        kernel: KernelSpec,
        dim: usize,
        #[serde(default = "default_eig_floor")]
        eig_floor: f64,
    },
    /// alignf over a Gaussian bank, then Nyström features of the learned kernel.
    Alignf {
        #[serde(default = "default_bank")]
        gammas: Vec<f64>,
        dim: usize,
        #[serde(default = "default_eig_floor")]
        eig_floor: f64,
        #[serde(default = "default_qp_tol")]
        tol: f64,
    },
    Neural {
        source: NeuralSource,
        hidden1: usize,
        hidden2: usize,
        eta: f64,
        epochs: usize,
        #[serde(default = "default_init_scale")]
        init_scale: f64,
        /// Class pair used by `other_classes`.
        #[serde(default = "default_other_classes")]
        other_classes: [u8; 2],
    },
    /// A container written by the `embed` command.
    File {
        path: PathBuf,
    },
}

fn default_eig_floor() -> f64 {
    DEFAULT_EIG_FLOOR
}

fn default_bank() -> Vec<f64> {
    DEFAULT_GAUSSIAN_BANK.to_vec()
}

fn default_qp_tol() -> f64 {
    DEFAULT_QP_TOL
}

fn default_init_scale() -> f64 {
    1e-2
}

fn default_other_classes() -> [u8; 2] {
    [8, 9]
}

impl EmbeddingConfig {
    /// Short human-readable identifier used in compare rows.
    pub fn label(&self) -> String {
        match self {
            EmbeddingConfig::Identity => "identity".into(),
            EmbeddingConfig::Rff { gamma, dim } => format!("rff(gamma={gamma},D={dim})"),
            EmbeddingConfig::Nystrom { kernel, dim, .. } => format!("nystrom({},D={dim})", kernel_label(kernel)),
            EmbeddingConfig::Alignf { gammas, dim, .. } => format!("alignf(P={},D={dim})", gammas.len()),
            EmbeddingConfig::Neural { source, epochs, .. } => {
                let s = match source {
                    NeuralSource::SameHalf => "same_half",
                    NeuralSource::OtherClasses => "other_classes",
                };
                format!("neural({s},epochs={epochs})")
            }
            EmbeddingConfig::File { path } => format!("file({})", path.display()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must be a positive number")))
            }
        };
        let nonzero = |name: &str, v: usize| {
            if v > 0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be at least 1")))
            }
        };
        match self {
            EmbeddingConfig::Identity | EmbeddingConfig::File { .. } => Ok(()),
            EmbeddingConfig::Rff { gamma, dim } => {
                positive("gamma", *gamma)?;
                nonzero("dim", *dim)
            }
            EmbeddingConfig::Nystrom { kernel, dim, eig_floor } => {
                kernel.validate().map_err(|e| Error::Config(e.to_string()))?;
                nonzero("dim", *dim)?;
                positive("eig_floor", *eig_floor)
            }
            EmbeddingConfig::Alignf { gammas, dim, eig_floor, tol } => {
                if gammas.is_empty() {
                    return Err(Error::Config("alignf needs at least one bandwidth".into()));
                }
                for g in gammas {
                    positive("gamma", *g)?;
                }
                nonzero("dim", *dim)?;
                positive("eig_floor", *eig_floor)?;
                positive("tol", *tol)
            }
            EmbeddingConfig::Neural {
                hidden1,
                hidden2,
                eta,
                init_scale,
                other_classes,
                ..
            } => {
                nonzero("hidden1", *hidden1)?;
                nonzero("hidden2", *hidden2)?;
                positive("eta", *eta)?;
                positive("init_scale", *init_scale)?;
                check_classes(*other_classes)
            }
        }
    }
}

fn kernel_label(k: &KernelSpec) -> String {
    match k {
        KernelSpec::Linear => "linear".into(),
        KernelSpec::Gaussian { gamma } => format!("gaussian {gamma}"),
        KernelSpec::ArcCosine { order } => format!("arccos {order}"),
        KernelSpec::Combination { bases, .. } => format!("combination of {}", bases.len()),
    }
}

fn check_classes(c: [u8; 2]) -> Result<()> {
    if c[0] == c[1] {
        return Err(Error::Config(format!("class pair {c:?} repeats a class")));
    }
    if c.iter().any(|&k| k > 9) {
        return Err(Error::Config(format!("class pair {c:?} outside 0..=9")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GramSourceConfig {
    /// Closed form over the embedded rows.
    #[default]
    ClosedForm,
    /// Closed form over the exact kernel matrix of the embedding's kernel.
    KernelMatrix,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramConfig {
    #[serde(default)]
    pub source: GramSourceConfig,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_pinv_floor")]
    pub pinv_floor: f64,
    #[serde(default)]
    pub eigen: EigenMethod,
}

fn default_samples() -> usize {
    100_000
}

fn default_pinv_floor() -> f64 {
    1e-10
}

impl Default for GramConfig {
    fn default() -> Self {
        GramConfig {
            source: GramSourceConfig::default(),
            samples: default_samples(),
            pinv_floor: default_pinv_floor(),
            eigen: EigenMethod::default(),
        }
    }
}

/// Network width plus the gradient-descent settings; the seed comes from the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_multiplier")]
    pub eta_multiplier: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_width() -> usize {
    2048
}
fn default_eta() -> f64 {
    2e-4
}
fn default_multiplier() -> f64 {
    1.0
}
fn default_steps() -> usize {
    2000
}
fn default_record_every() -> usize {
    10
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            width: default_width(),
            init_scale: default_init_scale(),
            eta: default_eta(),
            eta_multiplier: default_multiplier(),
            steps: default_steps(),
            record_every: default_record_every(),
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            init_scale: self.init_scale,
            eta: self.eta,
            eta_multiplier: self.eta_multiplier,
            steps: self.steps,
            seed,
            record_every: self.record_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        check_classes(self.dataset.classes)?;
        if self.dataset.per_class == Some(0) || self.dataset.test_per_class == Some(0) {
            return Err(Error::Config("per-class subset sizes must be at least 1".into()));
        }
        self.embedding.validate()?;
        for e in &self.compare {
            e.validate()?;
        }
        if self.gram.samples == 0 {
            return Err(Error::Config("gram.samples must be at least 1".into()));
        }
        if !(self.gram.pinv_floor.is_finite() && self.gram.pinv_floor >= 0.0) {
            return Err(Error::Config(format!(
                "gram.pinv_floor = {} must be nonnegative",
                self.gram.pinv_floor
            )));
        }
        if self.train.width == 0 {
            return Err(Error::Config("train.width must be at least 1".into()));
        }
        self.train.to_train_config(self.seed).validate()
    }
}
