//! Neural embeddings: the first hidden layer of a three-layer ReLU network trained on a
//! related task, frozen and used as a feature map `x ↦ ReLU(W₁x)`.
//!
//! The pre-training network is `f(x) = (1/√h₂) Σ_s a_s ReLU(u_sᵀ ReLU(W₁x))` with fixed
//! output signs `a`; W₁ and U are trained by full-batch gradient descent on the squared loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::train::{gaussian_matrix, random_signs, squared_loss};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub eta: f64,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the initial weights of both hidden layers.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_init_scale() -> f64 {
    1e-2
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("pre-training eta = {} must be positive", self.eta)));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::Config(format!("init_scale = {} must be positive", self.init_scale)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralMap {
    /// h₁ × d frozen first-layer weights.
    pub w1: Matrix,
}

impl NeuralMap {
    pub fn dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn raw(&self, x: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        let w = self.w1.as_slice().expect("standard layout");
        (0..self.dim())
            .map(|r| dot(&w[r * d..(r + 1) * d], x).max(0.0))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pretrained {
    pub map: NeuralMap,
    /// Training loss before each epoch's update, then the final loss.
    pub losses: Vec<f64>,
}

fn relu_mask(p: &Matrix) -> (Matrix, Matrix) {
    let act = p.mapv(|v| if v > 0.0 { v } else { 0.0 });
    let mask = p.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    (act, mask)
}

/// Trains the three-layer network for `config.epochs` full-batch steps and freezes W₁.
pub fn pretrain_neural_embedding(dataset: &Dataset, config: &PretrainConfig) -> Result<Pretrained> {
    config.validate()?;
    let x = dataset.features();
    let y = ndarray::Array1::from(dataset.labels().to_vec());
    let d = dataset.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w1 = gaussian_matrix(config.hidden1, d, config.init_scale, &mut rng);
    let mut u = gaussian_matrix(config.hidden2, config.hidden1, config.init_scale, &mut rng);
    let a = ndarray::Array1::from(random_signs(config.hidden2, &mut rng));
    let inv = 1.0 / (config.hidden2 as f64).sqrt();

    let mut losses = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let p1 = x.dot(&w1.t());
        let (h1, m1) = relu_mask(&p1);
        let p2 = h1.dot(&u.t());
        let (h2, m2) = relu_mask(&p2);
        let f = h2.dot(&a) * inv;
        let loss = squared_loss(f.as_slice().expect("contiguous"), dataset.labels());
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step: epoch,
                reason: format!("pre-training loss is {loss}"),
            });
        }
        losses.push(loss);
        if epoch == config.epochs {
            break;
        }
        // dΦ/dP2 = −(y − f) ⊗ a/√h₂ ⊙ 1{P2 > 0}
        let resid = &y - &f;
        let mut g2 = m2;
        for (mut row, r) in g2.outer_iter_mut().zip(resid.iter()) {
            for (v, s) in row.iter_mut().zip(a.iter()) {
                *v *= -r * s * inv;
            }
        }
        let grad_u = g2.t().dot(&h1);
        let g1 = g2.dot(&u) * &m1;
        let grad_w1 = g1.t().dot(x);
        if grad_u.iter().chain(grad_w1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: epoch,
                reason: "non-finite pre-training gradient".into(),
            });
        }
        u.scaled_add(-config.eta, &grad_u);
        w1.scaled_add(-config.eta, &grad_w1);
    }
    Ok(Pretrained {
        map: NeuralMap { w1 },
        losses,
    })
}
