//! Two-layer ReLU network `f(x) = (1/√m) Σ_r a_r max(0, w_rᵀx)` trained by full-batch
//! gradient descent on `Φ = ½ Σ_i (y_i − f(x_i))²`. Only W moves; the signs `a` stay fixed.

use ndarray::{s, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{dot, pairwise_sum, Matrix};

/// Rows per block in the batched forward pass and hidden units per block in the gradient.
/// Fixed so results never depend on how blocks are scheduled.
const BLOCK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    /// m × D first-layer weights.
    pub w: Matrix,
    /// Output signs, each exactly ±1.
    pub a: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Standard deviation κ of the initial weights.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Multiplies `eta` (2 for runs on half the data).
    #[serde(default = "default_multiplier")]
    pub eta_multiplier: f64,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_init_scale() -> f64 {
    1e-2
}
fn default_eta() -> f64 {
    2e-4
}
fn default_multiplier() -> f64 {
    1.0
}
fn default_record_every() -> usize {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            init_scale: default_init_scale(),
            eta: default_eta(),
            eta_multiplier: default_multiplier(),
            steps: 2000,
            seed: 0,
            record_every: default_record_every(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta = {} must be positive", self.eta)));
        }
        if !(self.eta_multiplier.is_finite() && self.eta_multiplier > 0.0) {
            return Err(Error::Config(format!(
                "eta_multiplier = {} must be positive",
                self.eta_multiplier
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::Config(format!(
                "init_scale = {} must be positive",
                self.init_scale
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_eta(&self) -> f64 {
        self.eta * self.eta_multiplier
    }
}

/// Gaussian matrix with entries `N(0, scale²)`.
pub(crate) fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub(crate) fn random_signs(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

/// `w_r ~ N(0, κ² I)`, `a_r ~ Unif{−1, 1}`.
pub fn init_network(m: usize, dim: usize, init_scale: f64, seed: u64) -> Result<NetworkState> {
    if m == 0 || dim == 0 {
        return Err(Error::Size(format!("network of width {m} on {dim} inputs")));
    }
    if !(init_scale.is_finite() && init_scale >= 0.0) {
        return Err(Error::Value(format!("init scale κ = {init_scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = gaussian_matrix(m, dim, init_scale, &mut rng);
    let a = random_signs(m, &mut rng);
    Ok(NetworkState { w, a })
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

impl NetworkState {
    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    /// Single-input forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Precondition(format!(
                "input of length {} for a network on {} inputs",
                x.len(),
                self.input_dim()
            )));
        }
        let d = self.input_dim();
        let w = self.w.as_slice().expect("standard layout");
        let terms: Vec<f64> = self
            .a
            .iter()
            .enumerate()
            .map(|(r, a)| a * relu(dot(&w[r * d..(r + 1) * d], x)))
            .collect();
        Ok(pairwise_sum(&terms) / (self.width() as f64).sqrt())
    }

    /// Pre-activations `X Wᵀ` (n × m), computed in fixed row blocks.
    fn preactivations(&self, x: ArrayView2<f64>, exec: Exec) -> Matrix {
        let (n, m) = (x.nrows(), self.width());
        let mut p = Matrix::zeros((n, m));
        if n == 0 {
            return p;
        }
        let wt = self.w.t();
        exec.for_each_chunk_mut(p.as_slice_mut().expect("standard layout"), BLOCK * m, |b, out| {
            let rows = out.len() / m;
            let xb = x.slice(s![b * BLOCK..b * BLOCK + rows, ..]);
            let prod = xb.dot(&wt);
            out.copy_from_slice(prod.as_slice().expect("fresh matrix is standard layout"));
        });
        p
    }

    fn outputs_from(&self, p: &Matrix) -> Vec<f64> {
        let scale = (self.width() as f64).sqrt();
        p.outer_iter()
            .map(|row| {
                let terms: Vec<f64> = row.iter().zip(&self.a).map(|(v, a)| a * relu(*v)).collect();
                pairwise_sum(&terms) / scale
            })
            .collect()
    }

    /// Batched forward pass over the rows of `x`.
    pub fn predict(&self, x: ArrayView2<f64>, exec: Exec) -> Result<Vec<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Precondition(format!(
                "inputs of width {} for a network on {} inputs",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(self.outputs_from(&self.preactivations(x, exec)))
    }
}

/// `½ Σ (y_i − f_i)²`, pairwise-summed.
pub fn squared_loss(predictions: &[f64], labels: &[f64]) -> f64 {
    let terms: Vec<f64> = predictions
        .iter()
        .zip(labels)
        .map(|(f, y)| 0.5 * (y - f) * (y - f))
        .collect();
    pairwise_sum(&terms)
}

/// Fraction with `sign(f) = y`; `f = 0` counts as wrong.
pub fn accuracy(predictions: &[f64], labels: &[f64]) -> f64 {
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(f, y)| (**f > 0.0 && **y > 0.0) || (**f < 0.0 && **y < 0.0))
        .count();
    hits as f64 / labels.len().max(1) as f64
}

pub fn loss(state: &NetworkState, dataset: &Dataset) -> Result<f64> {
    let f = state.predict(dataset.features().view(), Exec::default())?;
    Ok(squared_loss(&f, dataset.labels()))
}

/// `∂Φ/∂W` at `state` (m × D). Row r is `−(a_r/√m) Σ_i (y_i − f_i) 1{w_r·x_i > 0} x_i`.
pub fn gradient(state: &NetworkState, dataset: &Dataset, exec: Exec) -> Result<(Matrix, f64)> {
    let x = dataset.features().view();
    let p = state.preactivations(x, exec);
    let f = state.outputs_from(&p);
    let loss = squared_loss(&f, dataset.labels());
    let grad = gradient_from(state, x, &p, &f, dataset.labels(), exec);
    Ok((grad, loss))
}

fn gradient_from(
    state: &NetworkState,
    x: ArrayView2<f64>,
    p: &Matrix,
    f: &[f64],
    y: &[f64],
    exec: Exec,
) -> Matrix {
    let (n, m, d) = (x.nrows(), state.width(), state.input_dim());
    let inv = 1.0 / (m as f64).sqrt();
    // Gᵀ[r, i] = −(a_r/√m) (y_i − f_i) 1{p_ir > 0}
    let mut gt = Matrix::zeros((m, n));
    for i in 0..n {
        let resid = y[i] - f[i];
        for r in 0..m {
            if p[[i, r]] > 0.0 {
                gt[[r, i]] = -state.a[r] * inv * resid;
            }
        }
    }
    let mut grad = Matrix::zeros((m, d));
    exec.for_each_chunk_mut(grad.as_slice_mut().expect("standard layout"), BLOCK * d, |b, out| {
        let rows = out.len() / d;
        let gb = gt.slice(s![b * BLOCK..b * BLOCK + rows, ..]);
        let prod = gb.dot(&x);
        out.copy_from_slice(prod.as_slice().expect("fresh matrix is standard layout"));
    });
    grad
}

/// One step `W ← W − η ∂Φ/∂W`. Returns the new state and the loss before the step.
pub fn gd_step(state: &NetworkState, dataset: &Dataset, eta: f64, exec: Exec) -> Result<(NetworkState, f64)> {
    let mut next = state.clone();
    let (p, f, loss) = forward_checked(&next, dataset, exec, 0)?;
    apply_step(&mut next, dataset, &p, &f, eta, exec, 0)?;
    Ok((next, loss))
}

fn forward_checked(state: &NetworkState, dataset: &Dataset, exec: Exec, step: usize) -> Result<(Matrix, Vec<f64>, f64)> {
    let x = dataset.features().view();
    if x.ncols() != state.input_dim() {
        return Err(Error::Precondition(format!(
            "dataset width {} for a network on {} inputs",
            x.ncols(),
            state.input_dim()
        )));
    }
    let p = state.preactivations(x, exec);
    let f = state.outputs_from(&p);
    let loss = squared_loss(&f, dataset.labels());
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step,
            reason: format!("loss is {loss}"),
        });
    }
    Ok((p, f, loss))
}

fn apply_step(
    state: &mut NetworkState,
    dataset: &Dataset,
    p: &Matrix,
    f: &[f64],
    eta: f64,
    exec: Exec,
    step: usize,
) -> Result<()> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::Value(format!("learning rate η = {eta} must be positive")));
    }
    let grad = gradient_from(state, dataset.features().view(), p, f, dataset.labels(), exec);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            step,
            reason: "non-finite gradient".into(),
        });
    }
    state.w.scaled_add(-eta, &grad);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Record {
    pub step: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub records: Vec<Record>,
    pub state: NetworkState,
}

/// Runs `config.steps` steps of full-batch GD, recording metrics at step 0, every
/// `record_every` steps, and at the final step.
pub fn train(
    state: NetworkState,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
    exec: Exec,
) -> Result<TrainOutcome> {
    let mut records = Vec::new();
    let state = train_with(state, train_set, test_set, config, exec, |r| records.push(*r))?;
    Ok(TrainOutcome { records, state })
}

/// [`train`] that hands each record to `on_record` as soon as it is computed, so callers keep
/// the trajectory up to a divergence.
pub fn train_with(
    state: NetworkState,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
    exec: Exec,
    mut on_record: impl FnMut(&Record),
) -> Result<NetworkState> {
    config.validate()?;
    let eta = config.effective_eta();
    let mut state = state;
    for step in 0..=config.steps {
        let (p, f, train_loss) = forward_checked(&state, train_set, exec, step)?;
        if step % config.record_every == 0 || step == config.steps {
            on_record(&evaluate(&state, step, train_loss, test_set, exec)?);
        }
        if step < config.steps {
            apply_step(&mut state, train_set, &p, &f, eta, exec, step)?;
        }
    }
    Ok(state)
}

fn evaluate(
    state: &NetworkState,
    step: usize,
    train_loss: f64,
    test_set: Option<&Dataset>,
    exec: Exec,
) -> Result<Record> {
    let (test_loss, test_accuracy) = match test_set {
        Some(t) => {
            let f = state.predict(t.features().view(), exec)?;
            (Some(squared_loss(&f, t.labels())), Some(accuracy(&f, t.labels())))
        }
        None => (None, None),
    };
    Ok(Record {
        step,
        train_loss,
        test_loss,
        test_accuracy,
    })
}
