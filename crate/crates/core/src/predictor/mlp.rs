//! Dense ReLU network with a linear scalar output, analytic gradients and a
//! plain mini-batch gradient-descent trainer.
//!
//! Parameters are stored as `f32` (the on-disk precision). All arithmetic runs
//! in `f64`; the trainer keeps an `f64` master copy and rounds once at the end.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Strength;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    activation: Activation,
    /// Layer `i` maps `dims[i]` to `dims[i + 1]`; shape `dims[i + 1] x dims[i]`.
    weights: Vec<Array2<f32>>,
    biases: Vec<Array1<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub features: Vec<f64>,
    pub label: Strength,
}

/// Gradients of the loss with respect to every weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Default 0.05. Unit-norm hash features produce small activations, and at
    /// 1e-3 plain SGD stays near the label mean for all 200 epochs.
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub seed: u64,
    pub regularizer: Regularizer,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 32,
            lambda: 1e-4,
            seed: 0,
            regularizer: Regularizer::L2,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.epochs > 0
            && self.batch_size > 0
            && self.lambda >= 0.0
            && self.lambda.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "bad training config {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    /// Mean mini-batch loss of each epoch.
    pub loss_history: Vec<f64>,
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) || dims[dims.len() - 1] != 1 {
        return Err(Error::ShapeMismatch(format!(
            "layer dims {dims:?} must have >= 2 positive entries ending in 1"
        )));
    }
    Ok(())
}

impl MlpParams {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = || rng.random_range(-bound..=bound) as f32;
            weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), &mut draw));
            biases.push(Array1::from_shape_simple_fn(fan_out, &mut draw));
        }
        Ok(MlpParams {
            layer_dims: layer_dims.to_vec(),
            activation: Activation::Relu,
            weights,
            biases,
        })
    }

    /// Builds a network from row-major weight matrices and bias vectors.
    pub fn from_parts(
        layer_dims: &[usize],
        weights: Vec<Vec<f32>>,
        biases: Vec<Vec<f32>>,
    ) -> Result<Self> {
        validate_dims(layer_dims)?;
        let n = layer_dims.len() - 1;
        if weights.len() != n || biases.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "expected {n} layers, got {} weights / {} biases",
                weights.len(),
                biases.len()
            )));
        }
        let mut ws = Vec::with_capacity(n);
        let mut bs = Vec::with_capacity(n);
        for (i, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (fan_in, fan_out) = (layer_dims[i], layer_dims[i + 1]);
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("mlp parameters"));
            }
            let w = Array2::from_shape_vec((fan_out, fan_in), w)
                .map_err(|e| Error::ShapeMismatch(format!("layer {i} weights: {e}")))?;
            if b.len() != fan_out {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} bias has {} entries, expected {fan_out}",
                    b.len()
                )));
            }
            ws.push(w);
            bs.push(Array1::from(b));
        }
        Ok(MlpParams {
            layer_dims: layer_dims.to_vec(),
            activation: Activation::Relu,
            weights: ws,
            biases: bs,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Array2<f32>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f32>] {
        &self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Frobenius norm over all weight matrices (biases excluded).
    pub fn weight_norm(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .map(|&v| f64::from(v).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Raw (unclipped) scalar output.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let last = self.weights.len() - 1;
        let mut a = Array1::from(x.to_vec());
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = Array1::from_iter(
                w.outer_iter()
                    .zip(b)
                    .map(|(row, &bias)| dot_f32_f64(row, &a) + f64::from(bias)),
            );
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a[0])
    }

    /// Loss `mean((y_hat - y)^2) + lambda * sum ||W||_F^2` and its gradients.
    pub fn gradient(&self, batch: &[TrainingExample], lambda: f64) -> Result<(Gradients, f64)> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("gradient of an empty batch".into()));
        }
        let net = Net::from_params(self);
        let (x, y) = stack(batch, self.input_dim())?;
        Ok(net.backprop(&x, &y, lambda))
    }

    /// Loss over a whole dataset without gradients.
    pub fn loss(&self, data: &[TrainingExample], lambda: f64) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidConfig("loss of an empty dataset".into()));
        }
        let net = Net::from_params(self);
        let (x, y) = stack(data, self.input_dim())?;
        Ok(net.loss(&x, &y, lambda))
    }
}

/// Eight independent partial sums so the loop vectorizes; a single running
/// sum is a serial dependency chain.
fn dot_f32_f64(row: ArrayView1<'_, f32>, a: &Array1<f64>) -> f64 {
    let (Some(w), Some(x)) = (row.as_slice(), a.as_slice()) else {
        return row.iter().zip(a).map(|(&w, &x)| f64::from(w) * x).sum();
    };
    let mut acc = [0.0f64; 8];
    let (wc, xc) = (w.chunks_exact(8), x.chunks_exact(8));
    let tail: f64 = wc
        .remainder()
        .iter()
        .zip(xc.remainder())
        .map(|(&w, &x)| f64::from(w) * x)
        .sum();
    for (w8, x8) in wc.zip(xc) {
        for k in 0..8 {
            acc[k] += f64::from(w8[k]) * x8[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn stack(batch: &[TrainingExample], dim: usize) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut x = Array2::zeros((batch.len(), dim));
    for (mut row, ex) in x.outer_iter_mut().zip(batch) {
        if ex.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: ex.features.len(),
            });
        }
        row.assign(&ArrayView1::from(&ex.features[..]));
    }
    let y = batch.iter().map(|e| e.label.value()).collect();
    Ok((x, y))
}

/// `f64` working copy of the parameters.
#[derive(Debug, Clone)]
struct Net {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl Net {
    fn from_params(p: &MlpParams) -> Self {
        Net {
            weights: p.weights.iter().map(|w| w.mapv(f64::from)).collect(),
            biases: p.biases.iter().map(|b| b.mapv(f64::from)).collect(),
        }
    }

    fn into_params(self, template: &MlpParams) -> MlpParams {
        MlpParams {
            layer_dims: template.layer_dims.clone(),
            activation: template.activation,
            weights: self.weights.iter().map(|w| w.mapv(|v| v as f32)).collect(),
            biases: self.biases.iter().map(|b| b.mapv(|v| v as f32)).collect(),
        }
    }

    /// Pre-activations of every layer for a batch (rows are examples).
    fn forward_batch(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let last = self.weights.len() - 1;
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut hidden: Option<Array2<f64>> = None;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = hidden.as_ref().unwrap_or(x).dot(&w.t()) + b;
            if i < last {
                hidden = Some(z.mapv(|v| v.max(0.0)));
            }
            pre.push(z);
        }
        pre
    }

    fn l2(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    fn loss(&self, x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> f64 {
        let pre = self.forward_batch(x);
        let out = pre.last().expect("at least one layer").column(0).to_owned();
        let mse = (&out - y).mapv(|d| d * d).mean().expect("non-empty batch");
        mse + lambda * self.l2()
    }

    fn backprop(&self, x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> (Gradients, f64) {
        let n = x.nrows() as f64;
        let pre = self.forward_batch(x);
        let out = pre.last().expect("at least one layer").column(0).to_owned();
        let residual = &out - y;
        let loss = residual.mapv(|d| d * d).sum() / n + lambda * self.l2();

        let layers = self.weights.len();
        let mut d_w = vec![Array2::zeros((0, 0)); layers];
        let mut d_b = vec![Array1::zeros(0); layers];
        let mut delta = residual.mapv(|d| 2.0 * d / n).insert_axis(Axis(1));
        for l in (0..layers).rev() {
            let activated;
            let input = if l == 0 {
                x
            } else {
                activated = pre[l - 1].mapv(|v| v.max(0.0));
                &activated
            };
            let mut gw = delta.t().dot(input);
            if lambda != 0.0 {
                gw.scaled_add(2.0 * lambda, &self.weights[l]);
            }
            d_w[l] = gw;
            d_b[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l]);
                Zip::from(&mut back).and(&pre[l - 1]).for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        (
            Gradients {
                weights: d_w,
                biases: d_b,
            },
            loss,
        )
    }

    fn step(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-lr, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-lr, g);
        }
    }
}

/// Mini-batch gradient descent with a fixed learning rate. The dataset is
/// reshuffled every epoch from a generator seeded with `cfg.seed`.
pub fn train(
    params: &MlpParams,
    data: &[TrainingExample],
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let (x_all, y_all) = stack(data, params.input_dim())?;
    let mut net = Net::from_params(params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let x = x_all.select(Axis(0), idx);
            let y = y_all.select(Axis(0), idx);
            let (grads, loss) = net.backprop(&x, &y, cfg.lambda);
            if !loss.is_finite() {
                return Err(Error::DivergenceDetected { epoch });
            }
            net.step(&grads, cfg.learning_rate);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        if !mean.is_finite() || net.weights.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(Error::DivergenceDetected { epoch });
        }
        history.push(mean);
    }
    let trained = net.into_params(params);
    if trained
        .weights
        .iter()
        .flat_map(|w| w.iter())
        .chain(trained.biases.iter().flat_map(|b| b.iter()))
        .any(|v| !v.is_finite())
    {
        return Err(Error::DivergenceDetected {
            epoch: cfg.epochs - 1,
        });
    }
    Ok(TrainOutcome {
        params: trained,
        loss_history: history,
    })
}
