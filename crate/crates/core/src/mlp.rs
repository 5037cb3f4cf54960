//! Two-class feed-forward classifier: ReLU hidden layers, softmax output,
//! cross-entropy loss with L2 weight decay, mini-batch gradient descent
//! with Adam updates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Scaler;
use crate::metrics::{auroc, mcc, ConfusionMatrix};

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("input has {got} features, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("loss became non-finite at epoch {epoch}, batch {batch} (last finite loss {last_loss})")]
    NonFiniteLoss { epoch: usize, batch: usize, last_loss: f64 },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    /// Plain gradient descent, used for first-order sanity checks.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2_alpha: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Weight each class inversely to its training frequency.
    #[serde(default)]
    pub class_weighting: bool,
}

impl NetworkConfig {
    pub const OUTPUTS: usize = 2;

    pub fn new(input_dim: usize, seed: u64) -> Self {
        NetworkConfig {
            input_dim,
            hidden: vec![32, 16, 8],
            learning_rate: 0.001,
            batch_size: 32,
            l2_alpha: 0.001,
            epochs: 40,
            seed,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            class_weighting: false,
        }
    }

    fn validate(&self) -> Result<(), MlpError> {
        let bad = |m: &str| Err(MlpError::InvalidConfig(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be at least 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.l2_alpha >= 0.0) {
            return bad("learning rate must be positive and l2_alpha non-negative");
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(Self::OUTPUTS);
        w
    }
}

/// Dense layer; `weights` is `inputs x outputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub config: NetworkConfig,
    pub layers: Vec<Layer>,
    first_moment: Vec<Layer>,
    second_moment: Vec<Layer>,
    pub step: u64,
}

/// Two-class softmax output: `[p_non_homonym, p_homonym]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: [f64; 2],
}

impl Prediction {
    pub fn p_homonym(&self) -> f64 {
        self.probabilities[1]
    }

    /// Ties go to "non-homonym".
    pub fn is_homonym(&self) -> bool {
        self.probabilities[1] > self.probabilities[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    /// 1 = homonym.
    pub label: u8,
}

pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

const PROB_CLAMP: f64 = 1e-12;

/// Per-layer activations of one forward pass; `activations[0]` is the input.
struct Trace {
    activations: Vec<Vec<f64>>,
    logits: [f64; 2],
}

/// Gradient with the same shape as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Layer::params)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Layer::params_mut)
    }

    pub fn squared_norm(&self) -> f64 {
        self.values().map(|g| g * g).sum()
    }
}

impl NetworkState {
    /// He-scaled normal weights for hidden layers, Xavier for the output
    /// layer, zero biases.
    pub fn init(config: &NetworkConfig) -> Result<Self, MlpError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::init_with(config, &mut rng)
    }

    fn init_with(config: &NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self, MlpError> {
        config.validate()?;
        let widths = config.widths();
        let last = widths.len() - 2;
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = if l == last {
                (2.0 / (fan_in + fan_out) as f64).sqrt()
            } else {
                (2.0 / fan_in as f64).sqrt()
            };
            let normal = Normal::new(0.0, std).expect("positive std");
            let mut layer = Layer::zeros(fan_in, fan_out);
            layer.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
            layers.push(layer);
        }
        let zeros: Vec<Layer> = layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        Ok(NetworkState {
            config: config.clone(),
            layers,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        })
    }

    /// Rebuilds a state from stored parameters; optimizer moments start at zero.
    pub fn from_layers(config: NetworkConfig, layers: Vec<Layer>) -> Result<Self, MlpError> {
        config.validate()?;
        let widths = config.widths();
        let shapes_ok = layers.len() == widths.len() - 1
            && layers.iter().zip(widths.windows(2)).all(|(l, w)| {
                l.inputs == w[0] && l.outputs == w[1] && l.weights.len() == w[0] * w[1] && l.bias.len() == w[1]
            });
        if !shapes_ok {
            return Err(MlpError::InvalidConfig("layer shapes do not match configuration".into()));
        }
        let zeros: Vec<Layer> = layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        Ok(NetworkState {
            config,
            layers,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        let mut out = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.apply(activations.last().expect("input present"), &mut out);
            if l < last {
                activations.push(out.iter().map(|&z| relu(z)).collect());
            }
        }
        Trace {
            activations,
            logits: [out[0], out[1]],
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<[f64; 2], MlpError> {
        self.check_dim(x)?;
        Ok(self.trace(x).logits)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Prediction, MlpError> {
        Ok(Prediction {
            probabilities: softmax2(self.logits(x)?),
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), MlpError> {
        if x.len() != self.config.input_dim {
            return Err(MlpError::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn l2_term(&self) -> f64 {
        0.5 * self.config.l2_alpha * self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum::<f64>()
    }

    /// Mean cross-entropy over the batch plus `alpha/2 * sum ||W||^2`
    /// (biases excluded).
    pub fn loss(&self, batch: &[Sample]) -> Result<f64, MlpError> {
        self.weighted_loss(batch, [1.0, 1.0])
    }

    fn weighted_loss(&self, batch: &[Sample], class_weight: [f64; 2]) -> Result<f64, MlpError> {
        if batch.is_empty() {
            return Err(MlpError::EmptyTrainingSet);
        }
        let mut data = 0.0;
        for s in batch {
            let p = self.forward(&s.x)?.probabilities[s.label as usize];
            data -= class_weight[s.label as usize] * p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln();
        }
        Ok(data / batch.len() as f64 + self.l2_term())
    }

    /// Analytic gradient of [`NetworkState::loss`] by backpropagation.
    pub fn gradients(&self, batch: &[Sample]) -> Result<Gradients, MlpError> {
        self.weighted_gradients(batch, [1.0, 1.0])
    }

    fn weighted_gradients(&self, batch: &[Sample], class_weight: [f64; 2]) -> Result<Gradients, MlpError> {
        if batch.is_empty() {
            return Err(MlpError::EmptyTrainingSet);
        }
        let mut grads = Gradients {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        };
        let scale = 1.0 / batch.len() as f64;
        for s in batch {
            self.check_dim(&s.x)?;
            let trace = self.trace(&s.x);
            let p = softmax2(trace.logits);
            let w = class_weight[s.label as usize] * scale;
            let mut delta: Vec<f64> = (0..2)
                .map(|k| w * (p[k] - if k == s.label as usize { 1.0 } else { 0.0 }))
                .collect();
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let input = &trace.activations[l];
                let g = &mut grads.layers[l];
                for (i, &a) in input.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let row = &mut g.weights[i * layer.outputs..(i + 1) * layer.outputs];
                    for (gw, d) in row.iter_mut().zip(&delta) {
                        *gw += a * d;
                    }
                }
                for (gb, d) in g.bias.iter_mut().zip(&delta) {
                    *gb += d;
                }
                if l == 0 {
                    break;
                }
                // ReLU derivative: activation > 0 exactly when the pre-activation is.
                delta = (0..layer.inputs)
                    .map(|i| {
                        if input[i] > 0.0 {
                            let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                            row.iter().zip(&delta).map(|(w, d)| w * d).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        let alpha = self.config.l2_alpha;
        if alpha > 0.0 {
            for (g, layer) in grads.layers.iter_mut().zip(&self.layers) {
                for (gw, w) in g.weights.iter_mut().zip(&layer.weights) {
                    *gw += alpha * w;
                }
            }
        }
        Ok(grads)
    }

    /// One optimizer step.
    pub fn apply_gradients(&mut self, grads: &Gradients) {
        let c = &self.config;
        self.step += 1;
        match c.optimizer {
            Optimizer::Sgd => {
                let lr = c.learning_rate;
                for (p, g) in self.layers.iter_mut().flat_map(Layer::params_mut).zip(grads.values()) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam => {
                let t = self.step as i32;
                let (b1, b2) = (c.beta1, c.beta2);
                let lr_t = c.learning_rate * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t));
                let eps_hat = c.epsilon * (1.0 - b2.powi(t)).sqrt();
                let params = self.layers.iter_mut().flat_map(Layer::params_mut);
                let m = self.first_moment.iter_mut().flat_map(Layer::params_mut);
                let v = self.second_moment.iter_mut().flat_map(Layer::params_mut);
                for (((p, m), v), g) in params.zip(m).zip(v).zip(grads.values()) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    // equals lr * m_hat / (sqrt(v_hat) + eps)
                    *p -= lr_t * *m / (v.sqrt() + eps_hat);
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().flat_map(Layer::params).all(|p| p.is_finite())
    }
}

/// Scales a raw feature vector and runs the network.
pub fn predict_proba(state: &NetworkState, scaler: &Scaler, raw: &[f64]) -> Result<Prediction, MlpError> {
    let x = scaler.apply(raw)?;
    state.forward(&x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    pub eval_mcc: Option<f64>,
    pub eval_auroc: Option<f64>,
}

fn class_weights(config: &NetworkConfig, train: &[Sample]) -> [f64; 2] {
    if !config.class_weighting {
        return [1.0, 1.0];
    }
    let pos = train.iter().filter(|s| s.label == 1).count() as f64;
    let neg = train.len() as f64 - pos;
    let n = train.len() as f64;
    let w = |c: f64| if c > 0.0 { n / (2.0 * c) } else { 1.0 };
    [w(neg), w(pos)]
}

/// Mini-batch training, reshuffled every epoch. Deterministic for a fixed
/// `config.seed`.
pub fn train(
    config: &NetworkConfig,
    train_set: &[Sample],
    eval_set: &[Sample],
) -> Result<(NetworkState, Vec<EpochMetrics>), MlpError> {
    if train_set.is_empty() {
        return Err(MlpError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = NetworkState::init_with(config, &mut rng)?;
    let weights = class_weights(config, train_set);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut last_loss = f64::NAN;
    let mut batch: Vec<Sample> = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let loss = state.weighted_loss(&batch, weights)?;
            if !loss.is_finite() {
                return Err(MlpError::NonFiniteLoss { epoch, batch: b, last_loss });
            }
            last_loss = loss;
            loss_sum += loss * batch.len() as f64;
            let grads = state.weighted_gradients(&batch, weights)?;
            state.apply_gradients(&grads);
            if !state.all_finite() {
                return Err(MlpError::NonFiniteLoss { epoch, batch: b, last_loss });
            }
        }
        trace.push(epoch_metrics(&state, epoch, loss_sum / train_set.len() as f64, eval_set)?);
    }
    Ok((state, trace))
}

fn epoch_metrics(state: &NetworkState, epoch: usize, train_loss: f64, eval: &[Sample]) -> Result<EpochMetrics, MlpError> {
    if eval.is_empty() {
        return Ok(EpochMetrics {
            epoch,
            train_loss,
            eval_loss: None,
            eval_mcc: None,
            eval_auroc: None,
        });
    }
    let preds: Vec<Prediction> = eval.iter().map(|s| state.forward(&s.x)).collect::<Result<_, _>>()?;
    let labels: Vec<bool> = eval.iter().map(|s| s.label == 1).collect();
    let predicted: Vec<bool> = preds.iter().map(Prediction::is_homonym).collect();
    let scores: Vec<f64> = preds.iter().map(Prediction::p_homonym).collect();
    let cm = ConfusionMatrix::from_predictions(&predicted, &labels).expect("equal lengths");
    Ok(EpochMetrics {
        epoch,
        train_loss,
        eval_loss: Some(state.loss(eval)?),
        eval_mcc: Some(mcc(&cm)),
        eval_auroc: auroc(&scores, &labels).ok(),
    })
}

/// Outcome of comparing analytic gradients to central finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation flipped a ReLU on/off, where the
    /// loss is not differentiable and finite differences are meaningless.
    pub skipped_kinks: usize,
}

pub const FD_STEP: f64 = 1e-5;
/// Lower bound on the relative-error denominator. Parameters with
/// (near) zero gradient are held to an absolute tolerance instead, since
/// rounding in the difference quotient alone is about 1e-11.
const FD_SCALE_FLOOR: f64 = 1e-6;

fn relu_pattern(state: &NetworkState, batch: &[Sample]) -> Vec<bool> {
    let mut pattern = Vec::new();
    for s in batch {
        let t = state.trace(&s.x);
        for act in &t.activations[1..] {
            pattern.extend(act.iter().map(|&a| a > 0.0));
        }
    }
    pattern
}

/// Compares `analytic` against central differences of the loss for every
/// parameter of `state`.
pub fn compare_gradients(state: &NetworkState, batch: &[Sample], analytic: &Gradients) -> Result<GradientCheck, MlpError> {
    let base_pattern = relu_pattern(state, batch);
    let mut probe = state.clone();
    let mut report = GradientCheck {
        max_relative_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    let analytic: Vec<f64> = analytic.values().copied().collect();
    for (k, &a) in analytic.iter().enumerate() {
        let original = *param_mut(&mut probe, k);
        *param_mut(&mut probe, k) = original + FD_STEP;
        let plus = probe.loss(batch)?;
        let kink_plus = relu_pattern(&probe, batch) != base_pattern;
        *param_mut(&mut probe, k) = original - FD_STEP;
        let minus = probe.loss(batch)?;
        let kink_minus = relu_pattern(&probe, batch) != base_pattern;
        *param_mut(&mut probe, k) = original;
        if kink_plus || kink_minus {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_SCALE_FLOOR);
        report.max_relative_error = report.max_relative_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}

fn param_mut(state: &mut NetworkState, mut k: usize) -> &mut f64 {
    for layer in &mut state.layers {
        let n = layer.weights.len();
        if k < n {
            return &mut layer.weights[k];
        }
        k -= n;
        if k < layer.bias.len() {
            return &mut layer.bias[k];
        }
        k -= layer.bias.len();
    }
    panic!("parameter index out of range")
}

/// Backprop of a freshly initialized network checked against finite
/// differences.
pub fn gradient_check(config: &NetworkConfig, batch: &[Sample]) -> Result<GradientCheck, MlpError> {
    let state = NetworkState::init(config)?;
    let grads = state.gradients(batch)?;
    compare_gradients(&state, batch, &grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_config(input: usize, seed: u64) -> NetworkConfig {
        NetworkConfig::new(input, seed)
    }

    fn random_batch(input: usize, n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Sample {
                x: (0..input).map(|_| rng.random_range(-2.0..2.0)).collect(),
                label: (i % 2) as u8,
            })
            .collect()
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = NetworkState::init(&small_config(39, 1)).unwrap();
        let b = NetworkState::init(&small_config(39, 1)).unwrap();
        let c = NetworkState::init(&small_config(39, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.layers, c.layers);
        assert_eq!((a.layers[0].inputs, a.layers[0].outputs), (39, 32));
        let shapes: Vec<(usize, usize)> = a.layers.iter().map(|l| (l.inputs, l.outputs)).collect();
        assert_eq!(shapes, vec![(39, 32), (32, 16), (16, 8), (8, 2)]);
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert!(NetworkState::init(&small_config(0, 1)).is_err());
    }

    #[test]
    fn softmax_behaviour() {
        assert_eq!(softmax2([0.0, 0.0]), [0.5, 0.5]);
        let p = softmax2([1000.0, 0.0]);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-12);
        assert_eq!(relu(-3.0), 0.0);
        assert_eq!(relu(2.0), 2.0);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let s = NetworkState::init(&small_config(5, 0)).unwrap();
        assert!(matches!(s.forward(&[0.0; 4]), Err(MlpError::DimensionMismatch { expected: 5, got: 4 })));
    }

    fn zero_network(input: usize, alpha: f64) -> NetworkState {
        let mut config = small_config(input, 0);
        config.l2_alpha = alpha;
        let mut s = NetworkState::init(&config).unwrap();
        for l in &mut s.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        s
    }

    #[test]
    fn loss_examples() {
        let batch = random_batch(3, 6, 9);
        let uniform = zero_network(3, 0.0);
        assert!((uniform.loss(&batch).unwrap() - 2f64.ln()).abs() < 1e-12);
        // zero weights: the L2 term vanishes exactly
        assert_eq!(zero_network(3, 0.5).loss(&batch).unwrap(), uniform.loss(&batch).unwrap());

        let mut confident = zero_network(3, 0.0);
        let out = confident.layers.last_mut().unwrap();
        out.bias = vec![-40.0, 40.0];
        let positives: Vec<Sample> = batch.iter().filter(|s| s.label == 1).cloned().collect();
        assert!(confident.loss(&positives).unwrap() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (input, seed) in [(5, 1), (12, 2), (39, 3)] {
            let mut config = small_config(input, seed);
            config.l2_alpha = 0.01;
            let batch = random_batch(input, 4, seed + 100);
            let report = gradient_check(&config, &batch).unwrap();
            assert!(report.max_relative_error < 1e-4, "{report:?}");
            assert!(report.checked > report.skipped_kinks);
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let config = small_config(5, 4);
        let batch = random_batch(5, 4, 5);
        let state = NetworkState::init(&config).unwrap();
        let mut grads = state.gradients(&batch).unwrap();
        let last = grads.layers.last_mut().unwrap();
        last.bias[0] = last.bias[0] * 1.5 + 0.01;
        let report = compare_gradients(&state, &batch, &grads).unwrap();
        assert!(report.max_relative_error > 1e-2, "{report:?}");
    }

    #[test]
    fn zero_input_gradients_are_finite() {
        let config = small_config(5, 6);
        let batch = vec![Sample { x: vec![0.0; 5], label: 1 }];
        let state = NetworkState::init(&config).unwrap();
        assert!(state.gradients(&batch).unwrap().values().all(|g| g.is_finite()));
        let report = gradient_check(&config, &batch).unwrap();
        assert!(report.max_relative_error.is_finite());
    }

    #[test]
    fn sgd_step_decreases_loss_to_first_order() {
        let mut config = small_config(6, 8);
        config.l2_alpha = 0.0;
        config.learning_rate = 1e-4;
        config.optimizer = Optimizer::Sgd;
        let batch = random_batch(6, 8, 3);
        let mut state = NetworkState::init(&config).unwrap();
        let before = state.loss(&batch).unwrap();
        let grads = state.gradients(&batch).unwrap();
        state.apply_gradients(&grads);
        let change = state.loss(&batch).unwrap() - before;
        let predicted = -config.learning_rate * grads.squared_norm();
        assert!((change - predicted).abs() < 0.01 * predicted.abs(), "{change} vs {predicted}");
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut config = small_config(4, 8);
        config.l2_alpha = 0.0;
        let batch = random_batch(4, 8, 1);
        let mut state = NetworkState::init(&config).unwrap();
        let before = state.clone();
        let grads = state.gradients(&batch).unwrap();
        state.apply_gradients(&grads);
        let moves = state.layers.iter().flat_map(|l| l.params()).zip(before.layers.iter().flat_map(|l| l.params()));
        for ((after, before), g) in moves.zip(grads.values()) {
            if g.abs() > 1e-6 {
                assert!(((before - after) - config.learning_rate * g.signum()).abs() < 1e-6);
            }
        }
    }

    fn separable(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                let label = (a + b > 0.0) as u8;
                // keep a margin around the boundary
                let shift = if label == 1 { 0.3 } else { -0.3 };
                Sample { x: vec![a + shift, b + shift], label }
            })
            .collect()
    }

    #[test]
    fn learns_separable_data() {
        let data = separable(400, 12);
        let config = small_config(2, 3);
        let (state, trace) = train(&config, &data, &data).unwrap();
        let correct = data
            .iter()
            .filter(|s| state.forward(&s.x).unwrap().is_homonym() == (s.label == 1))
            .count();
        assert!(correct as f64 / data.len() as f64 >= 0.99, "{correct}");
        assert_eq!(trace.len(), 40);
        assert!(trace.last().unwrap().train_loss < trace[0].train_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(100, 2);
        let mut config = small_config(2, 77);
        config.epochs = 5;
        let (a, ta) = train(&config, &data, &data).unwrap();
        let (b, tb) = train(&config, &data, &data).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        config.seed = 78;
        let (c, _) = train(&config, &data, &data).unwrap();
        assert_ne!(a.layers, c.layers);
    }

    #[test]
    fn divergence_is_reported() {
        let mut data = separable(10, 1);
        data[3].x[0] = f64::NAN;
        assert!(matches!(
            train(&small_config(2, 1), &data, &[]),
            Err(MlpError::NonFiniteLoss { epoch: 0, .. })
        ));
    }

    #[test]
    fn class_weighting_flag() {
        let data: Vec<Sample> = (0..10).map(|i| Sample { x: vec![0.0], label: (i == 0) as u8 }).collect();
        let mut config = small_config(1, 0);
        assert_eq!(class_weights(&config, &data), [1.0, 1.0]);
        config.class_weighting = true;
        let w = class_weights(&config, &data);
        assert!((w[0] - 10.0 / 18.0).abs() < 1e-12 && (w[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one_and_rank_by_logit_gap() {
        let state = NetworkState::init(&small_config(5, 3)).unwrap();
        let batch = random_batch(5, 50, 4);
        let mut rows: Vec<(f64, f64)> = batch
            .iter()
            .map(|s| {
                let p = state.forward(&s.x).unwrap();
                assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let l = state.logits(&s.x).unwrap();
                (p.p_homonym(), l[1] - l[0])
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(rows.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-12));
    }

    #[test]
    fn prediction_tie_is_non_homonym() {
        assert!(!Prediction { probabilities: [0.5, 0.5] }.is_homonym());
    }
}
