//! Feed-forward binary edge classifier trained with Adam on a class-balanced
//! binary cross-entropy.
//!
//! Default architecture `16 → 32 → 32 → 32 → 1`, ReLU hidden layers and a
//! sigmoid output. All arithmetic is `f64`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::confusion_metrics;
use crate::rng;

pub const ARCHITECTURE: [usize; 5] = [16, 32, 32, 32, 1];

/// Probabilities fed to the log terms of the loss are clamped to
/// `[PROB_CLAMP, 1 − PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

const P_MIN: f64 = f64::MIN_POSITIVE;
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("input has {got} features, network expects {expected}")]
    Width { expected: usize, got: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {0} is not 0 or 1")]
    Label(u8),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("architecture needs an input and a single output unit")]
    Architecture,
}

/// Row-major feature matrix with 0/1 labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Examples {
    pub width: usize,
    pub x: Vec<f64>,
    pub y: Vec<u8>,
}

impl Examples {
    pub fn new(width: usize) -> Self {
        Examples {
            width,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64], label: u8) {
        debug_assert_eq!(row.len(), self.width);
        self.x.extend_from_slice(row);
        self.y.push(label);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.x[k * self.width..(k + 1) * self.width]
    }

    /// Copies rows `idx` into a new set (duplicates allowed).
    pub fn select(&self, idx: &[usize]) -> Examples {
        let mut out = Examples::new(self.width);
        for &k in idx {
            out.push(self.row(k), self.y[k]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs × inputs`, row-major.
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
        for o in 0..self.outputs {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (wi, xi) in w.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    /// Default architecture, He-uniform hidden layers and Xavier-uniform
    /// output layer; biases start at zero.
    pub fn init(seed: u64) -> Self {
        Network::with_architecture(&ARCHITECTURE, seed).expect("default architecture is valid")
    }

    pub fn with_architecture(dims: &[usize], seed: u64) -> Result<Self, ClassifierError> {
        let mut net = Network::zeros(dims)?;
        let mut r = rng::rng(seed);
        let last = net.layers.len() - 1;
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let limit = init_limit(layer.inputs, layer.outputs, k == last);
            for w in layer.weights.iter_mut() {
                *w = r.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self, ClassifierError> {
        if dims.len() < 2 || dims[dims.len() - 1] != 1 || dims.contains(&0) {
            return Err(ClassifierError::Architecture);
        }
        Ok(Network {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn architecture(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order, weights before biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    fn logit(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let mut z = Vec::with_capacity(32);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, &mut z);
            if k != last {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            core::mem::swap(&mut a, &mut z);
        }
        a[0]
    }

    /// Probability of class 1, strictly inside `(0, 1)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        if x.len() != self.input_width() {
            return Err(ClassifierError::Width {
                expected: self.input_width(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite);
        }
        Ok(self.predict_proba(x))
    }

    /// [`Network::forward`] without input validation.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x)).clamp(P_MIN, P_MAX)
    }

    /// 1 iff the probability is strictly greater than `threshold`.
    pub fn predict_with(&self, x: &[f64], threshold: f64) -> u8 {
        (self.predict_proba(x) > threshold) as u8
    }

    /// Class decision at the default 0.5 threshold.
    pub fn predict(&self, x: &[f64]) -> u8 {
        self.predict_with(x, 0.5)
    }
}

fn init_limit(inputs: usize, outputs: usize, output_layer: bool) -> f64 {
    if output_layer {
        libm::sqrt(6.0 / (inputs + outputs) as f64)
    } else {
        libm::sqrt(6.0 / inputs as f64)
    }
}

/// Uniform-init bound of layer `k` of `dims` (He for hidden, Xavier for
/// output).
pub fn layer_init_limit(dims: &[usize], k: usize) -> f64 {
    init_limit(dims[k], dims[k + 1], k + 2 == dims.len())
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Per-class loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights {
        negative: 1.0,
        positive: 1.0,
    };

    /// `w_c = N / (2·N_c)`.
    pub fn balanced(labels: &[u8]) -> Result<Self, ClassifierError> {
        let n = labels.len();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        let neg = n - pos;
        if pos == 0 || neg == 0 {
            return Err(ClassifierError::SingleClass);
        }
        Ok(ClassWeights {
            negative: n as f64 / (2.0 * neg as f64),
            positive: n as f64 / (2.0 * pos as f64),
        })
    }

    pub fn of(&self, label: u8) -> f64 {
        if label == 1 {
            self.positive
        } else {
            self.negative
        }
    }
}

fn check_batch(batch: &Examples) -> Result<(), ClassifierError> {
    if batch.is_empty() {
        return Err(ClassifierError::EmptyBatch);
    }
    if let Some(&bad) = batch.y.iter().find(|&&y| y > 1) {
        return Err(ClassifierError::Label(bad));
    }
    Ok(())
}

fn sample_loss(p: f64, y: u8, w: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y == 1 {
        -w * libm::log(p)
    } else {
        -w * libm::log(1.0 - p)
    }
}

/// Mean class-weighted binary cross-entropy over the batch.
pub fn loss(net: &Network, batch: &Examples, weights: ClassWeights) -> Result<f64, ClassifierError> {
    check_batch(batch)?;
    let total: f64 = (0..batch.len())
        .map(|k| sample_loss(net.predict_proba(batch.row(k)), batch.y[k], weights.of(batch.y[k])))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Analytic gradient of [`loss`] by backpropagation, shaped like `net`.
pub fn gradient(net: &Network, batch: &Examples, weights: ClassWeights) -> Result<Network, ClassifierError> {
    check_batch(batch)?;
    let mut grad = Network {
        layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
    };
    let mut scratch = Backprop::new(net);
    let scale = 1.0 / batch.len() as f64;
    for k in 0..batch.len() {
        scratch.accumulate(net, batch.row(k), batch.y[k], weights.of(batch.y[k]) * scale, &mut grad);
    }
    Ok(grad)
}

struct Backprop {
    /// Layer inputs: `acts[0]` is the sample, `acts[k]` the post-ReLU output
    /// of layer `k − 1`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

impl Backprop {
    fn new(net: &Network) -> Self {
        Backprop {
            acts: net.layers.iter().map(|l| Vec::with_capacity(l.inputs)).collect(),
            pre: net.layers.iter().map(|l| Vec::with_capacity(l.outputs)).collect(),
            delta: Vec::new(),
            next: Vec::new(),
        }
    }

    fn accumulate(&mut self, net: &Network, x: &[f64], y: u8, w: f64, grad: &mut Network) {
        let last = net.layers.len() - 1;
        self.acts[0].clear();
        self.acts[0].extend_from_slice(x);
        for k in 0..=last {
            let mut z = core::mem::take(&mut self.pre[k]);
            net.layers[k].apply(&self.acts[k], &mut z);
            if k != last {
                let next = &mut self.acts[k + 1];
                next.clear();
                next.extend(z.iter().map(|v| v.max(0.0)));
            }
            self.pre[k] = z;
        }
        let p = sigmoid(self.pre[last][0]).clamp(P_MIN, P_MAX);
        // d/dz of −w·[y ln p + (1−y) ln(1−p)] is w·(p − y) while the clamp
        // is inactive and 0 once it saturates
        let dz = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
            w * (p - f64::from(y))
        } else {
            0.0
        };
        self.delta.clear();
        self.delta.push(dz);
        for k in (0..=last).rev() {
            let layer = &net.layers[k];
            let g = &mut grad.layers[k];
            let input = &self.acts[k];
            for o in 0..layer.outputs {
                let d = self.delta[o];
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            if k == 0 {
                break;
            }
            self.next.clear();
            self.next.resize(layer.inputs, 0.0);
            for o in 0..layer.outputs {
                let d = self.delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (nx, wi) in self.next.iter_mut().zip(row) {
                    *nx += d * wi;
                }
            }
            for (nx, z) in self.next.iter_mut().zip(&self.pre[k - 1]) {
                if *z <= 0.0 {
                    *nx = 0.0;
                }
            }
            core::mem::swap(&mut self.delta, &mut self.next);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeightMode {
    Balanced,
    Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub class_weights: ClassWeightMode,
    /// Stop after this many epochs without a better validation loss.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 1000,
            batches_per_epoch: 64,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            class_weights: ClassWeightMode::Balanced,
            patience: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the epoch's mini-batch losses.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_balanced_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub class_weights: ClassWeights,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(params: usize) -> Self {
        Adam {
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, grad: &Network, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(cfg.beta1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(cfg.beta2, f64::from(self.t));
        let slots = self.m.iter_mut().zip(self.v.iter_mut());
        for ((p, g), (m, v)) in net.params_mut().zip(grad.params()).zip(slots) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= cfg.learning_rate * mhat / (libm::sqrt(vhat) + cfg.epsilon);
        }
    }
}

/// Balanced accuracy of `net` on `ex` at threshold 0.5.
pub fn balanced_accuracy(net: &Network, ex: &Examples) -> f64 {
    let preds: Vec<u8> = (0..ex.len()).map(|k| net.predict(ex.row(k))).collect();
    confusion_metrics(&ex.y, &preds)
        .map(|c| c.balanced_accuracy)
        .unwrap_or(0.0)
}

/// Mini-batch Adam training with best-validation checkpointing.
///
/// Each epoch draws `batches_per_epoch` batches of `batch_size` rows
/// uniformly with replacement from `train`. The returned network is the one
/// with the lowest validation loss (training loss when `val` is empty).
pub fn train(
    mut net: Network,
    train: &Examples,
    val: &Examples,
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory), ClassifierError> {
    check_batch(train)?;
    if train.width != net.input_width() {
        return Err(ClassifierError::Width {
            expected: net.input_width(),
            got: train.width,
        });
    }
    let balanced = ClassWeights::balanced(&train.y)?;
    let weights = match cfg.class_weights {
        ClassWeightMode::Balanced => balanced,
        ClassWeightMode::Unit => ClassWeights::UNIT,
    };
    let mut r = rng::rng(cfg.seed);
    let mut adam = Adam::new(net.param_count());
    let mut best = net.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut idx = vec![0usize; cfg.batch_size];

    for epoch in 0..cfg.epochs {
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batches_per_epoch {
            for k in idx.iter_mut() {
                *k = r.gen_range(0..train.len());
            }
            let batch = train.select(&idx);
            batch_loss += loss(&net, &batch, weights)?;
            let g = gradient(&net, &batch, weights)?;
            adam.step(&mut net, &g, cfg);
        }
        let train_loss = batch_loss / cfg.batches_per_epoch.max(1) as f64;
        let (val_loss, val_acc) = if val.is_empty() {
            (None, None)
        } else {
            (Some(loss(&net, val, weights)?), Some(balanced_accuracy(&net, val)))
        };
        let score = val_loss.unwrap_or(train_loss);
        if score < best_loss {
            best_loss = score;
            best_epoch = epoch;
            best.clone_from(&net);
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_balanced_accuracy: val_acc,
        });
        if let Some(p) = cfg.patience {
            if epoch - best_epoch >= p {
                break;
            }
        }
    }
    if epochs.is_empty() {
        best = net;
    }
    Ok((
        best,
        TrainHistory {
            epochs,
            best_epoch,
            class_weights: weights,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_batch(width: usize, n: usize, seed: u64) -> Examples {
        let mut r = rng::rng(seed);
        let mut ex = Examples::new(width);
        for k in 0..n {
            let row: Vec<f64> = (0..width).map(|_| r.gen_range(-2.0..2.0)).collect();
            ex.push(&row, (k % 2) as u8);
        }
        ex
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Network::init(3);
        assert_eq!(a, Network::init(3));
        assert_ne!(Network::init(0), Network::init(1));
        assert_eq!(a.architecture(), ARCHITECTURE.to_vec());
        for (k, layer) in a.layers.iter().enumerate() {
            let limit = layer_init_limit(&ARCHITECTURE, k);
            assert!(layer.weights.iter().all(|w| w.abs() <= limit));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(layer_init_limit(&ARCHITECTURE, 0), libm::sqrt(6.0 / 16.0));
        assert_eq!(layer_init_limit(&ARCHITECTURE, 3), libm::sqrt(6.0 / 33.0));
    }

    #[test]
    fn zero_network_gives_half() {
        let net = Network::zeros(&ARCHITECTURE).unwrap();
        assert_eq!(net.forward(&[1.0; 16]).unwrap(), 0.5);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = Network::init(1);
        assert_eq!(net.forward(&[0.0; 3]), Err(ClassifierError::Width { expected: 16, got: 3 }));
        let mut x = [0.0; 16];
        x[4] = f64::NAN;
        assert_eq!(net.forward(&x), Err(ClassifierError::NonFinite));
    }

    #[test]
    fn output_bias_is_monotone() {
        let mut net = Network::init(5);
        let x = [0.3; 16];
        let before = net.predict_proba(&x);
        net.layers.last_mut().unwrap().bias[0] += 0.5;
        assert!(net.predict_proba(&x) > before);
    }

    #[test]
    fn strict_threshold() {
        let net = Network::zeros(&ARCHITECTURE).unwrap();
        assert_eq!(net.predict(&[0.0; 16]), 0);
        let mut net = net;
        net.layers.last_mut().unwrap().bias[0] = libm::log(9.0); // p = 0.9
        assert_eq!(net.predict(&[0.0; 16]), 1);
        net.layers.last_mut().unwrap().bias[0] = libm::log(1.5); // p = 0.6
        assert_eq!(net.predict_with(&[0.0; 16], 0.7), 0);
        assert_eq!(net.predict_with(&[0.0; 16], 0.5), 1);
    }

    #[test]
    fn loss_values() {
        let net = Network::zeros(&ARCHITECTURE).unwrap();
        let ex = random_batch(16, 10, 1);
        let w = ClassWeights::balanced(&ex.y).unwrap();
        let l = loss(&net, &ex, w).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(loss(&net, &Examples::new(16), w), Err(ClassifierError::EmptyBatch));

        // a confident, correct 1-d model
        let mut tiny = Network::zeros(&[1, 1]).unwrap();
        tiny.layers[0].weights[0] = 100.0;
        let mut sep = Examples::new(1);
        sep.push(&[1.0], 1);
        sep.push(&[-1.0], 0);
        assert!(loss(&tiny, &sep, ClassWeights::UNIT).unwrap() < 1e-6);
    }

    #[test]
    fn balanced_weights() {
        let w = ClassWeights::balanced(&[0, 0, 0, 1]).unwrap();
        assert!((w.negative / w.positive - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.negative, 4.0 / 6.0);
        assert_eq!(w.positive, 2.0);
        assert_eq!(ClassWeights::balanced(&[1, 1]), Err(ClassifierError::SingleClass));
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let net = Network::init(9);
        let ex = random_batch(16, 8, 2);
        let idx: Vec<usize> = (0..8).chain(0..8).collect();
        let twice = ex.select(&idx);
        let w = ClassWeights::balanced(&ex.y).unwrap();
        let a = gradient(&net, &ex, w).unwrap();
        let b = gradient(&net, &twice, w).unwrap();
        for (x, y) in a.params().zip(b.params()) {
            assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let net = Network::init(4);
        let ex = random_batch(16, 64, 3);
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, ..TrainConfig::default() };
        let (out, hist) = train(net.clone(), &ex, &Examples::new(16), &cfg).unwrap();
        assert_eq!(out, net);
        assert_eq!(hist.epochs.len(), 3);
    }

    #[test]
    fn single_class_rejected() {
        let mut ex = Examples::new(16);
        ex.push(&[0.0; 16], 1);
        assert_eq!(
            train(Network::init(0), &ex, &Examples::new(16), &TrainConfig::default()).unwrap_err(),
            ClassifierError::SingleClass
        );
    }
}
