//! The binary classification head: two ReLU hidden layers with inverted
//! dropout and a single output logit, trained with binary cross-entropy.
//!
//! Gradients with respect to parameters and inputs are analytic; the frozen
//! flattened parameter order (layer 0 weights row-major, layer 0 biases,
//! layer 1 weights, ...) is what the Fisher module's per-layer aggregation
//! relies on.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Numerically stable logistic sigmoid.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against label `y`, computed in
/// logit space: `max(z,0) - z*y + ln(1 + exp(-|z|))`.
pub fn bce_with_logit(logit: f64, y: u8) -> f64 {
    logit.max(0.0) - logit * f64::from(y) + (-logit.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// out × in.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: DMatrix::zeros(out, inp),
            bias: DVector::zeros(out),
        }
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Per-layer weight and bias gradients.
type LayerGrads = Vec<(DMatrix<f64>, DVector<f64>)>;

/// Binary masks for the hidden layers, with inverted-dropout scaling: kept
/// activations are divided by the keep probability at application time, so
/// evaluation mode needs no rescaling.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    /// One 0/1 vector per hidden layer.
    pub masks: Vec<DVector<f64>>,
    pub keep_prob: f64,
}

impl DropoutMask {
    /// Sample a mask for the given hidden sizes at `dropout_rate`.
    pub fn sample(hidden_sizes: &[usize], dropout_rate: f64, gen: &mut ChaCha8Rng) -> Self {
        let keep_prob = 1.0 - dropout_rate;
        let masks = hidden_sizes
            .iter()
            .map(|&h| {
                DVector::from_iterator(
                    h,
                    (0..h).map(|_| {
                        if gen.gen::<f64>() < keep_prob {
                            1.0
                        } else {
                            0.0
                        }
                    }),
                )
            })
            .collect();
        Self { masks, keep_prob }
    }

    /// All-ones mask (still applies the 1/keep_prob scaling).
    pub fn ones(hidden_sizes: &[usize], dropout_rate: f64) -> Self {
        Self {
            masks: hidden_sizes
                .iter()
                .map(|&h| DVector::from_element(h, 1.0))
                .collect(),
            keep_prob: 1.0 - dropout_rate,
        }
    }
}

/// The classification head. Hidden layers use ReLU; the final layer emits a
/// single raw logit.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    layers: Vec<DenseLayer>,
    dropout_rate: f64,
}

impl ClassifierHead {
    pub fn new(layers: Vec<DenseLayer>, dropout_rate: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("head needs at least one layer"));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::config("dropout_rate must be in [0, 1)"));
        }
        for w in layers.windows(2) {
            if w[1].weight.ncols() != w[0].weight.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: w[0].weight.nrows(),
                    got: w[1].weight.ncols(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.weight.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: l.weight.nrows(),
                    got: l.bias.len(),
                });
            }
        }
        if layers.last().unwrap().weight.nrows() != 1 {
            return Err(Error::config("final layer must output a single logit"));
        }
        Ok(Self {
            layers,
            dropout_rate,
        })
    }

    /// All-zero head for the given layer sizes `[d, h1, ..., 1]`.
    pub fn zeros(dims: &[usize], dropout_rate: f64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("need at least input and output dims"));
        }
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::zeros(w[1], w[0]))
            .collect();
        Self::new(layers, dropout_rate)
    }

    /// Glorot-uniform initialization (`±sqrt(6/(fan_in+fan_out))`), zero
    /// biases, seeded.
    pub fn init(dims: &[usize], dropout_rate: f64, seed: u64) -> Result<Self> {
        let mut gen = rng::seeded(seed);
        let mut head = Self::zeros(dims, dropout_rate)?;
        for layer in &mut head.layers {
            let (out, inp) = (layer.weight.nrows(), layer.weight.ncols());
            let limit = (6.0 / (inp + out) as f64).sqrt();
            for r in 0..out {
                for c in 0..inp {
                    layer.weight[(r, c)] = gen.gen_range(-limit..limit);
                }
            }
        }
        Ok(head)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    /// Hidden layer widths, in order.
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weight.nrows())
            .collect()
    }

    /// Layer sizes as `[d, h1, h2, 1]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.weight.nrows()));
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Flattened parameter count per layer, in the frozen gradient order.
    pub fn layer_param_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(DenseLayer::param_count).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass to the raw logit. `mask: None` is evaluation mode (no
    /// dropout, no scaling); with a mask, kept hidden activations are scaled
    /// by `1/keep_prob`.
    pub fn forward(&self, x: &[f64], mask: Option<&DropoutMask>) -> Result<f64> {
        self.check_input(x)?;
        if let Some(m) = mask {
            let hidden = self.hidden_sizes();
            if m.masks.len() != hidden.len()
                || m.masks.iter().zip(&hidden).any(|(v, &h)| v.len() != h)
            {
                return Err(Error::config("dropout mask shape does not match head"));
            }
        }
        let mut a = DVector::from_column_slice(x);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weight * a + &layer.bias;
            if k < last {
                z.apply(|v| *v = v.max(0.0));
                if let Some(m) = mask {
                    z.component_mul_assign(&m.masks[k]);
                    z /= m.keep_prob;
                }
            }
            a = z;
        }
        Ok(a[0])
    }

    /// Evaluation-mode probability of the Nature class.
    pub fn predict_prob(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.forward(x, None)?))
    }

    /// Forward keeping pre-activations and post-activation values for
    /// backprop. Returns (pre_activations per layer, activations per layer
    /// where index 0 is the input).
    fn forward_cached(
        &self,
        x: &[f64],
        mask: Option<&DropoutMask>,
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = Vec::with_capacity(self.layers.len() + 1);
        act.push(DVector::from_column_slice(x));
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = &layer.weight * act.last().unwrap() + &layer.bias;
            pre.push(z.clone());
            let mut a = z;
            if k < last {
                a.apply(|v| *v = v.max(0.0));
                if let Some(m) = mask {
                    a.component_mul_assign(&m.masks[k]);
                    a /= m.keep_prob;
                }
            }
            act.push(a);
        }
        (pre, act)
    }

    /// Backpropagate BCE loss; returns per-layer (dW, db) and the input
    /// gradient. `mask` must match the mask used in the forward pass.
    fn backward(&self, x: &[f64], y: u8, mask: Option<&DropoutMask>) -> (LayerGrads, DVector<f64>) {
        let (pre, act) = self.forward_cached(x, mask);
        let last = self.layers.len() - 1;
        let logit = pre[last][0];
        // dL/dz for BCE(sigmoid(z), y)
        let mut delta = DVector::from_element(1, sigmoid(logit) - f64::from(y));
        let mut grads = vec![(DMatrix::zeros(0, 0), DVector::zeros(0)); self.layers.len()];
        for k in (0..self.layers.len()).rev() {
            let dw = &delta * act[k].transpose();
            let db = delta.clone();
            let mut da = self.layers[k].weight.transpose() * &delta;
            if k > 0 {
                let hidden = k - 1;
                if let Some(m) = mask {
                    da.component_mul_assign(&m.masks[hidden]);
                    da /= m.keep_prob;
                }
                // ReLU derivative on the pre-activation (0 at the kink)
                for (g, &z) in da.iter_mut().zip(pre[hidden].iter()) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            grads[k] = (dw, db);
            delta = da;
        }
        (grads, delta)
    }

    /// Exact gradient of `BCE(y, sigmoid(head(x)))` with respect to every
    /// parameter, evaluation mode, flattened in the frozen order.
    pub fn grad_params(&self, x: &[f64], y: u8) -> Result<DVector<f64>> {
        self.check_input(x)?;
        if y > 1 {
            return Err(Error::UnknownLabel(y.to_string()));
        }
        let (grads, _) = self.backward(x, y, None);
        let mut flat = Vec::with_capacity(self.param_count());
        for (dw, db) in &grads {
            // row-major weights, then biases
            for r in 0..dw.nrows() {
                for c in 0..dw.ncols() {
                    flat.push(dw[(r, c)]);
                }
            }
            flat.extend(db.iter());
        }
        Ok(DVector::from_vec(flat))
    }

    /// Gradient of the BCE loss with respect to the input vector,
    /// evaluation mode.
    pub fn grad_input(&self, x: &[f64], y: u8) -> Result<DVector<f64>> {
        self.check_input(x)?;
        if y > 1 {
            return Err(Error::UnknownLabel(y.to_string()));
        }
        let (_, dx) = self.backward(x, y, None);
        Ok(dx)
    }

    /// Evaluation-mode accuracy on a dataset (threshold 0.5, ties to class 1).
    pub fn accuracy(&self, data: &EmbeddingDataset) -> Result<f64> {
        let mut hits = 0usize;
        for s in data.samples() {
            let p = self.predict_prob(&s.embedding)?;
            let pred = u8::from(p >= 0.5);
            hits += usize::from(pred == s.label);
        }
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = HeadFile {
            schema: SCHEMA.to_string(),
            dims: self.dims(),
            dropout: self.dropout_rate,
            weights: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: (0..l.weight.nrows())
                        .map(|r| l.weight.row(r).iter().copied().collect())
                        .collect(),
                    b: l.bias.iter().copied().collect(),
                })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Numerical(format!("head serialization failed: {e}")))?;
        std::fs::write(path.as_ref(), json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let file: HeadFile = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            format: "head json",
            line: 0,
            msg: e.to_string(),
        })?;
        if file.schema != SCHEMA {
            return Err(Error::Malformed {
                format: "head json",
                line: 0,
                msg: format!("unsupported schema {:?}", file.schema),
            });
        }
        let layers = file
            .weights
            .iter()
            .map(|l| {
                let rows = l.w.len();
                let cols = l.w.first().map_or(0, Vec::len);
                DenseLayer {
                    weight: DMatrix::from_fn(rows, cols, |r, c| l.w[r][c]),
                    bias: DVector::from_vec(l.b.clone()),
                }
            })
            .collect();
        Self::new(layers, file.dropout)
    }
}

const SCHEMA: &str = "head/1";

#[derive(Serialize, Deserialize)]
struct HeadFile {
    schema: String,
    dims: Vec<usize>,
    dropout: f64,
    weights: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Training hyperparameters. The defaults are sized for fast experiments;
/// the full-scale 512/256 hidden sizes remain available through `h1`/`h2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub h1: usize,
    pub h2: usize,
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
            optimizer: Optimizer::Sgd,
            h1: 32,
            h2: 16,
            dropout_rate: 0.5,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate must be in [0, 1)"));
        }
        if self.h1 < 1 || self.h2 < 1 {
            return Err(Error::config("hidden sizes must be at least 1"));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

/// Train a head by mini-batch gradient descent on BCE with dropout active.
/// Deterministic for a fixed config and seed.
pub fn train(data: &EmbeddingDataset, cfg: &TrainConfig) -> Result<ClassifierHead> {
    cfg.validate()?;
    data.require_both_classes()?;
    let dims = [data.dim(), cfg.h1, cfg.h2, 1];
    let mut head = ClassifierHead::init(&dims, cfg.dropout_rate, rng::derive(cfg.seed, 0))?;
    let mut shuffle_rng = rng::seeded(rng::derive(cfg.seed, 1));
    let mut mask_rng = rng::seeded(rng::derive(cfg.seed, 2));
    let hidden = head.hidden_sizes();
    let use_dropout = cfg.dropout_rate > 0.0;
    let mut adam = Adam::new(head.param_count());

    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: LayerGrads = head
                .layers
                .iter()
                .map(|l| {
                    (
                        DMatrix::zeros(l.weight.nrows(), l.weight.ncols()),
                        DVector::zeros(l.bias.len()),
                    )
                })
                .collect();
            for &i in batch {
                let s = &data.samples()[i];
                let mask = use_dropout
                    .then(|| DropoutMask::sample(&hidden, cfg.dropout_rate, &mut mask_rng));
                let (grads, _) = head.backward(&s.embedding, s.label, mask.as_ref());
                for (a, g) in acc.iter_mut().zip(grads) {
                    a.0 += g.0;
                    a.1 += g.1;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (layer, (dw, db)) in head.layers.iter_mut().zip(&acc) {
                        layer.weight -= dw * (scale * cfg.learning_rate);
                        layer.bias -= db * (scale * cfg.learning_rate);
                    }
                }
                Optimizer::Adam => {
                    let mut params = flatten_params(&head);
                    let grad: Vec<f64> =
                        flatten_grads(&acc).into_iter().map(|g| g * scale).collect();
                    adam.step(&mut params, &grad, cfg.learning_rate);
                    unflatten_params(&mut head, &params);
                }
            }
        }
    }
    Ok(head)
}

fn flatten_params(head: &ClassifierHead) -> Vec<f64> {
    let mut out = Vec::with_capacity(head.param_count());
    for l in &head.layers {
        for r in 0..l.weight.nrows() {
            for c in 0..l.weight.ncols() {
                out.push(l.weight[(r, c)]);
            }
        }
        out.extend(l.bias.iter());
    }
    out
}

fn flatten_grads(grads: &LayerGrads) -> Vec<f64> {
    let mut out = Vec::new();
    for (dw, db) in grads {
        for r in 0..dw.nrows() {
            for c in 0..dw.ncols() {
                out.push(dw[(r, c)]);
            }
        }
        out.extend(db.iter());
    }
    out
}

fn unflatten_params(head: &mut ClassifierHead, flat: &[f64]) {
    let mut k = 0;
    for l in &mut head.layers {
        for r in 0..l.weight.nrows() {
            for c in 0..l.weight.ncols() {
                l.weight[(r, c)] = flat[k];
                k += 1;
            }
        }
        for b in l.bias.iter_mut() {
            *b = flat[k];
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use approx::assert_relative_eq;

    /// 1-unit chain head (d=1, h1=1, h2=1) with all weights `w`, biases 0.
    fn chain_head(w: f64, dropout: f64) -> ClassifierHead {
        let mut head = ClassifierHead::zeros(&[1, 1, 1, 1], dropout).unwrap();
        for l in &mut head.layers {
            l.weight[(0, 0)] = w;
        }
        head
    }

    /// Small random head for finite-difference checks.
    pub(crate) fn random_head(seed: u64) -> (ClassifierHead, Vec<f64>) {
        let mut gen = rng::seeded(seed);
        let head = ClassifierHead::init(&[2, 3, 2, 1], 0.0, seed).unwrap();
        let x: Vec<f64> = (0..2).map(|_| gen.gen_range(-2.0..2.0)).collect();
        (head, x)
    }

    fn fd_grad_params(head: &ClassifierHead, x: &[f64], y: u8, h: f64) -> Vec<f64> {
        let base = flatten_params(head);
        let mut grads = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut plus = head.clone();
            let mut minus = head.clone();
            let mut p = base.clone();
            p[i] += h;
            unflatten_params(&mut plus, &p);
            p[i] -= 2.0 * h;
            unflatten_params(&mut minus, &p);
            let lp = bce_with_logit(plus.forward(x, None).unwrap(), y);
            let lm = bce_with_logit(minus.forward(x, None).unwrap(), y);
            grads.push((lp - lm) / (2.0 * h));
        }
        grads
    }

    pub(crate) fn assert_close_rel(analytic: &[f64], fd: &[f64], rel: f64, abs_floor: f64) {
        assert_eq!(analytic.len(), fd.len());
        for (i, (&a, &f)) in analytic.iter().zip(fd).enumerate() {
            let diff = (a - f).abs();
            let scale = a.abs().max(f.abs());
            assert!(
                diff <= rel * scale || diff <= abs_floor,
                "component {i}: analytic {a} vs fd {f} (diff {diff})"
            );
        }
    }

    #[test]
    fn zero_network_gives_zero_logit() {
        let head = ClassifierHead::zeros(&[4, 3, 2, 1], 0.5).unwrap();
        let logit = head.forward(&[1.0, -2.0, 3.0, 0.5], None).unwrap();
        assert_eq!(logit, 0.0);
        assert_eq!(sigmoid(logit), 0.5);
    }

    #[test]
    fn chain_head_hand_evaluation() {
        let head = chain_head(1.0, 0.5);
        assert_eq!(head.forward(&[2.0], None).unwrap(), 2.0);
        // full mask of ones with keep prob 0.5 scales each hidden layer by 2
        let mask = DropoutMask::ones(&[1, 1], 0.5);
        assert_eq!(head.forward(&[2.0], Some(&mask)).unwrap(), 8.0);
    }

    #[test]
    fn eval_forward_is_pure() {
        let (head, x) = random_head(3);
        let a = head.forward(&x, None).unwrap();
        let b = head.forward(&x, None).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn zero_network_output_bias_gradient() {
        let head = ClassifierHead::zeros(&[2, 2, 2, 1], 0.0).unwrap();
        let g = head.grad_params(&[1.0, 1.0], 1).unwrap();
        // last component is the output bias: sigma(0) - 1 = -0.5
        assert_eq!(g[g.len() - 1], -0.5);
        // all other components zero (no path through zero weights)
        for i in 0..g.len() - 1 {
            assert_eq!(g[i], 0.0);
        }
    }

    #[test]
    fn grad_sum_identity_on_output_bias() {
        let (head, x) = random_head(11);
        let z = head.forward(&x, None).unwrap();
        let g0 = head.grad_params(&x, 0).unwrap();
        let g1 = head.grad_params(&x, 1).unwrap();
        let n = g0.len();
        assert_relative_eq!(
            g0[n - 1] + g1[n - 1],
            2.0 * sigmoid(z) - 1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grad_params_matches_finite_differences() {
        for seed in 0..20 {
            let (head, x) = random_head(seed);
            for y in [0u8, 1u8] {
                let analytic: Vec<f64> = head.grad_params(&x, y).unwrap().iter().copied().collect();
                let fd = fd_grad_params(&head, &x, y, 1e-5);
                assert_close_rel(&analytic, &fd, 1e-4, 1e-8);
            }
        }
    }

    #[test]
    fn grad_input_matches_finite_differences() {
        for seed in 20..40 {
            let (head, x) = random_head(seed);
            for y in [0u8, 1u8] {
                let analytic: Vec<f64> = head.grad_input(&x, y).unwrap().iter().copied().collect();
                let mut fd = Vec::new();
                let h = 1e-5;
                for i in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let lp = bce_with_logit(head.forward(&xp, None).unwrap(), y);
                    let lm = bce_with_logit(head.forward(&xm, None).unwrap(), y);
                    fd.push((lp - lm) / (2.0 * h));
                }
                assert_close_rel(&analytic, &fd, 1e-4, 1e-8);
            }
        }
    }

    #[test]
    fn grad_input_chain_rule_on_linear_chain() {
        // positive input keeps both ReLUs active: dL/dx = (sigma(z)-y) * w1*w2*w3
        let head = chain_head(0.7, 0.0);
        let x = [1.5];
        let z = head.forward(&x, None).unwrap();
        let g = head.grad_input(&x, 1).unwrap();
        assert_relative_eq!(g[0], (sigmoid(z) - 1.0) * 0.7f64.powi(3), epsilon = 1e-12);
    }

    #[test]
    fn zero_network_zero_input_gradient() {
        let head = ClassifierHead::zeros(&[3, 2, 2, 1], 0.0).unwrap();
        let g = head.grad_input(&[1.0, 2.0, 3.0], 1).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverted_dropout_expectation_on_linear_path() {
        // positive weights and inputs keep ReLU linear, so the masked
        // expectation must match the eval-mode forward
        let mut head = ClassifierHead::zeros(&[1, 2, 2, 1], 0.5).unwrap();
        for l in &mut head.layers {
            l.weight.fill(0.4);
        }
        let x = [1.0];
        let eval = head.forward(&x, None).unwrap();
        let hidden = head.hidden_sizes();
        let mut gen = rng::seeded(123);
        let n = 20_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let m = DropoutMask::sample(&hidden, 0.5, &mut gen);
                head.forward(&x, Some(&m)).unwrap()
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - eval).abs() < 3.0 * se + 1e-9,
            "mean {mean} vs eval {eval} (se {se})"
        );
    }

    #[test]
    fn train_separable_reaches_high_accuracy() {
        let data = synth_generate(1000, 2, 6.0, 7).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            seed: 1,
            ..TrainConfig::default()
        };
        let head = train(&data, &cfg).unwrap();
        assert!(head.accuracy(&data).unwrap() >= 0.99);
    }

    #[test]
    fn train_chance_level_on_unseparated_data() {
        let data = synth_generate(1000, 16, 0.0, 3).unwrap();
        let cfg = TrainConfig {
            seed: 5,
            ..TrainConfig::default()
        };
        let head = train(&data, &cfg).unwrap();
        let acc = head.accuracy(&data).unwrap();
        assert!((0.45..=0.60).contains(&acc), "accuracy {acc}");
    }

    #[test]
    fn train_is_deterministic() {
        let data = synth_generate(100, 4, 3.0, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_rejects_single_class() {
        let samples = (0..10)
            .map(|i| crate::data::Sample {
                id: format!("s{i}"),
                embedding: vec![i as f64],
                label: 0,
            })
            .collect();
        let data = EmbeddingDataset::new(samples).unwrap();
        assert!(matches!(
            train(&data, &TrainConfig::default()),
            Err(Error::SingleClass(_))
        ));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let (head, _) = random_head(77);
        let p = dir.path().join("head.json");
        head.save(&p).unwrap();
        let back = ClassifierHead::load(&p).unwrap();
        assert_eq!(head, back);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let head = ClassifierHead::zeros(&[3, 2, 2, 1], 0.0).unwrap();
        assert!(matches!(
            head.forward(&[1.0, 2.0], None),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
