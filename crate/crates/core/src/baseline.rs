//! Prediction-only comparators.
//!
//! * A fully connected network trained offline by backpropagation and plain
//!   mini-batch SGD, either as an autoencoder (linear output, MSE) or as a
//!   classifier (softmax output, cross-entropy). Hidden layers use sigmoid.
//! * A frozen OS-ELM ensemble: trained once on reference data and then only
//!   used for prediction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleConfig, OdlEnsemble};
use crate::error::{check_len, OdlError, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    /// Identity output, squared error summed over outputs.
    Linear,
    /// Softmax output, cross-entropy against a class index.
    Softmax,
}

/// Dense feed-forward network. Layer `l` maps `sizes[l]` to `sizes[l + 1]`
/// with a row-major `sizes[l + 1] x sizes[l]` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    output: OutputKind,
}

/// Gradient with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<'a> {
    Vector(&'a [f64]),
    Class(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Anomaly-detection network settings: batch 5, 5 epochs, lr 0.002.
    pub fn autoencoder(seed: u64) -> Self {
        Self {
            batch_size: 5,
            epochs: 5,
            learning_rate: 0.002,
            seed,
        }
    }

    /// Classification network settings: batch 24, 5 epochs, lr 0.001.
    pub fn classifier(seed: u64) -> Self {
        Self {
            batch_size: 24,
            epochs: 5,
            learning_rate: 0.001,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(OdlError::config("batch size and epochs must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(OdlError::config("learning rate must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Dataset-level loss after initialisation and after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

impl MlpModel {
    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn new(layer_sizes: &[usize], output: OutputKind, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(OdlError::config(format!(
                "need at least two positive layer sizes, got {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            output,
        })
    }

    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        output: OutputKind,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || weights.len() != layer_sizes.len() - 1 || biases.len() != weights.len() {
            return Err(OdlError::config("layer structure does not match parameters"));
        }
        for (l, w) in layer_sizes.windows(2).enumerate() {
            check_len("weights", weights[l].len(), w[0] * w[1])?;
            check_len("biases", biases[l].len(), w[1])?;
        }
        if weights.iter().chain(&biases).flatten().any(|v| !v.is_finite()) {
            return Err(OdlError::invalid("parameters must be finite"));
        }
        Ok(Self {
            layer_sizes,
            weights,
            biases,
            output,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn output_kind(&self) -> OutputKind {
        self.output
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.layer_sizes)
    }

    /// Activations of every layer, input included.
    fn forward_all(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len("input", x.len(), self.layer_sizes[0])?;
        let layers = self.weights.len();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let prev = &acts[l];
            let mut z: Vec<f64> = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                *zo += row.iter().zip(prev).map(|(w, a)| w * a).sum::<f64>();
            }
            debug_assert_eq!(z.len(), fan_out);
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            } else if self.output == OutputKind::Softmax {
                softmax(&mut z);
            }
            acts.push(z);
        }
        Ok(acts)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_all(x)?.pop().expect("at least one layer"))
    }

    fn check_target(&self, target: Target<'_>) -> Result<()> {
        let out = *self.layer_sizes.last().expect("non-empty");
        match (self.output, target) {
            (OutputKind::Linear, Target::Vector(t)) => check_len("target", t.len(), out),
            (OutputKind::Softmax, Target::Class(c)) if c < out => Ok(()),
            (OutputKind::Softmax, Target::Class(c)) => {
                Err(OdlError::invalid(format!("class {c} out of range for {out} outputs")))
            }
            _ => Err(OdlError::invalid("target kind does not match the output layer")),
        }
    }

    fn loss_of(&self, y: &[f64], target: Target<'_>) -> f64 {
        match target {
            Target::Vector(t) => y.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            Target::Class(c) => -(y[c].max(1e-300)).ln(),
        }
    }

    pub fn loss(&self, x: &[f64], target: Target<'_>) -> Result<f64> {
        self.check_target(target)?;
        let y = self.forward(x)?;
        Ok(self.loss_of(&y, target))
    }

    /// Reconstruction MSE, the autoencoder's anomaly score. Training
    /// minimises the unnormalised squared error instead.
    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64> {
        Ok(self.loss(x, Target::Vector(x))? / x.len() as f64)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let y = self.forward(x)?;
        Ok(y
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0)
    }

    /// Backpropagated gradient of the per-sample loss.
    pub fn gradient(&self, x: &[f64], target: Target<'_>) -> Result<(f64, Gradients)> {
        self.check_target(target)?;
        let acts = self.forward_all(x)?;
        let layers = self.weights.len();
        let y = &acts[layers];
        let loss = self.loss_of(y, target);

        // dL/dz for the output layer
        let mut delta: Vec<f64> = match target {
            Target::Vector(t) => {
                y.iter().zip(t).map(|(a, b)| 2.0 * (a - b)).collect()
            }
            Target::Class(c) => {
                let mut d = y.clone();
                d[c] -= 1.0;
                d
            }
        };

        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        for l in (0..layers).rev() {
            let fan_in = self.layer_sizes[l];
            let prev = &acts[l];
            for (o, d) in delta.iter().enumerate() {
                gb[l][o] = *d;
                for (g, a) in gw[l][o * fan_in..(o + 1) * fan_in].iter_mut().zip(prev) {
                    *g = d * a;
                }
            }
            if l > 0 {
                let mut next = vec![0.0; fan_in];
                for (o, d) in delta.iter().enumerate() {
                    for (n, w) in next.iter_mut().zip(&self.weights[l][o * fan_in..(o + 1) * fan_in]) {
                        *n += d * w;
                    }
                }
                // hidden layers are sigmoid: a' = a (1 - a)
                for (n, a) in next.iter_mut().zip(prev) {
                    *n *= a * (1.0 - a);
                }
                delta = next;
            }
        }
        Ok((loss, Gradients { weights: gw, biases: gb }))
    }

    fn apply(&mut self, grad: &Gradients, step: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            w.iter_mut().zip(g).for_each(|(p, d)| *p -= step * d);
        }
        for (b, g) in self.biases.iter_mut().zip(&grad.biases) {
            b.iter_mut().zip(g).for_each(|(p, d)| *p -= step * d);
        }
    }
}

fn mean_loss(model: &MlpModel, inputs: &[Vec<f64>], targets: &[Target<'_>]) -> Result<f64> {
    let mut sum = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        sum += model.loss(x, *t)?;
    }
    Ok(sum / inputs.len() as f64)
}

/// Plain mini-batch SGD. Each epoch shuffles the sample order with a
/// ChaCha8 stream seeded by `config.seed`; each batch takes one step along
/// the mean gradient of its samples.
pub fn sgd_train(
    model: &mut MlpModel,
    inputs: &[Vec<f64>],
    targets: &[Target<'_>],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(OdlError::invalid("training set is empty"));
    }
    if inputs.len() != targets.len() {
        return Err(OdlError::invalid("inputs and targets differ in length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut curve = vec![mean_loss(model, inputs, targets)?];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut acc: Option<Gradients> = None;
            for &i in batch {
                let (loss, g) = model.gradient(&inputs[i], targets[i])?;
                if !loss.is_finite() {
                    return Err(OdlError::NumericalFailure {
                        step: (epoch * inputs.len().div_ceil(config.batch_size) + batch_idx) as u64,
                        detail: format!("non-finite loss in epoch {epoch}, batch {batch_idx}"),
                    });
                }
                match acc.as_mut() {
                    None => acc = Some(g),
                    Some(a) => {
                        for (x, y) in a.weights.iter_mut().flatten().zip(g.weights.iter().flatten()) {
                            *x += y;
                        }
                        for (x, y) in a.biases.iter_mut().flatten().zip(g.biases.iter().flatten()) {
                            *x += y;
                        }
                    }
                }
            }
            if let Some(g) = acc {
                model.apply(&g, config.learning_rate / batch.len() as f64);
            }
        }
        let l = mean_loss(model, inputs, targets)?;
        if !l.is_finite() {
            return Err(OdlError::NumericalFailure {
                step: epoch as u64,
                detail: format!("non-finite dataset loss after epoch {epoch}"),
            });
        }
        curve.push(l);
    }
    Ok(TrainReport { loss_curve: curve })
}

pub fn train_autoencoder(model: &mut MlpModel, inputs: &[Vec<f64>], config: &TrainConfig) -> Result<TrainReport> {
    let targets: Vec<Target<'_>> = inputs.iter().map(|x| Target::Vector(x)).collect();
    sgd_train(model, inputs, &targets, config)
}

pub fn train_classifier(
    model: &mut MlpModel,
    inputs: &[Vec<f64>],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<TrainReport> {
    let targets: Vec<Target<'_>> = labels.iter().map(|&c| Target::Class(c)).collect();
    sgd_train(model, inputs, &targets, config)
}

pub fn parameter_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Training-time footprint of a backprop network: parameters, their
/// gradients and one update buffer (3 copies), plus one activation and one
/// error value per neuron.
pub fn dnn_training_bytes(layer_sizes: &[usize], bytes_per_value: usize) -> usize {
    let neurons: usize = layer_sizes.iter().sum();
    bytes_per_value * (3 * parameter_count(layer_sizes) + 2 * neurons)
}

/// Memory needed to buffer a training set in RAM.
pub fn input_buffer_bytes(samples: usize, dim: usize, bytes_per_value: usize) -> usize {
    samples * dim * bytes_per_value
}

/// Layer sizes of the anomaly-detection network for input size `n`
/// (`{512, 128, 64, 128, 512}` at n = 512).
pub fn autoencoder_layers(n: usize) -> Vec<usize> {
    vec![n, (n / 4).max(1), (n / 8).max(1), (n / 4).max(1), n]
}

/// Layer sizes of the classification network for input size `n` and
/// `classes` outputs (`{512, 256, 96, 16, 4}` at n = 512).
pub fn classifier_layers(n: usize, classes: usize) -> Vec<usize> {
    vec![n, (n / 2).max(1), (n * 3 / 16).max(1), 16, classes]
}

/// K-instance ensemble trained once on reference data, then scored without
/// further updates.
pub fn frozen_oselm_baseline(
    config: EnsembleConfig,
    train: &[Vec<f64>],
    eval: &[Vec<f64>],
    exec: Exec,
) -> Result<(OdlEnsemble, Vec<f64>)> {
    let mut ens = OdlEnsemble::<f64>::new(config)?;
    ens.kmeans_init(train, exec)?;
    let scores = ens
        .predict_batch(eval, exec)?
        .into_iter()
        .map(|d| d.score)
        .collect();
    Ok((ens, scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_forward(m: &MlpModel, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let layers = m.weights().len();
        for l in 0..layers {
            let fan_in = m.layer_sizes()[l];
            let fan_out = m.layer_sizes()[l + 1];
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut s = m.biases()[l][o];
                for i in 0..fan_in {
                    s += m.weights()[l][o * fan_in + i] * a[i];
                }
                z[o] = s;
            }
            if l + 1 < layers {
                for v in &mut z {
                    *v = 1.0 / (1.0 + (-*v).exp());
                }
            } else if m.output_kind() == OutputKind::Softmax {
                let mx = z.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
                let s: f64 = e.iter().sum();
                z = e.iter().map(|v| v / s).collect();
            }
            a = z;
        }
        a
    }

    fn rand_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_weights_output_last_bias() {
        let mut m = MlpModel::new(&[4, 3, 4], OutputKind::Linear, 1).unwrap();
        m.weights_mut().iter_mut().flatten().for_each(|w| *w = 0.0);
        m.biases_mut()[1] = vec![0.1, 0.2, 0.3, 0.4];
        assert_eq!(m.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.1, 0.2, 0.3, 0.4]);
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in [OutputKind::Linear, OutputKind::Softmax] {
            let mut m = MlpModel::new(&[7, 5, 3, 6], kind, 3).unwrap();
            m.biases_mut().iter_mut().flatten().for_each(|b| *b = rng.random_range(-0.5..0.5));
            for _ in 0..20 {
                let x = rand_vec(&mut rng, 7);
                let y = m.forward(&x).unwrap();
                for (a, b) in y.iter().zip(naive_forward(&m, &x)) {
                    assert!((a - b).abs() <= 1e-12);
                }
                if kind == OutputKind::Softmax {
                    assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    fn finite_difference_check(layers: &[usize], kind: OutputKind, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = MlpModel::new(layers, kind, seed).unwrap();
        m.biases_mut().iter_mut().flatten().for_each(|b| *b = rng.random_range(-0.5..0.5));
        let x = rand_vec(&mut rng, layers[0]);
        let t_vec = rand_vec(&mut rng, *layers.last().unwrap());
        let target = match kind {
            OutputKind::Linear => Target::Vector(&t_vec),
            OutputKind::Softmax => Target::Class(seed as usize % layers.last().unwrap()),
        };
        let (_, g) = m.gradient(&x, target).unwrap();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for l in 0..m.weights().len() {
            for i in 0..m.weights()[l].len() {
                let orig = m.weights()[l][i];
                m.weights_mut()[l][i] = orig + eps;
                let up = m.loss(&x, target).unwrap();
                m.weights_mut()[l][i] = orig - eps;
                let down = m.loss(&x, target).unwrap();
                m.weights_mut()[l][i] = orig;
                let num = (up - down) / (2.0 * eps);
                let ana = g.weights[l][i];
                let rel = (num - ana).abs() / (num.abs() + ana.abs()).max(1e-7);
                worst = worst.max(rel);
            }
            for i in 0..m.biases()[l].len() {
                let orig = m.biases()[l][i];
                m.biases_mut()[l][i] = orig + eps;
                let up = m.loss(&x, target).unwrap();
                m.biases_mut()[l][i] = orig - eps;
                let down = m.loss(&x, target).unwrap();
                m.biases_mut()[l][i] = orig;
                let num = (up - down) / (2.0 * eps);
                let ana = g.biases[l][i];
                let rel = (num - ana).abs() / (num.abs() + ana.abs()).max(1e-7);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        assert!(finite_difference_check(&[6, 4, 6], OutputKind::Linear, 1) < 1e-3);
        assert!(finite_difference_check(&[16, 8, 4, 8, 16], OutputKind::Linear, 2) < 1e-3);
        assert!(finite_difference_check(&[16, 8, 6, 4, 4], OutputKind::Softmax, 3) < 1e-3);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Vec<f64>> = (0..10).map(|_| rand_vec(&mut rng, 6)).collect();
        let mut m = MlpModel::new(&[6, 4, 6], OutputKind::Linear, 4).unwrap();
        let before = m.clone();
        let cfg = TrainConfig {
            batch_size: 3,
            epochs: 2,
            learning_rate: 0.0,
            seed: 4,
        };
        train_autoencoder(&mut m, &xs, &cfg).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn loss_decreases_on_reconstructable_data() {
        // Points on a 2-d linear subspace of R^6.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = [rand_vec(&mut rng, 6), rand_vec(&mut rng, 6)];
        let xs: Vec<Vec<f64>> = (0..64)
            .map(|_| {
                let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                (0..6).map(|j| a * basis[0][j] + b * basis[1][j]).collect()
            })
            .collect();
        let mut m = MlpModel::new(&[6, 4, 6], OutputKind::Linear, 5).unwrap();
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 20,
            learning_rate: 0.01,
            seed: 5,
        };
        let report = train_autoencoder(&mut m, &xs, &cfg).unwrap();
        assert_eq!(report.loss_curve.len(), 21);
        for w in report.loss_curve.windows(2) {
            assert!(w[1] <= w[0], "{:?}", report.loss_curve);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<Vec<f64>> = (0..30).map(|_| rand_vec(&mut rng, 8)).collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let run = || {
            let mut m = MlpModel::new(&[8, 6, 3], OutputKind::Softmax, 6).unwrap();
            let r = train_classifier(&mut m, &xs, &labels, &TrainConfig::classifier(6)).unwrap();
            (m, r)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn numerical_failure_is_reported() {
        let mut m = MlpModel::new(&[2, 2, 2], OutputKind::Linear, 7).unwrap();
        let xs = vec![vec![f64::MAX, f64::MAX]];
        let err = train_autoencoder(&mut m, &xs, &TrainConfig::autoencoder(7)).unwrap_err();
        assert!(matches!(err, OdlError::NumericalFailure { .. }), "{err}");
    }

    #[test]
    fn mismatched_targets_are_rejected() {
        let m = MlpModel::new(&[3, 2, 3], OutputKind::Linear, 0).unwrap();
        assert!(m.gradient(&[0.0; 3], Target::Class(0)).is_err());
        let c = MlpModel::new(&[3, 2, 2], OutputKind::Softmax, 0).unwrap();
        assert!(c.gradient(&[0.0; 3], Target::Class(2)).is_err());
        assert!(MlpModel::new(&[3], OutputKind::Linear, 0).is_err());
    }

    #[test]
    fn table_memory_figures() {
        let kib = |b: usize| b as f64 / 1024.0;
        let ae = dnn_training_bytes(&[512, 128, 64, 128, 512], 4);
        let cls = dnn_training_bytes(&[512, 256, 96, 16, 4], 4);
        assert!((kib(ae) - 1748.0).abs() / 1748.0 < 0.15, "{}", kib(ae));
        assert!((kib(cls) - 1854.0).abs() / 1854.0 < 0.15, "{}", kib(cls));
        assert_eq!(autoencoder_layers(512), vec![512, 128, 64, 128, 512]);
        assert_eq!(classifier_layers(512, 4), vec![512, 256, 96, 16, 4]);
        assert_eq!(input_buffer_bytes(300, 512, 4), 600 * 1024);
        assert_eq!(input_buffer_bytes(1200, 512, 4), 2400 * 1024);
        assert_eq!(input_buffer_bytes(1, 512, 4), 2 * 1024);
    }

    #[test]
    fn frozen_baseline_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let train: Vec<Vec<f64>> = (0..40).map(|_| rand_vec(&mut rng, 12)).collect();
        let eval: Vec<Vec<f64>> = (0..20).map(|_| rand_vec(&mut rng, 12)).collect();
        let cfg = EnsembleConfig {
            inputs: 12,
            hidden: 6,
            instances: 2,
            delta: 1e-2,
            seed: 8,
        };
        let (e1, s1) = frozen_oselm_baseline(cfg.clone(), &train, &eval, Exec::Parallel).unwrap();
        let (e2, s2) = frozen_oselm_baseline(cfg, &train, &eval, Exec::Sequential).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(e1.total_trained(), 40);
        assert_eq!(e1, e2);
    }
}
