//! Single OS-ELM autoencoder.
//!
//! The input-to-hidden projection (`alpha`, `bias`) is drawn once and never
//! trained. Only the hidden-to-output weights `beta` are learned, together
//! with the `hidden x hidden` matrix `p` that carries the inverse regularised
//! Gram matrix of everything seen so far. With a batch size of one the usual
//! matrix inverse in the recursion collapses to the reciprocal of a scalar:
//!
//! ```text
//! h    = sigmoid(x alpha + b)
//! s    = 1 + h P h^T
//! P   <- P - (P h^T)(h P) / s
//! beta <- beta + P h^T (t - h beta)
//! ```
//!
//! Starting from `P0 = I / delta` and `beta0 = 0` the recursion reproduces
//! ridge regression `(delta I + H^T H) beta = H^T T` exactly, which is what the
//! tests check against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, OdlError, Result};
use crate::linalg;
use crate::scalar::Real;

pub const DEFAULT_DELTA: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, v: T) -> T {
        match self {
            Activation::Sigmoid => T::one() / (T::one() + (-v).exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
}

/// Reconstruction loss; always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LossValue(f64);

impl LossValue {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(OdlError::invalid(format!("loss must be finite and >= 0, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Fixed random input-to-hidden layer, shared by all instances of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenProjection<T: Real = f64> {
    inputs: usize,
    hidden: usize,
    /// `inputs x hidden`, row-major.
    alpha: Vec<T>,
    bias: Vec<T>,
    activation: Activation,
}

impl<T: Real> HiddenProjection<T> {
    /// Draws `alpha` and `bias` i.i.d. uniform on `[-1, 1]` from a ChaCha8
    /// stream seeded with `seed`. Values are drawn in `f64` and rounded, so
    /// the `f32` and `f64` projections for one seed agree to `f32` precision.
    pub fn random(seed: u64, inputs: usize, hidden: usize) -> Result<Self> {
        if inputs == 0 || hidden == 0 {
            return Err(OdlError::invalid(format!(
                "projection dimensions must be positive, got n={inputs}, N={hidden}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = (0..inputs * hidden)
            .map(|_| T::of(rng.random_range(-1.0..=1.0)))
            .collect();
        let bias = (0..hidden)
            .map(|_| T::of(rng.random_range(-1.0..=1.0)))
            .collect();
        Ok(Self {
            inputs,
            hidden,
            alpha,
            bias,
            activation: Activation::Sigmoid,
        })
    }

    pub fn from_parts(inputs: usize, hidden: usize, alpha: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if inputs == 0 || hidden == 0 {
            return Err(OdlError::invalid("projection dimensions must be positive"));
        }
        check_len("alpha", alpha.len(), inputs * hidden)?;
        check_len("bias", bias.len(), hidden)?;
        if alpha.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(OdlError::invalid("projection entries must be finite"));
        }
        Ok(Self {
            inputs,
            hidden,
            alpha,
            bias,
            activation: Activation::Sigmoid,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `sigmoid(x alpha + b)`.
    pub fn hidden_output(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("input", x.len(), self.inputs)?;
        let mut h = self.bias.clone();
        for (xi, row) in x.iter().zip(self.alpha.chunks_exact(self.hidden)) {
            if *xi == T::zero() {
                continue;
            }
            for (hj, a) in h.iter_mut().zip(row) {
                *hj = *hj + *xi * *a;
            }
        }
        h.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        Ok(h)
    }
}

/// Trainable part of one autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct OselmInstance<T: Real = f64> {
    hidden: usize,
    outputs: usize,
    /// `hidden x outputs`, row-major.
    beta: Vec<T>,
    /// `hidden x hidden`, symmetric positive definite.
    p: Vec<T>,
    trained_count: u64,
}

impl<T: Real> OselmInstance<T> {
    /// `beta = 0`, `P = I / delta`.
    pub fn new(hidden: usize, outputs: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(OdlError::invalid(format!("delta must be positive, got {delta}")));
        }
        if hidden == 0 || outputs == 0 {
            return Err(OdlError::invalid("instance dimensions must be positive"));
        }
        let mut p = vec![T::zero(); hidden * hidden];
        let diag = T::of(1.0 / delta);
        for i in 0..hidden {
            p[i * hidden + i] = diag;
        }
        Ok(Self {
            hidden,
            outputs,
            beta: vec![T::zero(); hidden * outputs],
            p,
            trained_count: 0,
        })
    }

    pub fn from_parts(
        hidden: usize,
        outputs: usize,
        beta: Vec<T>,
        p: Vec<T>,
        trained_count: u64,
    ) -> Result<Self> {
        check_len("beta", beta.len(), hidden * outputs)?;
        check_len("P", p.len(), hidden * hidden)?;
        if beta.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(OdlError::invalid("instance entries must be finite"));
        }
        Ok(Self {
            hidden,
            outputs,
            beta,
            p,
            trained_count,
        })
    }

    /// Regularised batch solve over the first samples, used as an
    /// alternative to starting the recursion from scratch:
    /// `P = (delta I + H^T H)^-1`, `beta = P H^T T`.
    pub fn batch_init(
        proj: &HiddenProjection<T>,
        inputs: &[Vec<T>],
        targets: &[Vec<T>],
        outputs: usize,
        delta: f64,
    ) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(OdlError::invalid("inputs and targets differ in length"));
        }
        let hidden = proj.hidden();
        let mut inst = Self::new(hidden, outputs, delta)?;
        if inputs.is_empty() {
            return Ok(inst);
        }
        let mut gram = vec![T::zero(); hidden * hidden];
        let mut rhs = vec![T::zero(); hidden * outputs];
        let d = T::of(delta);
        for i in 0..hidden {
            gram[i * hidden + i] = d;
        }
        for (x, t) in inputs.iter().zip(targets) {
            check_len("target", t.len(), outputs)?;
            let h = proj.hidden_output(x)?;
            for i in 0..hidden {
                for j in 0..hidden {
                    gram[i * hidden + j] = gram[i * hidden + j] + h[i] * h[j];
                }
                for (r, tv) in rhs[i * outputs..(i + 1) * outputs].iter_mut().zip(t) {
                    *r = *r + h[i] * *tv;
                }
            }
        }
        let p = linalg::spd_inverse(&gram, hidden).ok_or_else(|| OdlError::NumericalFailure {
            step: 0,
            detail: "regularised Gram matrix is not positive definite".into(),
        })?;
        let mut beta = vec![T::zero(); hidden * outputs];
        for i in 0..hidden {
            for k in 0..hidden {
                let pik = p[i * hidden + k];
                for (b, r) in beta[i * outputs..(i + 1) * outputs]
                    .iter_mut()
                    .zip(&rhs[k * outputs..(k + 1) * outputs])
                {
                    *b = *b + pik * *r;
                }
            }
        }
        inst.beta = beta;
        inst.p = p;
        inst.trained_count = inputs.len() as u64;
        Ok(inst)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    pub fn p(&self) -> &[T] {
        &self.p
    }

    pub fn trained_count(&self) -> u64 {
        self.trained_count
    }

    /// `y = h beta`.
    pub fn predict(&self, h: &[T]) -> Result<Vec<T>> {
        check_len("hidden output", h.len(), self.hidden)?;
        let mut y = vec![T::zero(); self.outputs];
        for (hi, row) in h.iter().zip(self.beta.chunks_exact(self.outputs)) {
            for (yj, b) in y.iter_mut().zip(row) {
                *yj = *yj + *hi * *b;
            }
        }
        Ok(y)
    }

    /// Reconstruction loss of `x` given its hidden output `h`.
    pub fn score_hidden(&self, h: &[T], x: &[T]) -> Result<LossValue> {
        let y = self.predict(h)?;
        loss(&y, x)
    }

    pub fn anomaly_score(&self, proj: &HiddenProjection<T>, x: &[T]) -> Result<LossValue> {
        if proj.inputs() != self.outputs {
            return Err(OdlError::config(format!(
                "autoencoder needs n = m, got n={} m={}",
                proj.inputs(),
                self.outputs
            )));
        }
        let h = proj.hidden_output(x)?;
        self.score_hidden(&h, x)
    }

    /// One sequential step on the pair `(x, t)`.
    pub fn seq_update(&mut self, proj: &HiddenProjection<T>, x: &[T], t: &[T]) -> Result<()> {
        let h = proj.hidden_output(x)?;
        self.seq_update_hidden(&h, t)
    }

    /// One sequential step given a precomputed hidden row `h`.
    ///
    /// On error the instance is left unchanged.
    pub fn seq_update_hidden(&mut self, h: &[T], t: &[T]) -> Result<()> {
        check_len("hidden output", h.len(), self.hidden)?;
        check_len("target", t.len(), self.outputs)?;
        let dim = self.hidden;
        let step = self.trained_count;
        let fail = |detail: String| OdlError::NumericalFailure { step, detail };

        // ph = P h^T (P symmetric, so this is also (h P)^T)
        let mut ph = vec![T::zero(); dim];
        for (i, row) in self.p.chunks_exact(dim).enumerate() {
            ph[i] = row.iter().zip(h).fold(T::zero(), |acc, (p, hv)| acc + *p * *hv);
        }
        let hph = h.iter().zip(&ph).fold(T::zero(), |acc, (a, b)| acc + *a * *b);
        let s = T::one() + hph;
        if !s.is_finite() {
            return Err(fail(format!("non-finite denominator {s}")));
        }
        if s.as_f64() < 1.0 - 1e-9 {
            return Err(fail(format!(
                "denominator {s} < 1: P has lost positive definiteness"
            )));
        }
        let inv_s = T::one() / s;

        // Updated P h^T equals ph / s.
        let gain: Vec<T> = ph.iter().map(|v| *v * inv_s).collect();

        let mut err = t.to_vec();
        for (hi, row) in h.iter().zip(self.beta.chunks_exact(self.outputs)) {
            for (e, b) in err.iter_mut().zip(row) {
                *e = *e - *hi * *b;
            }
        }

        let mut p = self.p.clone();
        for i in 0..dim {
            for j in 0..dim {
                let idx = i * dim + j;
                p[idx] = p[idx] - ph[i] * gain[j];
            }
        }
        for i in 0..dim {
            for j in i + 1..dim {
                let avg = (p[i * dim + j] + p[j * dim + i]) * T::of(0.5);
                p[i * dim + j] = avg;
                p[j * dim + i] = avg;
            }
        }
        let mut beta = self.beta.clone();
        for (g, row) in gain.iter().zip(beta.chunks_exact_mut(self.outputs)) {
            for (b, e) in row.iter_mut().zip(&err) {
                *b = *b + *g * *e;
            }
        }
        if p.iter().chain(&beta).any(|v| !v.is_finite()) {
            return Err(fail("non-finite weights after update".into()));
        }
        self.p = p;
        self.beta = beta;
        self.trained_count += 1;
        Ok(())
    }
}

/// Mean squared error `(1/m) sum (y - t)^2`.
pub fn loss<T: Real>(y: &[T], t: &[T]) -> Result<LossValue> {
    check_len("loss target", t.len(), y.len())?;
    if y.is_empty() {
        return Err(OdlError::invalid("loss of empty vectors"));
    }
    let sum = y
        .iter()
        .zip(t)
        .fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b));
    let value = sum.as_f64() / y.len() as f64;
    if !value.is_finite() {
        return Err(OdlError::NumericalFailure {
            step: 0,
            detail: format!("non-finite loss {value}"),
        });
    }
    LossValue::new(value)
}
