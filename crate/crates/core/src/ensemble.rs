//! Multi-instance ODL: K autoencoders behind one shared hidden projection.
//!
//! Every instance scores an input; the smallest loss is the anomaly score `l`
//! and its index is the output class `k`. In train mode only the winning
//! instance is updated, so instances specialise on different normal
//! patterns. Before that, an initial segment is clustered with sequential
//! k-means and each instance is trained on its own cluster.
//!
//! Ties (equal losses, equidistant centroids) always go to the lowest index.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, OdlError, Result};
use crate::exec::Exec;
use crate::oselm::{HiddenProjection, OselmInstance, DEFAULT_DELTA};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Predict,
    Train,
}

impl Mode {
    pub fn code(self) -> u8 {
        match self {
            Mode::Predict => 0,
            Mode::Train => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Mode::Predict),
            1 => Some(Mode::Train),
            _ => None,
        }
    }
}

/// Result of scoring one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Anomaly score `l`: minimum loss over instances.
    pub score: f64,
    /// Output class `k`: index of the instance with the minimum loss.
    pub class: usize,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub inputs: usize,
    pub hidden: usize,
    pub instances: usize,
    pub delta: f64,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            inputs: 256,
            hidden: 32,
            instances: 4,
            delta: DEFAULT_DELTA,
            seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.hidden == 0 {
            return Err(OdlError::config("model dimensions must be positive"));
        }
        if self.instances == 0 {
            return Err(OdlError::config("at least one instance is required"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(OdlError::config(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdlEnsemble<T: Real = f64> {
    config: EnsembleConfig,
    projection: HiddenProjection<T>,
    instances: Vec<OselmInstance<T>>,
    mode: Mode,
    centroids: Vec<Vec<T>>,
    centroid_counts: Vec<u64>,
    initialized: bool,
}

/// Per-cluster summary returned by [`OdlEnsemble::kmeans_init`].
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
}

impl Clustering {
    /// Clusters that received samples but fewer than `min` of them.
    pub fn undertrained(&self, min: usize) -> Vec<usize> {
        self.cluster_sizes
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0 && s < min)
            .map(|(i, _)| i)
            .collect()
    }
}

impl<T: Real> OdlEnsemble<T> {
    pub fn new(config: EnsembleConfig) -> Result<Self> {
        config.validate()?;
        let projection = HiddenProjection::random(config.seed, config.inputs, config.hidden)?;
        Self::with_projection(config, projection)
    }

    pub fn with_projection(config: EnsembleConfig, projection: HiddenProjection<T>) -> Result<Self> {
        config.validate()?;
        if projection.inputs() != config.inputs || projection.hidden() != config.hidden {
            return Err(OdlError::config("projection shape does not match configuration"));
        }
        let instances = (0..config.instances)
            .map(|_| OselmInstance::new(config.hidden, config.inputs, config.delta))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            centroids: Vec::new(),
            centroid_counts: vec![0; config.instances],
            projection,
            instances,
            mode: Mode::Predict,
            initialized: false,
            config,
        })
    }

    /// Reassemble an ensemble from stored parts (checkpoint loading).
    pub fn from_parts(
        config: EnsembleConfig,
        projection: HiddenProjection<T>,
        instances: Vec<OselmInstance<T>>,
        mode: Mode,
        centroids: Vec<Vec<T>>,
        centroid_counts: Vec<u64>,
        initialized: bool,
    ) -> Result<Self> {
        let mut ens = Self::with_projection(config, projection)?;
        if instances.len() != ens.config.instances {
            return Err(OdlError::config("instance count does not match configuration"));
        }
        for inst in &instances {
            if inst.hidden() != ens.config.hidden || inst.outputs() != ens.config.inputs {
                return Err(OdlError::config("instance shape does not match configuration"));
            }
        }
        if !centroids.is_empty() && centroids.len() != ens.config.instances {
            return Err(OdlError::config("centroid count does not match instance count"));
        }
        if centroids.iter().any(|c| c.len() != ens.config.inputs) {
            return Err(OdlError::config("centroid length does not match input size"));
        }
        check_len("centroid counts", centroid_counts.len(), ens.config.instances)?;
        ens.instances = instances;
        ens.mode = mode;
        ens.centroids = centroids;
        ens.centroid_counts = centroid_counts;
        ens.initialized = initialized;
        Ok(ens)
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn projection(&self) -> &HiddenProjection<T> {
        &self.projection
    }

    pub fn instances(&self) -> &[OselmInstance<T>] {
        &self.instances
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn centroids(&self) -> &[Vec<T>] {
        &self.centroids
    }

    pub fn centroid_counts(&self) -> &[u64] {
        &self.centroid_counts
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Marks the ensemble usable for prediction without running k-means,
    /// e.g. after training the instances by other means.
    pub fn mark_initialized(&mut self) {
        self.initialized = true;
    }

    pub fn total_trained(&self) -> u64 {
        self.instances.iter().map(|i| i.trained_count()).sum()
    }

    /// Switches between predict and train mode. Model state is untouched.
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Loss of every instance on `x`.
    pub fn losses(&self, x: &[T]) -> Result<Vec<f64>> {
        let h = self.projection.hidden_output(x)?;
        self.losses_hidden(&h, x)
    }

    fn losses_hidden(&self, h: &[T], x: &[T]) -> Result<Vec<f64>> {
        self.instances
            .iter()
            .map(|inst| inst.score_hidden(h, x).map(|l| l.value()))
            .collect()
    }

    /// Scores `x` with every instance; `l = min`, `k = argmin`.
    pub fn predict(&self, x: &[T]) -> Result<Detection> {
        if !self.initialized {
            return Err(OdlError::State(
                "ensemble has not been initialised; run the initial training first".into(),
            ));
        }
        let losses = self.losses(x)?;
        Ok(self.detection_from(&losses))
    }

    /// [`predict`](Self::predict) over many samples.
    pub fn predict_batch(&self, xs: &[Vec<T>], exec: Exec) -> Result<Vec<Detection>> {
        exec.map(xs, |x| self.predict(x)).into_iter().collect()
    }

    fn detection_from(&self, losses: &[f64]) -> Detection {
        let (class, score) = argmin(losses);
        Detection {
            score,
            class,
            mode: self.mode,
        }
    }

    /// Scores `x`, then trains the winning instance on `(x, x)`.
    ///
    /// Returns the detection computed before the update.
    pub fn train_step(&mut self, x: &[T]) -> Result<Detection> {
        if self.mode != Mode::Train {
            return Err(OdlError::Mode("train_step called in predict mode".into()));
        }
        let h = self.projection.hidden_output(x)?;
        let losses = self.losses_hidden(&h, x)?;
        let det = self.detection_from(&losses);
        self.instances[det.class].seq_update_hidden(&h, x)?;
        self.initialized = true;
        Ok(det)
    }

    /// Initial clustering and per-cluster training.
    ///
    /// Centroids are seeded with the first K pairwise-distinct samples (exact
    /// equality); if the segment holds fewer than K distinct samples the
    /// remaining centroids take the earliest unused samples. Every other
    /// sample, in arrival order, joins its nearest centroid (Euclidean, ties
    /// to the lowest index), which then moves by the running mean
    /// `c += (x - c) / count`. Afterwards instance `i` is trained on cluster
    /// `i` in arrival order. Instances are reset first, so the method can
    /// re-initialise an ensemble loaded from a checkpoint.
    pub fn kmeans_init(&mut self, samples: &[Vec<T>], exec: Exec) -> Result<Clustering> {
        let k = self.config.instances;
        if samples.len() < k {
            return Err(OdlError::invalid(format!(
                "initial clustering needs at least {k} samples, got {}",
                samples.len()
            )));
        }
        for s in samples {
            check_len("initial sample", s.len(), self.config.inputs)?;
        }

        let mut seeds: Vec<usize> = Vec::with_capacity(k);
        for (i, s) in samples.iter().enumerate() {
            if seeds.len() == k {
                break;
            }
            if seeds.iter().all(|&j| samples[j] != *s) {
                seeds.push(i);
            }
        }
        let mut next = 0;
        while seeds.len() < k {
            if !seeds.contains(&next) {
                seeds.push(next);
            }
            next += 1;
        }

        let mut centroids: Vec<Vec<T>> = seeds.iter().map(|&i| samples[i].clone()).collect();
        let mut counts = vec![1u64; k];
        let mut assignments = vec![usize::MAX; samples.len()];
        for (c, &i) in seeds.iter().enumerate() {
            assignments[i] = c;
        }
        for (i, x) in samples.iter().enumerate() {
            if assignments[i] != usize::MAX {
                continue;
            }
            let c = nearest(&centroids, x);
            counts[c] += 1;
            let inv = T::one() / T::of(counts[c] as f64);
            for (cv, xv) in centroids[c].iter_mut().zip(x) {
                *cv = *cv + (*xv - *cv) * inv;
            }
            assignments[i] = c;
        }

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &c) in assignments.iter().enumerate() {
            members[c].push(i);
        }

        let proj = &self.projection;
        let (hidden, inputs, delta) = (self.config.hidden, self.config.inputs, self.config.delta);
        let trained: Vec<Result<OselmInstance<T>>> = exec.map_range(k, |c| {
            let mut inst = OselmInstance::new(hidden, inputs, delta)?;
            for &i in &members[c] {
                inst.seq_update(proj, &samples[i], &samples[i])?;
            }
            Ok(inst)
        });
        self.instances = trained.into_iter().collect::<Result<Vec<_>>>()?;
        self.centroids = centroids;
        self.centroid_counts = counts;
        self.initialized = true;

        Ok(Clustering {
            cluster_sizes: members.iter().map(Vec::len).collect(),
            assignments,
        })
    }
}

fn argmin(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

fn nearest<T: Real>(centroids: &[Vec<T>], x: &[T]) -> usize {
    let dists: Vec<f64> = centroids
        .iter()
        .map(|c| {
            c.iter()
                .zip(x)
                .fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b))
                .as_f64()
        })
        .collect();
    argmin(&dists).0
}

/// Decides when observed anomaly scores indicate that retraining is due.
pub trait DriftDetector: Send {
    /// Feed one score; returns `true` when drift is detected.
    fn observe(&mut self, score: f64) -> bool;

    /// Called once the initial training phase has ended.
    fn finish_reference(&mut self);
}

/// Moving-average ratio trigger.
///
/// Keeps the trailing `window` scores. When the reference phase ends, the
/// current trailing mean becomes the baseline; afterwards the detector fires
/// whenever the trailing mean exceeds `threshold * baseline`. This is a
/// simple placeholder for a proper sequential drift detector.
#[derive(Debug, Clone)]
pub struct MovingAverageDrift {
    window: usize,
    threshold: f64,
    recent: VecDeque<f64>,
    sum: f64,
    baseline: Option<f64>,
}

impl MovingAverageDrift {
    pub fn new(window: usize, threshold: f64) -> Result<Self> {
        if window == 0 {
            return Err(OdlError::config("drift window must be positive"));
        }
        if threshold.is_nan() || threshold <= 0.0 {
            return Err(OdlError::config("drift threshold must be positive"));
        }
        Ok(Self {
            window,
            threshold,
            recent: VecDeque::with_capacity(window),
            sum: 0.0,
            baseline: None,
        })
    }

    pub fn with_baseline(window: usize, threshold: f64, baseline: f64) -> Result<Self> {
        let mut d = Self::new(window, threshold)?;
        d.baseline = Some(baseline);
        Ok(d)
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    fn mean(&self) -> Option<f64> {
        (!self.recent.is_empty()).then(|| self.sum / self.recent.len() as f64)
    }
}

impl DriftDetector for MovingAverageDrift {
    fn observe(&mut self, score: f64) -> bool {
        if self.recent.len() == self.window {
            if let Some(old) = self.recent.pop_front() {
                self.sum -= old;
            }
        }
        self.recent.push_back(score);
        self.sum += score;
        match (self.baseline, self.mean()) {
            (Some(base), Some(mean)) => mean > self.threshold * base,
            _ => false,
        }
    }

    fn finish_reference(&mut self) {
        self.baseline = self.mean();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Init,
    Train,
    Predict,
}

/// Output of [`replay`] for one sample. Init samples produce none.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayEvent {
    pub index: usize,
    pub detection: Detection,
    pub drift: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ReplaySummary {
    pub events: Vec<ReplayEvent>,
    /// Sample indices at which the ensemble mode changed.
    pub mode_switches: Vec<(usize, Mode)>,
    pub init_samples: usize,
    pub clustering: Option<Clustering>,
}

#[derive(Default)]
pub struct ReplayOptions {
    pub exec: Exec,
    /// Refuse init segments shorter than the hidden size.
    pub strict_init: bool,
    pub drift: Option<Box<dyn DriftDetector>>,
    /// Samples trained after a drift trigger before returning to predict mode.
    pub retrain_samples: usize,
}

/// Drive an ensemble through an annotated stream.
///
/// Consecutive `init` samples are buffered and handed to
/// [`OdlEnsemble::kmeans_init`] when the first non-init sample arrives (or
/// at the end of the stream). `train` samples run [`OdlEnsemble::train_step`]
/// and `predict` samples [`OdlEnsemble::predict`], switching the mode as the
/// annotation changes. When a drift detector is given and fires during a
/// predict segment, the next `retrain_samples` predict samples are trained
/// on instead.
pub fn replay<T: Real>(
    ens: &mut OdlEnsemble<T>,
    samples: &[(Vec<T>, Segment)],
    mut opts: ReplayOptions,
) -> Result<ReplaySummary> {
    let mut summary = ReplaySummary::default();
    let mut init_buf: Vec<Vec<T>> = Vec::new();
    let mut retrain_left = 0usize;

    let flush_init = |ens: &mut OdlEnsemble<T>,
                          buf: &mut Vec<Vec<T>>,
                          summary: &mut ReplaySummary,
                          drift: &mut Option<Box<dyn DriftDetector>>|
     -> Result<()> {
        if buf.is_empty() {
            return Ok(());
        }
        let hidden = ens.config().hidden;
        if opts.strict_init && buf.len() < hidden {
            return Err(OdlError::config(format!(
                "init segment has {} samples but at least N = {hidden} are required \
                 (disable --strict-init to proceed anyway)",
                buf.len()
            )));
        }
        let clustering = ens.kmeans_init(buf, opts.exec)?;
        let thin = clustering.undertrained(hidden);
        if !thin.is_empty() {
            log::warn!(
                "clusters {thin:?} received fewer than N = {hidden} initial samples; \
                 their instances are under-determined"
            );
        }
        if let Some(d) = drift.as_mut() {
            for x in buf.iter() {
                d.observe(ens.predict(x)?.score);
            }
            d.finish_reference();
        }
        summary.init_samples += buf.len();
        summary.clustering = Some(clustering);
        buf.clear();
        Ok(())
    };

    for (index, (x, segment)) in samples.iter().enumerate() {
        if *segment == Segment::Init {
            init_buf.push(x.clone());
            continue;
        }
        flush_init(ens, &mut init_buf, &mut summary, &mut opts.drift)?;

        let wanted = match segment {
            Segment::Train => Mode::Train,
            _ if retrain_left > 0 => Mode::Train,
            _ => Mode::Predict,
        };
        if ens.mode() != wanted {
            ens.set_mode(wanted);
            summary.mode_switches.push((index, wanted));
        }
        let detection = match wanted {
            Mode::Train => {
                if *segment == Segment::Predict {
                    retrain_left -= 1;
                }
                ens.train_step(x)?
            }
            Mode::Predict => ens.predict(x)?,
        };
        let mut drift = false;
        if let Some(d) = opts.drift.as_mut() {
            drift = d.observe(detection.score);
            if drift && *segment == Segment::Predict && retrain_left == 0 {
                retrain_left = opts.retrain_samples;
            }
        }
        summary.events.push(ReplayEvent {
            index,
            detection,
            drift,
        });
    }
    flush_init(ens, &mut init_buf, &mut summary, &mut opts.drift)?;
    Ok(summary)
}
