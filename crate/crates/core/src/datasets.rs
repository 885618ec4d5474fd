//! Labelled spectrum streams: the synthetic fan scene, the cooling-fan
//! recordings, and the evaluation tasks assembled from either.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ensemble::Segment;
use crate::error::{OdlError, Result};
use crate::preprocess::{self, PreprocessConfig, SampleWindow};

/// Ground truth of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Anomalous,
    Class(u32),
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Label::Normal => s.serialize_str("normal"),
            Label::Anomalous => s.serialize_str("anomalous"),
            Label::Class(c) => s.serialize_u32(*c),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Class(u32),
        }
        match Repr::deserialize(d)? {
            Repr::Class(c) => Ok(Label::Class(c)),
            Repr::Name(n) => match n.as_str() {
                "normal" => Ok(Label::Normal),
                "anomalous" => Ok(Label::Anomalous),
                other => Err(serde::de::Error::custom(format!(
                    "label must be \"normal\", \"anomalous\" or a class id, got {other:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSample {
    pub spectrum: Vec<f64>,
    pub label: Label,
    pub segment: Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Silent,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Normal,
    Damage1,
    Damage2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub task_name: String,
    pub environment: Environment,
    pub samples: Vec<StreamSample>,
}

impl LabeledStream {
    pub fn new(task_name: impl Into<String>, environment: Environment, samples: Vec<StreamSample>) -> Result<Self> {
        let s = Self {
            task_name: task_name.into(),
            environment,
            samples,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| OdlError::invalid(format!("stream {:?} is empty", self.task_name)))?;
        let len = first.spectrum.len();
        if let Some((i, s)) = self.samples.iter().enumerate().find(|(_, s)| s.spectrum.len() != len) {
            return Err(OdlError::invalid(format!(
                "sample {i} has {} bins, expected {len}",
                s.spectrum.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.spectrum.len())
    }

    pub fn spectra(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.spectrum.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn with_segment(mut self, segment: Segment) -> Self {
        self.samples.iter_mut().for_each(|s| s.segment = segment);
        self
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn read_jsonl(path: &Path, task_name: &str, environment: Environment) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| OdlError::io(path, e))?;
        let mut samples = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| OdlError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let s: StreamSample =
                serde_json::from_str(&line).map_err(|e| OdlError::format(path, Some(i + 1), e.to_string()))?;
            if let Some(v) = s.spectrum.iter().find(|v| !v.is_finite()) {
                return Err(OdlError::format(path, Some(i + 1), format!("non-finite value {v}")));
            }
            samples.push(s);
        }
        Self::new(task_name, environment, samples).map_err(|e| OdlError::format(path, None, e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Synthetic generator

/// Harmonic series of Gaussian-shaped peaks: `amplitude * decay^h` at
/// `(h + 1) * fundamental_hz`, `h = 0..harmonics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneMode {
    pub fundamental_hz: f64,
    pub harmonics: usize,
    pub harmonic_decay: f64,
    pub amplitude: f64,
    pub width_hz: f64,
}

/// Extra peaks from a nearby machine. Each sample scales each peak by an
/// independent gain drawn uniformly from `1 +- gain_spread`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub peaks_hz: Vec<f64>,
    pub amplitude: f64,
    pub width_hz: f64,
    pub gain_spread: f64,
}

/// Sidebands at `+-sideband_hz` around every harmonic of the first mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Damage {
    pub sideband_hz: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub modes: Vec<ToneMode>,
    /// Scale of the `|N(0, 1)|` per-bin floor.
    pub noise_floor: f64,
    pub noise_source: Option<NoiseSource>,
    pub damage: Option<Damage>,
    /// Relative standard deviation of each mode's per-sample gain.
    pub amplitude_jitter: f64,
    pub spectrum_len: usize,
    pub freq_start_hz: f64,
    pub freq_step_hz: f64,
    pub label: Label,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 256 bins at 1, 3, 5, ... 511 Hz (a 1024-point window at 1024 Hz
    /// downsampled by two), no content.
    fn default() -> Self {
        Self {
            modes: Vec::new(),
            noise_floor: 0.0,
            noise_source: None,
            damage: None,
            amplitude_jitter: 0.0,
            spectrum_len: 256,
            freq_start_hz: 1.0,
            freq_step_hz: 2.0,
            label: Label::Normal,
            seed: 0,
        }
    }
}

fn non_negative(what: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(OdlError::invalid(format!("{what} must be finite and >= 0, got {v}")))
    }
}

impl SynthConfig {
    pub fn freq_end_hz(&self) -> f64 {
        self.freq_start_hz + (self.spectrum_len.saturating_sub(1)) as f64 * self.freq_step_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.spectrum_len == 0 {
            return Err(OdlError::invalid("spectrum_len must be positive"));
        }
        if !(self.freq_step_hz > 0.0) {
            return Err(OdlError::invalid("freq_step_hz must be positive"));
        }
        let (lo, hi) = (self.freq_start_hz, self.freq_end_hz());
        let in_range = |what: &str, f: f64| -> Result<()> {
            if f >= lo && f <= hi {
                Ok(())
            } else {
                Err(OdlError::invalid(format!("{what} {f} Hz lies outside {lo}..={hi} Hz")))
            }
        };
        for m in &self.modes {
            in_range("fundamental", m.fundamental_hz)?;
            non_negative("mode amplitude", m.amplitude)?;
            non_negative("harmonic decay", m.harmonic_decay)?;
            if !(m.width_hz > 0.0) {
                return Err(OdlError::invalid("peak width must be positive"));
            }
        }
        non_negative("noise floor", self.noise_floor)?;
        non_negative("amplitude jitter", self.amplitude_jitter)?;
        if let Some(n) = &self.noise_source {
            for &p in &n.peaks_hz {
                in_range("noise peak", p)?;
            }
            non_negative("noise amplitude", n.amplitude)?;
            if !(n.width_hz > 0.0) {
                return Err(OdlError::invalid("noise peak width must be positive"));
            }
            if !(0.0..=1.0).contains(&n.gain_spread) {
                return Err(OdlError::invalid("gain_spread must lie in [0, 1]"));
            }
        }
        if let Some(d) = &self.damage {
            non_negative("damage amplitude", d.amplitude)?;
            non_negative("sideband offset", d.sideband_hz)?;
            if self.modes.is_empty() {
                return Err(OdlError::invalid("damage sidebands need at least one mode"));
            }
        }
        Ok(())
    }

    fn add_peak(&self, out: &mut [f64], center: f64, amp: f64, width: f64) {
        if amp == 0.0 {
            return;
        }
        let inv = 1.0 / (2.0 * width * width);
        for (i, v) in out.iter_mut().enumerate() {
            let d = self.freq_start_hz + i as f64 * self.freq_step_hz - center;
            *v += amp * (-d * d * inv).exp();
        }
    }
}

/// `count` spectra drawn from `config`, labelled `config.label`, segment
/// `predict`. Deterministic in `config.seed`.
pub fn synth_stream(config: &SynthConfig, count: usize) -> Result<LabeledStream> {
    config.validate()?;
    if count == 0 {
        return Err(OdlError::invalid("count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut x = vec![0.0; config.spectrum_len];
        for (mi, m) in config.modes.iter().enumerate() {
            let jitter: f64 = rng.sample(StandardNormal);
            let gain = (1.0 + config.amplitude_jitter * jitter).max(0.0);
            let mut amp = m.amplitude * gain;
            for h in 0..m.harmonics {
                let f = (h + 1) as f64 * m.fundamental_hz;
                config.add_peak(&mut x, f, amp, m.width_hz);
                if mi == 0 {
                    if let Some(d) = &config.damage {
                        let side = d.amplitude * gain;
                        config.add_peak(&mut x, f - d.sideband_hz, side, m.width_hz);
                        config.add_peak(&mut x, f + d.sideband_hz, side, m.width_hz);
                    }
                }
                amp *= m.harmonic_decay;
            }
        }
        if let Some(n) = &config.noise_source {
            for &p in &n.peaks_hz {
                let g = 1.0 + n.gain_spread * rng.random_range(-1.0..=1.0);
                config.add_peak(&mut x, p, n.amplitude * g, n.width_hz);
            }
        }
        if config.noise_floor > 0.0 {
            for v in x.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += config.noise_floor * z.abs();
            }
        }
        samples.push(StreamSample {
            spectrum: x,
            label: config.label,
            segment: Segment::Predict,
        });
    }
    LabeledStream::new("synthetic", Environment::Silent, samples)
}

// ---------------------------------------------------------------------------
// Sources

/// Key of one homogeneous recording condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamKey {
    pub rpm: u32,
    pub condition: Condition,
    pub environment: Environment,
}

impl fmt::Display for StreamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}rpm/{:?}/{:?}", self.rpm, self.condition, self.environment)
    }
}

/// Anything that can hand out spectra for a recording condition.
pub trait SampleSource: Sync {
    fn dim(&self) -> usize;

    /// `count` consecutive spectra of `key`. `draw` selects which block of
    /// the underlying data is used and must make the result deterministic.
    fn draw(&self, key: StreamKey, count: usize, draw: u64) -> Result<Vec<Vec<f64>>>;
}

/// Desk-scale stand-in for the cooling-fan bench: a seven-blade fan at
/// 2500/2000/1500 rpm (or stopped), optionally next to a ventilation fan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanScene {
    pub blades: u32,
    pub shaft_amplitude: f64,
    pub blade_amplitude: f64,
    pub harmonics: usize,
    pub harmonic_decay: f64,
    pub peak_width_hz: f64,
    pub amplitude_jitter: f64,
    pub noise_floor: f64,
    pub noise_source: NoiseSource,
    pub damage1: Damage,
    pub damage2: Damage,
    pub spectrum_len: usize,
    pub freq_start_hz: f64,
    pub freq_step_hz: f64,
}

impl Default for FanScene {
    /// The ventilation fan turns slightly faster than the 2500 rpm setting,
    /// so its peaks sit next to the shaft harmonics of that speed.
    fn default() -> Self {
        Self {
            blades: 7,
            shaft_amplitude: 0.3,
            blade_amplitude: 0.2,
            harmonics: 4,
            harmonic_decay: 0.6,
            peak_width_hz: 2.0,
            amplitude_jitter: 0.05,
            noise_floor: 0.003,
            noise_source: NoiseSource {
                peaks_hz: vec![42.5, 85.0, 127.5, 170.0],
                amplitude: 0.3,
                width_hz: 3.0,
                gain_spread: 0.1,
            },
            damage1: Damage {
                sideband_hz: 6.0,
                amplitude: 0.04,
            },
            damage2: Damage {
                sideband_hz: 10.0,
                amplitude: 0.05,
            },
            spectrum_len: 256,
            freq_start_hz: 1.0,
            freq_step_hz: 2.0,
        }
    }
}

impl FanScene {
    pub fn config(&self, key: StreamKey, seed: u64) -> SynthConfig {
        let mut modes = Vec::new();
        if key.rpm > 0 {
            let shaft = key.rpm as f64 / 60.0;
            modes.push(ToneMode {
                fundamental_hz: shaft,
                harmonics: self.harmonics,
                harmonic_decay: self.harmonic_decay,
                amplitude: self.shaft_amplitude,
                width_hz: self.peak_width_hz,
            });
            modes.push(ToneMode {
                fundamental_hz: shaft * self.blades as f64,
                harmonics: 1,
                harmonic_decay: 1.0,
                amplitude: self.blade_amplitude,
                width_hz: self.peak_width_hz,
            });
        }
        let damage = match (key.condition, key.rpm) {
            (_, 0) | (Condition::Normal, _) => None,
            (Condition::Damage1, _) => Some(self.damage1.clone()),
            (Condition::Damage2, _) => Some(self.damage2.clone()),
        };
        SynthConfig {
            modes,
            noise_floor: self.noise_floor,
            noise_source: (key.environment == Environment::Noisy).then(|| self.noise_source.clone()),
            damage,
            amplitude_jitter: self.amplitude_jitter,
            spectrum_len: self.spectrum_len,
            freq_start_hz: self.freq_start_hz,
            freq_step_hz: self.freq_step_hz,
            label: Label::Normal,
            seed,
        }
    }
}

fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

impl SampleSource for FanScene {
    fn dim(&self) -> usize {
        self.spectrum_len
    }

    fn draw(&self, key: StreamKey, count: usize, draw: u64) -> Result<Vec<Vec<f64>>> {
        let seed = mix_seed(&[draw, key.rpm as u64, key.condition as u64, key.environment as u64]);
        Ok(synth_stream(&self.config(key, seed), count)?.spectra())
    }
}

// ---------------------------------------------------------------------------
// Cooling-fan recordings

/// Spectra loaded from the cooling-fan recordings, grouped by condition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FanDataset {
    pub streams: BTreeMap<StreamKey, Vec<Vec<f64>>>,
    pub files: usize,
}

impl FanDataset {
    pub fn total(&self) -> usize {
        self.streams.values().map(Vec::len).sum()
    }

    pub fn counts(&self) -> Vec<(StreamKey, usize)> {
        self.streams.iter().map(|(k, v)| (*k, v.len())).collect()
    }
}

/// Spectrum length the recordings are reduced to.
pub const FAN_SPECTRUM_LEN: usize = 512;

fn path_tokens(path: &Path) -> Vec<String> {
    path.components()
        .flat_map(|c| {
            c.as_os_str()
                .to_string_lossy()
                .to_lowercase()
                .split(|ch: char| !ch.is_ascii_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Infer the recording condition from directory and file names.
///
/// Speed: a token `NNNNrpm` or `rpmNNNN`, or a bare `0`, `1500`, `2000`,
/// `2500` token. Condition: `damage1`/`hole(s)`, `damage2`/`chip(ped)`,
/// default normal. Environment: `noisy`/`noise`/`vent`, default silent.
pub fn classify_path(path: &Path) -> Option<StreamKey> {
    let tokens = path_tokens(path);
    let mut rpm = None;
    for t in &tokens {
        let digits = t.strip_suffix("rpm").or_else(|| t.strip_prefix("rpm"));
        if let Some(v) = digits.and_then(|d| d.parse::<u32>().ok()) {
            rpm = Some(v);
        }
    }
    if rpm.is_none() {
        rpm = tokens
            .iter()
            .filter_map(|t| t.parse::<u32>().ok())
            .find(|v| [0, 1500, 2000, 2500].contains(v));
    }
    let has = |names: &[&str]| tokens.iter().any(|t| names.contains(&t.as_str()));
    let condition = if has(&["damage1", "hole", "holes"]) {
        Condition::Damage1
    } else if has(&["damage2", "chip", "chipped"]) {
        Condition::Damage2
    } else {
        Condition::Normal
    };
    let environment = if has(&["noisy", "noise", "vent", "ventilation"]) {
        Environment::Noisy
    } else {
        Environment::Silent
    };
    rpm.map(|rpm| StreamKey {
        rpm,
        condition,
        environment,
    })
}

fn parse_records(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| OdlError::io(path, std::io::Error::other(e.to_string())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| OdlError::format(path, Some(i + 1), e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> =
            rec.iter().filter(|f| !f.is_empty()).map(f64::from_str).collect();
        match parsed {
            Ok(r) if r.is_empty() => {}
            Ok(r) => rows.push(r),
            // one header line is tolerated
            Err(_) if i == 0 => {}
            Err(e) => return Err(OdlError::format(path, Some(i + 1), format!("not a number: {e}"))),
        }
    }
    if rows.is_empty() {
        return Err(OdlError::format(path, None, "no numeric records"));
    }

    // Row-wise layout: one record per row. Column layout: one record per
    // file, one value per row (an optional leading index/frequency column
    // is dropped).
    let to_spectrum = |values: Vec<f64>, line: Option<usize>| -> Result<Vec<f64>> {
        match values.len() {
            FAN_SPECTRUM_LEN => Ok(values),
            n if n == 2 * FAN_SPECTRUM_LEN => {
                let w = SampleWindow::new(values, n as f64)?;
                let cfg = PreprocessConfig {
                    downsample_factor: 1,
                    ..PreprocessConfig::default()
                };
                Ok(preprocess::pipeline(&w, &cfg)?.bins)
            }
            n => Err(OdlError::format(
                path,
                line,
                format!(
                    "record has {n} values; expected a {FAN_SPECTRUM_LEN}-bin spectrum or a {}-sample waveform",
                    2 * FAN_SPECTRUM_LEN
                ),
            )),
        }
    };

    let widths: Vec<usize> = rows.iter().map(Vec::len).collect();
    if widths.iter().all(|&w| w <= 2) && rows.len() > 2 {
        let col: Vec<f64> = rows.iter().map(|r| *r.last().expect("non-empty row")).collect();
        return Ok(vec![to_spectrum(col, None)?]);
    }
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| to_spectrum(r, Some(i + 1)))
        .collect()
}

/// Load every CSV file below `root`.
///
/// Assumed layout: the recording condition is encoded in the directory or
/// file names (see [`classify_path`]); each file holds either one record
/// per row or a single record as one column. A record is a 512-bin
/// spectrum or a 1024-sample waveform, which is transformed on load.
pub fn load_cooling_fan(root: &Path) -> Result<FanDataset> {
    if !root.is_dir() {
        return Err(OdlError::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| OdlError::io(root, std::io::Error::other(e.to_string())))?;
        let p = entry.path();
        if entry.file_type().is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            files.push(p.to_path_buf());
        }
    }
    if files.is_empty() {
        return Err(OdlError::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no CSV files found in dataset directory"),
        ));
    }
    let mut ds = FanDataset::default();
    for f in files {
        let rel = f.strip_prefix(root).unwrap_or(&f);
        let Some(key) = classify_path(rel) else {
            log::warn!("skipping {}: cannot infer the fan speed from its path", f.display());
            continue;
        };
        let records = parse_records(&f)?;
        ds.streams.entry(key).or_default().extend(records);
        ds.files += 1;
    }
    if ds.streams.is_empty() {
        return Err(OdlError::io(
            root,
            std::io::Error::new(std::io::ErrorKind::InvalidData, "no file matched the assumed layout"),
        ));
    }
    Ok(ds)
}

impl SampleSource for FanDataset {
    fn dim(&self) -> usize {
        FAN_SPECTRUM_LEN
    }

    /// Contiguous block starting at a position chosen by `draw`.
    fn draw(&self, key: StreamKey, count: usize, draw: u64) -> Result<Vec<Vec<f64>>> {
        let data = self
            .streams
            .get(&key)
            .ok_or_else(|| OdlError::invalid(format!("dataset has no recordings for {key}")))?;
        if data.len() < count {
            return Err(OdlError::invalid(format!(
                "{key} has {} spectra, task needs {count}",
                data.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[draw, key.rpm as u64, key.condition as u64]));
        let start = rng.random_range(0..=data.len() - count);
        Ok(data[start..start + count].to_vec())
    }
}

// ---------------------------------------------------------------------------
// Tasks

pub const FAN_SPEEDS: [u32; 4] = [2500, 2000, 1500, 0];
pub const RUNNING_SPEEDS: [u32; 3] = [2500, 2000, 1500];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskName {
    #[serde(rename = "2500rpm")]
    Rpm2500,
    #[serde(rename = "2000rpm")]
    Rpm2000,
    #[serde(rename = "1500rpm")]
    Rpm1500,
    #[serde(rename = "0rpm")]
    Rpm0,
    #[serde(rename = "damage1")]
    Damage1,
    #[serde(rename = "damage2")]
    Damage2,
    #[serde(rename = "4speeds")]
    FourSpeeds,
}

impl TaskName {
    pub const ALL: [TaskName; 7] = [
        TaskName::Rpm2500,
        TaskName::Rpm2000,
        TaskName::Rpm1500,
        TaskName::Rpm0,
        TaskName::Damage1,
        TaskName::Damage2,
        TaskName::FourSpeeds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskName::Rpm2500 => "2500rpm",
            TaskName::Rpm2000 => "2000rpm",
            TaskName::Rpm1500 => "1500rpm",
            TaskName::Rpm0 => "0rpm",
            TaskName::Damage1 => "damage1",
            TaskName::Damage2 => "damage2",
            TaskName::FourSpeeds => "4speeds",
        }
    }

    /// (training, evaluation) sample counts.
    pub fn sizes(self) -> (usize, usize) {
        match self {
            TaskName::Rpm2500 | TaskName::Rpm2000 | TaskName::Rpm1500 | TaskName::Rpm0 => (300, 235),
            TaskName::Damage1 | TaskName::Damage2 | TaskName::FourSpeeds => (1200, 470),
        }
    }

    pub fn is_classification(self) -> bool {
        self == TaskName::FourSpeeds
    }

    fn normal_rpm(self) -> Option<u32> {
        match self {
            TaskName::Rpm2500 => Some(2500),
            TaskName::Rpm2000 => Some(2000),
            TaskName::Rpm1500 => Some(1500),
            TaskName::Rpm0 => Some(0),
            _ => None,
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = OdlError;

    fn from_str(s: &str) -> Result<Self> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                OdlError::invalid(format!(
                    "unknown task {s:?}; expected one of {}",
                    TaskName::ALL.map(|t| t.as_str()).join(", ")
                ))
            })
    }
}

/// One evaluation scenario.
///
/// `train` is recorded in the deployed (noisy) environment and feeds the
/// on-device learner; `reference_train` holds the same conditions recorded
/// in the silent environment and feeds the prediction-only models. `eval`
/// is always noisy. Training streams carry segment `init`, evaluation
/// streams segment `predict`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub task: TaskName,
    pub train: LabeledStream,
    pub reference_train: LabeledStream,
    pub eval: LabeledStream,
}

impl TaskData {
    pub fn eval_anomalous(&self) -> Vec<bool> {
        self.eval.samples.iter().map(|s| s.label.is_anomalous()).collect()
    }

    /// Class ids of the evaluation stream (classification tasks only).
    pub fn eval_classes(&self) -> Option<Vec<u32>> {
        class_ids(&self.eval)
    }
}

pub fn class_ids(stream: &LabeledStream) -> Option<Vec<u32>> {
    stream
        .samples
        .iter()
        .map(|s| match s.label {
            Label::Class(c) => Some(c),
            _ => None,
        })
        .collect()
}

fn split_even(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

/// Round-robin merge: one sample of each group in turn.
fn interleave(groups: Vec<Vec<StreamSample>>) -> Vec<StreamSample> {
    let mut iters: Vec<_> = groups.into_iter().map(|g| g.into_iter()).collect();
    let mut out = Vec::new();
    loop {
        let before = out.len();
        for it in iters.iter_mut() {
            out.extend(it.next());
        }
        if out.len() == before {
            return out;
        }
    }
}

struct Draw<'a, S: SampleSource + ?Sized> {
    source: &'a S,
    seed: u64,
}

impl<S: SampleSource + ?Sized> Draw<'_, S> {
    #[allow(clippy::too_many_arguments)]
    fn take(
        &self,
        rpm: u32,
        condition: Condition,
        environment: Environment,
        count: usize,
        role: u64,
        label: Label,
        segment: Segment,
    ) -> Result<Vec<StreamSample>> {
        let key = StreamKey {
            rpm,
            condition,
            environment,
        };
        Ok(self
            .source
            .draw(key, count, mix_seed(&[self.seed, role]))?
            .into_iter()
            .map(|spectrum| StreamSample {
                spectrum,
                label,
                segment,
            })
            .collect())
    }
}

const ROLE_TRAIN: u64 = 1;
const ROLE_EVAL: u64 = 2;

/// Assemble one scenario of `task` from `source`.
///
/// * rpm tasks: 300 training samples of the normal speed; 235 evaluation
///   samples, a normal block first and then the three other speeds.
/// * damage tasks: 1200 normal training samples over the three running
///   speeds; 235 normal then 235 damaged evaluation samples.
/// * 4speeds: 1200 training and 470 evaluation samples over the four
///   speeds, labelled with the speed in rpm.
///
/// Multi-speed training streams are interleaved round-robin so the first
/// samples cover every speed.
pub fn build_task<S: SampleSource + ?Sized>(task: TaskName, source: &S, scenario_seed: u64) -> Result<TaskData> {
    let d = Draw {
        source,
        seed: scenario_seed,
    };
    let (n_train, n_eval) = task.sizes();
    let mk = |env: Environment, samples: Vec<StreamSample>| LabeledStream::new(task.as_str(), env, samples);

    let build_train = |env: Environment| -> Result<LabeledStream> {
        let samples = match task {
            t if t.normal_rpm().is_some() => d.take(
                t.normal_rpm().unwrap_or_default(),
                Condition::Normal,
                env,
                n_train,
                ROLE_TRAIN,
                Label::Normal,
                Segment::Init,
            )?,
            TaskName::Damage1 | TaskName::Damage2 => {
                let mut groups = Vec::new();
                for (rpm, n) in RUNNING_SPEEDS.iter().zip(split_even(n_train, RUNNING_SPEEDS.len())) {
                    groups.push(d.take(*rpm, Condition::Normal, env, n, ROLE_TRAIN, Label::Normal, Segment::Init)?);
                }
                interleave(groups)
            }
            _ => {
                let mut groups = Vec::new();
                for (rpm, n) in FAN_SPEEDS.iter().zip(split_even(n_train, FAN_SPEEDS.len())) {
                    groups.push(d.take(*rpm, Condition::Normal, env, n, ROLE_TRAIN, Label::Class(*rpm), Segment::Init)?);
                }
                interleave(groups)
            }
        };
        mk(env, samples)
    };

    let env = Environment::Noisy;
    let eval = match task {
        t if t.normal_rpm().is_some() => {
            let normal = t.normal_rpm().unwrap_or_default();
            let blocks = split_even(n_eval, FAN_SPEEDS.len());
            let mut samples = d.take(normal, Condition::Normal, env, blocks[0], ROLE_EVAL, Label::Normal, Segment::Predict)?;
            for (rpm, n) in FAN_SPEEDS.iter().filter(|&&r| r != normal).zip(&blocks[1..]) {
                samples.extend(d.take(*rpm, Condition::Normal, env, *n, ROLE_EVAL, Label::Anomalous, Segment::Predict)?);
            }
            samples
        }
        TaskName::Damage1 | TaskName::Damage2 => {
            let cond = if task == TaskName::Damage1 {
                Condition::Damage1
            } else {
                Condition::Damage2
            };
            let half = split_even(n_eval, 2);
            let mut normal = Vec::new();
            let mut damaged = Vec::new();
            for (rpm, n) in RUNNING_SPEEDS.iter().zip(split_even(half[0], 3)) {
                normal.push(d.take(*rpm, Condition::Normal, env, n, ROLE_EVAL, Label::Normal, Segment::Predict)?);
            }
            for (rpm, n) in RUNNING_SPEEDS.iter().zip(split_even(half[1], 3)) {
                damaged.push(d.take(*rpm, cond, env, n, ROLE_EVAL, Label::Anomalous, Segment::Predict)?);
            }
            let mut s = interleave(normal);
            s.extend(interleave(damaged));
            s
        }
        _ => {
            let mut s = Vec::new();
            for (rpm, n) in FAN_SPEEDS.iter().zip(split_even(n_eval, FAN_SPEEDS.len())) {
                s.extend(d.take(*rpm, Condition::Normal, env, n, ROLE_EVAL, Label::Class(*rpm), Segment::Predict)?);
            }
            s
        }
    };

    Ok(TaskData {
        task,
        train: build_train(Environment::Noisy)?,
        reference_train: build_train(Environment::Silent)?,
        eval: mk(env, eval)?,
    })
}
