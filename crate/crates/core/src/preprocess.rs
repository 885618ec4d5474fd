//! Acceleration windows to magnitude spectra.
//!
//! A window of `L` samples (power of two) is transformed with a rectangular
//! window FFT, the DC bin is dropped, and bins `1..=L/2` are scaled by
//! `2/L` so that a sinusoid of amplitude `A` sitting exactly on a bin shows up
//! with magnitude `A`. The spectrum can then be downsampled by averaging
//! groups of adjacent bins and optionally divided by a fixed scale.
//!
//! With the default 1024 Hz sample rate a 1024-point window gives 512 bins at
//! 1 Hz (1..=512 Hz); downsampling by 2 gives 256 bins at 2 Hz.

use std::io::{BufRead, Write};
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{OdlError, Result};
use crate::exec::Exec;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1024.0;
pub const DEFAULT_WINDOW_LEN: usize = 1024;

/// A time-domain acceleration window.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    values: Vec<f64>,
    sample_rate_hz: f64,
}

impl SampleWindow {
    pub fn new(values: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if values.len() < 2 || !values.len().is_power_of_two() {
            return Err(OdlError::invalid(format!(
                "window length must be a power of two >= 2, got {}",
                values.len()
            )));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(OdlError::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            values,
            sample_rate_hz,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One-sided magnitude spectrum. `bins[i]` sits at `freq_start_hz + i * freq_step_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub bins: Vec<f64>,
    #[serde(rename = "f0")]
    pub freq_start_hz: f64,
    #[serde(rename = "df")]
    pub freq_step_hz: f64,
}

impl Spectrum {
    pub fn new(bins: Vec<f64>, freq_start_hz: f64, freq_step_hz: f64) -> Result<Self> {
        if bins.is_empty() {
            return Err(OdlError::invalid("spectrum must have at least one bin"));
        }
        if let Some(b) = bins.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(OdlError::invalid(format!(
                "spectrum bins must be finite and non-negative, found {b}"
            )));
        }
        if !(freq_step_hz > 0.0) {
            return Err(OdlError::invalid(format!(
                "frequency step must be positive, got {freq_step_hz}"
            )));
        }
        Ok(Self {
            bins,
            freq_start_hz,
            freq_step_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn frequency_of(&self, bin: usize) -> f64 {
        self.freq_start_hz + bin as f64 * self.freq_step_hz
    }

    /// Index of the bin nearest to `hz`, if it lies inside the spectrum.
    pub fn bin_of(&self, hz: f64) -> Option<usize> {
        let idx = ((hz - self.freq_start_hz) / self.freq_step_hz).round();
        if idx < 0.0 || idx as usize >= self.bins.len() {
            None
        } else {
            Some(idx as usize)
        }
    }
}

/// Rectangular-window FFT magnitude over bins `1..=L/2`.
pub fn fft_magnitude(window: &SampleWindow) -> Result<Spectrum> {
    let len = window.len();
    if len < 2 || !len.is_power_of_two() {
        return Err(OdlError::invalid(format!(
            "window length must be a power of two, got {len}"
        )));
    }
    let mut buf: Vec<Complex<f64>> = window
        .values
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);

    let scale = 2.0 / len as f64;
    let bins = buf[1..=len / 2].iter().map(|c| c.norm() * scale).collect();
    let step = window.sample_rate_hz / len as f64;
    Ok(Spectrum {
        bins,
        freq_start_hz: step,
        freq_step_hz: step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DownsampleMode {
    #[default]
    Mean,
    Max,
}

/// Reduce resolution by pooling `factor` consecutive bins.
///
/// The start frequency is kept (the pooled bin is labelled by its first
/// member), the step is multiplied by `factor`.
pub fn downsample(spectrum: &Spectrum, factor: usize) -> Result<Spectrum> {
    downsample_with(spectrum, factor, DownsampleMode::Mean)
}

pub fn downsample_with(spectrum: &Spectrum, factor: usize, mode: DownsampleMode) -> Result<Spectrum> {
    if factor == 0 {
        return Err(OdlError::invalid("downsample factor must be positive"));
    }
    if !spectrum.bins.len().is_multiple_of(factor) {
        return Err(OdlError::invalid(format!(
            "{} bins are not divisible by downsample factor {factor}",
            spectrum.bins.len()
        )));
    }
    let bins = spectrum
        .bins
        .chunks_exact(factor)
        .map(|c| match mode {
            DownsampleMode::Mean => c.iter().sum::<f64>() / factor as f64,
            DownsampleMode::Max => c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    Ok(Spectrum {
        bins,
        freq_start_hz: spectrum.freq_start_hz,
        freq_step_hz: spectrum.freq_step_hz * factor as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub downsample_factor: usize,
    #[serde(default)]
    pub downsample_mode: DownsampleMode,
    /// Fixed divisor applied to every bin after downsampling.
    #[serde(default)]
    pub scale_divisor: Option<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            downsample_factor: 2,
            downsample_mode: DownsampleMode::Mean,
            scale_divisor: None,
        }
    }
}

pub fn pipeline(window: &SampleWindow, config: &PreprocessConfig) -> Result<Spectrum> {
    let spectrum = fft_magnitude(window)?;
    let mut out = downsample_with(&spectrum, config.downsample_factor, config.downsample_mode)?;
    if let Some(div) = config.scale_divisor {
        if !(div > 0.0 && div.is_finite()) {
            return Err(OdlError::config(format!(
                "scale divisor must be positive, got {div}"
            )));
        }
        out.bins.iter_mut().for_each(|b| *b /= div);
    }
    Ok(out)
}

/// Runs [`pipeline`] over many windows.
pub fn pipeline_batch(
    windows: &[SampleWindow],
    config: &PreprocessConfig,
    exec: Exec,
) -> Result<Vec<Spectrum>> {
    exec.map(windows, |w| pipeline(w, config))
        .into_iter()
        .collect()
}

#[derive(Deserialize)]
struct WindowRecord {
    #[allow(dead_code)]
    #[serde(default)]
    t: Option<u64>,
    values: Vec<f64>,
}

/// Read raw windows from a file.
///
/// Two layouts are accepted. JSONL, detected by a leading `{`, holds one
/// window per line as `{"t": index, "values": [...]}`. Anything else is read
/// as CSV with one sample per line and cut into consecutive windows of
/// `window_len` samples; a trailing partial window is an error.
pub fn read_windows(path: &Path, window_len: usize, sample_rate_hz: f64) -> Result<Vec<SampleWindow>> {
    let file = std::fs::File::open(path).map_err(|e| OdlError::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut windows = Vec::new();
    let mut pending: Vec<f64> = Vec::with_capacity(window_len);
    let mut jsonl: Option<bool> = None;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| OdlError::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let is_json = *jsonl.get_or_insert_with(|| trimmed.starts_with('{'));
        if is_json {
            let rec: WindowRecord = serde_json::from_str(trimmed)
                .map_err(|e| OdlError::format(path, Some(lineno), e.to_string()))?;
            let w = SampleWindow::new(rec.values, sample_rate_hz)
                .map_err(|e| OdlError::format(path, Some(lineno), e.to_string()))?;
            windows.push(w);
        } else {
            // Header lines are only tolerated before the first value.
            let v: f64 = match trimmed.split(',').next().unwrap_or("").trim().parse() {
                Ok(v) => v,
                Err(_) if windows.is_empty() && pending.is_empty() && lineno == 1 => continue,
                Err(e) => {
                    return Err(OdlError::format(
                        path,
                        Some(lineno),
                        format!("cannot parse sample value {trimmed:?}: {e}"),
                    ))
                }
            };
            if !v.is_finite() {
                return Err(OdlError::format(path, Some(lineno), "non-finite sample value"));
            }
            pending.push(v);
            if pending.len() == window_len {
                let w = SampleWindow::new(std::mem::take(&mut pending), sample_rate_hz)
                    .map_err(|e| OdlError::format(path, Some(lineno), e.to_string()))?;
                windows.push(w);
            }
        }
    }
    if !pending.is_empty() {
        return Err(OdlError::format(
            path,
            None,
            format!(
                "{} trailing samples do not fill a window of {window_len}",
                pending.len()
            ),
        ));
    }
    Ok(windows)
}

pub fn write_spectra<W: Write>(mut out: W, spectra: &[Spectrum]) -> std::io::Result<()> {
    for s in spectra {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_spectra(path: &Path) -> Result<Vec<Spectrum>> {
    let text = std::fs::read_to_string(path).map_err(|e| OdlError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let s: Spectrum = serde_json::from_str(l)
                .map_err(|e| OdlError::format(path, Some(i + 1), e.to_string()))?;
            Spectrum::new(s.bins, s.freq_start_hz, s.freq_step_hz)
                .map_err(|e| OdlError::format(path, Some(i + 1), e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Direct O(L^2) DFT magnitude with the same one-sided convention.
    fn dft_oracle(x: &[f64]) -> Vec<f64> {
        let len = x.len();
        (1..=len / 2)
            .map(|j| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (j * t) as f64 / len as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re * re + im * im).sqrt() * 2.0 / len as f64
            })
            .collect()
    }

    fn sine(len: usize, fs: f64, hz: f64, amp: f64) -> Vec<f64> {
        (0..len)
            .map(|t| amp * (2.0 * PI * hz * t as f64 / fs).sin())
            .collect()
    }

    #[test]
    fn zero_window_gives_zero_spectrum() {
        let w = SampleWindow::new(vec![0.0; 1024], DEFAULT_SAMPLE_RATE_HZ).unwrap();
        let s = fft_magnitude(&w).unwrap();
        assert_eq!(s.len(), 512);
        assert!(s.bins.iter().all(|&b| b == 0.0));
        assert_eq!(s.freq_start_hz, 1.0);
        assert_eq!(s.freq_step_hz, 1.0);
    }

    #[test]
    fn pure_sine_lands_in_one_bin() {
        let amp = 3.5;
        let x = sine(1024, 1024.0, 100.0, amp);
        let s = fft_magnitude(&SampleWindow::new(x.clone(), 1024.0).unwrap()).unwrap();
        let oracle = dft_oracle(&x);
        let peak = s.bin_of(100.0).unwrap();
        assert_eq!(peak, 99);
        assert!((s.bins[peak] - amp).abs() <= 1e-6 * amp);
        assert!((oracle[peak] - amp).abs() <= 1e-6 * amp);
        for (i, &b) in s.bins.iter().enumerate() {
            if i != peak {
                assert!(b < 1e-9, "bin {i} = {b}");
            }
        }
    }

    #[test]
    fn two_sines_match_dft_oracle() {
        let x: Vec<f64> = sine(1024, 1024.0, 50.0, 1.0)
            .iter()
            .zip(sine(1024, 1024.0, 200.0, 0.25))
            .map(|(a, b)| a + b)
            .collect();
        let s = fft_magnitude(&SampleWindow::new(x.clone(), 1024.0).unwrap()).unwrap();
        let oracle = dft_oracle(&x);
        let nonzero: Vec<usize> = (0..s.len()).filter(|&i| s.bins[i] > 1e-9).collect();
        assert_eq!(nonzero, vec![49, 199]);
        for &i in &nonzero {
            assert!((s.bins[i] - oracle[i]).abs() <= 1e-9 * oracle[i]);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(
            SampleWindow::new(vec![0.0; 1000], 1024.0),
            Err(OdlError::InvalidInput(_))
        ));
        assert!(SampleWindow::new(vec![0.0; 1], 1024.0).is_err());
        assert!(SampleWindow::new(vec![0.0; 8], 0.0).is_err());
    }

    #[test]
    fn downsample_examples() {
        let s = Spectrum::new(vec![1.0, 3.0, 5.0, 7.0], 1.0, 1.0).unwrap();
        let d = downsample(&s, 2).unwrap();
        assert_eq!(d.bins, vec![2.0, 6.0]);
        assert_eq!(d.freq_step_hz, 2.0);
        assert_eq!(downsample(&s, 1).unwrap(), s);
        assert!(downsample(&s, 3).is_err());
        assert!(downsample(&s, 0).is_err());
        let m = downsample_with(&s, 2, DownsampleMode::Max).unwrap();
        assert_eq!(m.bins, vec![3.0, 7.0]);
    }

    #[test]
    fn paper_resolution_after_downsampling() {
        let w = SampleWindow::new(vec![0.5; 1024], DEFAULT_SAMPLE_RATE_HZ).unwrap();
        let d = downsample(&fft_magnitude(&w).unwrap(), 2).unwrap();
        assert_eq!(d.len(), 256);
        assert_eq!(d.freq_start_hz, 1.0);
        assert_eq!(d.freq_step_hz, 2.0);
        assert_eq!(d.frequency_of(255) + d.freq_step_hz - 1.0, 512.0);
    }

    #[test]
    fn pipeline_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = SampleWindow::new(x, 1024.0).unwrap();
        let plain = pipeline(&w, &PreprocessConfig::default()).unwrap();
        assert_eq!(plain.len(), 256);
        let manual = downsample(&fft_magnitude(&w).unwrap(), 2).unwrap();
        assert_eq!(plain, manual);
        let one = pipeline(
            &w,
            &PreprocessConfig {
                scale_divisor: Some(1.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(one, plain);
        let half = pipeline(
            &w,
            &PreprocessConfig {
                scale_divisor: Some(2.0),
                ..Default::default()
            },
        )
        .unwrap();
        for (h, p) in half.bins.iter().zip(&plain.bins) {
            assert_eq!(*h, p / 2.0);
        }
        assert!(pipeline(
            &w,
            &PreprocessConfig {
                scale_divisor: Some(0.0),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let windows: Vec<SampleWindow> = (0..16)
            .map(|_| {
                SampleWindow::new((0..256).map(|_| rng.random_range(-1.0..1.0)).collect(), 256.0)
                    .unwrap()
            })
            .collect();
        let cfg = PreprocessConfig::default();
        let seq = pipeline_batch(&windows, &cfg, Exec::Sequential).unwrap();
        let par = pipeline_batch(&windows, &cfg, Exec::Parallel).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn csv_and_jsonl_readers() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("raw.csv");
        let mut text = String::from("value\n");
        for i in 0..16 {
            text.push_str(&format!("{}\n", i as f64 * 0.5));
        }
        std::fs::write(&csv, &text).unwrap();
        let w = read_windows(&csv, 8, 8.0).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].values()[0], 4.0);

        std::fs::write(&csv, "1.0\n2.0\nabc\n").unwrap();
        let err = read_windows(&csv, 2, 8.0).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let jl = dir.path().join("raw.jsonl");
        std::fs::write(&jl, "{\"t\":0,\"values\":[1,2,3,4]}\n{\"t\":1,\"values\":[0,0,0,0]}\n").unwrap();
        assert_eq!(read_windows(&jl, 1024, 4.0).unwrap().len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn matches_dft_oracle(log_len in 1u32..=8, seed in any::<u64>()) {
            let len = 1usize << log_len;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = fft_magnitude(&SampleWindow::new(x.clone(), 100.0).unwrap()).unwrap();
            let oracle = dft_oracle(&x);
            let scale = oracle.iter().cloned().fold(0.0, f64::max).max(1e-300);
            for (a, b) in s.bins.iter().zip(&oracle) {
                prop_assert!((a - b).abs() <= 1e-9 * scale, "{} vs {}", a, b);
            }
        }

        #[test]
        fn parseval_for_zero_mean_windows(log_len in 1u32..=10, seed in any::<u64>()) {
            // DC is dropped from the spectrum, so compare on zero-mean input.
            let len = 1usize << log_len;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = x.iter().sum::<f64>() / len as f64;
            x.iter_mut().for_each(|v| *v -= mean);
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let s = fft_magnitude(&SampleWindow::new(x, 1.0).unwrap()).unwrap();
            let half = len / 2;
            let mut spec_energy = 0.0;
            for (i, &m) in s.bins.iter().enumerate() {
                let raw = m * len as f64 / 2.0;
                let w = if i + 1 == half { 1.0 } else { 2.0 };
                spec_energy += w * raw * raw;
            }
            spec_energy /= len as f64;
            prop_assert!((spec_energy - energy).abs() <= 1e-6 * energy.max(1e-12));
        }

        #[test]
        fn downsample_is_linear(
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
            let y: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
            let raw = |v: Vec<f64>| Spectrum { bins: v, freq_start_hz: 1.0, freq_step_hz: 1.0 };
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = downsample(&raw(combo), 4).unwrap();
            let dx = downsample(&raw(x), 4).unwrap();
            let dy = downsample(&raw(y), 4).unwrap();
            for i in 0..lhs.len() {
                let rhs = a * dx.bins[i] + b * dy.bins[i];
                prop_assert!((lhs.bins[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }
}
