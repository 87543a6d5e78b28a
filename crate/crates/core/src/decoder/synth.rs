//! Phenomenological SSVEP generator.
//!
//! Each trial mixes a spatially weighted steady-state response (fundamental
//! plus second harmonic, random phase), a 35-45 Hz component whose
//! hemispheric asymmetry follows the rotation direction, 1/f background
//! activity per channel and a common-mode disturbance.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::epoch::{is_left_channel, is_right_channel, EegEpoch, CHANNEL_NAMES, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

pub const N_CLASSES: usize = 6;
pub const FREQUENCIES: [f64; N_CLASSES] = [7.0, 7.5, 8.0, 8.5, 9.0, 9.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub frequency: f64,
    pub rotation: Rotation,
}

impl StimulusSpec {
    /// Validates that `frequency` is one of the six stimulus frequencies and
    /// carries its fixed rotation (7, 8, 9 Hz rotate left).
    pub fn new(frequency: f64, rotation: Rotation) -> Result<Self> {
        let class = FREQUENCIES
            .iter()
            .position(|&f| (f - frequency).abs() < 1e-9)
            .ok_or_else(|| Error::InvalidInput(format!("{frequency} Hz is not a stimulus frequency")))?;
        let spec = Self::for_class(class)?;
        if spec.rotation != rotation {
            return Err(Error::InvalidInput(format!("{frequency} Hz rotates {:?}", spec.rotation)));
        }
        Ok(spec)
    }

    pub fn for_class(class: usize) -> Result<Self> {
        let frequency = *FREQUENCIES.get(class).ok_or(Error::MissingClass(class))?;
        let rotation = if class % 2 == 0 { Rotation::Left } else { Rotation::Right };
        Ok(Self { frequency, rotation })
    }

    pub fn all() -> [Self; N_CLASSES] {
        std::array::from_fn(|k| Self::for_class(k).unwrap())
    }

    pub fn class(&self) -> usize {
        FREQUENCIES
            .iter()
            .position(|&f| (f - self.frequency).abs() < 1e-9)
            .expect("validated frequency")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sample_rate: f64,
    /// Fundamental amplitude at quality 1 on a unit-gain channel.
    pub signal_amplitude: f64,
    pub harmonic_ratio: f64,
    /// RMS of the 35-45 Hz component on the dominant hemisphere at quality 1.
    pub gamma_amplitude: f64,
    /// Gamma gain on the non-dominant hemisphere relative to the dominant one.
    pub gamma_lateral_ratio: f64,
    /// RMS of the per-channel 1/f background.
    pub noise_amplitude: f64,
    /// RMS of the disturbance shared by all channels.
    pub common_mode: f64,
    /// Relative trial-to-trial spread of the response amplitude.
    pub amplitude_jitter: f64,
    /// `(quality, accuracy)` pairs measured with the reference decoder,
    /// strictly increasing in both coordinates.
    pub calibration: Vec<(f64, f64)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            signal_amplitude: 1.0,
            harmonic_ratio: 0.6,
            gamma_amplitude: 0.3,
            gamma_lateral_ratio: 0.4,
            noise_amplitude: 1.0,
            common_mode: 1.0,
            amplitude_jitter: 0.15,
            calibration: DEFAULT_CALIBRATION.to_vec(),
        }
    }
}

/// Held-out six-class accuracy of the reference decoder on 3 s windows at
/// each quality level.
pub const DEFAULT_CALIBRATION: [(f64, f64); 9] = [
    (0.0, 1.0 / 6.0),
    (0.1, 0.200),
    (0.2, 0.244),
    (0.3, 0.372),
    (0.4, 0.550),
    (0.5, 0.711),
    (0.6, 0.794),
    (0.8, 0.900),
    (1.0, 0.950),
];

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.calibration.len() < 2
            || self
                .calibration
                .windows(2)
                .any(|w| w[1].0 <= w[0].0 || w[1].1 <= w[0].1)
        {
            return Err(Error::InvalidInput("calibration must be strictly increasing".into()));
        }
        if self.sample_rate.is_nan() || self.sample_rate <= 0.0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        Ok(())
    }

    /// Quality at which the reference decoder reaches `accuracy`, by
    /// inverse interpolation of the calibration table.
    pub fn quality_for_accuracy(&self, accuracy: f64) -> f64 {
        let table = &self.calibration;
        let (first, last) = (table[0], table[table.len() - 1]);
        if accuracy <= first.1 {
            return first.0;
        }
        if accuracy >= last.1 {
            return last.0;
        }
        let i = table.partition_point(|&(_, a)| a <= accuracy);
        let ((q0, a0), (q1, a1)) = (table[i - 1], table[i]);
        q0 + (accuracy - a0) / (a1 - a0) * (q1 - q0)
    }

    /// Quality of a stimulus whose luminance alone would yield
    /// `luminance_accuracy` and whose spacing alone would yield
    /// `distance_accuracy`, each measured with the other factor at its best
    /// (`reference_accuracy`). The two effects scale the amplitude
    /// multiplicatively.
    pub fn condition_quality(&self, luminance_accuracy: f64, distance_accuracy: f64, reference_accuracy: f64) -> f64 {
        let reference = self.quality_for_accuracy(reference_accuracy);
        if reference <= 0.0 {
            return 0.0;
        }
        let q = self.quality_for_accuracy(luminance_accuracy) * self.quality_for_accuracy(distance_accuracy) / reference;
        q.clamp(0.0, 1.0)
    }
}

/// Response gain of a channel; occipital midline sites respond strongest.
pub fn channel_gain(name: &str) -> f64 {
    match name {
        "Oz" | "O1" | "O2" => 1.0,
        "POz" => 0.9,
        "PO3" | "PO4" | "PO1" | "PO2" => 0.75,
        "PO5" | "PO6" => 0.6,
        _ => 0.45,
    }
}

fn gamma_gain(name: &str, rotation: Rotation, lateral: f64) -> f64 {
    let (left, right) = match rotation {
        Rotation::Left => (1.0, lateral),
        Rotation::Right => (lateral, 1.0),
    };
    if is_left_channel(name) {
        left
    } else if is_right_channel(name) {
        right
    } else {
        0.5 * (left + right)
    }
}

/// Synthesizes one labelled 12-channel trial.
pub fn synth_trial<R: Rng + ?Sized>(
    spec: StimulusSpec,
    quality: f64,
    duration_s: f64,
    config: &SynthConfig,
    rng: &mut R,
) -> Result<EegEpoch> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::InvalidInput(format!("duration must be positive, got {duration_s}")));
    }
    if !(0.0..=1.0).contains(&quality) {
        return Err(Error::InvalidInput(format!("quality must lie in [0, 1], got {quality}")));
    }
    let rate = config.sample_rate;
    let n = (duration_s * rate).round() as usize;
    if n == 0 {
        return Err(Error::InvalidInput("duration shorter than one sample".into()));
    }
    let jitter: f64 = StandardNormal.sample(rng);
    let amp = quality * config.signal_amplitude * (1.0 + config.amplitude_jitter * jitter).max(0.0);
    let phase1 = rng.random_range(0.0..2.0 * PI);
    let phase2 = rng.random_range(0.0..2.0 * PI);
    let omega = 2.0 * PI * spec.frequency / rate;
    let ssvep: Vec<f64> = (0..n)
        .map(|t| (omega * t as f64 + phase1).sin() + config.harmonic_ratio * (2.0 * omega * t as f64 + phase2).sin())
        .collect();
    let gamma = band_noise(n, rate, 35.0, 45.0, rng);
    let common = pink_noise(n, rate, rng);
    let gamma_amp = quality * config.gamma_amplitude;
    let mut rows = Vec::with_capacity(CHANNEL_NAMES.len());
    for name in CHANNEL_NAMES {
        let g = channel_gain(name) * amp;
        let gg = gamma_gain(name, spec.rotation, config.gamma_lateral_ratio) * gamma_amp;
        let background = pink_noise(n, rate, rng);
        rows.push(
            (0..n)
                .map(|t| g * ssvep[t] + gg * gamma[t] + config.noise_amplitude * background[t] + config.common_mode * common[t])
                .collect(),
        );
    }
    EegEpoch::from_rows(&rows, rate, Some(spec.class()))
}

/// `per_class` trials of every class in shuffled order, each at a quality
/// drawn uniformly from `quality_range`.
pub fn synth_dataset<R: Rng + ?Sized>(
    per_class: usize,
    quality_range: (f64, f64),
    duration_s: f64,
    config: &SynthConfig,
    rng: &mut R,
) -> Result<Vec<EegEpoch>> {
    let (lo, hi) = quality_range;
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidInput(format!("invalid quality range {lo}..{hi}")));
    }
    let mut classes: Vec<usize> = (0..per_class).flat_map(|_| 0..N_CLASSES).collect();
    classes.shuffle(rng);
    classes
        .into_iter()
        .map(|k| {
            let q = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            synth_trial(StimulusSpec::for_class(k)?, q, duration_s, config, rng)
        })
        .collect()
}

/// Unit-RMS noise with power density proportional to 1/f (flat below 1 Hz).
pub fn pink_noise<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    shaped_noise(n, rate, rng, |f| 1.0 / f.max(1.0).sqrt())
}

/// Unit-RMS noise confined to `[low, high]` Hz.
pub fn band_noise<R: Rng + ?Sized>(n: usize, rate: f64, low: f64, high: f64, rng: &mut R) -> Vec<f64> {
    shaped_noise(n, rate, rng, |f| if (low..=high).contains(&f) { 1.0 } else { 0.0 })
}

fn shaped_noise<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R, amplitude: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 1..=n / 2 {
        let a = amplitude(k as f64 * rate / n as f64);
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        spec[k] = Complex::new(a * re, a * im);
        if k != n - k {
            spec[n - k] = spec[k].conj();
        } else {
            spec[k].im = 0.0;
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let out: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        out.into_iter().map(|v| v / rms).collect()
    } else {
        out
    }
}
