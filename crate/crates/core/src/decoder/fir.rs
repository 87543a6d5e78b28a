use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::epoch::EegEpoch;
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 250;

/// Passband `[low, high]` in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        if !(self.low > 0.0 && self.low < self.high && self.high < nyquist) {
            return Err(Error::InvalidInput(format!(
                "band {}-{} Hz must satisfy 0 < low < high < {nyquist} Hz",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Linear-phase windowed-sinc (Hamming) bandpass filter.
///
/// The design cutoffs are pushed outward just far enough that the nominal
/// band edges stay within 1 dB of unity gain.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    band: Band,
    sample_rate: f64,
    taps: Vec<f64>,
}

impl BandpassFilter {
    pub fn new(band: Band, sample_rate: f64, order: usize) -> Result<Self> {
        band.validate(sample_rate)?;
        if order < 2 || order % 2 == 1 {
            return Err(Error::InvalidInput(format!("filter order must be even and >= 2, got {order}")));
        }
        let nyquist = sample_rate / 2.0;
        let mut widen = 0.0;
        let step = sample_rate / order as f64 / 20.0;
        let taps = loop {
            let lo = (band.low - widen).max(step);
            let hi = (band.high + widen).min(nyquist - step);
            let taps = windowed_sinc(lo, hi, sample_rate, order);
            let worst = passband_probe(band)
                .map(|f| gain(&taps, f, sample_rate))
                .fold(f64::INFINITY, |a, g| a.min(g.min(1.0 / g)));
            if 20.0 * worst.log10() > -0.9 || widen > band.low {
                break taps;
            }
            widen += step;
        };
        Ok(Self {
            band,
            sample_rate,
            taps,
        })
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Magnitude response at `frequency` Hz.
    pub fn gain(&self, frequency: f64) -> f64 {
        gain(&self.taps, frequency, self.sample_rate)
    }

    /// Filters one channel, compensating the group delay so the output is
    /// aligned with the input. Edges are handled by reflection.
    pub fn apply(&self, signal: &[f64]) -> Vec<f64> {
        self.apply_strided(signal, 1)
    }

    /// Like [`apply`](Self::apply) but only evaluates every `factor`-th
    /// output sample.
    pub fn apply_strided(&self, signal: &[f64], factor: usize) -> Vec<f64> {
        let n = signal.len() as isize;
        let half = (self.taps.len() / 2) as isize;
        (0..signal.len())
            .step_by(factor.max(1))
            .map(|t| {
                let t = t as isize;
                self.taps
                    .iter()
                    .enumerate()
                    .map(|(k, &h)| h * signal[reflect(t + half - k as isize, n)])
                    .sum()
            })
            .collect()
    }

    /// Filters every channel, keeping every `factor`-th sample.
    pub fn apply_epoch(&self, epoch: &EegEpoch, factor: usize) -> Result<EegEpoch> {
        if (epoch.sample_rate() - self.sample_rate).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "filter designed for {} Hz applied to {} Hz epoch",
                self.sample_rate,
                epoch.sample_rate()
            )));
        }
        let factor = factor.max(1);
        let rows: Vec<Vec<f64>> = epoch.rows().map(|r| self.apply_strided(r, factor)).collect();
        EegEpoch::from_rows(&rows, epoch.sample_rate() / factor as f64, epoch.label())
    }
}

/// Bandpass filters `epoch` with the default order.
pub fn bandpass(epoch: &EegEpoch, band: Band) -> Result<EegEpoch> {
    BandpassFilter::new(band, epoch.sample_rate(), DEFAULT_ORDER)?.apply_epoch(epoch, 1)
}

/// Bandpass filters then keeps every `factor`-th sample.
pub fn bandpass_decimate(epoch: &EegEpoch, band: Band, factor: usize) -> Result<EegEpoch> {
    BandpassFilter::new(band, epoch.sample_rate(), DEFAULT_ORDER)?.apply_epoch(epoch, factor)
}

fn passband_probe(band: Band) -> impl Iterator<Item = f64> {
    (0..=16).map(move |i| band.low + (band.high - band.low) * i as f64 / 16.0)
}

fn windowed_sinc(low: f64, high: f64, sample_rate: f64, order: usize) -> Vec<f64> {
    let m = order as f64;
    let (f1, f2) = (low / sample_rate, high / sample_rate);
    let taps: Vec<f64> = (0..=order)
        .map(|n| {
            let k = n as f64 - m / 2.0;
            let ideal = if k == 0.0 {
                2.0 * (f2 - f1)
            } else {
                ((2.0 * PI * f2 * k).sin() - (2.0 * PI * f1 * k).sin()) / (PI * k)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / m).cos();
            ideal * window
        })
        .collect();
    let centre = gain(&taps, 0.5 * (low + high), sample_rate);
    taps.into_iter().map(|h| h / centre).collect()
}

fn gain(taps: &[f64], frequency: f64, sample_rate: f64) -> f64 {
    let w = 2.0 * PI * frequency / sample_rate;
    let (re, im) = taps
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (n, &h)| (re + h * (w * n as f64).cos(), im - h * (w * n as f64).sin()));
    re.hypot(im)
}

fn reflect(mut i: isize, n: isize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}
