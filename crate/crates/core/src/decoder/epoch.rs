use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub const DEFAULT_SAMPLE_RATE: f64 = 500.0;

/// Parieto-occipital montage used throughout the simulation.
pub const CHANNEL_NAMES: [&str; 12] = [
    "POz", "PO8", "PO7", "PO6", "PO5", "PO4", "PO3", "PO1", "PO2", "O1", "O2", "Oz",
];

/// Index of PO5, the channel used to read out left-hemisphere gamma power.
pub const LEFT_CHANNEL: usize = 4;
/// Index of PO6, the right-hemisphere counterpart of [`LEFT_CHANNEL`].
pub const RIGHT_CHANNEL: usize = 3;

const MAGIC: &[u8; 4] = b"EEG1";
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 4;

/// Whether a channel sits over the left hemisphere (odd electrode number).
pub fn is_left_channel(name: &str) -> bool {
    name.chars()
        .last()
        .and_then(|c| c.to_digit(10))
        .is_some_and(|d| d % 2 == 1)
}

/// Whether a channel sits over the right hemisphere (even, nonzero number).
pub fn is_right_channel(name: &str) -> bool {
    name.chars()
        .last()
        .and_then(|c| c.to_digit(10))
        .is_some_and(|d| d % 2 == 0)
}

/// A multichannel signal segment stored channel-major (`data[c * samples + t]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegEpoch {
    channels: usize,
    samples: usize,
    sample_rate: f64,
    data: Vec<f64>,
    label: Option<usize>,
}

impl EegEpoch {
    pub fn new(channels: usize, samples: usize, sample_rate: f64, data: Vec<f64>, label: Option<usize>) -> Result<Self> {
        if channels == 0 || samples == 0 {
            return Err(Error::Empty("epoch"));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidInput(format!("sample rate must be positive, got {sample_rate}")));
        }
        if data.len() != channels * samples {
            return Err(Error::DimensionMismatch {
                expected: channels * samples,
                actual: data.len(),
            });
        }
        ensure_finite(&data, "epoch samples")?;
        Ok(Self {
            channels,
            samples,
            sample_rate,
            data,
            label,
        })
    }

    pub fn zeros(channels: usize, samples: usize, sample_rate: f64) -> Result<Self> {
        Self::new(channels, samples, sample_rate, vec![0.0; channels * samples], None)
    }

    /// Builds an epoch from per-channel rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>], sample_rate: f64, label: Option<usize>) -> Result<Self> {
        let samples = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != samples) {
            return Err(Error::DimensionMismatch {
                expected: samples,
                actual: bad.len(),
            });
        }
        Self::new(rows.len(), samples, sample_rate, rows.concat(), label)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples as f64 / self.sample_rate
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.samples..(channel + 1) * self.samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.samples)
    }

    pub fn get(&self, channel: usize, sample: usize) -> f64 {
        self.data[channel * self.samples + sample]
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.samples {
            return Err(Error::InvalidInput(format!(
                "slice {start}..{} outside epoch of {} samples",
                start + len,
                self.samples
            )));
        }
        let data = self.rows().flat_map(|r| r[start..start + len].iter().copied()).collect();
        Self::new(self.channels, len, self.sample_rate, data, self.label)
    }

    /// Encodes as `EEG1`, u32 channels, u32 samples, f64 rate, i32 label
    /// (-1 for none), then channel-major little-endian f32 samples.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.samples as u32).to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&self.label.map_or(-1, |l| l as i32).to_le_bytes());
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Format("not an EEG1 epoch file".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let channels = u32_at(4);
        let samples = u32_at(8);
        let sample_rate = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let label = i32::from_le_bytes(bytes[20..24].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        if body.len() != 4 * channels * samples {
            return Err(Error::Format(format!(
                "epoch body holds {} bytes, header implies {}",
                body.len(),
                4 * channels * samples
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let label = match label {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => return Err(Error::Format(format!("invalid label {l}"))),
        };
        Self::new(channels, samples, sample_rate, data, label)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
