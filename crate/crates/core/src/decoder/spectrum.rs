use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::epoch::EegEpoch;
use crate::error::{Error, Result};

/// Single-sided amplitude spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl Spectrum {
    pub fn resolution(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0)
    }

    /// Index of the bin closest to `frequency`.
    pub fn bin_of(&self, frequency: f64) -> usize {
        let res = self.resolution();
        if res == 0.0 {
            return 0;
        }
        ((frequency / res).round() as usize).min(self.frequencies.len() - 1)
    }

    /// Indices of the `k` largest bins, largest first. The DC bin is left out
    /// when `skip_dc` is set.
    pub fn top_bins(&self, k: usize, skip_dc: bool) -> Vec<usize> {
        let mut idx: Vec<usize> = (usize::from(skip_dc)..self.amplitudes.len()).collect();
        idx.sort_by(|&a, &b| self.amplitudes[b].total_cmp(&self.amplitudes[a]));
        idx.truncate(k);
        idx
    }

    /// Element-wise mean of spectra sharing one frequency axis.
    pub fn mean(spectra: &[Spectrum]) -> Result<Spectrum> {
        let first = spectra.first().ok_or(Error::Empty("spectra"))?;
        let mut amplitudes = vec![0.0; first.amplitudes.len()];
        for s in spectra {
            if s.frequencies != first.frequencies {
                return Err(Error::InvalidInput("spectra have different frequency axes".into()));
            }
            for (a, b) in amplitudes.iter_mut().zip(&s.amplitudes) {
                *a += b / spectra.len() as f64;
            }
        }
        Ok(Spectrum {
            frequencies: first.frequencies.clone(),
            amplitudes,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["frequency", "amplitude"])?;
        for (f, a) in self.frequencies.iter().zip(&self.amplitudes) {
            w.write_record([format!("{f:.6}"), format!("{a:.9}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Single-sided amplitude spectrum of a real signal. Bin `k` sits at
/// `k * sample_rate / T`; a unit sine on an exact bin reads 1.
pub fn amplitude_spectrum(signal: &[f64], sample_rate: f64) -> Result<Spectrum> {
    if signal.is_empty() {
        return Err(Error::Empty("signal"));
    }
    let n = signal.len();
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let amplitudes = (0..=half)
        .map(|k| {
            let mag = buf[k].norm() / n as f64;
            if k == 0 || (n % 2 == 0 && k == half) {
                mag
            } else {
                2.0 * mag
            }
        })
        .collect();
    let frequencies = (0..=half).map(|k| k as f64 * sample_rate / n as f64).collect();
    Ok(Spectrum {
        frequencies,
        amplitudes,
    })
}

/// Channel-averaged amplitude spectrum of an epoch.
pub fn epoch_spectrum(epoch: &EegEpoch) -> Result<Spectrum> {
    let spectra = epoch
        .rows()
        .map(|r| amplitude_spectrum(r, epoch.sample_rate()))
        .collect::<Result<Vec<_>>>()?;
    Spectrum::mean(&spectra)
}

/// Rule-averaged spectrum of mean-removed firing strengths (`T x N_r`).
pub fn firing_strength_spectrum(strengths: &DMatrix<f64>, sample_rate: f64) -> Result<Spectrum> {
    let spectra = strengths
        .column_iter()
        .map(|col| {
            let mean = col.mean();
            let centred: Vec<f64> = col.iter().map(|v| v - mean).collect();
            amplitude_spectrum(&centred, sample_rate)
        })
        .collect::<Result<Vec<_>>>()?;
    Spectrum::mean(&spectra)
}
