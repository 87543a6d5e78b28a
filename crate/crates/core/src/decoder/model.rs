use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::epoch::{EegEpoch, DEFAULT_SAMPLE_RATE};
use super::fir::{Band, BandpassFilter};
use super::fuzzy::{axpy, dot, softmax_in_place, FuzzyGrad, FuzzyLayer, TokenCache};
use crate::error::{Error, Result};
use crate::rng::substream;

const MODEL_VERSION: u32 = 1;
const POWER_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub n_rules: usize,
    pub bands: [Band; 2],
    pub learning_rate: f64,
    pub dropout: f64,
    pub n_classes: usize,
    pub hidden: usize,
    pub n_channels: usize,
    pub sample_rate: f64,
    pub filter_order: usize,
    /// Keep every `decimation`-th filtered sample.
    pub decimation: usize,
    /// Spatial attention window, in decimated samples.
    pub window: usize,
    /// Step between consecutive windows, in decimated samples.
    pub hop: usize,
    pub spatial_query_dim: usize,
    /// Output size of the spatial value projection, per band.
    pub spatial_value_dims: [usize; 2],
    /// Start the spatial value projections as a Fourier filter bank
    /// covering each band.
    pub spectral_init: bool,
    pub epochs: usize,
    pub batch_size: usize,
    /// Length, in decimated samples, of the random crop drawn from each
    /// training example on every pass. `None` trains on whole examples.
    pub train_crop: Option<usize>,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        let mut config = Self {
            n_rules: 5,
            bands: [Band::new(6.0, 40.0), Band::new(35.0, 45.0)],
            learning_rate: 0.001,
            dropout: 0.25,
            n_classes: 6,
            hidden: 64,
            n_channels: 12,
            sample_rate: DEFAULT_SAMPLE_RATE,
            filter_order: 250,
            decimation: 4,
            window: 125,
            hop: 62,
            spatial_query_dim: 4,
            spatial_value_dims: [0, 0],
            spectral_init: true,
            epochs: 40,
            batch_size: 32,
            train_crop: Some(250),
            seed: 0,
        };
        config.spatial_value_dims = [0, 1].map(|b| 2 * config.spectral_bins(b).len());
        config
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_rules", self.n_rules),
            ("n_classes", self.n_classes),
            ("hidden", self.hidden),
            ("n_channels", self.n_channels),
            ("decimation", self.decimation),
            ("window", self.window),
            ("hop", self.hop),
            ("spatial_query_dim", self.spatial_query_dim),
            ("spatial_value_dims[0]", self.spatial_value_dims[0]),
            ("spatial_value_dims[1]", self.spatial_value_dims[1]),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("{name} must be positive")));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidInput("need at least two classes".into()));
        }
        for band in &self.bands {
            band.validate(self.sample_rate)?;
            if band.high >= self.sample_rate / self.decimation as f64 / 2.0 {
                return Err(Error::InvalidInput(format!(
                    "band edge {} Hz aliases after decimation by {}",
                    band.high, self.decimation
                )));
            }
        }
        if self.train_crop.is_some_and(|c| c < self.window) {
            return Err(Error::InvalidInput("training crop must cover at least one window".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Shortest epoch, in raw samples, the decoder accepts.
    pub fn min_samples(&self) -> usize {
        (self.window - 1) * self.decimation + 1
    }

    fn feature_dim(&self) -> usize {
        self.n_channels * (self.spatial_value_dims[0] + self.spatial_value_dims[1])
    }

    /// Window DFT bins whose frequency lies inside band `b`.
    pub fn spectral_bins(&self, b: usize) -> Vec<usize> {
        let resolution = self.sample_rate / self.decimation as f64 / self.window as f64;
        let band = self.bands[b];
        (1..=self.window / 2)
            .filter(|&k| (band.low..=band.high).contains(&(k as f64 * resolution)))
            .collect()
    }
}

/// Band-split, decimated model input. Each band is stored time-major
/// (`data[t * channels + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    channels: usize,
    samples: usize,
    bands: [Vec<f64>; 2],
}

impl Prepared {
    pub fn new(channels: usize, samples: usize, bands: [Vec<f64>; 2]) -> Result<Self> {
        for b in &bands {
            if b.len() != channels * samples {
                return Err(Error::DimensionMismatch {
                    expected: channels * samples,
                    actual: b.len(),
                });
            }
        }
        Ok(Self { channels, samples, bands })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn band(&self, b: usize) -> &[f64] {
        &self.bands[b]
    }

    /// Samples `[start, start + len)` of both bands.
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.samples {
            return Err(Error::InvalidInput(format!("crop {start}+{len} outside {} samples", self.samples)));
        }
        let c = self.channels;
        let bands = [
            self.bands[0][start * c..(start + len) * c].to_vec(),
            self.bands[1][start * c..(start + len) * c].to_vec(),
        ];
        Self::new(c, len, bands)
    }
}

/// Average reference, artifact-removal slot and dual-band filtering.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    filters: [BandpassFilter; 2],
    decimation: usize,
    channels: usize,
}

impl Preprocessor {
    pub fn new(config: &DecoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            filters: [
                BandpassFilter::new(config.bands[0], config.sample_rate, config.filter_order)?,
                BandpassFilter::new(config.bands[1], config.sample_rate, config.filter_order)?,
            ],
            decimation: config.decimation,
            channels: config.n_channels,
        })
    }

    pub fn prepare(&self, epoch: &EegEpoch) -> Result<Prepared> {
        if epoch.channels() != self.channels {
            return Err(Error::DimensionMismatch {
                expected: self.channels,
                actual: epoch.channels(),
            });
        }
        let cleaned = remove_artifacts(&average_reference(epoch)?);
        let c = self.channels;
        let mut bands = [Vec::new(), Vec::new()];
        let mut samples = 0;
        for (b, filter) in self.filters.iter().enumerate() {
            let filtered = filter.apply_epoch(&cleaned, self.decimation)?;
            samples = filtered.samples();
            let mut data = vec![0.0; c * samples];
            for (ch, row) in filtered.rows().enumerate() {
                for (t, v) in row.iter().enumerate() {
                    data[t * c + ch] = *v;
                }
            }
            bands[b] = data;
        }
        Prepared::new(c, samples, bands)
    }
}

/// Subtracts the across-channel mean at every sample.
pub fn average_reference(epoch: &EegEpoch) -> Result<EegEpoch> {
    let (c, t) = (epoch.channels(), epoch.samples());
    let mut data = epoch.data().to_vec();
    for s in 0..t {
        let mean = (0..c).map(|ch| data[ch * t + s]).sum::<f64>() / c as f64;
        for ch in 0..c {
            data[ch * t + s] -= mean;
        }
    }
    EegEpoch::new(c, t, epoch.sample_rate(), data, epoch.label())
}

/// Ocular-artifact removal stage. Synthetic recordings carry no ocular
/// artifacts, so the signal is returned unchanged.
pub fn remove_artifacts(epoch: &EegEpoch) -> EegEpoch {
    epoch.clone()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Mlp {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Dual-band fuzzy attention classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuzzyDecoder {
    version: u32,
    config: DecoderConfig,
    band_scales: [f64; 2],
    temporal: [FuzzyLayer; 2],
    spatial: [FuzzyLayer; 2],
    /// Fixed affine standardization of the pooled features.
    feature_shift: Vec<f64>,
    feature_scale: Vec<f64>,
    mlp: Mlp,
    #[serde(skip)]
    preprocessor: OnceLock<Preprocessor>,
}

/// Gradients for every parameter of a [`FuzzyDecoder`].
#[derive(Debug, Clone)]
pub struct DecoderGrad {
    temporal: [FuzzyGrad; 2],
    spatial: [FuzzyGrad; 2],
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

const FAMILY_NAMES: [&str; 20] = [
    "temporal0.centers",
    "temporal0.log_variances",
    "temporal0.queries",
    "temporal0.values",
    "temporal1.centers",
    "temporal1.log_variances",
    "temporal1.queries",
    "temporal1.values",
    "spatial0.centers",
    "spatial0.log_variances",
    "spatial0.queries",
    "spatial0.values",
    "spatial1.centers",
    "spatial1.log_variances",
    "spatial1.queries",
    "spatial1.values",
    "mlp.w1",
    "mlp.b1",
    "mlp.w2",
    "mlp.b2",
];

impl DecoderGrad {
    /// Named gradient tensors, in the order of
    /// [`FuzzyDecoder::parameters_mut`].
    pub fn families(&self) -> Vec<(&'static str, &[f64])> {
        let mut parts: Vec<&[f64]> = Vec::with_capacity(20);
        for g in self.temporal.iter().chain(&self.spatial) {
            parts.extend(g.parts().map(|p| p.as_slice()));
        }
        parts.extend([self.w1.as_slice(), &self.b1, &self.w2, &self.b2]);
        FAMILY_NAMES.into_iter().zip(parts).collect()
    }

    fn zero(&mut self) {
        for g in self.temporal.iter_mut().chain(&mut self.spatial) {
            g.fill_zero();
        }
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            v.fill(0.0);
        }
    }
}

#[derive(Default)]
struct BandCache {
    input: Vec<f64>,
    attended: Vec<f64>,
    temporal: Vec<TokenCache>,
    tokens: Vec<f64>,
    spatial: Vec<TokenCache>,
    spatial_out: Vec<f64>,
    power: Vec<f64>,
    starts: Vec<usize>,
}

struct Forward {
    bands: [BandCache; 2],
    features: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    mask: Vec<f64>,
    probs: Vec<f64>,
}

/// Per-pass training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
}

impl FuzzyDecoder {
    /// Randomly initialized model with unit input scaling.
    pub fn new(config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(config.seed, "decoder-init");
        let c = config.n_channels;
        let temporal = [
            FuzzyLayer::random(config.n_rules, c, c, c, true, &mut rng)?,
            FuzzyLayer::random(config.n_rules, c, c, c, true, &mut rng)?,
        ];
        let mut spatial = [
            FuzzyLayer::random(config.n_rules, config.window, config.spatial_query_dim, config.spatial_value_dims[0], false, &mut rng)?,
            FuzzyLayer::random(config.n_rules, config.window, config.spatial_query_dim, config.spatial_value_dims[1], false, &mut rng)?,
        ];
        if config.spectral_init {
            for (b, layer) in spatial.iter_mut().enumerate() {
                fourier_values(layer, &config.spectral_bins(b), &mut rng);
            }
        }
        let inputs = config.feature_dim();
        let he = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).unwrap();
        let out = Normal::new(0.0, (1.0 / config.hidden as f64).sqrt()).unwrap();
        let mlp = Mlp {
            inputs,
            hidden: config.hidden,
            outputs: config.n_classes,
            w1: (0..config.hidden * inputs).map(|_| he.sample(&mut rng)).collect(),
            b1: vec![0.0; config.hidden],
            w2: (0..config.n_classes * config.hidden).map(|_| out.sample(&mut rng)).collect(),
            b2: vec![0.0; config.n_classes],
        };
        Ok(Self {
            version: MODEL_VERSION,
            feature_shift: vec![0.0; inputs],
            feature_scale: vec![1.0; inputs],
            config,
            band_scales: [1.0, 1.0],
            temporal,
            spatial,
            mlp,
            preprocessor: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn band_scales(&self) -> [f64; 2] {
        self.band_scales
    }

    pub fn temporal_layer(&self, band: usize) -> &FuzzyLayer {
        &self.temporal[band]
    }

    pub fn spatial_layer(&self, band: usize) -> &FuzzyLayer {
        &self.spatial[band]
    }

    /// Zeroes the output layer, making every prediction uniform.
    pub fn zero_head(&mut self) {
        self.mlp.w2.fill(0.0);
        self.mlp.b2.fill(0.0);
    }

    /// Named parameter tensors, in the order of [`DecoderGrad::families`].
    pub fn parameters_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        let mut parts: Vec<&mut Vec<f64>> = Vec::with_capacity(20);
        let [t0, t1] = &mut self.temporal;
        let [s0, s1] = &mut self.spatial;
        for layer in [t0, t1, s0, s1] {
            parts.extend(layer.params_mut());
        }
        let m = &mut self.mlp;
        parts.extend([&mut m.w1, &mut m.b1, &mut m.w2, &mut m.b2]);
        FAMILY_NAMES.into_iter().zip(parts).collect()
    }

    pub fn preprocessor(&self) -> Result<&Preprocessor> {
        if let Some(p) = self.preprocessor.get() {
            return Ok(p);
        }
        let p = Preprocessor::new(&self.config)?;
        Ok(self.preprocessor.get_or_init(|| p))
    }

    pub fn prepare(&self, epoch: &EegEpoch) -> Result<Prepared> {
        if (epoch.sample_rate() - self.config.sample_rate).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "model expects {} Hz input, got {} Hz",
                self.config.sample_rate,
                epoch.sample_rate()
            )));
        }
        if epoch.samples() < self.config.min_samples() {
            return Err(Error::InvalidInput(format!(
                "epoch of {} samples is shorter than the {}-sample minimum",
                epoch.samples(),
                self.config.min_samples()
            )));
        }
        self.preprocessor()?.prepare(epoch)
    }

    /// Class probabilities for one epoch.
    pub fn classify(&self, epoch: &EegEpoch) -> Result<Vec<f64>> {
        self.classify_prepared(&self.prepare(epoch)?)
    }

    pub fn classify_prepared(&self, input: &Prepared) -> Result<Vec<f64>> {
        Ok(self.forward(input, None)?.probs)
    }

    pub fn predict(&self, epoch: &EegEpoch) -> Result<usize> {
        Ok(argmax(&self.classify(epoch)?))
    }

    /// Temporal firing strengths (`T' x N_r`, at the decimated rate) of one band.
    pub fn temporal_strengths(&self, epoch: &EegEpoch, band: usize) -> Result<DMatrix<f64>> {
        if band > 1 {
            return Err(Error::InvalidInput(format!("band index {band} out of range")));
        }
        let input = self.prepare(epoch)?;
        let fwd = self.forward(&input, None)?;
        let caches = &fwd.bands[band].temporal;
        Ok(DMatrix::from_fn(caches.len(), self.config.n_rules, |t, j| caches[t].strengths()[j]))
    }

    /// Sample rate of the signals seen by the attention layers.
    pub fn model_rate(&self) -> f64 {
        self.config.sample_rate / self.config.decimation as f64
    }

    fn check_input(&self, input: &Prepared) -> Result<()> {
        if input.channels != self.config.n_channels {
            return Err(Error::DimensionMismatch {
                expected: self.config.n_channels,
                actual: input.channels,
            });
        }
        if input.samples < self.config.window {
            return Err(Error::InvalidInput(format!(
                "input of {} samples is shorter than the {}-sample window",
                input.samples, self.config.window
            )));
        }
        Ok(())
    }

    fn forward(&self, input: &Prepared, dropout: Option<&mut ChaCha8Rng>) -> Result<Forward> {
        self.check_input(input)?;
        let cfg = &self.config;
        let bands = [self.forward_band(input, 0), self.forward_band(input, 1)];
        let features: Vec<f64> = bands
            .iter()
            .flat_map(|b| b.power.iter().map(|p| (POWER_EPS + p).ln()))
            .zip(self.feature_shift.iter().zip(&self.feature_scale))
            .map(|(f, (m, s))| (f - m) / s)
            .collect();
        let m = &self.mlp;
        let hidden_pre: Vec<f64> = (0..m.hidden)
            .map(|h| m.b1[h] + dot(&m.w1[h * m.inputs..(h + 1) * m.inputs], &features))
            .collect();
        let mask: Vec<f64> = match dropout {
            Some(rng) if cfg.dropout > 0.0 => (0..m.hidden)
                .map(|_| if rng.random::<f64>() < cfg.dropout { 0.0 } else { 1.0 / (1.0 - cfg.dropout) })
                .collect(),
            _ => vec![1.0; m.hidden],
        };
        let hidden: Vec<f64> = hidden_pre.iter().zip(&mask).map(|(&z, &k)| z.max(0.0) * k).collect();
        let mut probs: Vec<f64> = (0..m.outputs)
            .map(|o| m.b2[o] + dot(&m.w2[o * m.hidden..(o + 1) * m.hidden], &hidden))
            .collect();
        softmax_in_place(&mut probs);
        Ok(Forward {
            bands,
            features,
            hidden_pre,
            hidden,
            mask,
            probs,
        })
    }

    fn forward_band(&self, input: &Prepared, b: usize) -> BandCache {
        let (c, t_len) = (input.channels, input.samples);
        let (s, dv) = (self.config.window, self.config.spatial_value_dims[b]);
        let scale = 1.0 / self.band_scales[b];
        let x: Vec<f64> = input.bands[b].iter().map(|v| v * scale).collect();
        let mut attended = vec![0.0; c * t_len];
        let mut temporal = vec![TokenCache::default(); t_len];
        for t in 0..t_len {
            self.temporal[b].forward_token(&x[t * c..(t + 1) * c], &mut temporal[t], &mut attended[t * c..(t + 1) * c]);
        }
        let starts: Vec<usize> = (0..=t_len - s).step_by(self.config.hop).collect();
        let n_tok = starts.len() * c;
        let mut tokens = vec![0.0; n_tok * s];
        for (wi, &s0) in starts.iter().enumerate() {
            for ch in 0..c {
                let tok = &mut tokens[(wi * c + ch) * s..(wi * c + ch + 1) * s];
                for (i, v) in tok.iter_mut().enumerate() {
                    *v = attended[(s0 + i) * c + ch];
                }
            }
        }
        let mut spatial = vec![TokenCache::default(); n_tok];
        let mut spatial_out = vec![0.0; n_tok * dv];
        for k in 0..n_tok {
            self.spatial[b].forward_token(&tokens[k * s..(k + 1) * s], &mut spatial[k], &mut spatial_out[k * dv..(k + 1) * dv]);
        }
        let mut power = vec![0.0; c * dv];
        let inv = 1.0 / starts.len() as f64;
        for wi in 0..starts.len() {
            for ch in 0..c {
                for k in 0..dv {
                    let z = spatial_out[(wi * c + ch) * dv + k];
                    power[ch * dv + k] += z * z * inv;
                }
            }
        }
        BandCache {
            input: x,
            attended,
            temporal,
            tokens,
            spatial,
            spatial_out,
            power,
            starts,
        }
    }

    fn zero_grad(&self) -> DecoderGrad {
        DecoderGrad {
            temporal: [self.temporal[0].zero_grad(), self.temporal[1].zero_grad()],
            spatial: [self.spatial[0].zero_grad(), self.spatial[1].zero_grad()],
            w1: vec![0.0; self.mlp.w1.len()],
            b1: vec![0.0; self.mlp.b1.len()],
            w2: vec![0.0; self.mlp.w2.len()],
            b2: vec![0.0; self.mlp.b2.len()],
        }
    }

    /// Adds `weight` times the cross-entropy gradient of one example to
    /// `grad` and returns its loss.
    fn accumulate(&self, input: &Prepared, label: usize, weight: f64, dropout: Option<&mut ChaCha8Rng>, grad: &mut DecoderGrad) -> Result<f64> {
        let fwd = self.forward(input, dropout)?;
        let loss = -fwd.probs[label].max(f64::MIN_POSITIVE).ln();
        let m = &self.mlp;
        let g_logits: Vec<f64> = fwd
            .probs
            .iter()
            .enumerate()
            .map(|(o, p)| weight * (p - if o == label { 1.0 } else { 0.0 }))
            .collect();
        let mut g_hidden = vec![0.0; m.hidden];
        for (o, &g) in g_logits.iter().enumerate() {
            grad.b2[o] += g;
            axpy(g, &fwd.hidden, &mut grad.w2[o * m.hidden..(o + 1) * m.hidden]);
            axpy(g, &m.w2[o * m.hidden..(o + 1) * m.hidden], &mut g_hidden);
        }
        let mut g_features = vec![0.0; m.inputs];
        for h in 0..m.hidden {
            let g = if fwd.hidden_pre[h] > 0.0 { g_hidden[h] * fwd.mask[h] } else { 0.0 };
            if g == 0.0 {
                continue;
            }
            grad.b1[h] += g;
            axpy(g, &fwd.features, &mut grad.w1[h * m.inputs..(h + 1) * m.inputs]);
            axpy(g, &m.w1[h * m.inputs..(h + 1) * m.inputs], &mut g_features);
        }
        for (g, s) in g_features.iter_mut().zip(&self.feature_scale) {
            *g /= s;
        }
        let split = input.channels * self.config.spatial_value_dims[0];
        let (g0, g1) = g_features.split_at(split);
        self.backward_band(0, input.channels, &fwd.bands[0], g0, grad);
        self.backward_band(1, input.channels, &fwd.bands[1], g1, grad);
        Ok(loss)
    }

    fn backward_band(&self, b: usize, c: usize, cache: &BandCache, g_features: &[f64], grad: &mut DecoderGrad) {
        let (s, dv) = (self.config.window, self.config.spatial_value_dims[b]);
        let n_w = cache.starts.len();
        let g_power: Vec<f64> = g_features.iter().zip(&cache.power).map(|(g, p)| g / (POWER_EPS + p)).collect();
        let mut g_attended = vec![0.0; cache.attended.len()];
        let mut g_token = vec![0.0; s];
        let mut g_z = vec![0.0; dv];
        for (wi, &s0) in cache.starts.iter().enumerate() {
            for ch in 0..c {
                let k = wi * c + ch;
                for (i, g) in g_z.iter_mut().enumerate() {
                    *g = g_power[ch * dv + i] * 2.0 * cache.spatial_out[k * dv + i] / n_w as f64;
                }
                g_token.fill(0.0);
                self.spatial[b].backward_token(
                    &cache.tokens[k * s..(k + 1) * s],
                    &cache.spatial[k],
                    &g_z,
                    &mut grad.spatial[b],
                    Some(&mut g_token),
                );
                for (i, g) in g_token.iter().enumerate() {
                    g_attended[(s0 + i) * c + ch] += g;
                }
            }
        }
        for (t, tc) in cache.temporal.iter().enumerate() {
            let gy = &g_attended[t * c..(t + 1) * c];
            if gy.iter().all(|&g| g == 0.0) {
                continue;
            }
            self.temporal[b].backward_token(&cache.input[t * c..(t + 1) * c], tc, gy, &mut grad.temporal[b], None);
        }
    }

    /// Mean cross-entropy over `batch` and its gradient, without dropout.
    pub fn loss_and_gradient(&self, batch: &[(&Prepared, usize)]) -> Result<(f64, DecoderGrad)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut grad = self.zero_grad();
        let w = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &(input, label) in batch {
            self.check_label(label)?;
            loss += w * self.accumulate(input, label, w, None, &mut grad)?;
        }
        Ok((loss, grad))
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.config.n_classes {
            return Err(Error::InvalidInput(format!("label {label} outside 0..{}", self.config.n_classes)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", model.version)));
        }
        model.config.validate()?;
        let c = model.config.n_channels;
        let dims_ok = model.temporal.iter().all(|l| l.input_dim() == c && l.value_dim() == c)
            && (0..2).all(|b| {
                let l = &model.spatial[b];
                l.input_dim() == model.config.window && l.value_dim() == model.config.spatial_value_dims[b]
            })
            && model.feature_shift.len() == model.mlp.inputs
            && model.feature_scale.len() == model.mlp.inputs
            && model.feature_scale.iter().all(|&s| s > 0.0)
            && model.mlp.w1.len() == model.mlp.hidden * model.mlp.inputs
            && model.mlp.inputs == model.config.feature_dim()
            && model.mlp.w2.len() == model.mlp.outputs * model.mlp.hidden
            && model.mlp.outputs == model.config.n_classes;
        if !dims_ok {
            return Err(Error::Format("model tensors do not match its configuration".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64, model: &mut FuzzyDecoder) -> Self {
        let sizes: Vec<usize> = model.parameters_mut().iter().map(|(_, p)| p.len()).collect();
        Self {
            lr,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn step(&mut self, model: &mut FuzzyDecoder, grad: &DecoderGrad) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        for (i, ((_, p), (_, g))) in model.parameters_mut().into_iter().zip(grad.families()).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = Self::BETA1 * m[j] + (1.0 - Self::BETA1) * g[j];
                v[j] = Self::BETA2 * v[j] + (1.0 - Self::BETA2) * g[j] * g[j];
                p[j] -= step * m[j] / (v[j].sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains a decoder on labelled epochs with mini-batch Adam.
pub fn train_decoder(dataset: &[EegEpoch], config: DecoderConfig) -> Result<(FuzzyDecoder, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut model = FuzzyDecoder::new(config)?;
    let mut inputs = Vec::with_capacity(dataset.len());
    for epoch in dataset {
        let label = epoch
            .label()
            .ok_or_else(|| Error::InvalidInput("training epochs must be labelled".into()))?;
        model.check_label(label)?;
        inputs.push((model.prepare(epoch)?, label));
    }
    if let Some(k) = (0..model.config.n_classes).find(|&k| !inputs.iter().any(|(_, l)| *l == k)) {
        return Err(Error::MissingClass(k));
    }
    for b in 0..2 {
        let (sum, count) = inputs
            .iter()
            .fold((0.0, 0usize), |(s, n), (p, _)| (s + p.bands[b].iter().map(|v| v * v).sum::<f64>(), n + p.bands[b].len()));
        let rms = (sum / count as f64).sqrt();
        model.band_scales[b] = if rms > 0.0 { rms } else { 1.0 };
    }
    seed_temporal_centers(&mut model, &inputs);
    standardize_features(&mut model, &inputs)?;
    let report = fit(&mut model, &inputs)?;
    Ok((model, report))
}

/// Places each temporal rule's centre on the query projection of a randomly
/// drawn training token.
fn seed_temporal_centers(model: &mut FuzzyDecoder, inputs: &[(Prepared, usize)]) {
    let mut rng = substream(model.config.seed, "decoder-centers");
    for b in 0..2 {
        let scale = 1.0 / model.band_scales[b];
        let layer = &mut model.temporal[b];
        let (d, q) = (layer.input_dim(), layer.query_dim());
        for j in 0..layer.n_rules() {
            let (input, _) = &inputs[rng.random_range(0..inputs.len())];
            let t = rng.random_range(0..input.samples);
            let token: Vec<f64> = input.band(b)[t * d..(t + 1) * d].iter().map(|v| v * scale).collect();
            for k in 0..q {
                let row = &layer.queries[(j * q + k) * d..(j * q + k + 1) * d];
                layer.centers[j * q + k] = dot(row, &token);
            }
        }
    }
}

fn standardize_features(model: &mut FuzzyDecoder, inputs: &[(Prepared, usize)]) -> Result<()> {
    let dim = model.mlp.inputs;
    let (mut sum, mut sq) = (vec![0.0; dim], vec![0.0; dim]);
    for (input, _) in inputs {
        let f = model.forward(input, None)?.features;
        for i in 0..dim {
            sum[i] += f[i];
            sq[i] += f[i] * f[i];
        }
    }
    let n = inputs.len() as f64;
    for i in 0..dim {
        let mean = sum[i] / n;
        let var = (sq[i] / n - mean * mean).max(0.0);
        model.feature_shift[i] = mean;
        model.feature_scale[i] = var.sqrt().max(1e-3);
    }
    Ok(())
}

/// Overwrites the value rows of every rule with cosine/sine pairs at the
/// given window DFT bins, scaled to unit norm, plus small noise. Rows beyond
/// the available pairs keep their random initialization.
fn fourier_values(layer: &mut FuzzyLayer, bins: &[usize], rng: &mut ChaCha8Rng) {
    let s = layer.input_dim();
    let dv = layer.value_dim();
    let norm = (2.0 / s as f64).sqrt();
    let noise = Normal::new(0.0, 0.01 * norm).unwrap();
    for j in 0..layer.n_rules() {
        for (i, &k) in bins.iter().take(dv / 2).enumerate() {
            for (row, phase) in [(2 * i, 0.0), (2 * i + 1, -std::f64::consts::FRAC_PI_2)] {
                let base = (j * dv + row) * s;
                for t in 0..s {
                    let angle = 2.0 * std::f64::consts::PI * (k * t) as f64 / s as f64 + phase;
                    layer.values[base + t] = norm * angle.cos() + noise.sample(rng);
                }
            }
        }
    }
}

fn fit(model: &mut FuzzyDecoder, inputs: &[(Prepared, usize)]) -> Result<TrainReport> {
    let cfg = model.config.clone();
    let mut order_rng = substream(cfg.seed, "decoder-shuffle");
    let mut dropout_rng = substream(cfg.seed, "decoder-dropout");
    let mut adam = Adam::new(cfg.learning_rate, model);
    let mut grad = model.zero_grad();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.zero();
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                let (input, label) = &inputs[i];
                let loss = match cfg.train_crop {
                    Some(len) if len < input.samples => {
                        let start = order_rng.random_range(0..=input.samples - len);
                        let cropped = input.crop(start, len)?;
                        model.accumulate(&cropped, *label, w, Some(&mut dropout_rng), &mut grad)?
                    }
                    _ => model.accumulate(input, *label, w, Some(&mut dropout_rng), &mut grad)?,
                };
                total += loss;
            }
            adam.step(model, &grad);
        }
        losses.push(total / inputs.len() as f64);
    }
    let correct = inputs
        .iter()
        .map(|(p, l)| model.classify_prepared(p).map(|probs| usize::from(argmax(&probs) == *l)))
        .sum::<Result<usize>>()?;
    Ok(TrainReport {
        losses,
        train_accuracy: correct as f64 / inputs.len() as f64,
    })
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i)
}
