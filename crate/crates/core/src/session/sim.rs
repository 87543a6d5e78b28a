use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::protocol::{EpochDecoder, EpochWindow};
use super::ring::{RingBuffer, DEFAULT_CAPACITY};
use crate::bandit::{BanditState, Cell, ContextGrid, Layout, DEFAULT_LAMBDA};
use crate::decoder::{
    synth_dataset, synth_trial, train_decoder, DecoderConfig, EegEpoch, FuzzyDecoder, StimulusSpec, SynthConfig,
    TrainReport, CHANNEL_NAMES, N_CLASSES,
};
use crate::error::{Error, Result};
use crate::luminance::{LuminanceEstimator, LuminanceGrid};
use crate::recommend::{loo_recommend, no_layout, recommend, train_on_contexts, SamplerConfig};
use crate::reward::{RewardFactors, RewardModel};
use crate::rng::{indexed_substream, substream};
use crate::scene::{generate_clip, random_objects, SceneConfig, SceneKind};

/// Layout strategy compared in a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Luminance, spacing and object distance jointly.
    Joli,
    /// Luminance and object distance only.
    Loo,
    /// Stimuli on their objects.
    No,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Joli, Method::Loo, Method::No];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Joli => "JOLI",
            Method::Loo => "LOO",
            Method::No => "NO",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "joli" => Ok(Method::Joli),
            "loo" => Ok(Method::Loo),
            "no" => Ok(Method::No),
            _ => Err(Error::InvalidInput(format!("unknown method {s:?}, expected joli, loo or no"))),
        }
    }
}

/// One decoded trial at one decode window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub round: usize,
    pub method: Method,
    pub target_class: usize,
    pub predicted_class: Option<usize>,
    pub layout: Option<Layout>,
    pub window_s: f64,
    /// Normalized luminance under the target stimulus.
    pub luminance: f64,
    /// Distance from the target to its nearest neighbor, in degrees.
    pub isd_degrees: f64,
    /// Response quality handed to the signal synthesizer.
    pub quality: f64,
    /// Virtual time of stimulus onset, in seconds since session start.
    pub onset_s: f64,
    pub valid: bool,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn is_correct(&self) -> bool {
        self.valid && self.predicted_class == Some(self.target_class)
    }
}

/// Durations of the four phases of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPhases {
    pub capture_s: f64,
    pub cue_s: f64,
    pub stimulus_s: f64,
    pub feedback_s: f64,
}

impl Default for TrialPhases {
    fn default() -> Self {
        Self {
            capture_s: 1.0,
            cue_s: 1.5,
            stimulus_s: 4.0,
            feedback_s: 1.5,
        }
    }
}

impl TrialPhases {
    pub fn total(&self) -> f64 {
        self.capture_s + self.cue_s + self.stimulus_s + self.feedback_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub rounds: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Decode windows; every trial is decoded once per window.
    pub windows_s: Vec<f64>,
    pub scene_kind: SceneKind,
    pub scene: SceneConfig,
    pub n_g: usize,
    pub sampler: SamplerConfig,
    pub reward: RewardModel,
    pub synth: SynthConfig,
    pub phases: TrialPhases,
    pub buffer_capacity: usize,
    /// Samples per streamed chunk.
    pub chunk_samples: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            seed: 0,
            methods: Method::ALL.to_vec(),
            windows_s: vec![EpochWindow::ONLINE.length_s],
            scene_kind: SceneKind::Mixed,
            scene: SceneConfig::default(),
            n_g: 12,
            sampler: SamplerConfig::default(),
            reward: RewardModel::default(),
            synth: SynthConfig::default(),
            phases: TrialPhases::default(),
            buffer_capacity: DEFAULT_CAPACITY,
            chunk_samples: 50,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidInput("rounds must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("no methods selected".into()));
        }
        if self.chunk_samples == 0 {
            return Err(Error::InvalidInput("chunk size must be positive".into()));
        }
        for &w in &self.windows_s {
            if !(w > 0.0 && w <= self.phases.stimulus_s) {
                return Err(Error::InvalidInput(format!(
                    "decode window {w} s must lie in (0, {}] s",
                    self.phases.stimulus_s
                )));
            }
        }
        let needed = (self.phases.stimulus_s * self.synth.sample_rate).round() as usize;
        if self.buffer_capacity < needed {
            return Err(Error::InvalidInput(format!(
                "buffer of {} samples cannot hold a {} s stimulus",
                self.buffer_capacity, self.phases.stimulus_s
            )));
        }
        self.sampler.validate()?;
        self.reward.config.validate()?;
        self.synth.validate()
    }
}

/// Bandits for the two adaptive methods.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionBandits {
    pub joli: BanditState,
    pub loo: BanditState,
}

/// Random scene contexts: a generated clip and `n_objects` random objects each.
pub fn random_contexts(
    n: usize,
    kind: SceneKind,
    scene: &SceneConfig,
    n_g: usize,
    n_objects: usize,
    seed: u64,
) -> Result<Vec<ContextGrid>> {
    let estimator = LuminanceEstimator { n_g, ..LuminanceEstimator::default() };
    (0..n)
        .map(|i| {
            let mut rng = indexed_substream(seed, "context", i as u64);
            let grid = estimator.grid(&generate_clip(kind, scene, &mut rng)?)?;
            ContextGrid::new(grid, random_objects(n_g, n_objects, &mut rng)?)
        })
        .collect()
}

/// Trains the JOLI bandit under the joint reward and the LOO bandit with
/// spacing excluded, on the same contexts and arm stream.
pub fn train_session_bandits(
    contexts: &[ContextGrid],
    model: &RewardModel,
    arms_per_context: usize,
    seed: u64,
) -> Result<SessionBandits> {
    let joint = model.clone().with_factors(RewardFactors::JOINT);
    let loo = model.clone().with_factors(RewardFactors::LUMINANCE_ONLY);
    Ok(SessionBandits {
        joli: train_on_contexts(contexts, &joint, arms_per_context, DEFAULT_LAMBDA, &mut substream(seed, "bandit"))?,
        loo: train_on_contexts(contexts, &loo, arms_per_context, DEFAULT_LAMBDA, &mut substream(seed, "bandit"))?,
    })
}

pub const REFERENCE_TRIALS_PER_CLASS: usize = 80;
pub const REFERENCE_QUALITY: (f64, f64) = (0.2, 1.0);
pub const REFERENCE_EPOCHS: usize = 20;

/// Decoder trained on offline-length trials spanning the quality range the
/// session produces.
pub fn train_reference_decoder(synth: &SynthConfig, seed: u64) -> Result<(FuzzyDecoder, TrainReport)> {
    let data = synth_dataset(
        REFERENCE_TRIALS_PER_CLASS,
        REFERENCE_QUALITY,
        EpochWindow::OFFLINE.length_s,
        synth,
        &mut substream(seed, "reference-data"),
    )?;
    let config = DecoderConfig {
        epochs: REFERENCE_EPOCHS,
        seed,
        ..DecoderConfig::default()
    };
    train_decoder(&data, config)
}

/// Held-out accuracy of `decoder` on `per_class` trials per class at each
/// quality, using windows of `window_s` seconds.
pub fn measure_calibration(
    decoder: &dyn EpochDecoder,
    synth: &SynthConfig,
    qualities: &[f64],
    per_class: usize,
    window_s: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    qualities
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let mut rng = indexed_substream(seed, "calibration", i as u64);
            let test = synth_dataset(per_class, (q, q), window_s, synth, &mut rng)?;
            let mut correct = 0usize;
            for epoch in &test {
                if Some(decoder.decode(epoch)?) == epoch.label() {
                    correct += 1;
                }
            }
            Ok((q, correct as f64 / test.len() as f64))
        })
        .collect()
}

/// Records and the virtual duration of a simulated session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub records: Vec<TrialRecord>,
    pub duration_s: f64,
}

/// Layout chosen by `method` for one round's context.
pub fn layout_for(
    method: Method,
    bandits: &SessionBandits,
    context: &ContextGrid,
    model: &RewardModel,
    sampler: &SamplerConfig,
) -> Result<Layout> {
    match method {
        Method::Joli => {
            let joint = model.clone().with_factors(RewardFactors::JOINT);
            Ok(recommend(&bandits.joli, context, &joint, sampler)?.positions)
        }
        Method::Loo => Ok(loo_recommend(&bandits.loo, context, model, sampler)?.positions),
        Method::No => Ok(no_layout(context)),
    }
}

/// Synthesizer quality for stimulus `i` of `layout`: each factor's measured
/// accuracy is mapped back through the calibration and combined.
pub fn stimulus_quality(
    grid: &LuminanceGrid,
    layout: &Layout,
    i: usize,
    model: &RewardModel,
    synth: &SynthConfig,
) -> (f64, f64, f64) {
    let cell = layout.positions[i];
    let luminance = grid.get(cell.x, cell.y);
    let isd = layout.nearest_neighbor_distance(i) * model.config.degrees_per_cell;
    let reference = model.luminance.accuracy_range().1.max(model.isd.accuracy_range().1);
    let quality = synth.condition_quality(model.luminance.accuracy(luminance), model.isd.accuracy(isd), reference);
    (luminance, isd, quality)
}

/// Runs `config.rounds` rounds. Each round captures a scene, places six
/// objects and presents every target once per method, methods in random
/// order. The response to a given target in a given round is drawn from
/// the same random stream for every method, so methods differ only through
/// their layouts.
pub fn simulate_session(
    bandits: &SessionBandits,
    decoder: &dyn EpochDecoder,
    config: &SessionConfig,
) -> Result<SessionOutcome> {
    config.validate()?;
    let rate = config.synth.sample_rate;
    let estimator = LuminanceEstimator {
        n_g: config.n_g,
        ..LuminanceEstimator::default()
    };
    let mut buffer = RingBuffer::new(CHANNEL_NAMES.len(), config.buffer_capacity, rate)?;
    let mut order_rng = substream(config.seed, "method-order");
    let mut clock = 0.0;
    let mut trial_id = 0u64;
    let mut records = Vec::new();
    for round in 0..config.rounds {
        let mut scene_rng = indexed_substream(config.seed, "scene", round as u64);
        let grid = estimator.grid(&generate_clip(config.scene_kind, &config.scene, &mut scene_rng)?)?;
        let objects = random_objects(config.n_g, N_CLASSES, &mut scene_rng)?;
        let context = ContextGrid::new(grid, objects)?;
        let sampler = SamplerConfig {
            seed: config.sampler.seed ^ (round as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            ..config.sampler
        };
        let mut methods = config.methods.clone();
        methods.shuffle(&mut order_rng);
        for method in methods {
            let layout = layout_for(method, bandits, &context, &config.reward, &sampler);
            let mut targets: Vec<usize> = (0..N_CLASSES).collect();
            targets.shuffle(&mut order_rng);
            for target in targets {
                trial_id += 1;
                clock += config.phases.capture_s + config.phases.cue_s;
                let onset_s = clock;
                clock += config.phases.stimulus_s + config.phases.feedback_s;
                let layout = match &layout {
                    Ok(l) => l,
                    Err(e) => {
                        records.extend(config.windows_s.iter().map(|&w| TrialRecord {
                            trial_id,
                            round,
                            method,
                            target_class: target,
                            predicted_class: None,
                            layout: None,
                            window_s: w,
                            luminance: 0.0,
                            isd_degrees: 0.0,
                            quality: 0.0,
                            onset_s,
                            valid: false,
                            error: Some(e.to_string()),
                        }));
                        continue;
                    }
                };
                let (luminance, isd_degrees, quality) =
                    stimulus_quality(&context.grid, layout, target, &config.reward, &config.synth);
                let mut eeg_rng = indexed_substream(config.seed, "eeg", (round * N_CLASSES + target) as u64);
                let eeg = synth_trial(
                    StimulusSpec::for_class(target)?,
                    quality,
                    config.phases.stimulus_s,
                    &config.synth,
                    &mut eeg_rng,
                )?;
                let start = buffer.counter();
                stream_into(&mut buffer, &eeg, config.chunk_samples)?;
                for &w in &config.windows_s {
                    let decoded = buffer
                        .extract_epoch(start, 0.0, w)
                        .map(|e| e.with_label(Some(target)))
                        .and_then(|e| decoder.decode(&e));
                    let (predicted_class, valid, error) = match decoded {
                        Ok(k) => (Some(k), true, None),
                        Err(e) => (None, false, Some(e.to_string())),
                    };
                    records.push(TrialRecord {
                        trial_id,
                        round,
                        method,
                        target_class: target,
                        predicted_class,
                        layout: Some(layout.clone()),
                        window_s: w,
                        luminance,
                        isd_degrees,
                        quality,
                        onset_s,
                        valid,
                        error,
                    });
                }
            }
        }
    }
    Ok(SessionOutcome {
        records,
        duration_s: clock,
    })
}

fn stream_into(buffer: &mut RingBuffer, epoch: &EegEpoch, chunk: usize) -> Result<()> {
    let mut start = 0;
    while start < epoch.samples() {
        let len = chunk.min(epoch.samples() - start);
        buffer.append_chunk(&epoch.slice(start, len)?)?;
        start += len;
    }
    Ok(())
}

/// One JSON object per line.
pub fn write_trial_log<W: Write>(mut writer: W, records: &[TrialRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Per-trial accuracy difference of `a` over `b`, paired on round and
/// target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub pairs: usize,
    pub mean_difference: f64,
    pub std_error: f64,
}

impl PairedComparison {
    /// Normal-approximation z score of the mean difference.
    pub fn z(&self) -> f64 {
        if self.std_error > 0.0 {
            self.mean_difference / self.std_error
        } else if self.mean_difference == 0.0 {
            0.0
        } else {
            self.mean_difference.signum() * f64::INFINITY
        }
    }
}

pub fn paired_comparison(records: &[TrialRecord], a: Method, b: Method, window_s: f64) -> PairedComparison {
    let pick = |m: Method| {
        records
            .iter()
            .filter(move |r| r.method == m && r.window_s == window_s && r.valid)
            .map(|r| ((r.round, r.target_class), r.is_correct()))
    };
    let bs: std::collections::HashMap<_, _> = pick(b).collect();
    let diffs: Vec<f64> = pick(a)
        .filter_map(|(k, ca)| bs.get(&k).map(|&cb| f64::from(u8::from(ca)) - f64::from(u8::from(cb))))
        .collect();
    let n = diffs.len();
    if n == 0 {
        return PairedComparison {
            pairs: 0,
            mean_difference: 0.0,
            std_error: 0.0,
        };
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    PairedComparison {
        pairs: n,
        mean_difference: mean,
        std_error: (var / n as f64).sqrt(),
    }
}

/// Cells occupied by the objects of the records' layouts, for inspection.
pub fn layout_cells(record: &TrialRecord) -> Vec<Cell> {
    record.layout.as_ref().map(|l| l.positions.clone()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::protocol::PerfectDecoder;

    fn small_config(rounds: usize, seed: u64) -> SessionConfig {
        SessionConfig {
            rounds,
            seed,
            scene: SceneConfig {
                width: 48,
                height: 27,
                frames: 3,
            },
            sampler: SamplerConfig {
                batch_size: 50,
                max_batches: 2,
                ..SamplerConfig::default()
            },
            ..SessionConfig::default()
        }
    }

    fn bandits(seed: u64) -> SessionBandits {
        let cfg = small_config(1, seed);
        let contexts = random_contexts(8, SceneKind::Mixed, &cfg.scene, 12, 6, seed).unwrap();
        train_session_bandits(&contexts, &cfg.reward, 20, seed).unwrap()
    }

    #[test]
    fn method_parsing_and_display() {
        assert_eq!("JOLI".parse::<Method>().unwrap(), Method::Joli);
        assert_eq!("loo".parse::<Method>().unwrap(), Method::Loo);
        assert_eq!("No".parse::<Method>().unwrap(), Method::No);
        assert!("best".parse::<Method>().is_err());
        assert_eq!(Method::Loo.to_string(), "LOO");
        assert_eq!(serde_json::to_string(&Method::Joli).unwrap(), "\"joli\"");
    }

    #[test]
    fn phases_total_eight_seconds() {
        assert_eq!(TrialPhases::default().total(), 8.0);
    }

    #[test]
    fn one_round_presents_each_target_once_per_method() {
        let out = simulate_session(&bandits(1), &PerfectDecoder, &small_config(1, 1)).unwrap();
        assert_eq!(out.records.len(), 18);
        for m in Method::ALL {
            let mut targets: Vec<usize> = out.records.iter().filter(|r| r.method == m).map(|r| r.target_class).collect();
            targets.sort_unstable();
            assert_eq!(targets, (0..6).collect::<Vec<_>>());
        }
        assert_eq!(out.duration_s, 18.0 * 8.0);
    }

    #[test]
    fn perfect_decoder_is_always_right() {
        let out = simulate_session(&bandits(2), &PerfectDecoder, &small_config(2, 2)).unwrap();
        assert!(out.records.iter().all(|r| r.valid && r.is_correct()));
    }

    #[test]
    fn no_method_places_stimuli_on_objects() {
        let cfg = SessionConfig {
            methods: vec![Method::No],
            ..small_config(1, 3)
        };
        let out = simulate_session(&bandits(3), &PerfectDecoder, &cfg).unwrap();
        let mut scene_rng = indexed_substream(3, "scene", 0);
        generate_clip(cfg.scene_kind, &cfg.scene, &mut scene_rng).unwrap();
        let objects = random_objects(12, 6, &mut scene_rng).unwrap();
        for r in &out.records {
            assert_eq!(layout_cells(r), objects);
        }
    }

    #[test]
    fn sessions_are_reproducible() {
        let b = bandits(4);
        let cfg = SessionConfig {
            windows_s: vec![1.0, 3.0],
            ..small_config(2, 4)
        };
        let a = simulate_session(&b, &PerfectDecoder, &cfg).unwrap();
        let c = simulate_session(&b, &PerfectDecoder, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a.records).unwrap(), serde_json::to_string(&c.records).unwrap());
        assert_eq!(a.records.len(), 2 * 18 * 2);
    }

    #[test]
    fn method_order_is_roughly_uniform() {
        let mut rng = substream(9, "method-order");
        let mut counts = std::collections::HashMap::new();
        let n = 6000;
        for _ in 0..n {
            let mut m = Method::ALL.to_vec();
            m.shuffle(&mut rng);
            *counts.entry(m).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = n as f64 / 6.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9th percentile of chi-square with 5 degrees of freedom.
        assert!(chi2 < 20.52, "chi2 {chi2}");
    }

    #[test]
    fn quality_tracks_luminance_and_spacing() {
        let model = RewardModel::default();
        let synth = SynthConfig::default();
        let dark = LuminanceGrid::uniform(12, 0.1).unwrap();
        let bright = LuminanceGrid::uniform(12, 0.9).unwrap();
        let wide = Layout::new((0..6).map(|i| Cell::new(2 * i, 2 * i)).collect());
        let tight = Layout::new((0..6).map(|i| Cell::new(i, 0)).collect());
        let (_, _, q_best) = stimulus_quality(&dark, &wide, 0, &model, &synth);
        let (_, _, q_bright) = stimulus_quality(&bright, &wide, 0, &model, &synth);
        let (_, _, q_tight) = stimulus_quality(&dark, &tight, 0, &model, &synth);
        assert!(q_best > q_bright && q_best > q_tight);
        assert!((0.0..=1.0).contains(&q_bright) && (0.0..=1.0).contains(&q_tight));
    }

    #[test]
    fn invalid_window_is_rejected() {
        let cfg = SessionConfig {
            windows_s: vec![5.0],
            ..small_config(1, 0)
        };
        assert!(simulate_session(&bandits(0), &PerfectDecoder, &cfg).is_err());
    }

    #[test]
    fn paired_comparison_counts_matched_trials() {
        let out = simulate_session(&bandits(5), &PerfectDecoder, &small_config(1, 5)).unwrap();
        let cmp = paired_comparison(&out.records, Method::Joli, Method::No, 3.0);
        assert_eq!(cmp.pairs, 6);
        assert_eq!(cmp.mean_difference, 0.0);
        assert_eq!(cmp.z(), 0.0);
    }

    #[test]
    fn trial_log_is_one_json_object_per_line() {
        let out = simulate_session(&bandits(6), &PerfectDecoder, &small_config(1, 6)).unwrap();
        let mut buf = Vec::new();
        write_trial_log(&mut buf, &out.records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), out.records.len());
        let back: TrialRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(back, out.records[0]);
    }
}
