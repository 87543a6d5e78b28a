use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::anyhow;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use scenelayout::bandit::{build_features, BanditState, Cell, ContextGrid};
use scenelayout::decoder::{
    epoch_spectrum, firing_strength_spectrum, synth_dataset, synth_trial, train_decoder as fit_decoder, DecoderConfig, EegEpoch,
    FuzzyDecoder, StimulusSpec, SynthConfig, N_CLASSES,
};
use scenelayout::imageio::{encode_layout_overlay, grid_to_json, read_ppm, read_raw_frames, write_luminance_pgm};
use scenelayout::luminance::{LuminanceEstimator, LuminanceGrid, RgbFrame};
use scenelayout::recommend::{feasible_cells, loo_recommend, no_layout, random_layout, recommend as joli_recommend, SamplerConfig};
use scenelayout::reward::{RewardConfig, RewardFactors, RewardModel};
use scenelayout::rng::{indexed_substream, substream};
use scenelayout::scene::{random_objects, SceneConfig, SceneKind};
use scenelayout::session::{
    measure_calibration, random_contexts, simulate_session, train_reference_decoder, train_session_bandits,
    write_trial_log, EpochDecoder, EpochWindow, EventClient, EventServer, Method, PerfectDecoder, RingBuffer,
    SessionConfig, SessionMetrics, SharedRingBuffer,
};

use crate::{Common, MethodArg, RewardArg, SceneArg, WindowArg};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_STATE: u8 = 3;
pub const EXIT_PROTOCOL: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<scenelayout::Error> for Failure {
    fn from(error: scenelayout::Error) -> Self {
        let code = match error {
            scenelayout::Error::Protocol(_) => EXIT_PROTOCOL,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            error: error.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(error: std::io::Error) -> Self {
        Self {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

trait OrExit<T> {
    fn or_exit(self, code: u8, what: impl Display) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: u8, what: impl Display) -> CmdResult<T> {
        self.map_err(|e| Failure {
            code,
            error: e.into().context(what.to_string()),
        })
    }
}

fn input_error(message: impl Display) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: anyhow!("{message}"),
    }
}

fn method(arg: MethodArg) -> Method {
    match arg {
        MethodArg::Joli => Method::Joli,
        MethodArg::Loo => Method::Loo,
        MethodArg::No => Method::No,
    }
}

fn reward_model(c: &Common) -> CmdResult<RewardModel> {
    let model = RewardModel {
        config: RewardConfig {
            alpha: c.alpha,
            ..RewardConfig::default()
        },
        ..RewardModel::default()
    };
    model.config.validate()?;
    Ok(model)
}

fn sampler(c: &Common) -> SamplerConfig {
    SamplerConfig {
        batch_size: c.batch,
        threshold: c.threshold,
        seed: c.seed,
        ..SamplerConfig::default()
    }
}

fn ensure_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).or_exit(EXIT_INPUT, format_args!("cannot create {}", dir.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    fs::write(path, bytes).or_exit(EXIT_INPUT, format_args!("cannot write {}", path.display()))
}

fn sorted_files(dir: &Path, extension: &str) -> CmdResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .or_exit(EXIT_INPUT, format_args!("cannot read directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case(extension)))
        .collect();
    files.sort();
    Ok(files)
}

/// A PPM file, a raw RGB24 dump (with a frame size), or a directory of PPM
/// frames.
fn read_frames(input: &Path, raw_size: Option<(usize, usize)>) -> CmdResult<Vec<RgbFrame>> {
    let what = || format!("cannot read frames from {}", input.display());
    if input.is_dir() {
        let files = sorted_files(input, "ppm")?;
        if files.is_empty() {
            return Err(input_error(format!("no .ppm frames in {}", input.display())));
        }
        return files.iter().map(|f| read_ppm(f).or_exit(EXIT_INPUT, what())).collect();
    }
    match raw_size {
        Some((w, h)) => read_raw_frames(input, w, h).or_exit(EXIT_INPUT, what()),
        None => Ok(vec![read_ppm(input).or_exit(EXIT_INPUT, what())?]),
    }
}

fn estimator(c: &Common) -> LuminanceEstimator {
    LuminanceEstimator {
        n_g: c.grid,
        ..LuminanceEstimator::default()
    }
}

pub fn luminance(c: &Common, input: &Path, raw_size: Option<(usize, usize)>, out: &Path) -> CmdResult {
    let frames = read_frames(input, raw_size)?;
    let est = estimator(c);
    let clip = est.clip(&frames)?;
    let grid = scenelayout::luminance::discretize(&clip.map, est.n_g)?;
    ensure_dir(out)?;
    write_file(&out.join("grid.json"), grid_to_json(&grid) + "\n")?;
    write_luminance_pgm(&out.join("luminance.pgm"), &clip.map)?;
    eprintln!(
        "{} frame(s), {}x{} grid written to {}",
        clip.frame_count,
        grid.side(),
        grid.side(),
        out.display()
    );
    Ok(())
}

fn scene_contexts(c: &Common, dir: &Path) -> CmdResult<Vec<ContextGrid>> {
    let files = sorted_files(dir, "ppm")?;
    if files.is_empty() {
        return Err(input_error(format!("no .ppm scenes in {}", dir.display())));
    }
    let est = estimator(c);
    files
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let frame = read_ppm(f).or_exit(EXIT_INPUT, format_args!("cannot read {}", f.display()))?;
            let grid = est.grid(&[frame])?;
            let objects = random_objects(c.grid, N_CLASSES, &mut indexed_substream(c.seed, "scene-objects", i as u64))?;
            Ok(ContextGrid::new(grid, objects)?)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn train_bandit(
    c: &Common,
    synthetic: Option<usize>,
    scenes: Option<&Path>,
    arms: usize,
    reward: RewardArg,
    method_arg: MethodArg,
    log: Option<PathBuf>,
    out: &Path,
) -> CmdResult {
    let factors = match method(method_arg) {
        Method::Joli => RewardFactors::JOINT,
        Method::Loo => RewardFactors::LUMINANCE_ONLY,
        Method::No => return Err(input_error("method `no` has no bandit to train")),
    };
    let model = reward_model(c)?.with_factors(factors);
    if arms == 0 {
        return Err(input_error("--arms must be at least 1"));
    }
    let (contexts, samples) = match (synthetic, scenes) {
        (Some(0), _) => return Err(input_error("--synthetic needs at least one sample")),
        (Some(n), _) => {
            let count = n.div_ceil(arms);
            (
                random_contexts(count, SceneKind::Mixed, &SceneConfig::default(), c.grid, N_CLASSES, c.seed)?,
                n,
            )
        }
        (None, Some(dir)) => {
            let contexts = scene_contexts(c, dir)?;
            let n = contexts.len() * arms;
            (contexts, n)
        }
        (None, None) => return Err(input_error("give --synthetic <n> or --scenes <dir>")),
    };

    let dim = 3 * N_CLASSES;
    let mut rng = substream(c.seed, "train-bandit");
    let theta_star: Vec<f64> = {
        let mut r = substream(c.seed, "theta-star");
        (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()
    };
    let noise = Normal::new(0.0, 0.05).expect("valid normal");
    let mut state = BanditState::new(dim, c.lambda)?;
    let mut consumed = 0;
    let mut squared_residual = 0.0;
    'contexts: for ctx in &contexts {
        let feasible = feasible_cells(ctx, model.config.d_max);
        for _ in 0..arms {
            if consumed == samples {
                break 'contexts;
            }
            let arm = random_layout(&feasible, &mut rng)?;
            let x = build_features(ctx, &arm, &model)?;
            let r = match reward {
                RewardArg::Layout => model.reward_from_components(&x.triples()),
                RewardArg::Linear => {
                    x.as_slice().iter().zip(&theta_star).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng)
                }
            };
            squared_residual += (state.predict_reward(x.as_slice())? - r).powi(2);
            state.update(x.as_slice(), r)?;
            consumed += 1;
        }
    }

    let mut lines = vec![
        format!("samples {consumed}"),
        format!("contexts {}", contexts.len()),
        format!("reward {}", if reward == RewardArg::Layout { "layout" } else { "linear" }),
        format!("prequential_rmse {:.6}", (squared_residual / consumed as f64).sqrt()),
    ];
    if reward == RewardArg::Linear {
        let err = state
            .theta()
            .iter()
            .zip(&theta_star)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        lines.push(format!("theta_error {err:.6}"));
    }
    let text = lines.join("\n") + "\n";
    write_file(out, state.to_json()? + "\n")?;
    let log = log.unwrap_or_else(|| out.with_extension("log"));
    write_file(&log, &text)?;
    eprint!("{text}");
    Ok(())
}

fn parse_objects(text: &str, n_g: usize) -> CmdResult<Vec<Cell>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| input_error(format!("object `{pair}` is not `x,y`")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| input_error(format!("bad coordinate `{v}`")))
            };
            let cell = Cell::new(parse(x)?, parse(y)?);
            if cell.x >= n_g || cell.y >= n_g {
                return Err(input_error(format!("object ({}, {}) lies outside the {n_g}x{n_g} grid", cell.x, cell.y)));
            }
            Ok(cell)
        })
        .collect()
}

fn load_state(path: &Path) -> CmdResult<BanditState> {
    let text = fs::read_to_string(path).or_exit(EXIT_INPUT, format_args!("cannot read {}", path.display()))?;
    BanditState::from_json(&text).or_exit(EXIT_STATE, format_args!("invalid bandit state {}", path.display()))
}

fn cells_json(cells: &[Cell]) -> serde_json::Value {
    cells.iter().map(|c| serde_json::json!([c.x, c.y])).collect()
}

pub fn recommend(
    c: &Common,
    state: Option<&Path>,
    scene: &Path,
    objects: Option<&str>,
    method_arg: MethodArg,
    out: &Path,
) -> CmdResult {
    let frames = read_frames(scene, None)?;
    let grid: LuminanceGrid = estimator(c).grid(&frames)?;
    let objects = match objects {
        Some(text) => parse_objects(text, c.grid)?,
        None => random_objects(c.grid, N_CLASSES, &mut substream(c.seed, "objects"))?,
    };
    let context = ContextGrid::new(grid.clone(), objects.clone())?;
    let model = RewardModel {
        config: RewardConfig {
            n_stimuli: objects.len(),
            ..reward_model(c)?.config
        },
        ..reward_model(c)?
    };
    let m = method(method_arg);
    let (layout, predicted, below, batches) = match m {
        Method::No => (no_layout(&context), None, false, 0),
        Method::Joli | Method::Loo => {
            let path = state.ok_or_else(|| input_error("--state is required for joli and loo"))?;
            let bandit = load_state(path)?;
            if bandit.dim() != 3 * objects.len() {
                return Err(Failure {
                    code: EXIT_STATE,
                    error: anyhow!(
                        "state has {} features but {} objects need {}",
                        bandit.dim(),
                        objects.len(),
                        3 * objects.len()
                    ),
                });
            }
            let bandit = {
                let mut b = bandit;
                b.set_lambda(c.lambda)?;
                b
            };
            let rec = if m == Method::Joli {
                joli_recommend(&bandit, &context, &model, &sampler(c))?
            } else {
                loo_recommend(&bandit, &context, &model, &sampler(c))?
            };
            (rec.positions, Some(rec.predicted_reward), rec.below_threshold, rec.batches_used)
        }
    };
    let doc = serde_json::json!({
        "method": m,
        "objects": cells_json(&objects),
        "positions": cells_json(&layout.positions),
        "predicted_reward": predicted,
        "below_threshold": below,
        "batches_used": batches,
    });
    ensure_dir(out)?;
    write_file(&out.join("layout.json"), serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
    write_file(&out.join("overlay.pgm"), encode_layout_overlay(&grid, &objects, &layout, 24))?;
    println!("{}", serde_json::to_string(&doc).expect("json"));
    Ok(())
}

fn load_decoder(spec: &str) -> CmdResult<Arc<dyn EpochDecoder>> {
    if spec == "perfect" {
        return Ok(Arc::new(PerfectDecoder));
    }
    load_model(Path::new(spec)).map(|m| Arc::new(m) as Arc<dyn EpochDecoder>)
}

fn load_model(path: &Path) -> CmdResult<FuzzyDecoder> {
    if !path.exists() {
        return Err(input_error(format!("model file {} does not exist", path.display())));
    }
    FuzzyDecoder::load(path).or_exit(EXIT_STATE, format_args!("invalid model {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    c: &Common,
    rounds: usize,
    methods: &[MethodArg],
    windows: Vec<f64>,
    decoder: Option<&str>,
    scene_kind: SceneArg,
    contexts: usize,
    arms: usize,
    out: &Path,
) -> CmdResult {
    let scene_kind = match scene_kind {
        SceneArg::Mixed => SceneKind::Mixed,
        SceneArg::UniformDark => SceneKind::UniformDark,
        SceneArg::HalfDarkBright => SceneKind::HalfDarkBright,
    };
    let config = SessionConfig {
        rounds,
        seed: c.seed,
        methods: if methods.is_empty() {
            Method::ALL.to_vec()
        } else {
            methods.iter().map(|&m| method(m)).collect()
        },
        windows_s: windows,
        scene_kind,
        n_g: c.grid,
        sampler: sampler(c),
        reward: reward_model(c)?,
        ..SessionConfig::default()
    };
    config.validate()?;
    if contexts == 0 || arms == 0 {
        return Err(input_error("--contexts and --arms must be positive"));
    }
    let decoder: Arc<dyn EpochDecoder> = match decoder {
        Some(spec) => load_decoder(spec)?,
        None => {
            eprintln!("training reference decoder");
            Arc::new(train_reference_decoder(&config.synth, c.seed)?.0)
        }
    };
    let training = random_contexts(contexts, SceneKind::Mixed, &config.scene, c.grid, N_CLASSES, c.seed)?;
    let mut bandits = train_session_bandits(&training, &config.reward, arms, c.seed)?;
    bandits.joli.set_lambda(c.lambda)?;
    bandits.loo.set_lambda(c.lambda)?;
    let outcome = simulate_session(&bandits, decoder.as_ref(), &config)?;
    let metrics = SessionMetrics::from_records(&outcome.records, N_CLASSES)?;
    ensure_dir(out)?;
    let mut table = Vec::new();
    metrics.write_csv(&mut table)?;
    write_file(&out.join("table.csv"), &table)?;
    let mut log = Vec::new();
    write_trial_log(&mut log, &outcome.records)?;
    write_file(&out.join("trials.jsonl"), &log)?;
    std::io::stdout().write_all(&table)?;
    Ok(())
}

fn check_quality_range(range: (f64, f64)) -> CmdResult {
    let (lo, hi) = range;
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(input_error(format!("quality range {lo}..{hi} must lie within [0, 1]")));
    }
    Ok(())
}

pub fn synth(c: &Common, per_class: usize, quality: (f64, f64), duration: f64, out: &Path) -> CmdResult {
    check_quality_range(quality)?;
    let data = synth_dataset(per_class, quality, duration, &SynthConfig::default(), &mut substream(c.seed, "synth"))?;
    ensure_dir(out)?;
    for (i, epoch) in data.iter().enumerate() {
        epoch.write(out.join(format!("trial_{i:05}.eeg")))?;
    }
    eprintln!("{} epochs written to {}", data.len(), out.display());
    Ok(())
}

pub fn train_decoder(
    c: &Common,
    data: Option<&Path>,
    per_class: usize,
    quality: (f64, f64),
    epochs: usize,
    out: &Path,
) -> CmdResult {
    let dataset = match data {
        Some(dir) => sorted_files(dir, "eeg")?
            .iter()
            .map(|f| EegEpoch::read(f).or_exit(EXIT_INPUT, format_args!("cannot read epoch {}", f.display())))
            .collect::<CmdResult<Vec<_>>>()?,
        None => {
            check_quality_range(quality)?;
            synth_dataset(
                per_class,
                quality,
                EpochWindow::OFFLINE.length_s,
                &SynthConfig::default(),
                &mut substream(c.seed, "train-decoder"),
            )?
        }
    };
    if dataset.is_empty() {
        return Err(input_error("training dataset is empty"));
    }
    let config = DecoderConfig {
        epochs,
        seed: c.seed,
        ..DecoderConfig::default()
    };
    let (model, report) = fit_decoder(&dataset, config)?;
    model.save(out).or_exit(EXIT_INPUT, format_args!("cannot write {}", out.display()))?;
    for (i, loss) in report.losses.iter().enumerate() {
        eprintln!("epoch {:>3} loss {loss:.4}", i + 1);
    }
    println!("trials {} train_accuracy {:.4}", dataset.len(), report.train_accuracy);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn spectrum(
    c: &Common,
    input: Option<&Path>,
    class: usize,
    quality: f64,
    duration: f64,
    model: Option<&Path>,
    band: usize,
    out: &Path,
) -> CmdResult {
    let epoch = match input {
        Some(path) => EegEpoch::read(path).or_exit(EXIT_INPUT, format_args!("cannot read epoch {}", path.display()))?,
        None => synth_trial(
            StimulusSpec::for_class(class)?,
            quality,
            duration,
            &SynthConfig::default(),
            &mut substream(c.seed, "spectrum"),
        )?,
    };
    let spectrum = match model {
        Some(path) => {
            if band > 1 {
                return Err(input_error(format!("band must be 0 or 1, got {band}")));
            }
            let model = load_model(path)?;
            firing_strength_spectrum(&model.temporal_strengths(&epoch, band)?, model.model_rate())?
        }
        None => epoch_spectrum(&epoch)?,
    };
    let mut csv = Vec::new();
    spectrum.write_csv(&mut csv)?;
    write_file(out, &csv)?;
    let peaks: Vec<String> = spectrum
        .top_bins(3, true)
        .iter()
        .map(|&b| format!("{:.2}", spectrum.frequencies[b]))
        .collect();
    println!("peaks_hz {}", peaks.join(" "));
    Ok(())
}

pub fn calibrate(c: &Common, decoder: &Path, per_class: usize, window: f64, out: &Path) -> CmdResult {
    let model = load_model(decoder)?;
    if per_class == 0 {
        return Err(input_error("--per-class must be positive"));
    }
    let qualities: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let table = measure_calibration(&model, &SynthConfig::default(), &qualities, per_class, window, c.seed)?;
    let mut text = String::from("quality,accuracy\n");
    for (q, a) in &table {
        text.push_str(&format!("{q:.2},{a:.4}\n"));
    }
    write_file(out, &text)?;
    print!("{text}");
    Ok(())
}

pub fn loopback(c: &Common, trials: usize, decoder: &str, window: WindowArg, quality: f64) -> CmdResult {
    if !(0.0..=1.0).contains(&quality) {
        return Err(input_error(format!("quality must lie in [0, 1], got {quality}")));
    }
    let decoder = load_decoder(decoder)?;
    let window = match window {
        WindowArg::Online => EpochWindow::ONLINE,
        WindowArg::Offline => EpochWindow::OFFLINE,
    };
    let synth = SynthConfig::default();
    let buffer = SharedRingBuffer::new(RingBuffer::new(12, 4000, synth.sample_rate)?);
    let server = EventServer::bind("127.0.0.1:0", buffer.clone(), decoder, window)?;
    let mut client = EventClient::connect(server.local_addr())?;
    let mut correct = 0;
    for id in 0..trials as u64 {
        let target = (id % N_CLASSES as u64) as usize;
        let mut rng = indexed_substream(c.seed, "loopback", id);
        let epoch = synth_trial(StimulusSpec::for_class(target)?, quality, 4.0, &synth, &mut rng)?;
        let start = buffer.counter();
        let mut offset = 0;
        while offset < epoch.samples() {
            let len = 50.min(epoch.samples() - offset);
            buffer.append_chunk(&epoch.slice(offset, len)?)?;
            offset += len;
        }
        let predicted = client.run_trial(id, target, start, buffer.counter())?;
        if predicted == target {
            correct += 1;
        }
    }
    println!("trials {trials} correct {correct}");
    Ok(())
}
