use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use commands::Failure;

/// Scene-aware SSVEP stimulus layout: luminance, bandit, decoder and
/// simulated sessions.
#[derive(Debug, Parser)]
#[command(name = "scenelayout", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Root seed; every module draws from named sub-streams of it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Grid side length.
    #[arg(long, global = true, default_value_t = 12)]
    pub grid: usize,
    /// Weight of the mean term in the layout reward.
    #[arg(long, global = true, default_value_t = 0.25)]
    pub alpha: f64,
    /// Exploration weight of the UCB score.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub lambda: f64,
    /// Candidates per sampling batch.
    #[arg(long, global = true, default_value_t = 2000)]
    pub batch: usize,
    /// Predicted reward at which sampling stops early.
    #[arg(long, global = true, default_value_t = 0.8)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Joli,
    Loo,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RewardArg {
    /// Blended layout reward of the sampled arm.
    Layout,
    /// Linear reward from a hidden parameter vector plus Gaussian noise.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneArg {
    Mixed,
    UniformDark,
    HalfDarkBright,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    /// 3.0 s from the start event.
    Online,
    /// 3.86 s starting 0.14 s after the start event.
    Offline,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Luminance grid and heatmap of an image or frame sequence.
    Luminance {
        /// PPM file, raw RGB24 frame file, or directory of PPM frames.
        input: PathBuf,
        /// Frame width for raw input.
        #[arg(long)]
        width: Option<usize>,
        /// Frame height for raw input.
        #[arg(long)]
        height: Option<usize>,
        /// Output directory for grid.json and luminance.pgm.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Trains a bandit and writes its state.
    TrainBandit {
        /// Number of samples drawn over generated scenes.
        #[arg(long, conflicts_with = "scenes")]
        synthetic: Option<usize>,
        /// Directory of PPM scenes, one context each.
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Random arms per context.
        #[arg(long, default_value_t = 100)]
        arms: usize,
        #[arg(long, value_enum, default_value_t = RewardArg::Layout)]
        reward: RewardArg,
        /// Feature set: joli uses all factors, loo drops spacing.
        #[arg(long, value_enum, default_value_t = MethodArg::Joli)]
        method: MethodArg,
        /// Training log; defaults to the state path with a .log extension.
        #[arg(long)]
        log: Option<PathBuf>,
        /// State file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recommends a layout for one scene.
    Recommend {
        /// Bandit state written by train-bandit.
        #[arg(long)]
        state: Option<PathBuf>,
        /// PPM file or directory of PPM frames.
        #[arg(long)]
        scene: PathBuf,
        /// Object cells as `x,y;x,y;...`; random when omitted.
        #[arg(long)]
        objects: Option<String>,
        #[arg(long, value_enum, default_value_t = MethodArg::Joli)]
        method: MethodArg,
        /// Output directory for layout.json and overlay.pgm.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Simulates an online session and writes the result table.
    Simulate {
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        /// Methods to compare; all three when omitted.
        #[arg(long, value_enum)]
        method: Vec<MethodArg>,
        /// Decode windows in seconds.
        #[arg(long, default_value = "3.0")]
        window: Vec<f64>,
        /// `perfect`, or a model file; a reference decoder is trained when omitted.
        #[arg(long)]
        decoder: Option<String>,
        #[arg(long, value_enum, default_value_t = SceneArg::Mixed)]
        scene_kind: SceneArg,
        /// Training contexts per bandit.
        #[arg(long, default_value_t = 100)]
        contexts: usize,
        /// Random arms per training context.
        #[arg(long, default_value_t = 100)]
        arms: usize,
        /// Output directory for table.csv and trials.jsonl.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Writes a synthetic labelled dataset of epoch files.
    Synth {
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long, default_value_t = 0.2)]
        quality_min: f64,
        #[arg(long, default_value_t = 1.0)]
        quality_max: f64,
        /// Epoch length in seconds.
        #[arg(long, default_value_t = 3.86)]
        duration: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the decoder and writes the model.
    TrainDecoder {
        /// Directory of epoch files; synthesized when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 80)]
        per_class: usize,
        #[arg(long, default_value_t = 0.2)]
        quality_min: f64,
        #[arg(long, default_value_t = 1.0)]
        quality_max: f64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Amplitude spectrum of an epoch, or the firing-strength spectrum of a model.
    Spectrum {
        /// Epoch file; a synthetic trial of `--class` is used when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        class: usize,
        #[arg(long, default_value_t = 1.0)]
        quality: f64,
        #[arg(long, default_value_t = 4.0)]
        duration: f64,
        /// Model whose temporal firing strengths are analysed.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Band index for the firing-strength spectrum.
        #[arg(long, default_value_t = 0)]
        band: usize,
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Measures decoder accuracy against response quality.
    Calibrate {
        /// Model file.
        #[arg(long)]
        decoder: PathBuf,
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        /// Decode window in seconds.
        #[arg(long, default_value_t = 3.0)]
        window: f64,
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs trials through the event protocol over a local socket.
    Loopback {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// `perfect` or a model file.
        #[arg(long, default_value = "perfect")]
        decoder: String,
        #[arg(long, value_enum, default_value_t = WindowArg::Online)]
        window: WindowArg,
        #[arg(long, default_value_t = 1.0)]
        quality: f64,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let c = &cli.common;
    match cli.command {
        Command::Luminance { input, width, height, out } => commands::luminance(c, &input, width.zip(height), &out),
        Command::TrainBandit {
            synthetic,
            scenes,
            arms,
            reward,
            method,
            log,
            out,
        } => commands::train_bandit(c, synthetic, scenes.as_deref(), arms, reward, method, log, &out),
        Command::Recommend {
            state,
            scene,
            objects,
            method,
            out,
        } => commands::recommend(c, state.as_deref(), &scene, objects.as_deref(), method, &out),
        Command::Simulate {
            rounds,
            method,
            window,
            decoder,
            scene_kind,
            contexts,
            arms,
            out,
        } => commands::simulate(c, rounds, &method, window, decoder.as_deref(), scene_kind, contexts, arms, &out),
        Command::Synth {
            per_class,
            quality_min,
            quality_max,
            duration,
            out,
        } => commands::synth(c, per_class, (quality_min, quality_max), duration, &out),
        Command::TrainDecoder {
            data,
            per_class,
            quality_min,
            quality_max,
            epochs,
            out,
        } => commands::train_decoder(c, data.as_deref(), per_class, (quality_min, quality_max), epochs, &out),
        Command::Spectrum {
            input,
            class,
            quality,
            duration,
            model,
            band,
            out,
        } => commands::spectrum(c, input.as_deref(), class, quality, duration, model.as_deref(), band, &out),
        Command::Calibrate {
            decoder,
            per_class,
            window,
            out,
        } => commands::calibrate(c, &decoder, per_class, window, &out),
        Command::Loopback {
            trials,
            decoder,
            window,
            quality,
        } => commands::loopback(c, trials, &decoder, window, quality),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
