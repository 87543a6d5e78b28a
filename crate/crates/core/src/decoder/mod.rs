//! Dual-band fuzzy-attention SSVEP decoder, signal synthesis and spectra.

pub mod epoch;
pub mod fir;
pub mod fuzzy;
pub mod model;
pub mod spectrum;
pub mod synth;

pub use epoch::{EegEpoch, CHANNEL_NAMES, DEFAULT_SAMPLE_RATE, LEFT_CHANNEL, RIGHT_CHANNEL};
pub use fir::{bandpass, bandpass_decimate, Band, BandpassFilter};
pub use fuzzy::{sal_forward, tal_forward, FuzzyLayer, FuzzyRule};
pub use model::{argmax, train_decoder, DecoderConfig, DecoderGrad, FuzzyDecoder, Prepared, TrainReport};
pub use spectrum::{amplitude_spectrum, epoch_spectrum, firing_strength_spectrum, Spectrum};
pub use synth::{synth_dataset, synth_trial, Rotation, StimulusSpec, SynthConfig, FREQUENCIES, N_CLASSES};
