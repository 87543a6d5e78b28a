//! Scene-aware stimulus layout optimization for SSVEP interfaces.
//!
//! The crate covers the whole loop: perceptual luminance estimation from RGB
//! frames ([`luminance`]), reward construction from measured accuracy curves
//! ([`reward`]), a linear contextual bandit over stimulus layouts
//! ([`bandit`], [`recommend`]), a fuzzy-attention SSVEP decoder with a
//! synthetic signal generator ([`decoder`]), and a simulated online session
//! with its streaming buffer, event protocol and metrics ([`session`]).

pub mod bandit;
pub mod decoder;
pub mod error;
pub mod imageio;
pub mod luminance;
pub mod recommend;
pub mod reward;
pub mod rng;
pub mod scene;
pub mod session;

pub use bandit::{build_features, BanditState, Cell, ContextGrid, FeatureVector, Layout, Triplet};
pub use decoder::{DecoderConfig, EegEpoch, FuzzyDecoder, Rotation, StimulusSpec};
pub use error::{Error, Result};
pub use luminance::{ClipLuminance, LuminanceEstimator, LuminanceGrid, LuminanceMap, RgbFrame};
pub use recommend::{loo_recommend, no_layout, recommend, Recommendation, SamplerConfig};
pub use reward::{RewardConfig, RewardCurve, RewardFactors, RewardModel, StimulusAssessment};
pub use session::{itr, Method, SessionMetrics, TrialRecord};
