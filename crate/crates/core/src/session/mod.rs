//! Simulated online sessions: streaming buffer, event protocol, trial
//! simulation and metrics.

pub mod metrics;
pub mod protocol;
pub mod ring;
pub mod sim;

pub use metrics::{decision_time, itr, MethodMetrics, SessionMetrics, ATTENTION_SHIFT_S};
pub use protocol::{
    EpochDecoder, EpochWindow, EventClient, EventKind, EventServer, Message, PerfectDecoder, TrialEvent, TrialTracker,
};
pub use ring::{RingBuffer, SharedRingBuffer, DEFAULT_CAPACITY};
pub use sim::{
    layout_for, measure_calibration, paired_comparison, random_contexts, simulate_session, stimulus_quality,
    train_reference_decoder, train_session_bandits, write_trial_log, Method, PairedComparison, SessionBandits,
    SessionConfig, SessionOutcome, TrialPhases, TrialRecord,
};
