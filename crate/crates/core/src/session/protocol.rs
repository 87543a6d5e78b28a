//! Line-oriented trial event protocol over TCP.
//!
//! ```text
//! client: START <trial_id> <target_class> <sample_index>
//! client: END <trial_id> <sample_index>
//! server: RESULT <trial_id> <predicted_class>
//! server: ERR <reason>
//! ```
//!
//! Each connection carries at most one trial at a time. Malformed lines and
//! rule violations are answered with `ERR` and the connection stays open.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::ring::SharedRingBuffer;
use crate::decoder::{EegEpoch, FuzzyDecoder};
use crate::error::{Error, Result};

pub const ERR_MALFORMED: &str = "malformed";
pub const ERR_UNMATCHED_END: &str = "unmatched_end";
pub const ERR_TRIAL_IN_FLIGHT: &str = "trial_in_flight";
pub const ERR_EPOCH_UNAVAILABLE: &str = "epoch_unavailable";
pub const ERR_DECODE_FAILED: &str = "decode_failed";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Start,
    End,
}

/// A start or end marker as received by the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialEvent {
    pub kind: EventKind,
    pub trial_id: u64,
    /// Present on start events only.
    pub target_class: Option<usize>,
    pub sample_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Event(TrialEvent),
    Result { trial_id: u64, predicted_class: usize },
    Error(String),
}

impl Message {
    pub fn start(trial_id: u64, target_class: usize, sample_index: u64) -> Self {
        Self::Event(TrialEvent {
            kind: EventKind::Start,
            trial_id,
            target_class: Some(target_class),
            sample_index,
        })
    }

    pub fn end(trial_id: u64, sample_index: u64) -> Self {
        Self::Event(TrialEvent {
            kind: EventKind::End,
            trial_id,
            target_class: None,
            sample_index,
        })
    }

    /// Parses one line, without its terminator.
    pub fn parse(line: &str) -> Result<Self> {
        let malformed = || Error::Protocol(format!("malformed line `{line}`"));
        let fields: Vec<&str> = line.split(' ').collect();
        let num = |s: &str| s.parse::<u64>().map_err(|_| malformed());
        match fields.as_slice() {
            ["START", id, class, sample] => Ok(Self::start(num(id)?, num(class)? as usize, num(sample)?)),
            ["END", id, sample] => Ok(Self::end(num(id)?, num(sample)?)),
            ["RESULT", id, class] => Ok(Self::Result {
                trial_id: num(id)?,
                predicted_class: num(class)? as usize,
            }),
            ["ERR", reason] if !reason.is_empty() => Ok(Self::Error(reason.to_string())),
            _ => Err(malformed()),
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Event(TrialEvent {
                kind: EventKind::Start,
                trial_id,
                target_class,
                sample_index,
            }) => write!(f, "START {trial_id} {} {sample_index}", target_class.unwrap_or(0)),
            Self::Event(TrialEvent {
                kind: EventKind::End,
                trial_id,
                sample_index,
                ..
            }) => write!(f, "END {trial_id} {sample_index}"),
            Self::Result {
                trial_id,
                predicted_class,
            } => write!(f, "RESULT {trial_id} {predicted_class}"),
            Self::Error(reason) => write!(f, "ERR {reason}"),
        }
    }
}

/// Anything that turns an extracted epoch into a class.
pub trait EpochDecoder: Send + Sync {
    fn decode(&self, epoch: &EegEpoch) -> Result<usize>;
}

impl EpochDecoder for FuzzyDecoder {
    fn decode(&self, epoch: &EegEpoch) -> Result<usize> {
        self.predict(epoch)
    }
}

/// Returns the label attached to the epoch, which the session sets to the
/// cued target. Isolates the pipeline from decoding errors.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectDecoder;

impl EpochDecoder for PerfectDecoder {
    fn decode(&self, epoch: &EegEpoch) -> Result<usize> {
        epoch.label().ok_or_else(|| Error::InvalidInput("epoch carries no target label".into()))
    }
}

/// Epoch window taken relative to the start event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochWindow {
    pub offset_s: f64,
    pub length_s: f64,
}

impl EpochWindow {
    /// First 3.0 s after the start event.
    pub const ONLINE: Self = Self {
        offset_s: 0.0,
        length_s: 3.0,
    };
    /// 3.86 s after skipping the first 0.14 s.
    pub const OFFLINE: Self = Self {
        offset_s: 0.14,
        length_s: 3.86,
    };
}

/// Per-connection trial state: at most one trial in flight.
#[derive(Debug, Default)]
pub struct TrialTracker {
    in_flight: Option<TrialEvent>,
    last_sample: u64,
}

/// What the server should do with a line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Start accepted; nothing to send.
    Accepted,
    /// Decode the trial that began with this start event.
    Decode(TrialEvent),
    Reject(&'static str),
}

impl TrialTracker {
    pub fn handle(&mut self, line: &str) -> Action {
        let event = match Message::parse(line) {
            Ok(Message::Event(e)) => e,
            _ => return Action::Reject(ERR_MALFORMED),
        };
        if event.sample_index < self.last_sample {
            return Action::Reject(ERR_MALFORMED);
        }
        match event.kind {
            EventKind::Start => {
                if self.in_flight.is_some() {
                    return Action::Reject(ERR_TRIAL_IN_FLIGHT);
                }
                self.last_sample = event.sample_index;
                self.in_flight = Some(event);
                Action::Accepted
            }
            EventKind::End => match self.in_flight {
                Some(start) if start.trial_id == event.trial_id => {
                    self.last_sample = event.sample_index;
                    self.in_flight = None;
                    Action::Decode(start)
                }
                _ => Action::Reject(ERR_UNMATCHED_END),
            },
        }
    }
}

/// Serves every accepted connection on its own thread.
pub struct EventServer {
    addr: SocketAddr,
    handle: JoinHandle<()>,
}

impl EventServer {
    pub fn bind(
        addr: impl ToSocketAddrs,
        buffer: SharedRingBuffer,
        decoder: Arc<dyn EpochDecoder>,
        window: EpochWindow,
    ) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (buffer, decoder) = (buffer.clone(), Arc::clone(&decoder));
                std::thread::spawn(move || {
                    let _ = serve_connection(stream, &buffer, decoder.as_ref(), window);
                });
            }
        });
        Ok(Self { addr, handle })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Whether the accept loop is still running.
    pub fn is_running(&self) -> bool {
        !self.handle.is_finished()
    }
}

/// Handles one connection until the peer closes it.
pub fn serve_connection(stream: TcpStream, buffer: &SharedRingBuffer, decoder: &dyn EpochDecoder, window: EpochWindow) -> Result<()> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    let mut tracker = TrialTracker::default();
    for line in reader.lines() {
        let line = line?;
        let reply = match tracker.handle(&line) {
            Action::Accepted => continue,
            Action::Reject(reason) => Message::Error(reason.into()),
            Action::Decode(start) => decode_trial(&start, buffer, decoder, window),
        };
        writeln!(writer, "{reply}")?;
        writer.flush()?;
    }
    Ok(())
}

fn decode_trial(start: &TrialEvent, buffer: &SharedRingBuffer, decoder: &dyn EpochDecoder, window: EpochWindow) -> Message {
    let epoch = match buffer.extract_epoch(start.sample_index, window.offset_s, window.length_s) {
        Ok(e) => e.with_label(start.target_class),
        Err(_) => return Message::Error(ERR_EPOCH_UNAVAILABLE.into()),
    };
    match decoder.decode(&epoch) {
        Ok(predicted_class) => Message::Result {
            trial_id: start.trial_id,
            predicted_class,
        },
        Err(_) => Message::Error(ERR_DECODE_FAILED.into()),
    }
}

/// Client side of the protocol.
pub struct EventClient {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl EventClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    /// Sends one raw line.
    pub fn send_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.writer, "{line}")?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn send(&mut self, message: &Message) -> Result<()> {
        self.send_line(&message.to_string())
    }

    /// Blocks for the next reply line.
    pub fn receive(&mut self) -> Result<Message> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(Error::Protocol("connection closed".into()));
        }
        Message::parse(line.trim_end_matches(['\n', '\r']))
    }

    /// Runs a full trial and returns the predicted class. A reply for any
    /// other trial is a protocol error.
    pub fn run_trial(&mut self, trial_id: u64, target_class: usize, start_sample: u64, end_sample: u64) -> Result<usize> {
        self.send(&Message::start(trial_id, target_class, start_sample))?;
        self.send(&Message::end(trial_id, end_sample))?;
        match self.receive()? {
            Message::Result {
                trial_id: id,
                predicted_class,
            } if id == trial_id => Ok(predicted_class),
            Message::Result { trial_id: id, .. } => Err(Error::Protocol(format!("RESULT for unknown trial {id}"))),
            Message::Error(reason) => Err(Error::Protocol(format!("server rejected trial {trial_id}: {reason}"))),
            other => Err(Error::Protocol(format!("unexpected reply `{other}`"))),
        }
    }
}
