use thiserror::Error;

use crate::trace::UnmatchedChannel;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is not valid UTF-8 (byte {offset})")]
    Utf8 { offset: usize },
    #[error("malformed trace at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("malformed record (event {index}): {message}")]
    Record { index: usize, message: String },
    #[error("pe out of range: event {index} has pe={pe}, num_pes={num_pes}")]
    PeOutOfRange { index: usize, pe: usize, num_pes: usize },
    #[error("partner out of range: pe {pe} event {index} names partner {partner}, num_pes={num_pes}")]
    PartnerOutOfRange { pe: usize, index: usize, partner: usize, num_pes: usize },
    #[error("pe {pe} event {index} sends to or receives from itself")]
    SelfMessage { pe: usize, index: usize },
    #[error("nesting violation on pe {pe} at event {index}: {message}")]
    Nesting { pe: usize, index: usize, message: String },
    #[error("wall time decreases on pe {pe} at event {index}")]
    TimeDecreasing { pe: usize, index: usize },
    #[error("non-finite wall time on pe {pe} at event {index}")]
    BadTime { pe: usize, index: usize },
    #[error("event stream for pe {pe} contains an event of pe {found} at {index}")]
    WrongStream { pe: usize, index: usize, found: usize },
    #[error("trace must have at least one pe")]
    NoPes,
    #[error("num_pes={num_pes} but {sequences} event sequences given")]
    PeCountMismatch { num_pes: usize, sequences: usize },
    #[error("unmatched communication on {} channel(s): {}", .0.len(), join(.0))]
    Unmatched(Vec<UnmatchedChannel>),
}

fn join(channels: &[UnmatchedChannel]) -> String {
    channels.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimelineError {
    #[error("happens-before cycle through message {src_pe}[{send_index}] -> {dst_pe}[{recv_index}]")]
    Cycle { src_pe: usize, send_index: usize, dst_pe: usize, recv_index: usize },
    #[error("edge list does not match trace: {0}")]
    BadEdge(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("invalid pattern descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("ring with group size {group_size} == 2 x stride is an exchange")]
    RingIsExchange { group_size: usize },
    #[error("invalid stencil: {0}")]
    InvalidStencil(String),
    #[error("timesteps must be at least 1")]
    NoTimesteps,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DetectError {
    #[error("cannot classify an empty round")]
    EmptyRound,
}

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid viewport: {0}")]
    Viewport(String),
    #[error("row window {first}:{last} out of range for {num_pes} pes")]
    RowWindow { first: usize, last: usize, num_pes: usize },
    #[error("level window {first}:{last} out of range (max level {max_level})")]
    LevelWindow { first: u32, last: u32, max_level: u32 },
    #[error("unclassified round at send level {send_level}: {reason}")]
    UnclassifiedRound { send_level: u32, reason: String },
    #[error("{rounds} rounds but {classifications} classifications")]
    ClassificationCount { rounds: usize, classifications: usize },
}

/// Any failure of the trace-to-scene pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}
