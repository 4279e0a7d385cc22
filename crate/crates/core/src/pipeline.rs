//! Trace to classified rounds in one call.

use crate::detector::{classify_round, Classification};
use crate::error::Error;
use crate::timeline::{align_by_code, assign_levels, extract_rounds, CommRound, LogicalTimeline};
use crate::trace::{match_communication, Trace};

/// A trace after matching, leveling, alignment and per-round detection.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub timeline: LogicalTimeline,
    pub rounds: Vec<CommRound>,
    /// Parallel to `rounds`.
    pub classifications: Vec<Classification>,
}

impl Analysis {
    pub fn from_trace(trace: Trace) -> Result<Self, Error> {
        let edges = match_communication(&trace)?;
        let timeline = assign_levels(&trace, &edges)?;
        Analysis::from_timeline(align_by_code(&timeline))
    }

    pub fn parse(raw: &[u8]) -> Result<Self, Error> {
        Analysis::from_trace(Trace::parse(raw)?)
    }

    /// Classify the rounds of an already leveled timeline as-is.
    pub fn from_timeline(timeline: LogicalTimeline) -> Result<Self, Error> {
        let rounds = extract_rounds(&timeline);
        let classifications = rounds.iter().map(classify_round).collect::<Result<Vec<_>, _>>()?;
        Ok(Analysis { timeline, rounds, classifications })
    }

    pub fn num_pes(&self) -> usize {
        self.timeline.num_pes()
    }
}
