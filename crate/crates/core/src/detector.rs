//! Round classification: recover family, stride and grouping from the
//! edge set of one communication round.
//!
//! Rules are tried in a fixed order (exchange, offset, ring) and every
//! candidate is regenerated and compared against the input, so a
//! descriptor is only ever returned for an exact match.

use std::collections::BTreeSet;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::error::DetectError;
use crate::patterns::{Family, Grouping, PatternDescriptor};
use crate::timeline::CommRound;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassResult {
    Pattern(PatternDescriptor),
    Unknown { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub result: ClassResult,
    /// Every input edge is explained by the descriptor.
    pub exact: bool,
}

impl Classification {
    fn unknown(reason: impl Into<String>) -> Self {
        Classification { result: ClassResult::Unknown { reason: reason.into() }, exact: false }
    }

    pub fn descriptor(&self) -> Option<&PatternDescriptor> {
        match &self.result {
            ClassResult::Pattern(d) => Some(d),
            ClassResult::Unknown { .. } => None,
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self.result, ClassResult::Unknown { .. })
    }

    pub fn unknown_reason(&self) -> Option<&str> {
        match &self.result {
            ClassResult::Unknown { reason } => Some(reason),
            ClassResult::Pattern(_) => None,
        }
    }
}

/// Flat JSON: the descriptor fields plus `exact`, or
/// `{"family":"unknown","reason":...,"exact":false}`.
impl Serialize for Classification {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        match &self.result {
            ClassResult::Pattern(d) => {
                map.serialize_entry("family", &d.family)?;
                map.serialize_entry("stride", &d.stride)?;
                map.serialize_entry("grouping", &d.grouping)?;
                map.serialize_entry("num_pes", &d.num_pes)?;
            }
            ClassResult::Unknown { reason } => {
                map.serialize_entry("family", "unknown")?;
                map.serialize_entry("reason", reason)?;
            }
        }
        map.serialize_entry("exact", &self.exact)?;
        map.end()
    }
}

/// Canonical form: a ring of group size `2s` is an exchange, and a single
/// group is continuous.
pub fn canonicalize(d: &PatternDescriptor) -> PatternDescriptor {
    let mut out = *d;
    if out.family == Family::Ring && out.group_size() == 2 * out.stride {
        out.family = Family::Exchange;
    }
    if let Grouping::Grouped { group_size } = out.grouping {
        if group_size == out.num_pes {
            out.grouping = Grouping::Continuous;
        }
    }
    out
}

pub fn same_stride(a: &PatternDescriptor, b: &PatternDescriptor) -> bool {
    canonicalize(a).stride == canonicalize(b).stride
}

fn grouping_for(group_size: usize, num_pes: usize) -> Grouping {
    if group_size == num_pes {
        Grouping::Continuous
    } else {
        Grouping::Grouped { group_size }
    }
}

fn delta(&(s, d): &(usize, usize)) -> i64 {
    d as i64 - s as i64
}

/// Each PE appears exactly once as a sender.
fn sends_once_each(round: &CommRound) -> bool {
    round.len() == round.num_pes && round.edges().iter().enumerate().all(|(i, e)| e.0 == i)
}

fn try_exchange(round: &CommRound) -> Option<PatternDescriptor> {
    // Edges are sorted by (src, dst): a permutation has edge i sent by PE i.
    if !sends_once_each(round) {
        return None;
    }
    let edges = round.edges();
    let involution = edges.iter().all(|&(s, d)| edges[d].1 == s);
    if !involution {
        return None;
    }
    let d = delta(&edges[0]).unsigned_abs() as usize;
    if d == 0 || edges.iter().any(|e| delta(e).unsigned_abs() as usize != d) {
        return None;
    }
    let g = 2 * d;
    if !round.num_pes.is_multiple_of(g) {
        return None;
    }
    Some(PatternDescriptor {
        family: Family::Exchange,
        stride: d,
        grouping: grouping_for(g, round.num_pes),
        num_pes: round.num_pes,
    })
}

fn try_offset(round: &CommRound) -> Option<PatternDescriptor> {
    let s = delta(&round.edges()[0]);
    if s <= 0 || round.edges().iter().any(|e| delta(e) != s) {
        return None;
    }
    let s = s as usize;
    let p = round.num_pes;
    // Senders are sorted; the first absent id ends the first group's senders.
    let first_gap = round.edges().iter().enumerate().find(|&(i, e)| e.0 != i).map_or(round.len(), |(i, _)| i);
    let g = first_gap + s;
    if g > p || !p.is_multiple_of(g) {
        return None;
    }
    Some(PatternDescriptor::offset(p, s, grouping_for(g, p)))
}

fn try_ring(round: &CommRound) -> Option<PatternDescriptor> {
    if !sends_once_each(round) {
        return None;
    }
    let deltas: BTreeSet<i64> = round.edges().iter().map(delta).collect();
    if deltas.len() != 2 {
        return None;
    }
    let (wrap, s) = (*deltas.first()?, *deltas.last()?);
    if s <= 0 || wrap >= 0 {
        return None;
    }
    let s = s as usize;
    let g = s + wrap.unsigned_abs() as usize;
    let p = round.num_pes;
    if !p.is_multiple_of(g) {
        return None;
    }
    let wraps_match = round.edges().iter().all(|e| (delta(e) < 0) == (e.0 % g >= g - s));
    if !wraps_match {
        return None;
    }
    Some(PatternDescriptor::ring(p, s, grouping_for(g, p)))
}

/// Regenerate `d` and compare with the input edges.
fn reproduces(round: &CommRound, d: &PatternDescriptor) -> bool {
    d.round().is_ok_and(|generated| generated.edges() == round.edges())
}

type Rule = fn(&CommRound) -> Option<PatternDescriptor>;

pub fn classify_round(round: &CommRound) -> Result<Classification, DetectError> {
    if round.is_empty() {
        return Err(DetectError::EmptyRound);
    }
    let rules: [(Family, Rule); 3] =
        [(Family::Exchange, try_exchange), (Family::Offset, try_offset), (Family::Ring, try_ring)];
    for (family, rule) in rules {
        if let Some(d) = rule(round) {
            if reproduces(round, &d) {
                return Ok(Classification { result: ClassResult::Pattern(d), exact: true });
            }
            return Ok(Classification::unknown(format!(
                "edges resemble {family} stride {} but differ from it",
                d.stride
            )));
        }
    }
    Ok(Classification::unknown(describe_mismatch(round)))
}

fn describe_mismatch(round: &CommRound) -> String {
    let deltas: BTreeSet<i64> = round.edges().iter().map(delta).collect();
    let senders: BTreeSet<usize> = round.edges().iter().map(|e| e.0).collect();
    format!(
        "no offset/ring/exchange rule matches ({} edges, {} senders, {} distinct strides)",
        round.len(),
        senders.len(),
        deltas.len()
    )
}
