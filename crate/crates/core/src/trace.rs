//! Trace data model, the `.trace.json` reader/writer and send/recv matching.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::TraceError;

/// Index of a processing element (one Gantt row).
pub type PeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EventKind {
    Enter { name: String },
    Leave { name: String },
    Send { partner: PeId, tag: i64 },
    Recv { partner: PeId, tag: i64 },
}

impl EventKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            EventKind::Enter { .. } => "enter",
            EventKind::Leave { .. } => "leave",
            EventKind::Send { .. } => "send",
            EventKind::Recv { .. } => "recv",
        }
    }

    pub fn is_comm(&self) -> bool {
        matches!(self, EventKind::Send { .. } | EventKind::Recv { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub pe: PeId,
    pub kind: EventKind,
    /// Seconds since trace start, when the trace recorded physical time.
    pub wall_time: Option<f64>,
}

impl Event {
    pub fn enter(pe: PeId, name: impl Into<String>) -> Self {
        Event { pe, kind: EventKind::Enter { name: name.into() }, wall_time: None }
    }

    pub fn leave(pe: PeId, name: impl Into<String>) -> Self {
        Event { pe, kind: EventKind::Leave { name: name.into() }, wall_time: None }
    }

    pub fn send(pe: PeId, partner: PeId, tag: i64) -> Self {
        Event { pe, kind: EventKind::Send { partner, tag }, wall_time: None }
    }

    pub fn recv(pe: PeId, partner: PeId, tag: i64) -> Self {
        Event { pe, kind: EventKind::Recv { partner, tag }, wall_time: None }
    }

    pub fn at(mut self, wall_time: f64) -> Self {
        self.wall_time = Some(wall_time);
        self
    }
}

/// Per-PE event streams in program order.
///
/// Construction goes through [`Trace::new`], which checks PE ranges,
/// enter/leave nesting and wall-time monotonicity; a `Trace` is never
/// mutated afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    num_pes: usize,
    events_per_pe: Vec<Vec<Event>>,
}

impl Trace {
    pub fn new(num_pes: usize, events_per_pe: Vec<Vec<Event>>) -> Result<Self, TraceError> {
        if num_pes == 0 {
            return Err(TraceError::NoPes);
        }
        if events_per_pe.len() != num_pes {
            return Err(TraceError::PeCountMismatch { num_pes, sequences: events_per_pe.len() });
        }
        for (pe, events) in events_per_pe.iter().enumerate() {
            validate_pe_stream(num_pes, pe, events)?;
        }
        Ok(Trace { num_pes, events_per_pe })
    }

    /// An empty trace with `num_pes` idle rows.
    pub fn empty(num_pes: usize) -> Result<Self, TraceError> {
        Trace::new(num_pes, vec![Vec::new(); num_pes])
    }

    pub fn num_pes(&self) -> usize {
        self.num_pes
    }

    pub fn events(&self, pe: PeId) -> &[Event] {
        &self.events_per_pe[pe]
    }

    pub fn events_per_pe(&self) -> &[Vec<Event>] {
        &self.events_per_pe
    }

    pub fn event_count(&self) -> usize {
        self.events_per_pe.iter().map(Vec::len).sum()
    }

    /// Parse a `.trace.json` document.
    pub fn parse(raw: &[u8]) -> Result<Self, TraceError> {
        let text = std::str::from_utf8(raw).map_err(|e| TraceError::Utf8 { offset: e.valid_up_to() })?;
        let file: RawTraceFile = serde_json::from_str(text).map_err(|e| TraceError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let num_pes = file.num_pes;
        if num_pes == 0 {
            return Err(TraceError::NoPes);
        }
        let mut events_per_pe = vec![Vec::new(); num_pes];
        for (index, raw) in file.events.into_iter().enumerate() {
            let event = raw.into_event(index, num_pes)?;
            events_per_pe[event.pe].push(event);
        }
        Trace::new(num_pes, events_per_pe)
    }

    /// Serialize to `.trace.json`, one event per line, PE-major order.
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        out.push_str("{\"num_pes\":");
        out.push_str(&self.num_pes.to_string());
        out.push_str(",\"events\":[");
        let mut first = true;
        for event in self.events_per_pe.iter().flatten() {
            out.push_str(if first { "\n" } else { ",\n" });
            first = false;
            let raw = RawEvent::from(event);
            out.push_str(&serde_json::to_string(&raw).expect("event serialization is infallible"));
        }
        out.push_str("\n]}\n");
        out
    }
}

fn validate_pe_stream(num_pes: usize, pe: PeId, events: &[Event]) -> Result<(), TraceError> {
    let mut open: Vec<&str> = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for (index, event) in events.iter().enumerate() {
        if event.pe != pe {
            return Err(TraceError::WrongStream { pe, index, found: event.pe });
        }
        if let Some(t) = event.wall_time {
            if !t.is_finite() {
                return Err(TraceError::BadTime { pe, index });
            }
            if t < last_time {
                return Err(TraceError::TimeDecreasing { pe, index });
            }
            last_time = t;
        }
        match &event.kind {
            EventKind::Enter { name } => open.push(name),
            EventKind::Leave { name } => match open.pop() {
                Some(top) if top == name => {}
                Some(top) => {
                    return Err(TraceError::Nesting {
                        pe,
                        index,
                        message: format!("leave `{name}` while `{top}` is open"),
                    })
                }
                None => {
                    return Err(TraceError::Nesting {
                        pe,
                        index,
                        message: format!("leave `{name}` without matching enter"),
                    })
                }
            },
            EventKind::Send { partner, .. } | EventKind::Recv { partner, .. } => {
                if *partner >= num_pes {
                    return Err(TraceError::PartnerOutOfRange { pe, index, partner: *partner, num_pes });
                }
                if *partner == pe {
                    return Err(TraceError::SelfMessage { pe, index });
                }
            }
        }
    }
    if let Some(name) = open.last() {
        return Err(TraceError::Nesting { pe, index: events.len(), message: format!("`{name}` never left") });
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraceFile {
    num_pes: usize,
    events: Vec<RawEvent>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    pe: usize,
    #[serde(rename = "type")]
    kind: RawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partner: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Enter,
    Leave,
    Send,
    Recv,
}

impl RawEvent {
    fn into_event(self, index: usize, num_pes: usize) -> Result<Event, TraceError> {
        let malformed = |message: &str| TraceError::Record { index, message: message.to_string() };
        if self.pe >= num_pes {
            return Err(TraceError::PeOutOfRange { index, pe: self.pe, num_pes });
        }
        let kind = match self.kind {
            RawKind::Enter | RawKind::Leave => {
                if self.partner.is_some() || self.tag.is_some() {
                    return Err(malformed("enter/leave records take no partner or tag"));
                }
                let name = self.name.ok_or_else(|| malformed("enter/leave record without name"))?;
                if matches!(self.kind, RawKind::Enter) {
                    EventKind::Enter { name }
                } else {
                    EventKind::Leave { name }
                }
            }
            RawKind::Send | RawKind::Recv => {
                if self.name.is_some() {
                    return Err(malformed("send/recv records take no name"));
                }
                let partner = self.partner.ok_or_else(|| malformed("send/recv record without partner"))?;
                let tag = self.tag.ok_or_else(|| malformed("send/recv record without tag"))?;
                if partner >= num_pes {
                    return Err(TraceError::PartnerOutOfRange { pe: self.pe, index, partner, num_pes });
                }
                if matches!(self.kind, RawKind::Send) {
                    EventKind::Send { partner, tag }
                } else {
                    EventKind::Recv { partner, tag }
                }
            }
        };
        Ok(Event { pe: self.pe, kind, wall_time: self.t })
    }
}

impl From<&Event> for RawEvent {
    fn from(event: &Event) -> Self {
        let (kind, name, partner, tag) = match &event.kind {
            EventKind::Enter { name } => (RawKind::Enter, Some(name.clone()), None, None),
            EventKind::Leave { name } => (RawKind::Leave, Some(name.clone()), None, None),
            EventKind::Send { partner, tag } => (RawKind::Send, None, Some(*partner), Some(*tag)),
            EventKind::Recv { partner, tag } => (RawKind::Recv, None, Some(*partner), Some(*tag)),
        };
        RawEvent { pe: event.pe, kind, name, partner, tag, t: event.wall_time }
    }
}

/// A matched send/recv pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CommEdge {
    pub src_pe: PeId,
    pub send_index: usize,
    pub dst_pe: PeId,
    pub recv_index: usize,
    pub tag: i64,
}

/// One `(src, dst, tag)` channel left with unpaired events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnmatchedChannel {
    pub src_pe: PeId,
    pub dst_pe: PeId,
    pub tag: i64,
    pub unmatched_sends: usize,
    pub unmatched_recvs: usize,
}

impl fmt::Display for UnmatchedChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}->{} tag {}: {} unmatched send(s), {} unmatched recv(s)",
            self.src_pe, self.dst_pe, self.tag, self.unmatched_sends, self.unmatched_recvs
        )
    }
}

#[derive(Default)]
struct Channel {
    sends: Vec<usize>,
    recvs: Vec<usize>,
}

/// Pair sends with receives in FIFO order per `(src, dst, tag)` channel.
///
/// The result is sorted by `(src_pe, send_index)`. Any channel with a
/// surplus on either side is reported and no edges are returned.
pub fn match_communication(trace: &Trace) -> Result<Vec<CommEdge>, TraceError> {
    let mut channels: BTreeMap<(PeId, PeId, i64), Channel> = BTreeMap::new();
    for (pe, events) in trace.events_per_pe().iter().enumerate() {
        for (index, event) in events.iter().enumerate() {
            match event.kind {
                EventKind::Send { partner, tag } => {
                    channels.entry((pe, partner, tag)).or_default().sends.push(index)
                }
                EventKind::Recv { partner, tag } => {
                    channels.entry((partner, pe, tag)).or_default().recvs.push(index)
                }
                _ => {}
            }
        }
    }

    let mut edges = Vec::new();
    let mut unmatched = Vec::new();
    for ((src_pe, dst_pe, tag), channel) in channels {
        if channel.sends.len() != channel.recvs.len() {
            let paired = channel.sends.len().min(channel.recvs.len());
            unmatched.push(UnmatchedChannel {
                src_pe,
                dst_pe,
                tag,
                unmatched_sends: channel.sends.len() - paired,
                unmatched_recvs: channel.recvs.len() - paired,
            });
            continue;
        }
        edges.extend(channel.sends.iter().zip(&channel.recvs).map(|(&send_index, &recv_index)| CommEdge {
            src_pe,
            send_index,
            dst_pe,
            recv_index,
            tag,
        }));
    }
    if !unmatched.is_empty() {
        return Err(TraceError::Unmatched(unmatched));
    }
    edges.sort_by_key(|e| (e.src_pe, e.send_index));
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Trace, TraceError> {
        Trace::parse(text.as_bytes())
    }

    #[test]
    fn parses_small_file() {
        let trace = parse(
            r#"{"num_pes":2,"events":[
            {"pe":0,"type":"send","partner":1,"tag":0,"t":0.1},
            {"pe":1,"type":"enter","name":"step","t":0.0},
            {"pe":1,"type":"recv","partner":0,"tag":0,"t":0.2},
            {"pe":1,"type":"leave","name":"step","t":0.3}]}"#,
        )
        .unwrap();
        assert_eq!(trace.num_pes(), 2);
        assert_eq!(trace.events(0).len(), 1);
        assert_eq!(trace.events(1).len(), 3);
        assert_eq!(trace.events(1)[1].kind, EventKind::Recv { partner: 0, tag: 0 });
        assert_eq!(trace.events(1)[2].wall_time, Some(0.3));
    }

    #[test]
    fn rejects_pe_out_of_range() {
        let err = parse(r#"{"num_pes":2,"events":[{"pe":5,"type":"enter","name":"a"}]}"#).unwrap_err();
        assert!(matches!(err, TraceError::PeOutOfRange { pe: 5, .. }));
        assert!(err.to_string().contains("pe out of range"));
    }

    #[test]
    fn empty_event_list() {
        let trace = parse(r#"{"num_pes":8,"events":[]}"#).unwrap();
        assert_eq!(trace.num_pes(), 8);
        assert!(trace.events_per_pe().iter().all(Vec::is_empty));
    }

    #[test]
    fn rejects_duplicate_header() {
        let err = parse(r#"{"num_pes":2,"num_pes":3,"events":[]}"#).unwrap_err();
        assert!(matches!(err, TraceError::Json { .. }), "{err}");
    }

    #[test]
    fn rejects_unknown_fields() {
        let err =
            parse(r#"{"num_pes":2,"events":[{"pe":0,"type":"enter","name":"a","color":1}]}"#).unwrap_err();
        assert!(matches!(err, TraceError::Json { .. }));
        let err = parse(r#"{"num_pes":2,"extra":true,"events":[]}"#).unwrap_err();
        assert!(matches!(err, TraceError::Json { .. }));
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse("{\"num_pes\":2,\n\"events\":[\n{\"pe\":0,\"type\":\"jump\"}]}").unwrap_err();
        match err {
            TraceError::Json { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_bad_nesting() {
        let err = parse(
            r#"{"num_pes":1,"events":[
            {"pe":0,"type":"enter","name":"a"},
            {"pe":0,"type":"enter","name":"b"},
            {"pe":0,"type":"leave","name":"a"},
            {"pe":0,"type":"leave","name":"b"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, TraceError::Nesting { pe: 0, index: 2, .. }));

        let err = parse(r#"{"num_pes":1,"events":[{"pe":0,"type":"enter","name":"a"}]}"#).unwrap_err();
        assert!(matches!(err, TraceError::Nesting { .. }));
    }

    #[test]
    fn rejects_partner_errors_and_missing_fields() {
        let err =
            parse(r#"{"num_pes":2,"events":[{"pe":0,"type":"send","partner":2,"tag":0}]}"#).unwrap_err();
        assert!(matches!(err, TraceError::PartnerOutOfRange { partner: 2, .. }));
        let err =
            parse(r#"{"num_pes":2,"events":[{"pe":0,"type":"send","partner":0,"tag":0}]}"#).unwrap_err();
        assert!(matches!(err, TraceError::SelfMessage { .. }));
        let err = parse(r#"{"num_pes":2,"events":[{"pe":0,"type":"send","partner":1}]}"#).unwrap_err();
        assert!(matches!(err, TraceError::Record { index: 0, .. }));
        let err = parse(r#"{"num_pes":2,"events":[{"pe":0,"type":"enter"}]}"#).unwrap_err();
        assert!(matches!(err, TraceError::Record { index: 0, .. }));
    }

    #[test]
    fn rejects_decreasing_wall_time() {
        let err = parse(
            r#"{"num_pes":1,"events":[
            {"pe":0,"type":"enter","name":"a","t":1.0},
            {"pe":0,"type":"leave","name":"a","t":0.5}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, TraceError::TimeDecreasing { pe: 0, index: 1 }));
    }

    #[test]
    fn fifo_matching_pairs_in_order() {
        let trace = Trace::new(
            2,
            vec![
                vec![Event::send(0, 1, 0), Event::send(0, 1, 0)],
                vec![Event::recv(1, 0, 0), Event::recv(1, 0, 0)],
            ],
        )
        .unwrap();
        let edges = match_communication(&trace).unwrap();
        assert_eq!(
            edges,
            vec![
                CommEdge { src_pe: 0, send_index: 0, dst_pe: 1, recv_index: 0, tag: 0 },
                CommEdge { src_pe: 0, send_index: 1, dst_pe: 1, recv_index: 1, tag: 0 },
            ]
        );
    }

    #[test]
    fn tag_mismatch_is_unmatched() {
        let trace = Trace::new(2, vec![vec![Event::send(0, 1, 0)], vec![Event::recv(1, 0, 1)]]).unwrap();
        let err = match_communication(&trace).unwrap_err();
        let TraceError::Unmatched(channels) = &err else { panic!("{err}") };
        assert_eq!(channels.len(), 2);
        assert!(err.to_string().contains("unmatched"));
        assert_eq!(channels[0].unmatched_sends, 1);
        assert_eq!(channels[1].unmatched_recvs, 1);
    }

    #[test]
    fn serialization_round_trips() {
        let trace = Trace::new(
            3,
            vec![
                vec![
                    Event::enter(0, "step").at(0.0),
                    Event::send(0, 2, 7).at(0.5),
                    Event::leave(0, "step").at(1.0),
                ],
                vec![],
                vec![Event::recv(2, 0, 7)],
            ],
        )
        .unwrap();
        let text = trace.to_json();
        assert_eq!(Trace::parse(text.as_bytes()).unwrap(), trace);
    }
}
