//! Idealized unit time: happens-before leveling, code alignment and
//! slicing of matched messages into communication rounds.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::error::TimelineError;
use crate::trace::{CommEdge, EventKind, PeId, Trace};

/// Logical timestep.
pub type Level = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LeveledEdge {
    #[serde(flatten)]
    pub edge: CommEdge,
    pub send_level: Level,
    pub recv_level: Level,
}

/// Every event of a trace annotated with a logical level.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalTimeline {
    trace: Trace,
    levels: Vec<Vec<Level>>,
    edges: Vec<LeveledEdge>,
    max_level: Level,
}

impl LogicalTimeline {
    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn num_pes(&self) -> usize {
        self.trace.num_pes()
    }

    /// Levels of the events of `pe`, parallel to `trace().events(pe)`.
    pub fn levels(&self, pe: PeId) -> &[Level] {
        &self.levels[pe]
    }

    pub fn level_of(&self, pe: PeId, index: usize) -> Level {
        self.levels[pe][index]
    }

    pub fn edges(&self) -> &[LeveledEdge] {
        &self.edges
    }

    /// Largest assigned level; 0 for a trace without events.
    pub fn max_level(&self) -> Level {
        self.max_level
    }

    /// Number of level bands a chart of this timeline needs.
    pub fn level_count(&self) -> u32 {
        if self.trace.event_count() == 0 {
            0
        } else {
            self.max_level + 1
        }
    }

    fn from_levels(trace: Trace, edges: &[CommEdge], levels: Vec<Vec<Level>>) -> Self {
        let edges = edges
            .iter()
            .map(|&edge| LeveledEdge {
                edge,
                send_level: levels[edge.src_pe][edge.send_index],
                recv_level: levels[edge.dst_pe][edge.recv_index],
            })
            .collect();
        let max_level = levels.iter().flatten().copied().max().unwrap_or(0);
        LogicalTimeline { trace, levels, edges, max_level }
    }
}

/// Which message, if any, each event takes part in.
struct EdgeIndex {
    recv_edge: Vec<Vec<Option<usize>>>,
    send_edge: Vec<Vec<Option<usize>>>,
}

impl EdgeIndex {
    fn build(trace: &Trace, edges: &[CommEdge]) -> Result<Self, TimelineError> {
        let mut recv_edge: Vec<Vec<Option<usize>>> =
            trace.events_per_pe().iter().map(|e| vec![None; e.len()]).collect();
        let mut send_edge = recv_edge.clone();
        let bad = |i: usize, what: &str| TimelineError::BadEdge(format!("edge {i}: {what}"));
        for (i, edge) in edges.iter().enumerate() {
            let send = trace
                .events_per_pe()
                .get(edge.src_pe)
                .and_then(|evs| evs.get(edge.send_index))
                .ok_or_else(|| bad(i, "send index out of range"))?;
            let recv = trace
                .events_per_pe()
                .get(edge.dst_pe)
                .and_then(|evs| evs.get(edge.recv_index))
                .ok_or_else(|| bad(i, "recv index out of range"))?;
            match (&send.kind, &recv.kind) {
                (EventKind::Send { partner: to, tag: st }, EventKind::Recv { partner: from, tag: rt })
                    if *to == edge.dst_pe && *from == edge.src_pe && st == rt && *st == edge.tag => {}
                _ => return Err(bad(i, "does not connect a matching send/recv pair")),
            }
            let slot = &mut send_edge[edge.src_pe][edge.send_index];
            if slot.replace(i).is_some() {
                return Err(bad(i, "send already matched"));
            }
            let slot = &mut recv_edge[edge.dst_pe][edge.recv_index];
            if slot.replace(i).is_some() {
                return Err(bad(i, "recv already matched"));
            }
        }
        for (pe, events) in trace.events_per_pe().iter().enumerate() {
            for (index, event) in events.iter().enumerate() {
                let matched = match event.kind {
                    EventKind::Send { .. } => send_edge[pe][index].is_some(),
                    EventKind::Recv { .. } => recv_edge[pe][index].is_some(),
                    _ => true,
                };
                if !matched {
                    return Err(TimelineError::BadEdge(format!(
                        "pe {pe} event {index} ({}) is not matched",
                        event.kind.type_name()
                    )));
                }
            }
        }
        Ok(EdgeIndex { recv_edge, send_edge })
    }
}

/// Longest-path leveling of the happens-before DAG, with optional
/// per-event lower bounds.
fn longest_path(
    trace: &Trace,
    edges: &[CommEdge],
    index: &EdgeIndex,
    floor: Option<&[Vec<Level>]>,
) -> Result<Vec<Vec<Level>>, TimelineError> {
    let num_pes = trace.num_pes();
    let mut levels: Vec<Vec<Level>> = trace.events_per_pe().iter().map(|e| vec![0; e.len()]).collect();
    let mut cursor = vec![0usize; num_pes];
    let mut ready: Vec<PeId> = (0..num_pes).rev().collect();

    while let Some(pe) = ready.pop() {
        let events = trace.events(pe);
        while cursor[pe] < events.len() {
            let i = cursor[pe];
            let mut level = floor.map_or(0, |f| f[pe][i]);
            if i > 0 {
                level = level.max(levels[pe][i - 1] + 1);
            }
            if let Some(e) = index.recv_edge[pe][i] {
                let edge = &edges[e];
                if cursor[edge.src_pe] <= edge.send_index {
                    break;
                }
                level = level.max(levels[edge.src_pe][edge.send_index] + 1);
            }
            levels[pe][i] = level;
            cursor[pe] += 1;
            if let Some(e) = index.send_edge[pe][i] {
                let edge = &edges[e];
                if cursor[edge.dst_pe] == edge.recv_index {
                    ready.push(edge.dst_pe);
                }
            }
        }
    }

    if let Some(start) = (0..num_pes).find(|&pe| cursor[pe] < trace.events(pe).len()) {
        // Every blocked PE waits on a recv whose send sits on another
        // blocked PE; walking the waits must revisit a PE.
        let mut seen = HashSet::new();
        let mut pe = start;
        loop {
            let e = index.recv_edge[pe][cursor[pe]].expect("only receives block");
            if !seen.insert(pe) {
                let edge = &edges[e];
                return Err(TimelineError::Cycle {
                    src_pe: edge.src_pe,
                    send_index: edge.send_index,
                    dst_pe: edge.dst_pe,
                    recv_index: edge.recv_index,
                });
            }
            pe = edges[e].src_pe;
        }
    }
    Ok(levels)
}

/// Assign each event the length of the longest happens-before path
/// ending at it.
///
/// Program order on a PE and send-before-recv are the only relations, so
/// the first event on every PE sits at level 0 unless it is a receive.
pub fn assign_levels(trace: &Trace, edges: &[CommEdge]) -> Result<LogicalTimeline, TimelineError> {
    let index = EdgeIndex::build(trace, edges)?;
    let levels = longest_path(trace, edges, &index, None)?;
    Ok(LogicalTimeline::from_levels(trace.clone(), edges, levels))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct CodeKey {
    kind: &'static str,
    label: String,
    occurrence: usize,
}

/// Alignment keys: enter/leave by function name, send/recv by the
/// innermost enclosing function; both counted per PE.
fn code_groups(trace: &Trace) -> BTreeMap<CodeKey, Vec<(PeId, usize)>> {
    let mut groups: BTreeMap<CodeKey, Vec<(PeId, usize)>> = BTreeMap::new();
    for (pe, events) in trace.events_per_pe().iter().enumerate() {
        let mut stack: Vec<&str> = Vec::new();
        let mut seen: BTreeMap<(&'static str, String), usize> = BTreeMap::new();
        for (i, event) in events.iter().enumerate() {
            let label = match &event.kind {
                EventKind::Enter { name } | EventKind::Leave { name } => name.clone(),
                _ => stack.last().map_or_else(String::new, |s| s.to_string()),
            };
            match &event.kind {
                EventKind::Enter { name } => stack.push(name),
                EventKind::Leave { .. } => {
                    stack.pop();
                }
                _ => {}
            }
            let kind = event.kind.type_name();
            let count = seen.entry((kind, label.clone())).or_insert(0);
            let key = CodeKey { kind, label, occurrence: *count };
            *count += 1;
            groups.entry(key).or_default().push((pe, i));
        }
    }
    groups
}

/// Raise events produced by the same code to a shared level.
///
/// Best effort: each sweep lifts every group to its maximum and then
/// re-levels to restore the happens-before constraints. If no fixed point
/// is reached within `event_count` sweeps the input is returned unchanged.
pub fn align_by_code(timeline: &LogicalTimeline) -> LogicalTimeline {
    let trace = &timeline.trace;
    let edges: Vec<CommEdge> = timeline.edges.iter().map(|e| e.edge).collect();
    let index = EdgeIndex::build(trace, &edges).expect("timeline edges are consistent");
    let groups = code_groups(trace);
    let cap = trace.event_count().max(1);

    let mut levels = timeline.levels.clone();
    for _ in 0..cap {
        let mut floor = levels.clone();
        let mut raised = false;
        for members in groups.values() {
            let top = members.iter().map(|&(pe, i)| levels[pe][i]).max().unwrap_or(0);
            for &(pe, i) in members {
                if floor[pe][i] < top {
                    floor[pe][i] = top;
                    raised = true;
                }
            }
        }
        if !raised {
            return LogicalTimeline::from_levels(trace.clone(), &edges, levels);
        }
        levels = longest_path(trace, &edges, &index, Some(&floor)).expect("acyclic timeline");
    }
    timeline.clone()
}

/// Directed `(src, dst)` pairs that communicate at one logical send level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommRound {
    pub send_level: Level,
    edges: Vec<(PeId, PeId)>,
    pub num_pes: usize,
}

impl CommRound {
    /// Build a round; edges are stored sorted by `(src, dst)`.
    pub fn new(send_level: Level, num_pes: usize, mut edges: Vec<(PeId, PeId)>) -> Result<Self, String> {
        edges.sort_unstable();
        for w in edges.windows(2) {
            if w[0] == w[1] {
                return Err(format!("duplicate edge {:?}", w[0]));
            }
        }
        if let Some(&(s, d)) = edges.iter().find(|&&(s, d)| s == d || s >= num_pes || d >= num_pes) {
            return Err(format!("edge ({s},{d}) invalid for {num_pes} pes"));
        }
        Ok(CommRound { send_level, edges, num_pes })
    }

    pub fn edges(&self) -> &[(PeId, PeId)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// One round per distinct send level, in level order.
pub fn extract_rounds(timeline: &LogicalTimeline) -> Vec<CommRound> {
    let mut by_level: BTreeMap<Level, Vec<(PeId, PeId)>> = BTreeMap::new();
    for e in &timeline.edges {
        by_level.entry(e.send_level).or_default().push((e.edge.src_pe, e.edge.dst_pe));
    }
    by_level
        .into_iter()
        .map(|(level, edges)| {
            // A PE holds one event per level, so pairs within a level are distinct.
            CommRound::new(level, timeline.num_pes(), edges).expect("leveled edges form a valid round")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{match_communication, Event};

    fn timeline(trace: Trace) -> LogicalTimeline {
        let edges = match_communication(&trace).unwrap();
        assign_levels(&trace, &edges).unwrap()
    }

    #[test]
    fn single_message() {
        let t =
            timeline(Trace::new(2, vec![vec![Event::send(0, 1, 0)], vec![Event::recv(1, 0, 0)]]).unwrap());
        assert_eq!(t.levels(0), &[0]);
        assert_eq!(t.levels(1), &[1]);
        assert_eq!(t.max_level(), 1);
    }

    #[test]
    fn two_messages() {
        let t = timeline(
            Trace::new(
                2,
                vec![
                    vec![Event::send(0, 1, 0), Event::send(0, 1, 0)],
                    vec![Event::recv(1, 0, 0), Event::recv(1, 0, 0)],
                ],
            )
            .unwrap(),
        );
        assert_eq!(t.levels(0), &[0, 1]);
        assert_eq!(t.levels(1), &[1, 2]);
    }

    #[test]
    fn recv_before_send_cycle_is_reported() {
        // Both PEs receive before sending: a deadlock in happens-before.
        let trace = Trace::new(
            2,
            vec![
                vec![Event::recv(0, 1, 0), Event::send(0, 1, 0)],
                vec![Event::recv(1, 0, 0), Event::send(1, 0, 0)],
            ],
        )
        .unwrap();
        let edges = match_communication(&trace).unwrap();
        let err = assign_levels(&trace, &edges).unwrap_err();
        assert!(matches!(err, TimelineError::Cycle { .. }), "{err}");
        let TimelineError::Cycle { src_pe, dst_pe, .. } = err else { unreachable!() };
        assert!(edges.iter().any(|e| e.src_pe == src_pe && e.dst_pe == dst_pe));
    }

    #[test]
    fn incomplete_matching_rejected() {
        let trace = Trace::new(2, vec![vec![Event::send(0, 1, 0)], vec![Event::recv(1, 0, 0)]]).unwrap();
        assert!(matches!(assign_levels(&trace, &[]), Err(TimelineError::BadEdge(_))));
    }

    #[test]
    fn idle_pes_have_no_levels() {
        let t = timeline(Trace::empty(4).unwrap());
        assert_eq!(t.max_level(), 0);
        assert_eq!(t.level_count(), 0);
        assert!(extract_rounds(&t).is_empty());
    }

    #[test]
    fn alignment_raises_group_to_max() {
        let trace = Trace::new(
            2,
            vec![
                vec![Event::enter(0, "compute"), Event::leave(0, "compute")],
                vec![
                    Event::enter(1, "a"),
                    Event::leave(1, "a"),
                    Event::enter(1, "b"),
                    Event::enter(1, "compute"),
                    Event::leave(1, "compute"),
                    Event::leave(1, "b"),
                ],
            ],
        )
        .unwrap();
        let t = timeline(trace);
        assert_eq!(t.level_of(0, 0), 0);
        assert_eq!(t.level_of(1, 3), 3);
        let aligned = align_by_code(&t);
        assert_eq!(aligned.level_of(0, 0), 3);
        assert_eq!(aligned.level_of(1, 3), 3);
        assert_eq!(align_by_code(&aligned), aligned);
    }

    #[test]
    fn alignment_with_extra_local_event() {
        // PE 1 does extra local work before its send
        let trace = Trace::new(
            3,
            vec![
                vec![Event::enter(0, "step"), Event::send(0, 1, 0), Event::leave(0, "step")],
                vec![
                    Event::enter(1, "step"),
                    Event::enter(1, "pack"),
                    Event::leave(1, "pack"),
                    Event::send(1, 2, 0),
                    Event::recv(1, 0, 0),
                    Event::leave(1, "step"),
                ],
                vec![Event::enter(2, "step"), Event::recv(2, 1, 0), Event::leave(2, "step")],
            ],
        )
        .unwrap();
        let t = timeline(trace);
        assert_ne!(t.level_of(0, 1), t.level_of(1, 3));
        let aligned = align_by_code(&t);
        assert_eq!(aligned.level_of(0, 1), aligned.level_of(1, 3));
        for e in aligned.edges() {
            assert!(e.recv_level > e.send_level);
        }
        for pe in 0..3 {
            assert!(aligned.levels(pe).windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn rounds_group_by_send_level() {
        let trace = Trace::new(
            2,
            vec![
                vec![Event::send(0, 1, 0), Event::enter(0, "x"), Event::leave(0, "x"), Event::recv(0, 1, 0)],
                vec![Event::recv(1, 0, 0), Event::send(1, 0, 0)],
            ],
        )
        .unwrap();
        let t = timeline(trace);
        let rounds = extract_rounds(&t);
        let levels: Vec<Level> = rounds.iter().map(|r| r.send_level).collect();
        assert_eq!(levels, vec![0, 2]);
        assert_eq!(rounds[0].edges(), &[(0, 1)]);
        assert_eq!(rounds[1].edges(), &[(1, 0)]);
    }

    #[test]
    fn round_rejects_invalid_pairs() {
        assert!(CommRound::new(0, 4, vec![(0, 1), (0, 1)]).is_err());
        assert!(CommRound::new(0, 4, vec![(2, 2)]).is_err());
        assert!(CommRound::new(0, 4, vec![(0, 4)]).is_err());
    }
}
