//! Test-only generators and oracles. Nothing here calls into the leveling
//! or detection code it is used to check.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use commglyph_core::{Event, Grouping, PatternDescriptor, Trace};
use rand::rngs::StdRng;
use rand::Rng;

/// Ground-truth message: (src, send_index, dst, recv_index).
pub type TruePair = (usize, usize, usize, usize);

/// Simulate a random program: PEs take turns entering/leaving functions,
/// sending, and receiving the oldest pending message on a channel. All
/// open functions are closed and all messages delivered at the end, so
/// the trace is complete and acyclic.
pub fn random_trace(rng: &mut StdRng, max_events: usize) -> (Trace, Vec<TruePair>) {
    let num_pes = rng.random_range(2..=8);
    let tags = rng.random_range(1..=3);
    let names = ["compute", "exchange", "pack", "io"];
    let mut events: Vec<Vec<Event>> = vec![Vec::new(); num_pes];
    let mut open: Vec<Vec<&str>> = vec![Vec::new(); num_pes];
    let mut pending: BTreeMap<(usize, usize, i64), VecDeque<usize>> = BTreeMap::new();
    let mut pairs = Vec::new();
    // leave headroom for closing intervals and delivering messages
    let budget = max_events / 2;
    let mut total = 0;

    while total < budget {
        let pe = rng.random_range(0..num_pes);
        match rng.random_range(0..5) {
            0 => {
                let name = names[rng.random_range(0..names.len())];
                events[pe].push(Event::enter(pe, name));
                open[pe].push(name);
            }
            1 => {
                if let Some(name) = open[pe].pop() {
                    events[pe].push(Event::leave(pe, name));
                } else {
                    continue;
                }
            }
            2 | 3 => {
                let mut dst = rng.random_range(0..num_pes - 1);
                if dst >= pe {
                    dst += 1;
                }
                let tag = rng.random_range(0..tags);
                pending.entry((pe, dst, tag)).or_default().push_back(events[pe].len());
                events[pe].push(Event::send(pe, dst, tag));
            }
            _ => {
                let waiting: Vec<(usize, usize, i64)> =
                    pending.iter().filter(|(k, q)| k.1 == pe && !q.is_empty()).map(|(k, _)| *k).collect();
                if waiting.is_empty() {
                    continue;
                }
                let key = waiting[rng.random_range(0..waiting.len())];
                let send_index = pending.get_mut(&key).unwrap().pop_front().unwrap();
                pairs.push((key.0, send_index, pe, events[pe].len()));
                events[pe].push(Event::recv(pe, key.0, key.2));
            }
        }
        total += 1;
    }
    for (key, queue) in pending {
        for send_index in queue {
            let (src, dst, tag) = key;
            pairs.push((src, send_index, dst, events[dst].len()));
            events[dst].push(Event::recv(dst, src, tag));
        }
    }
    for pe in 0..num_pes {
        while let Some(name) = open[pe].pop() {
            events[pe].push(Event::leave(pe, name));
        }
    }
    pairs.sort();
    (Trace::new(num_pes, events).expect("simulated trace is valid"), pairs)
}

/// Longest path over the explicit happens-before DAG by repeated
/// relaxation until nothing changes.
pub fn brute_force_levels(trace: &Trace, pairs: &[TruePair]) -> Vec<Vec<u32>> {
    let mut offset = Vec::new();
    let mut n = 0;
    for pe in 0..trace.num_pes() {
        offset.push(n);
        n += trace.events(pe).len();
    }
    let mut arcs = Vec::new();
    for (pe, &base) in offset.iter().enumerate() {
        for i in 1..trace.events(pe).len() {
            arcs.push((base + i - 1, base + i));
        }
    }
    for &(src, si, dst, ri) in pairs {
        arcs.push((offset[src] + si, offset[dst] + ri));
    }
    let mut level = vec![0u32; n];
    for _ in 0..=n {
        let mut changed = false;
        for &(a, b) in &arcs {
            if level[b] < level[a] + 1 {
                level[b] = level[a] + 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..trace.num_pes()).map(|pe| level[offset[pe]..offset[pe] + trace.events(pe).len()].to_vec()).collect()
}

pub const CORPUS_PES: [usize; 4] = [16, 64, 1280, 2560];

/// Lines drawn for one group of a pattern.
fn lines_per_group(d: &PatternDescriptor) -> usize {
    match d.family {
        commglyph_core::Family::Offset => d.group_size() - d.stride,
        _ => d.group_size(),
    }
}

/// Family x grouping x stride 2..=10 x PE count, with group sizes giving
/// bundles of 4 to 16 lines. Exchanges are included for every stride whose
/// block size divides the PE count.
pub fn corpus() -> Vec<PatternDescriptor> {
    let mut out = Vec::new();
    for &p in &CORPUS_PES {
        for s in 2..=10usize {
            out.push(PatternDescriptor::offset(p, s, Grouping::Continuous));
            if p != 2 * s {
                out.push(PatternDescriptor::ring(p, s, Grouping::Continuous));
            }
            if p % (2 * s) == 0 {
                out.push(PatternDescriptor::exchange(p, s));
            }
            for g in (s + 1)..p {
                if p % g != 0 {
                    continue;
                }
                let grouped = Grouping::Grouped { group_size: g };
                let offset = PatternDescriptor::offset(p, s, grouped);
                if (4..=16).contains(&lines_per_group(&offset)) {
                    out.push(offset);
                }
                let ring = PatternDescriptor::ring(p, s, grouped);
                if g != 2 * s && (4..=16).contains(&lines_per_group(&ring)) {
                    out.push(ring);
                }
            }
        }
    }
    out
}

pub fn random_descriptor(rng: &mut StdRng, corpus: &[PatternDescriptor]) -> PatternDescriptor {
    corpus[rng.random_range(0..corpus.len())]
}
