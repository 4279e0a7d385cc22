//! Synthetic communication patterns: offsets, rings, exchanges and
//! stencils, as single rounds or as whole multi-step traces.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::PatternError;
use crate::timeline::CommRound;
use crate::trace::{Event, PeId, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Offset,
    Ring,
    Exchange,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Offset => "offset",
            Family::Ring => "ring",
            Family::Exchange => "exchange",
        })
    }
}

/// How the PE id space is partitioned before the pattern rule applies.
///
/// JSON: `"continuous"` or `{"group_size": g}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Grouping {
    Continuous,
    Grouped { group_size: usize },
}

impl Serialize for Grouping {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Grouping::Continuous => serializer.serialize_str("continuous"),
            Grouping::Grouped { group_size } => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("group_size", group_size)?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Grouping {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Grouped {
            group_size: usize,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Grouped(Grouped),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Name(name) if name == "continuous" => Ok(Grouping::Continuous),
            Repr::Name(name) => Err(de::Error::custom(format!("unknown grouping `{name}`"))),
            Repr::Grouped(g) => Ok(Grouping::Grouped { group_size: g.group_size }),
        }
    }
}

/// A parameterized offset, ring or exchange over `num_pes` PEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternDescriptor {
    pub family: Family,
    pub stride: usize,
    pub grouping: Grouping,
    pub num_pes: usize,
}

impl PatternDescriptor {
    pub fn offset(num_pes: usize, stride: usize, grouping: Grouping) -> Self {
        PatternDescriptor { family: Family::Offset, stride, grouping, num_pes }
    }

    pub fn ring(num_pes: usize, stride: usize, grouping: Grouping) -> Self {
        PatternDescriptor { family: Family::Ring, stride, grouping, num_pes }
    }

    /// Exchange with stride `s` always pairs within blocks of `2s`.
    pub fn exchange(num_pes: usize, stride: usize) -> Self {
        PatternDescriptor {
            family: Family::Exchange,
            stride,
            grouping: Grouping::Grouped { group_size: 2 * stride },
            num_pes,
        }
    }

    /// Size of one group; the whole PE space when continuous.
    pub fn group_size(&self) -> usize {
        match self.grouping {
            Grouping::Continuous => self.num_pes,
            Grouping::Grouped { group_size } => group_size,
        }
    }

    pub fn group_count(&self) -> usize {
        match self.grouping {
            Grouping::Continuous => 1,
            Grouping::Grouped { group_size } if group_size > 0 => self.num_pes / group_size,
            Grouping::Grouped { .. } => 0,
        }
    }

    pub fn is_grouped(&self) -> bool {
        matches!(self.grouping, Grouping::Grouped { .. })
    }

    pub fn validate(&self) -> Result<(), PatternError> {
        let invalid = |m: String| Err(PatternError::InvalidDescriptor(m));
        let (p, s) = (self.num_pes, self.stride);
        if p < 2 {
            return invalid(format!("num_pes={p} must be at least 2"));
        }
        if s == 0 {
            return invalid("stride must be positive".into());
        }
        let g = self.group_size();
        if let Grouping::Grouped { group_size } = self.grouping {
            if group_size == 0 || p % group_size != 0 {
                return invalid(format!("group size {group_size} does not divide num_pes={p}"));
            }
        }
        if s >= g {
            return invalid(format!("stride {s} must be below group size {g}"));
        }
        match self.family {
            Family::Exchange if g != 2 * s => {
                invalid(format!("exchange needs group size 2 x stride = {}, got {g}", 2 * s))
            }
            Family::Ring if g == 2 * s => Err(PatternError::RingIsExchange { group_size: g }),
            _ => Ok(()),
        }
    }

    /// The single round this descriptor describes, at send level 0.
    pub fn round(&self) -> Result<CommRound, PatternError> {
        match self.family {
            Family::Offset => gen_offset(self),
            Family::Ring => gen_ring(self),
            Family::Exchange => gen_exchange(self),
        }
    }
}

impl fmt::Display for PatternDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stride {} over {} pes", self.family, self.stride, self.num_pes)?;
        match self.grouping {
            Grouping::Continuous => write!(f, ", continuous"),
            Grouping::Grouped { group_size } => {
                write!(f, ", groups of {group_size} x{}", self.group_count())
            }
        }
    }
}

fn expect_family(d: &PatternDescriptor, family: Family) -> Result<(), PatternError> {
    if d.family != family {
        return Err(PatternError::InvalidDescriptor(format!(
            "expected {family} descriptor, got {}",
            d.family
        )));
    }
    d.validate()
}

fn round(num_pes: usize, edges: Vec<(PeId, PeId)>) -> CommRound {
    CommRound::new(0, num_pes, edges).expect("generated edges are valid")
}

/// `(b+r) -> (b+r+s)` within each group, no wrap.
pub fn gen_offset(d: &PatternDescriptor) -> Result<CommRound, PatternError> {
    expect_family(d, Family::Offset)?;
    let (g, s) = (d.group_size(), d.stride);
    let edges = (0..d.num_pes).step_by(g).flat_map(|b| (0..g - s).map(move |r| (b + r, b + r + s))).collect();
    Ok(round(d.num_pes, edges))
}

fn modular_round(d: &PatternDescriptor) -> CommRound {
    let (g, s) = (d.group_size(), d.stride);
    let edges =
        (0..d.num_pes).step_by(g).flat_map(|b| (0..g).map(move |r| (b + r, b + (r + s) % g))).collect();
    round(d.num_pes, edges)
}

/// `(b+r) -> b + ((r+s) mod g)` within each group.
pub fn gen_ring(d: &PatternDescriptor) -> Result<CommRound, PatternError> {
    expect_family(d, Family::Ring)?;
    Ok(modular_round(d))
}

/// Pairwise swaps at distance `s` inside blocks of `2s`.
pub fn gen_exchange(d: &PatternDescriptor) -> Result<CommRound, PatternError> {
    expect_family(d, Family::Exchange)?;
    Ok(modular_round(d))
}

/// Grid-neighbor communication over a k-dimensional decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilSpec {
    pub dims: Vec<usize>,
    pub hops: usize,
    pub diagonals: bool,
}

impl StencilSpec {
    pub fn num_pes(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn validate(&self) -> Result<(), PatternError> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(PatternError::InvalidStencil("dims must be non-empty and positive".into()));
        }
        if self.hops == 0 {
            return Err(PatternError::InvalidStencil("hops must be at least 1".into()));
        }
        if self.num_pes() < 2 {
            return Err(PatternError::InvalidStencil("grid needs at least 2 cells".into()));
        }
        Ok(())
    }
}

/// Row-major coordinates of a PE id.
fn coords(mut id: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (axis, &d) in dims.iter().enumerate().rev() {
        out[axis] = id % d;
        id /= d;
    }
    out
}

fn linear(coords: &[isize], dims: &[usize]) -> Option<usize> {
    let mut id = 0usize;
    for (&c, &d) in coords.iter().zip(dims) {
        if c < 0 || c as usize >= d {
            return None;
        }
        id = id * d + c as usize;
    }
    Some(id)
}

/// Every cell sends to each neighbor within `hops` (Chebyshev distance with
/// diagonals, single-axis distance without). Grid edges do not wrap.
pub fn gen_stencil(spec: &StencilSpec) -> Result<CommRound, PatternError> {
    spec.validate()?;
    let dims = &spec.dims;
    let k = dims.len();
    let j = spec.hops as isize;
    let offsets: Vec<Vec<isize>> = if spec.diagonals {
        let side = (2 * j + 1) as usize;
        (0..side.pow(k as u32))
            .map(|mut n| {
                (0..k)
                    .map(|_| {
                        let v = (n % side) as isize - j;
                        n /= side;
                        v
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|o| o.iter().any(|&v| v != 0))
            .collect()
    } else {
        (0..k)
            .flat_map(|axis| {
                (-j..=j).filter(|&v| v != 0).map(move |v| {
                    let mut o = vec![0; k];
                    o[axis] = v;
                    o
                })
            })
            .collect()
    };
    let mut edges = Vec::new();
    for src in 0..spec.num_pes() {
        let c = coords(src, dims);
        for o in &offsets {
            let n: Vec<isize> = c.iter().zip(o).map(|(&a, &b)| a as isize + b).collect();
            if let Some(dst) = linear(&n, dims) {
                edges.push((src, dst));
            }
        }
    }
    Ok(round(spec.num_pes(), edges))
}

/// Anything [`gen_trace`] can turn into a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternSource {
    Pattern(PatternDescriptor),
    Stencil(StencilSpec),
}

impl PatternSource {
    pub fn round(&self) -> Result<CommRound, PatternError> {
        match self {
            PatternSource::Pattern(d) => d.round(),
            PatternSource::Stencil(s) => gen_stencil(s),
        }
    }
}

impl From<PatternDescriptor> for PatternSource {
    fn from(d: PatternDescriptor) -> Self {
        PatternSource::Pattern(d)
    }
}

impl From<StencilSpec> for PatternSource {
    fn from(s: StencilSpec) -> Self {
        PatternSource::Stencil(s)
    }
}

/// Name of the per-timestep function interval in generated traces.
pub const STEP_FUNCTION: &str = "step";

/// Repeat a pattern for `timesteps` steps.
///
/// Each PE, each step: enter `step`, its sends (by destination), its
/// receives (by source), leave `step`. The step index is the message tag.
pub fn gen_trace(source: &PatternSource, timesteps: usize) -> Result<Trace, PatternError> {
    if timesteps == 0 {
        return Err(PatternError::NoTimesteps);
    }
    let round = source.round()?;
    let p = round.num_pes;
    let mut sends: Vec<Vec<PeId>> = vec![Vec::new(); p];
    let mut recvs: Vec<Vec<PeId>> = vec![Vec::new(); p];
    for &(s, d) in round.edges() {
        sends[s].push(d);
        recvs[d].push(s);
    }
    for r in &mut recvs {
        r.sort_unstable();
    }
    let events = (0..p)
        .map(|pe| {
            let mut evs = Vec::with_capacity(timesteps * (2 + sends[pe].len() + recvs[pe].len()));
            for step in 0..timesteps {
                let tag = step as i64;
                evs.push(Event::enter(pe, STEP_FUNCTION));
                evs.extend(sends[pe].iter().map(|&d| Event::send(pe, d, tag)));
                evs.extend(recvs[pe].iter().map(|&s| Event::recv(pe, s, tag)));
                evs.push(Event::leave(pe, STEP_FUNCTION));
            }
            evs
        })
        .collect();
    Ok(Trace::new(p, events).expect("generated trace is well formed"))
}
