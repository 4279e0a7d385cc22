//! Communication-pattern analysis and scalable Gantt rendering for
//! parallel execution traces.
//!
//! The pipeline: [`Trace::parse`] → [`match_communication`] →
//! [`assign_levels`] / [`align_by_code`] → [`extract_rounds`] →
//! [`classify_round`] → one of the scene layouts → [`emit_svg`].
//! [`Analysis`] runs everything up to classification in one call.

pub mod detector;
pub mod error;
pub mod patterns;
pub mod pipeline;
pub mod render_svg;
pub mod scene;
pub mod service;
pub mod timeline;
pub mod trace;

pub use detector::{canonicalize, classify_round, same_stride, ClassResult, Classification};
pub use error::{DetectError, Error, PatternError, SceneError, TimelineError, TraceError};
pub use patterns::{
    gen_exchange, gen_offset, gen_ring, gen_stencil, gen_trace, Family, Grouping, PatternDescriptor,
    PatternSource, StencilSpec,
};
pub use pipeline::Analysis;
pub use render_svg::{emit_svg, Palette, RenderConfig};
pub use scene::{
    choose_mode, glyph_geometry, layout_full, layout_glyph, layout_partial, partition_count, stride_to_angle,
    Glyph, GlyphKind, Mode, Scene, Viewport,
};
pub use timeline::{align_by_code, assign_levels, extract_rounds, CommRound, Level, LogicalTimeline};
pub use trace::{match_communication, CommEdge, Event, EventKind, PeId, Trace};
