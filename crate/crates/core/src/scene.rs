//! Resolution-independent draw lists for the three chart representations.
//!
//! Coordinates are CSS pixels, y grows downward and PE 0 is the top row.
//! Each logical level owns an equal-width band on the x axis.

use std::collections::BTreeMap;

use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::detector::{ClassResult, Classification};
use crate::error::SceneError;
use crate::patterns::{Family, PatternDescriptor};
use crate::timeline::{extract_rounds, Level, LogicalTimeline};
use crate::trace::{EventKind, PeId};

/// Vertical distance between parallel glyph strokes.
pub const LINE_SPACING_PX: f64 = 8.0;
/// Minimum height of one glyph partition.
pub const MIN_PARTITION_PX: f64 = 60.0;
pub const MAX_PARTITIONS: usize = 8;
pub const MAX_PROTRUSIONS: usize = 4;
pub const MAX_CROSS_LINES: usize = 5;
pub const MIN_ANGLE_DEG: f64 = 15.0;
pub const MAX_ANGLE_DEG: f64 = 60.0;
/// Visible rows at or below which lines are drawn instead of glyphs.
pub const DEFAULT_THRESHOLD_ROWS: usize = 64;
/// Rows shown by a partial view when no window is given.
pub const DEFAULT_PARTIAL_ROWS: usize = 8;
/// Fraction of its level span a glyph box occupies.
const GLYPH_WIDTH_FRACTION: f64 = 0.8;
const GLYPH_GAP_PX: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Full,
    Partial,
    Glyph,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "partial" => Ok(Mode::Partial),
            "glyph" => Ok(Mode::Glyph),
            other => Err(format!("unknown mode `{other}` (expected full, partial or glyph)")),
        }
    }
}

/// Canvas size plus the visible row and level windows (both half-open).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Viewport {
    pub width_px: f64,
    pub height_px: f64,
    pub row_window: Option<(usize, usize)>,
    pub time_window: (Level, Level),
}

impl Viewport {
    /// All levels of `timeline`, no row window.
    pub fn for_timeline(timeline: &LogicalTimeline, width_px: f64, height_px: f64) -> Self {
        Viewport { width_px, height_px, row_window: None, time_window: (0, timeline.level_count().max(1)) }
    }

    pub fn with_rows(mut self, first: usize, last: usize) -> Self {
        self.row_window = Some((first, last));
        self
    }

    pub fn with_levels(mut self, first: Level, last: Level) -> Self {
        self.time_window = (first, last);
        self
    }

    pub fn visible_rows(&self, num_pes: usize) -> usize {
        self.row_window.map_or(num_pes, |(a, b)| b.saturating_sub(a))
    }

    fn validate(&self, timeline: &LogicalTimeline) -> Result<(), SceneError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.width_px) || !ok(self.height_px) {
            return Err(SceneError::Viewport(format!(
                "size {}x{} must be positive",
                self.width_px, self.height_px
            )));
        }
        let num_pes = timeline.num_pes();
        if let Some((first, last)) = self.row_window {
            if first >= last || last > num_pes {
                return Err(SceneError::RowWindow { first, last, num_pes });
            }
        }
        let (first, last) = self.time_window;
        if first >= last || last > timeline.level_count().max(1) {
            return Err(SceneError::LevelWindow { first, last, max_level: timeline.max_level() });
        }
        Ok(())
    }
}

/// Maps rows and levels into viewport pixels.
#[derive(Debug, Clone, Copy)]
struct Frame {
    first_row: usize,
    last_row: usize,
    first_level: Level,
    last_level: Level,
    row_h: f64,
    band_w: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn new(viewport: &Viewport, num_pes: usize) -> Self {
        let (first_row, last_row) = viewport.row_window.unwrap_or((0, num_pes));
        let (first_level, last_level) = viewport.time_window;
        Frame {
            first_row,
            last_row,
            first_level,
            last_level,
            row_h: viewport.height_px / (last_row - first_row) as f64,
            band_w: viewport.width_px / f64::from(last_level - first_level),
            width: viewport.width_px,
            height: viewport.height_px,
        }
    }

    fn row_top(&self, row: PeId) -> f64 {
        (row as f64 - self.first_row as f64) * self.row_h
    }

    fn row_center(&self, row: PeId) -> f64 {
        self.row_top(row) + self.row_h / 2.0
    }

    fn band_start(&self, level: Level) -> f64 {
        (f64::from(level) - f64::from(self.first_level)) * self.band_w
    }

    fn band_center(&self, level: Level) -> f64 {
        self.band_start(level) + self.band_w / 2.0
    }

    fn row_visible(&self, row: PeId) -> bool {
        (self.first_row..self.last_row).contains(&row)
    }

    fn level_visible(&self, level: Level) -> bool {
        (self.first_level..self.last_level).contains(&level)
    }

    fn levels_overlap(&self, first: Level, last: Level) -> bool {
        first < self.last_level && last >= self.first_level
    }
}

/// A function interval on one row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRect {
    pub pe: PeId,
    /// Level of the enter event.
    pub level: Level,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommLine {
    pub src: PeId,
    pub dst: PeId,
    pub send_level: Level,
    pub recv_level: Level,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Segment {
    fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Segment { x1, y1, x2, y2 }
    }

    fn translated(&self, dy: f64) -> Self {
        Segment { y1: self.y1 + dy, y2: self.y2 + dy, ..*self }
    }
}

impl Serialize for Segment {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(4))?;
        for v in [self.x1, self.y1, self.x2, self.y2] {
            seq.serialize_element(&v)?;
        }
        seq.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GlyphKind {
    Offset,
    Ring,
    Exchange,
}

impl From<Family> for GlyphKind {
    fn from(f: Family) -> Self {
        match f {
            Family::Offset => GlyphKind::Offset,
            Family::Ring => GlyphKind::Ring,
            Family::Exchange => GlyphKind::Exchange,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

struct BBoxArray<'a>(&'a BBox);

impl Serialize for BBoxArray<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let b = self.0;
        let mut seq = serializer.serialize_seq(Some(4))?;
        for v in [b.x, b.y, b.w, b.h] {
            seq.serialize_element(&v)?;
        }
        seq.end()
    }
}

fn bbox_as_array<S: Serializer>(b: &BBox, s: S) -> Result<S::Ok, S::Error> {
    BBoxArray(b).serialize(s)
}

/// Abstract stand-in for one communication round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Glyph {
    pub kind: GlyphKind,
    #[serde(serialize_with = "bbox_as_array")]
    pub bbox: BBox,
    pub angle_deg: f64,
    pub partitions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protrusions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_lines: Option<usize>,
    /// Round this glyph stands for.
    pub send_level: Level,
    /// Strokes from [`glyph_geometry`], precomputed for consumers.
    pub segments: Vec<Segment>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scene {
    pub mode: Mode,
    pub viewport: Viewport,
    pub rects: Vec<IntervalRect>,
    pub lines: Vec<CommLine>,
    pub glyphs: Vec<Glyph>,
    pub blur_background: bool,
}

impl Scene {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serialization is infallible")
    }

    /// Line primitives an emitter draws: comm lines plus glyph strokes.
    pub fn segment_count(&self) -> usize {
        self.lines.len() + self.glyphs.iter().map(|g| g.segments.len()).sum::<usize>()
    }
}

fn intervals(timeline: &LogicalTimeline, frame: &Frame) -> Vec<IntervalRect> {
    let trace = timeline.trace();
    let mut rects = Vec::new();
    for pe in frame.first_row..frame.last_row {
        let levels = timeline.levels(pe);
        let mut open: Vec<(Level, &str)> = Vec::new();
        let mut row_rects = Vec::new();
        for (i, event) in trace.events(pe).iter().enumerate() {
            match &event.kind {
                EventKind::Enter { name } => open.push((levels[i], name)),
                EventKind::Leave { .. } => {
                    let (start, name) = open.pop().expect("validated nesting");
                    let end = levels[i];
                    if !frame.levels_overlap(start, end) {
                        continue;
                    }
                    let x1 = frame.band_start(start).max(0.0);
                    let x2 = (frame.band_start(end) + frame.band_w).min(frame.width);
                    row_rects.push(IntervalRect {
                        pe,
                        level: start,
                        x: x1,
                        y: frame.row_top(pe),
                        w: x2 - x1,
                        h: frame.row_h,
                        label: name.to_string(),
                    });
                }
                _ => {}
            }
        }
        // inner intervals close first; order by enter level, outermost first
        row_rects.sort_by(|a, b| a.level.cmp(&b.level).then(b.w.total_cmp(&a.w)));
        rects.extend(row_rects);
    }
    rects
}

/// Liang-Barsky clip of a segment to `[0,w] x [0,h]`.
fn clip(x1: f64, y1: f64, x2: f64, y2: f64, w: f64, h: f64) -> Option<(f64, f64, f64, f64)> {
    let (dx, dy) = (x2 - x1, y2 - y1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [(-dx, x1), (dx, w - x1), (-dy, y1), (dy, h - y1)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    Some((x1 + t0 * dx, y1 + t0 * dy, x1 + t1 * dx, y1 + t1 * dy))
}

fn comm_lines(timeline: &LogicalTimeline, frame: &Frame) -> Vec<CommLine> {
    let mut lines = Vec::new();
    for e in timeline.edges() {
        let (src, dst) = (e.edge.src_pe, e.edge.dst_pe);
        let send_in = frame.row_visible(src) && frame.level_visible(e.send_level);
        let recv_in = frame.row_visible(dst) && frame.level_visible(e.recv_level);
        if !send_in && !recv_in {
            continue;
        }
        let (x1, y1) = (frame.band_center(e.send_level), frame.row_center(src));
        let (x2, y2) = (frame.band_center(e.recv_level), frame.row_center(dst));
        let (x1, y1, x2, y2) = if send_in && recv_in {
            (x1, y1, x2, y2)
        } else {
            match clip(x1, y1, x2, y2, frame.width, frame.height) {
                Some(c) => c,
                None => continue,
            }
        };
        lines.push(CommLine { src, dst, send_level: e.send_level, recv_level: e.recv_level, x1, y1, x2, y2 });
    }
    lines
}

fn line_scene(timeline: &LogicalTimeline, viewport: Viewport, mode: Mode) -> Scene {
    let frame = Frame::new(&viewport, timeline.num_pes());
    Scene {
        mode,
        viewport,
        rects: intervals(timeline, &frame),
        lines: comm_lines(timeline, &frame),
        glyphs: Vec::new(),
        blur_background: false,
    }
}

/// All rows with exact communication lines. Any row window on `viewport`
/// is dropped.
pub fn layout_full(timeline: &LogicalTimeline, viewport: &Viewport) -> Result<Scene, SceneError> {
    let viewport = Viewport { row_window: None, ..*viewport };
    viewport.validate(timeline)?;
    Ok(line_scene(timeline, viewport, Mode::Full))
}

/// A row window with exact lines; lines leaving the window are clipped at
/// its boundary, lines with neither end inside are omitted. Without a
/// window the first [`DEFAULT_PARTIAL_ROWS`] rows are shown.
pub fn layout_partial(timeline: &LogicalTimeline, viewport: &Viewport) -> Result<Scene, SceneError> {
    let num_pes = timeline.num_pes();
    let mut viewport = *viewport;
    if viewport.row_window.is_none() {
        viewport.row_window = Some((0, DEFAULT_PARTIAL_ROWS.min(num_pes)));
    }
    viewport.validate(timeline)?;
    let (first, last) = viewport.row_window.expect("set above");
    if last - first < 2 {
        return Err(SceneError::RowWindow { first, last, num_pes });
    }
    Ok(line_scene(timeline, viewport, Mode::Partial))
}

/// Stride hint as a stroke angle: linear over strides 2..=10, clamped
/// outside.
pub fn stride_to_angle(stride: usize) -> f64 {
    let s = stride.clamp(2, 10) as f64;
    MIN_ANGLE_DEG + (MAX_ANGLE_DEG - MIN_ANGLE_DEG) * (s - 2.0) / 8.0
}

/// Number of vertical repeats for a grouped pattern, from the available
/// height only; continuous patterns get one.
pub fn partition_count(descriptor: &PatternDescriptor, box_height_px: f64) -> usize {
    if !descriptor.is_grouped() {
        return 1;
    }
    let fit = (box_height_px / MIN_PARTITION_PX).floor();
    let fit = if fit.is_finite() && fit > 0.0 { fit as usize } else { 0 };
    fit.clamp(2, MAX_PARTITIONS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphGeometry {
    pub segments: Vec<Segment>,
    /// The box could not hold the regular drawing.
    pub degenerate: bool,
}

struct Body {
    segments: Vec<Segment>,
    degenerate: bool,
    /// Left and right x of the body, and top-right / bottom-left y.
    left: f64,
    right: f64,
    top_right_y: f64,
    bottom_left_y: f64,
}

/// Parallel down-right strokes, as many as fit at [`LINE_SPACING_PX`].
fn offset_body(x0: f64, y0: f64, w: f64, h: f64, angle_deg: f64) -> Body {
    let tan = angle_deg.to_radians().tan();
    let spacing = LINE_SPACING_PX;
    let w = w.max(0.0);
    let mut w_eff = w.min(h / tan);
    let mut count = ((h - w_eff * tan) / spacing).floor() as i64 + 1;
    let mut degenerate = false;
    if count < 2 {
        if h >= spacing && w > 0.0 {
            w_eff = w.min((h - spacing) / tan);
            count = (((h - w_eff * tan) / spacing).floor() as i64 + 1).max(2);
        } else {
            count = 1;
            degenerate = true;
        }
    }
    if w_eff <= 0.0 {
        degenerate = true;
    }
    let count = count.max(1) as usize;
    let used = (count - 1) as f64 * spacing + w_eff * tan;
    let xs = x0 + (w - w_eff) / 2.0;
    let ys = y0 + ((h - used) / 2.0).max(0.0);
    let segments = (0..count)
        .map(|k| {
            let y = ys + k as f64 * spacing;
            Segment::new(xs, y, xs + w_eff, y + w_eff * tan)
        })
        .collect();
    Body {
        segments,
        degenerate,
        left: xs,
        right: xs + w_eff,
        top_right_y: ys + w_eff * tan,
        bottom_left_y: ys + (count - 1) as f64 * spacing,
    }
}

fn draw_offset(x0: f64, y0: f64, w: f64, h: f64, angle_deg: f64) -> (Vec<Segment>, bool) {
    let body = offset_body(x0, y0, w, h, angle_deg);
    (body.segments, body.degenerate)
}

/// Offset body with short up-right wrap strokes beyond its top-right and
/// bottom-left ends. Strokes sit outside the body's x range.
fn draw_ring(x0: f64, y0: f64, w: f64, h: f64, angle_deg: f64, protrusions: usize) -> (Vec<Segment>, bool) {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let gap = LINE_SPACING_PX / 2.0;
    // short relative to the cell, and never wider than a fifth of the box
    let len = (0.2 * h).min(((0.2 * w - gap) / cos).max(0.0));
    let margin = gap + len * cos;
    let body = offset_body(x0 + margin, y0, w - 2.0 * margin, h, angle_deg);
    let mut segments = body.segments;
    for k in 0..protrusions {
        let dy = k as f64 * LINE_SPACING_PX;
        let (sx, sy) = (body.right + gap, body.top_right_y + dy);
        segments.push(Segment::new(sx, sy, sx + len * cos, sy - len * sin));
    }
    for k in 0..protrusions {
        let dy = k as f64 * LINE_SPACING_PX;
        let (sx, sy) = (body.left - gap, body.bottom_left_y - dy);
        segments.push(Segment::new(sx, sy, sx - len * cos, sy + len * sin));
    }
    (segments, body.degenerate || margin * 2.0 >= w)
}

/// One "x" per partition built from four arms that stop short of the
/// center, so no two strokes touch.
fn draw_exchange(
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    angle_deg: f64,
    cross_lines: usize,
) -> (Vec<Segment>, bool) {
    let tan = angle_deg.to_radians().tan();
    let gap = LINE_SPACING_PX / 4.0;
    let (cx, cy) = (x0 + w / 2.0, y0 + h / 2.0);
    let (hw, hh) = (w / 2.0 - gap, h / 2.0 - gap);
    let extent = |n: usize| (hw - (n - 1) as f64 * LINE_SPACING_PX).min(hh / tan);
    let mut n = cross_lines.max(1);
    let mut degenerate = false;
    if extent(n) <= 0.0 {
        n = 1;
        degenerate = true;
    }
    let ex = extent(n).max(0.0);
    let mut segments = Vec::with_capacity(4 * n);
    // top-left, top-right, bottom-left, bottom-right arms; each stroke
    // runs from the arm's outer end toward the center
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        for k in 0..n {
            let inner_x = cx + sx * (gap + k as f64 * LINE_SPACING_PX);
            let inner_y = cy + sy * gap;
            segments.push(Segment::new(inner_x + sx * ex, inner_y + sy * ex * tan, inner_x, inner_y));
        }
    }
    (segments, degenerate || ex < 1.0)
}

/// Stroke list for a glyph; every partition holds the same drawing.
pub fn glyph_geometry(glyph: &Glyph) -> GlyphGeometry {
    let b = glyph.bbox;
    let parts = glyph.partitions.max(1);
    let h_p = b.h / parts as f64;
    let (cell, degenerate) = match glyph.kind {
        GlyphKind::Offset => draw_offset(b.x, b.y, b.w, h_p, glyph.angle_deg),
        GlyphKind::Ring => draw_ring(b.x, b.y, b.w, h_p, glyph.angle_deg, glyph.protrusions.unwrap_or(0)),
        GlyphKind::Exchange => {
            draw_exchange(b.x, b.y, b.w, h_p, glyph.angle_deg, glyph.cross_lines.unwrap_or(1))
        }
    };
    let segments = (0..parts).flat_map(|p| cell.iter().map(move |s| s.translated(p as f64 * h_p))).collect();
    GlyphGeometry { segments, degenerate }
}

/// Build a glyph for `descriptor` in `bbox`, with its strokes.
pub fn make_glyph(descriptor: &PatternDescriptor, bbox: BBox, send_level: Level) -> Glyph {
    let kind = GlyphKind::from(descriptor.family);
    let mut glyph = Glyph {
        kind,
        bbox,
        angle_deg: stride_to_angle(descriptor.stride),
        partitions: partition_count(descriptor, bbox.h),
        protrusions: (kind == GlyphKind::Ring).then(|| descriptor.stride.min(MAX_PROTRUSIONS)),
        cross_lines: (kind == GlyphKind::Exchange).then(|| descriptor.stride.clamp(1, MAX_CROSS_LINES)),
        send_level,
        segments: Vec::new(),
        degenerate: false,
    };
    let geometry = glyph_geometry(&glyph);
    glyph.segments = geometry.segments;
    glyph.degenerate = geometry.degenerate;
    glyph
}

/// Level range and PE range covered by each round, keyed by send level.
struct RoundSpan {
    last_level: Level,
    first_pe: PeId,
    last_pe: PeId,
}

fn round_spans(timeline: &LogicalTimeline) -> BTreeMap<Level, RoundSpan> {
    let mut spans: BTreeMap<Level, RoundSpan> = BTreeMap::new();
    for e in timeline.edges() {
        let lo = e.edge.src_pe.min(e.edge.dst_pe);
        let hi = e.edge.src_pe.max(e.edge.dst_pe);
        let span = spans.entry(e.send_level).or_insert(RoundSpan {
            last_level: e.recv_level,
            first_pe: lo,
            last_pe: hi,
        });
        span.last_level = span.last_level.max(e.recv_level);
        span.first_pe = span.first_pe.min(lo);
        span.last_pe = span.last_pe.max(hi);
    }
    spans
}

fn x_overlap(a: &BBox, b: &BBox) -> bool {
    a.x < b.x + b.w && b.x < a.x + a.w
}

fn y_overlap(a: &BBox, b: &BBox) -> bool {
    a.y < b.y + b.h && b.y < a.y + a.h
}

/// Glyphs over the retained interval rectangles, one per visible round.
///
/// `classifications` is parallel to `extract_rounds(timeline)`. A visible
/// round without a descriptor is an error; callers may fall back to a line
/// layout.
pub fn layout_glyph(
    timeline: &LogicalTimeline,
    classifications: &[Classification],
    viewport: &Viewport,
) -> Result<Scene, SceneError> {
    viewport.validate(timeline)?;
    let rounds = extract_rounds(timeline);
    if rounds.len() != classifications.len() {
        return Err(SceneError::ClassificationCount {
            rounds: rounds.len(),
            classifications: classifications.len(),
        });
    }
    let frame = Frame::new(viewport, timeline.num_pes());
    let spans = round_spans(timeline);

    let mut glyphs: Vec<Glyph> = Vec::new();
    for (round, class) in rounds.iter().zip(classifications) {
        let span = &spans[&round.send_level];
        let visible = frame.levels_overlap(round.send_level, span.last_level)
            && span.first_pe < frame.last_row
            && span.last_pe >= frame.first_row;
        if !visible {
            continue;
        }
        let descriptor = match &class.result {
            ClassResult::Pattern(d) => d,
            ClassResult::Unknown { reason } => {
                return Err(SceneError::UnclassifiedRound {
                    send_level: round.send_level,
                    reason: reason.clone(),
                })
            }
        };
        let x_start = frame.band_start(round.send_level);
        let x_end = frame.band_start(span.last_level) + frame.band_w;
        let w = (x_end - x_start) * GLYPH_WIDTH_FRACTION;
        let center = (x_start + x_end) / 2.0;
        let y_top = frame.row_top(span.first_pe.max(frame.first_row));
        let y_bottom = frame.row_top(span.last_pe.min(frame.last_row - 1) + 1);
        let bbox = BBox { x: center - w / 2.0, y: y_top, w, h: y_bottom - y_top };
        glyphs.push(make_glyph(descriptor, bbox, round.send_level));
    }

    // Greedy left-to-right placement: an overlapped glyph moves right of
    // every placed glyph it collides with.
    glyphs.sort_by(|a, b| a.bbox.x.total_cmp(&b.bbox.x).then(a.send_level.cmp(&b.send_level)));
    let mut placed: Vec<Glyph> = Vec::with_capacity(glyphs.len());
    for mut glyph in glyphs {
        let original_x = glyph.bbox.x;
        while let Some(other) =
            placed.iter().find(|p| y_overlap(&p.bbox, &glyph.bbox) && x_overlap(&p.bbox, &glyph.bbox))
        {
            glyph.bbox.x = other.bbox.x + other.bbox.w + GLYPH_GAP_PX;
        }
        let dx = glyph.bbox.x - original_x;
        if dx != 0.0 {
            for s in &mut glyph.segments {
                s.x1 += dx;
                s.x2 += dx;
            }
        }
        placed.push(glyph);
    }
    placed.sort_by_key(|g| g.send_level);

    Ok(Scene {
        mode: Mode::Glyph,
        viewport: *viewport,
        rects: intervals(timeline, &frame),
        lines: Vec::new(),
        glyphs: placed,
        blur_background: true,
    })
}

/// Lines while few rows are visible, glyphs beyond `threshold_rows`.
pub fn choose_mode(viewport: &Viewport, num_pes: usize, threshold_rows: usize) -> Mode {
    if viewport.visible_rows(num_pes) <= threshold_rows {
        Mode::Partial
    } else {
        Mode::Glyph
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::{gen_trace, Grouping};
    use crate::pipeline::Analysis;
    use crate::trace::{Event, Trace};

    fn analysis(d: PatternDescriptor, steps: usize) -> Analysis {
        Analysis::from_trace(gen_trace(&d.into(), steps).unwrap()).unwrap()
    }

    fn timeline_of(trace: Trace) -> LogicalTimeline {
        let edges = crate::trace::match_communication(&trace).unwrap();
        crate::timeline::assign_levels(&trace, &edges).unwrap()
    }

    #[test]
    fn angle_endpoints_and_midpoint() {
        assert_eq!(stride_to_angle(2), 15.0);
        assert_eq!(stride_to_angle(10), 60.0);
        assert_eq!(stride_to_angle(6), 37.5);
        assert_eq!(stride_to_angle(1), 15.0);
        assert_eq!(stride_to_angle(40), 60.0);
    }

    #[test]
    fn partitions_from_height() {
        let d = PatternDescriptor::offset(64, 2, Grouping::Grouped { group_size: 8 });
        assert_eq!(partition_count(&d, 600.0), 8);
        assert_eq!(partition_count(&d, 130.0), 2);
        assert_eq!(partition_count(&d, 10.0), 2);
        assert_eq!(partition_count(&d, 720.0), 8);
        let c = PatternDescriptor::offset(64, 2, Grouping::Continuous);
        assert_eq!(partition_count(&c, 600.0), 1);
    }

    #[test]
    fn mode_threshold_inclusive() {
        let vp =
            Viewport { width_px: 960.0, height_px: 600.0, row_window: Some((0, 8)), time_window: (0, 1) };
        assert_eq!(choose_mode(&vp, 1280, 64), Mode::Partial);
        assert_eq!(choose_mode(&vp.with_rows(0, 64), 1280, 64), Mode::Partial);
        assert_eq!(choose_mode(&vp.with_rows(0, 65), 1280, 64), Mode::Glyph);
        let all = Viewport { row_window: None, ..vp };
        assert_eq!(choose_mode(&all, 1280, 64), Mode::Glyph);
    }

    #[test]
    fn offset_geometry_count() {
        let glyph = Glyph {
            kind: GlyphKind::Offset,
            bbox: BBox { x: 0.0, y: 0.0, w: 200.0, h: 120.0 },
            angle_deg: 15.0,
            partitions: 1,
            protrusions: None,
            cross_lines: None,
            send_level: 0,
            segments: vec![],
            degenerate: false,
        };
        // (120 - 200 tan 15) / 8 = 8.30 -> 9 strokes spanning the full width
        let expected = ((120.0 - 200.0 * 15f64.to_radians().tan()) / 8.0).floor() as usize + 1;
        assert_eq!(expected, 9);
        let g = glyph_geometry(&glyph);
        assert_eq!(g.segments.len(), 9);
        assert!(!g.degenerate);
        for s in &g.segments {
            assert!((s.x2 - s.x1 - 200.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ring_and_exchange_counts() {
        let d = PatternDescriptor::ring(64, 2, Grouping::Continuous);
        let g = make_glyph(&d, BBox { x: 0.0, y: 0.0, w: 200.0, h: 300.0 }, 0);
        assert_eq!(g.protrusions, Some(2));
        let body = make_glyph(&PatternDescriptor::offset(64, 2, Grouping::Continuous), g.bbox, 0);
        assert!(g.segments.len() >= 4);
        assert!(!body.segments.is_empty());
        let e = make_glyph(
            &PatternDescriptor::exchange(1280, 10),
            BBox { x: 0.0, y: 0.0, w: 200.0, h: 600.0 },
            0,
        );
        assert_eq!(e.cross_lines, Some(5));
        assert_eq!(e.partitions, 8);
        assert_eq!(e.segments.len(), 8 * 4 * 5);
        // a tall continuous ring keeps a real body between its protrusions
        let tall = make_glyph(&PatternDescriptor::ring(1280, 4, Grouping::Continuous), e.bbox, 0);
        assert!(!tall.degenerate);
        assert!(tall.segments.len() > 2 * 4);
        assert!(tall.segments.iter().all(|s| (s.x2 - s.x1).abs() > 1.0));
    }

    #[test]
    fn tiny_box_degenerates() {
        let d = PatternDescriptor::offset(64, 2, Grouping::Continuous);
        let g = make_glyph(&d, BBox { x: 0.0, y: 0.0, w: 100.0, h: 5.0 }, 0);
        assert!(g.degenerate);
        assert_eq!(g.segments.len(), 1);
    }

    #[test]
    fn full_layout_single_line() {
        let t =
            timeline_of(Trace::new(2, vec![vec![Event::send(0, 1, 0)], vec![Event::recv(1, 0, 0)]]).unwrap());
        let vp = Viewport::for_timeline(&t, 600.0, 100.0);
        let s = layout_full(&t, &vp).unwrap();
        assert_eq!(s.lines.len(), 1);
        let l = s.lines[0];
        assert_eq!((l.x1, l.y1, l.x2, l.y2), (150.0, 25.0, 450.0, 75.0));
        assert!(s.glyphs.is_empty() && !s.blur_background);
    }

    #[test]
    fn full_layout_offset_lines() {
        let a = analysis(PatternDescriptor::offset(8, 1, Grouping::Continuous), 2);
        let s = layout_full(&a.timeline, &Viewport::for_timeline(&a.timeline, 960.0, 600.0)).unwrap();
        assert_eq!(s.lines.len(), 14);
        assert_eq!(s.rects.len(), 16);
    }

    #[test]
    fn partial_full_window_matches_full() {
        let a = analysis(PatternDescriptor::ring(16, 3, Grouping::Continuous), 2);
        let vp = Viewport::for_timeline(&a.timeline, 960.0, 600.0);
        let full = layout_full(&a.timeline, &vp).unwrap();
        let part = layout_partial(&a.timeline, &vp.with_rows(0, 16)).unwrap();
        assert_eq!(full.lines, part.lines);
        assert_eq!(full.rects, part.rects);
        assert_eq!(part.mode, Mode::Partial);
    }

    #[test]
    fn partial_rejects_bad_windows() {
        let a = analysis(PatternDescriptor::ring(16, 3, Grouping::Continuous), 1);
        let vp = Viewport::for_timeline(&a.timeline, 960.0, 600.0);
        assert!(layout_partial(&a.timeline, &vp.with_rows(3, 4)).is_err());
        assert!(layout_partial(&a.timeline, &vp.with_rows(8, 20)).is_err());
        assert!(layout_full(&a.timeline, &vp.with_levels(0, 99)).is_err());
        let default = layout_partial(&a.timeline, &vp).unwrap();
        assert_eq!(default.viewport.row_window, Some((0, 8)));
    }

    #[test]
    fn glyph_centered_in_two_level_chart() {
        let t =
            timeline_of(Trace::new(2, vec![vec![Event::send(0, 1, 0)], vec![Event::recv(1, 0, 0)]]).unwrap());
        let a = Analysis::from_timeline(t).unwrap();
        let s =
            layout_glyph(&a.timeline, &a.classifications, &Viewport::for_timeline(&a.timeline, 600.0, 100.0))
                .unwrap();
        assert_eq!(s.glyphs.len(), 1);
        let b = s.glyphs[0].bbox;
        assert!((b.x + b.w / 2.0 - 300.0).abs() < 1e-9);
        assert!(s.lines.is_empty() && s.blur_background);
    }

    #[test]
    fn overlapping_rounds_are_nudged() {
        // round at level 0 spans levels 0..=3, round at level 1 spans 1..=2
        let trace = Trace::new(
            3,
            vec![
                vec![Event::send(0, 1, 0), Event::send(0, 2, 0)],
                vec![
                    Event::enter(1, "a"),
                    Event::leave(1, "a"),
                    Event::enter(1, "b"),
                    Event::recv(1, 0, 0),
                    Event::leave(1, "b"),
                ],
                vec![Event::recv(2, 0, 0)],
            ],
        )
        .unwrap();
        let t = timeline_of(trace);
        let rounds = extract_rounds(&t);
        assert_eq!(rounds.len(), 2);
        let d = PatternDescriptor::offset(3, 1, Grouping::Continuous);
        let classes = vec![
            Classification { result: ClassResult::Pattern(d), exact: true },
            Classification { result: ClassResult::Pattern(d), exact: true },
        ];
        let s = layout_glyph(&t, &classes, &Viewport::for_timeline(&t, 800.0, 300.0)).unwrap();
        let (a, b) = (s.glyphs[0].bbox, s.glyphs[1].bbox);
        assert!(y_overlap(&a, &b));
        assert!(!x_overlap(&a, &b));
        assert!(b.x > a.x || a.x > b.x);
        for g in &s.glyphs {
            for seg in &g.segments {
                assert!(seg.x1.min(seg.x2) >= g.bbox.x - 1e-9);
                assert!(seg.x1.max(seg.x2) <= g.bbox.x + g.bbox.w + 1e-9);
            }
        }
    }

    #[test]
    fn unknown_round_rejected_in_glyph_mode() {
        let spec = crate::patterns::StencilSpec { dims: vec![4, 4], hops: 1, diagonals: false };
        let a = Analysis::from_trace(gen_trace(&spec.into(), 1).unwrap()).unwrap();
        let err =
            layout_glyph(&a.timeline, &a.classifications, &Viewport::for_timeline(&a.timeline, 960.0, 600.0))
                .unwrap_err();
        assert!(matches!(err, SceneError::UnclassifiedRound { .. }), "{err}");
    }
}
