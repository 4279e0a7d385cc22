//! Request handling behind the HTTP endpoints, free of any transport.
//!
//! A [`Session`] is built once per loaded trace and only read afterwards;
//! the HTTP layer passes raw query strings in and sends bodies out.

use serde::Serialize;

use crate::detector::Classification;
use crate::error::SceneError;
use crate::pipeline::Analysis;
use crate::scene::{
    choose_mode, layout_full, layout_glyph, layout_partial, Mode, Scene, Viewport, DEFAULT_THRESHOLD_ROWS,
};
use crate::timeline::Level;

pub const DEFAULT_WIDTH_PX: f64 = 960.0;
pub const DEFAULT_HEIGHT_PX: f64 = 600.0;

#[derive(Debug, Clone, Serialize)]
pub struct RoundMeta {
    pub send_level: Level,
    pub classification: Classification,
}

/// Body of `GET /api/meta`.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub num_pes: usize,
    pub max_level: Level,
    pub rounds: Vec<RoundMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeRequest {
    #[default]
    Auto,
    Fixed(Mode),
}

/// Parsed `GET /api/scene` query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneQuery {
    pub rows: Option<(usize, usize)>,
    pub levels: Option<(Level, Level)>,
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub mode: ModeRequest,
}

/// Half-open `A:B` range.
pub fn parse_range<T: std::str::FromStr>(text: &str) -> Result<(T, T), String> {
    let (a, b) = text.split_once(':').ok_or_else(|| format!("range `{text}` must be A:B"))?;
    let parse = |v: &str| v.trim().parse::<T>().map_err(|_| format!("bad range bound `{v}` in `{text}`"));
    Ok((parse(a)?, parse(b)?))
}

impl SceneQuery {
    pub fn parse(query: &str) -> Result<Self, String> {
        let mut q = SceneQuery::default();
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (key, value) = pair.split_once('=').unwrap_or((pair, ""));
            let number =
                |v: &str| v.parse::<f64>().map_err(|_| format!("`{key}` must be a number, got `{v}`"));
            match key {
                "rows" => q.rows = Some(parse_range(value)?),
                "levels" => q.levels = Some(parse_range(value)?),
                "w" => q.width = Some(number(value)?),
                "h" => q.height = Some(number(value)?),
                "mode" => {
                    q.mode = match value {
                        "auto" => ModeRequest::Auto,
                        other => ModeRequest::Fixed(other.parse()?),
                    }
                }
                other => return Err(format!("unknown query parameter `{other}`")),
            }
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceError {
    pub status: u16,
    pub message: String,
}

impl ServiceError {
    fn bad_request(message: impl Into<String>) -> Self {
        ServiceError { status: 400, message: message.into() }
    }
}

impl std::fmt::Display for ServiceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.status, self.message)
    }
}

impl std::error::Error for ServiceError {}

impl From<SceneError> for ServiceError {
    fn from(e: SceneError) -> Self {
        let status = match e {
            SceneError::UnclassifiedRound { .. } => 422,
            _ => 400,
        };
        ServiceError { status, message: e.to_string() }
    }
}

/// Immutable state shared by all requests.
#[derive(Debug, Clone)]
pub struct Session {
    analysis: Analysis,
    threshold_rows: usize,
}

impl Session {
    pub fn new(analysis: Analysis) -> Self {
        Session { analysis, threshold_rows: DEFAULT_THRESHOLD_ROWS }
    }

    pub fn with_threshold(mut self, threshold_rows: usize) -> Self {
        self.threshold_rows = threshold_rows.max(2);
        self
    }

    pub fn analysis(&self) -> &Analysis {
        &self.analysis
    }

    pub fn threshold_rows(&self) -> usize {
        self.threshold_rows
    }

    pub fn meta(&self) -> Meta {
        let a = &self.analysis;
        Meta {
            num_pes: a.num_pes(),
            max_level: a.timeline.max_level(),
            rounds: a
                .rounds
                .iter()
                .zip(&a.classifications)
                .map(|(r, c)| RoundMeta { send_level: r.send_level, classification: c.clone() })
                .collect(),
        }
    }

    pub fn scene(&self, query: &SceneQuery) -> Result<Scene, ServiceError> {
        let a = &self.analysis;
        let mut viewport = Viewport::for_timeline(
            &a.timeline,
            query.width.unwrap_or(DEFAULT_WIDTH_PX),
            query.height.unwrap_or(DEFAULT_HEIGHT_PX),
        );
        if let Some((first, last)) = query.levels {
            viewport = viewport.with_levels(first, last);
        }
        let rows = query.rows.unwrap_or((0, a.num_pes()));
        let windowed = viewport.with_rows(rows.0, rows.1);
        let scene = match query.mode {
            ModeRequest::Fixed(Mode::Full) => layout_full(&a.timeline, &viewport)?,
            // no rows given: the layout's default window
            ModeRequest::Fixed(Mode::Partial) => match query.rows {
                Some(_) => layout_partial(&a.timeline, &windowed)?,
                None => layout_partial(&a.timeline, &viewport)?,
            },
            ModeRequest::Fixed(Mode::Glyph) => layout_glyph(&a.timeline, &a.classifications, &windowed)?,
            ModeRequest::Auto => match choose_mode(&windowed, a.num_pes(), self.threshold_rows) {
                Mode::Glyph => match layout_glyph(&a.timeline, &a.classifications, &windowed) {
                    Err(SceneError::UnclassifiedRound { .. }) => layout_partial(&a.timeline, &windowed)?,
                    other => other?,
                },
                _ => layout_partial(&a.timeline, &windowed)?,
            },
        };
        Ok(scene)
    }

    pub fn scene_json(&self, raw_query: &str) -> Result<String, ServiceError> {
        let query = SceneQuery::parse(raw_query).map_err(ServiceError::bad_request)?;
        Ok(self.scene(&query)?.to_json())
    }
}
