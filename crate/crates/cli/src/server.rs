//! HTTP transport over [`Session`]: `/api/meta`, `/api/scene` and the
//! viewer's static files at `/`.

use std::path::Path;
use std::sync::Arc;

use axum::extract::{RawQuery, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use commglyph_core::service::Session;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

/// The session never changes, so a body is valid for as long as the
/// process serves the same trace.
const CACHEABLE: &str = "public, max-age=3600";

const INDEX: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>commglyph</title></head>
<body>
<p>No viewer assets configured. Start the server with <code>--assets DIR</code> to serve one.</p>
<p>API: <a href="api/meta">/api/meta</a>, <a href="api/scene">/api/scene</a></p>
</body></html>
"#;

struct AppState {
    session: Session,
    /// `/api/meta` is the same for every request.
    meta: String,
}

fn json(status: StatusCode, body: String, cache: &'static str) -> Response {
    let mut res = (status, body).into_response();
    let headers = res.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    headers.insert(header::CACHE_CONTROL, HeaderValue::from_static(cache));
    res
}

async fn get_meta(State(state): State<Arc<AppState>>) -> Response {
    json(StatusCode::OK, state.meta.clone(), CACHEABLE)
}

async fn get_scene(State(state): State<Arc<AppState>>, RawQuery(query): RawQuery) -> Response {
    let query = query.unwrap_or_default();
    // layouts of large traces take long enough to keep off the I/O threads
    let result = tokio::task::spawn_blocking(move || state.session.scene_json(&query)).await;
    match result {
        Ok(Ok(body)) => json(StatusCode::OK, body, CACHEABLE),
        Ok(Err(e)) => {
            let status = StatusCode::from_u16(e.status).unwrap_or(StatusCode::BAD_REQUEST);
            let body = serde_json::json!({ "error": e.message }).to_string();
            json(status, body, "no-store")
        }
        Err(e) => {
            let body = serde_json::json!({ "error": e.to_string() }).to_string();
            json(StatusCode::INTERNAL_SERVER_ERROR, body, "no-store")
        }
    }
}

pub fn router(session: Session, assets: Option<&Path>) -> Router {
    let meta = serde_json::to_string(&session.meta()).expect("meta serializes");
    let state = Arc::new(AppState { session, meta });
    let cors = CorsLayer::new().allow_origin(Any).allow_methods([Method::GET]);
    let api =
        Router::new().route("/api/meta", get(get_meta)).route("/api/scene", get(get_scene)).with_state(state);
    let app = match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(INDEX) })),
    };
    app.layer(cors)
}
