//! HTTP API over a gallery directory.
//!
//! - `GET /api/manifest` returns `gallery.json`
//! - `GET /api/plots/{plot_id}` returns the plot's points file
//! - `POST /api/ratings` with `{"plot_id": .., "rating": 1..5, "note"?: ..}`
//! - anything else is served from `GALLERY/viewer/`
//!
//! Reads run concurrently; rating writes are serialized and persisted to
//! the manifest before the response is sent.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::{Mutex, RwLock};
use tower_http::services::ServeDir;

use crate::gallery::{GalleryError, GalleryManifest};

struct AppState {
    dir: PathBuf,
    manifest: RwLock<GalleryManifest>,
    writer: Mutex<()>,
}

type Shared = Arc<AppState>;

#[derive(Deserialize)]
struct RatingRequest {
    plot_id: String,
    rating: i64,
    #[serde(default)]
    note: Option<String>,
}

fn error_json(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

async fn get_manifest(State(state): State<Shared>) -> Response {
    let m = state.manifest.read().await;
    ([(header::CONTENT_TYPE, "application/json")], m.to_json()).into_response()
}

async fn plot(State(state): State<Shared>, UrlPath(plot_id): UrlPath<String>) -> Response {
    let rel = {
        let m = state.manifest.read().await;
        match m.entry(&plot_id).and_then(|e| e.files.get("points")) {
            Some(rel) => rel.clone(),
            None => return error_json(StatusCode::NOT_FOUND, format!("no plot `{plot_id}`")),
        }
    };
    match tokio::fs::read(state.dir.join(rel)).await {
        Ok(body) => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(_) => error_json(StatusCode::NOT_FOUND, format!("points for `{plot_id}` are missing")),
    }
}

async fn rate(State(state): State<Shared>, body: Bytes) -> Response {
    let req: RatingRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_json(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };
    let _guard = state.writer.lock().await;
    let mut updated = state.manifest.read().await.clone();
    let result = updated.record_rating(&req.plot_id, req.rating).map(|_| ());
    let result = result.and_then(|()| match &req.note {
        Some(note) => updated.set_note(&req.plot_id, note),
        None => Ok(()),
    });
    match result {
        Ok(()) => {}
        Err(GalleryError::UnknownPlot(id)) => {
            return error_json(StatusCode::NOT_FOUND, format!("no plot `{id}`"))
        }
        Err(e) => return error_json(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
    let dir = state.dir.clone();
    let to_save = updated.clone();
    let saved = tokio::task::spawn_blocking(move || to_save.save(&dir)).await;
    if !matches!(saved, Ok(Ok(()))) {
        return error_json(StatusCode::INTERNAL_SERVER_ERROR, "failed to persist rating");
    }
    let entry = updated.entry(&req.plot_id).cloned();
    *state.manifest.write().await = updated;
    Json(entry).into_response()
}

async fn index(State(state): State<Shared>) -> Response {
    let path = state.dir.join("viewer").join("index.html");
    match tokio::fs::read_to_string(&path).await {
        Ok(html) => Html(html).into_response(),
        Err(_) => {
            let m = state.manifest.read().await;
            let items: String = m
                .entries
                .iter()
                .map(|e| {
                    let status = match (&e.error, e.rating) {
                        (Some(err), _) => format!("error: {err}"),
                        (None, Some(r)) => format!("rated {r}"),
                        (None, None) => "unrated".to_string(),
                    };
                    format!(
                        "<li><a href=\"/api/plots/{id}\">{id}</a> ({status})</li>",
                        id = e.plot_id
                    )
                })
                .collect();
            Html(format!(
                "<!doctype html><title>pathlens gallery</title>\
                 <p>No viewer installed in <code>viewer/</code>. Plots:</p><ul>{items}</ul>"
            ))
            .into_response()
        }
    }
}

/// Builds the router. Fails if the gallery has no readable manifest.
pub fn router(gallery_dir: &Path) -> Result<Router, GalleryError> {
    let loaded = GalleryManifest::load(gallery_dir)?;
    let state = Arc::new(AppState {
        dir: gallery_dir.to_path_buf(),
        manifest: RwLock::new(loaded),
        writer: Mutex::new(()),
    });
    Ok(Router::new()
        .route("/", get(index))
        .route("/api/manifest", get(get_manifest))
        .route("/api/plots/{plot_id}", get(plot))
        .route("/api/ratings", post(rate))
        .fallback_service(ServeDir::new(gallery_dir.join("viewer")))
        .with_state(state))
}

/// Serves the gallery on an already-bound listener until the task is
/// dropped.
pub async fn serve_on(listener: TcpListener, gallery_dir: &Path) -> Result<(), GalleryError> {
    let app = router(gallery_dir)?;
    axum::serve(listener, app).await?;
    Ok(())
}

pub async fn serve(gallery_dir: &Path, addr: SocketAddr) -> Result<(), GalleryError> {
    // load before binding so a missing manifest fails fast
    let app = router(gallery_dir)?;
    let listener = TcpListener::bind(addr).await?;
    axum::serve(listener, app).await?;
    Ok(())
}
