use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tower_http::services::ServeDir;

use super::index::{load_index, Index, SearchQuery, DEFAULT_LIMIT};
use crate::error::{Error, Result};

/// The index currently being served. Readers clone the `Arc` and keep a
/// consistent snapshot for the whole request; reload swaps it in one step.
#[derive(Debug)]
pub struct IndexStore {
    path: PathBuf,
    current: RwLock<Arc<Index>>,
}

impl IndexStore {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(IndexStore {
            path: path.to_path_buf(),
            current: RwLock::new(Arc::new(load_index(path)?)),
        })
    }

    pub fn from_index(path: &Path, index: Index) -> Self {
        IndexStore {
            path: path.to_path_buf(),
            current: RwLock::new(Arc::new(index)),
        }
    }

    pub fn snapshot(&self) -> Arc<Index> {
        self.current.read().expect("index lock poisoned").clone()
    }

    /// Re-reads the index file. On failure the old snapshot stays live.
    pub fn reload(&self) -> Result<Arc<Index>> {
        let fresh = Arc::new(load_index(&self.path)?);
        *self.current.write().expect("index lock poisoned") = fresh.clone();
        Ok(fresh)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub default_min_score: f64,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            default_min_score: 0.0,
            static_dir: None,
        }
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<IndexStore>,
    default_min_score: f64,
}

#[derive(Serialize)]
struct ApiError {
    code: &'static str,
    message: String,
}

struct ErrorResponse(Error);

impl IntoResponse for ErrorResponse {
    fn into_response(self) -> Response {
        let (status, code) = match &self.0 {
            Error::BadQuery(_) => (StatusCode::BAD_REQUEST, "BadQuery"),
            Error::UnknownTrack(_) => (StatusCode::NOT_FOUND, "UnknownTrack"),
            Error::Io { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "IoError"),
            Error::Parse { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "ParseError"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
        };
        let body = ApiError {
            code,
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

impl From<Error> for ErrorResponse {
    fn from(e: Error) -> Self {
        ErrorResponse(e)
    }
}

/// Builds a query from URL parameters; absent numbers take the defaults.
pub fn parse_search_params(params: &HashMap<String, String>, default_min_score: f64) -> Result<SearchQuery> {
    let text = |k: &str| params.get(k).filter(|v| !v.is_empty()).cloned();
    let min_score = match params.get("min_score").filter(|v| !v.is_empty()) {
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| Error::BadQuery(format!("min_score {v:?} is not a number")))?,
        None => default_min_score,
    };
    let limit = match params.get("limit").filter(|v| !v.is_empty()) {
        Some(v) => v
            .parse::<usize>()
            .map_err(|_| Error::BadQuery(format!("limit {v:?} is not a positive integer")))?,
        None => DEFAULT_LIMIT,
    };
    let q = SearchQuery {
        make: text("make"),
        model: text("model"),
        color: text("color"),
        min_score,
        limit,
    };
    q.validate()?;
    Ok(q)
}

async fn search(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> std::result::Result<Response, ErrorResponse> {
    let q = parse_search_params(&params, state.default_min_score)?;
    let snapshot = state.store.snapshot();
    Ok(Json(snapshot.search(&q)?).into_response())
}

async fn track(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> std::result::Result<Response, ErrorResponse> {
    Ok(Json(state.store.snapshot().track_detail(&id)?).into_response())
}

async fn meta(State(state): State<AppState>) -> Response {
    Json(state.store.snapshot().meta.clone()).into_response()
}

async fn reload(State(state): State<AppState>) -> std::result::Result<Response, ErrorResponse> {
    let store = state.store.clone();
    let fresh = tokio::task::spawn_blocking(move || store.reload())
        .await
        .map_err(|e| Error::InvalidArgument(format!("reload task failed: {e}")))??;
    log::info!("reloaded index: {} tracks", fresh.meta.track_count);
    Ok(Json(fresh.meta.clone()).into_response())
}

pub fn router(store: Arc<IndexStore>, config: &ServiceConfig) -> Router {
    let state = AppState {
        store,
        default_min_score: config.default_min_score,
    };
    let api = Router::new()
        .route("/api/search", get(search))
        .route("/api/track/{id}", get(track))
        .route("/api/meta", get(meta))
        .route("/api/reload", post(reload))
        .with_state(state);
    match &config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, store: Arc<IndexStore>, config: ServiceConfig) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store, &config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn params_defaults() {
        let q = parse_search_params(&params(&[("make", "Audi")]), 0.6).unwrap();
        assert_eq!(q.min_score, 0.6);
        assert_eq!(q.limit, DEFAULT_LIMIT);
        let q = parse_search_params(&params(&[("color", "red"), ("min_score", "0.2"), ("limit", "3")]), 0.6).unwrap();
        assert_eq!((q.min_score, q.limit), (0.2, 3));
    }

    #[test]
    fn params_errors() {
        for p in [
            params(&[]),
            params(&[("make", "")]),
            params(&[("make", "A"), ("min_score", "high")]),
            params(&[("make", "A"), ("limit", "-1")]),
            params(&[("make", "A"), ("limit", "0")]),
        ] {
            assert!(matches!(parse_search_params(&p, 0.0), Err(Error::BadQuery(_))), "{p:?}");
        }
    }
}
