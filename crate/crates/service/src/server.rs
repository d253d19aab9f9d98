//! Axum router and the shared model snapshot.

use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use pathrec_core::{Model, PoiId};

use crate::api::{self, ApiError, ErrorBody, RecommendRequest};
use crate::json;

/// The currently served model. Requests clone the inner `Arc`, so a reload
/// never disturbs requests already in flight.
#[derive(Clone, Default)]
pub struct AppState {
    model: Arc<RwLock<Option<Arc<Model>>>>,
    source: Option<Arc<PathBuf>>,
}

impl AppState {
    pub fn new(model: Option<Model>) -> Self {
        Self {
            model: Arc::new(RwLock::new(model.map(Arc::new))),
            source: None,
        }
    }

    /// Loads `path` now and remembers it for [`AppState::reload`].
    pub fn from_path(path: impl AsRef<Path>) -> pathrec_core::Result<Self> {
        let path = path.as_ref().to_owned();
        let model = Model::load(&path)?;
        Ok(Self {
            source: Some(Arc::new(path)),
            ..Self::new(Some(model))
        })
    }

    pub fn snapshot(&self) -> Option<Arc<Model>> {
        self.model.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Installs `model`, returning the previous snapshot.
    pub fn swap(&self, model: Model) -> Option<Arc<Model>> {
        let mut slot = self.model.write().unwrap_or_else(|e| e.into_inner());
        slot.replace(Arc::new(model))
    }

    /// Re-reads the model file given to [`AppState::from_path`]. On failure
    /// the current model stays in place.
    pub fn reload(&self) -> pathrec_core::Result<String> {
        let Some(path) = &self.source else {
            return Err(pathrec_core::Error::Config("no model path to reload from".into()));
        };
        let model = Model::load(path.as_path())?;
        let version = model.version().to_owned();
        self.swap(model);
        Ok(version)
    }
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    match json::to_vec(body) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => error_response(ApiError::new(500, "internal", e.to_string())),
    }
}

fn error_response(error: ApiError) -> Response {
    let status = StatusCode::from_u16(error.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let body = json::to_vec(&ErrorBody { error }).unwrap_or_default();
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn reply<T: Serialize>(result: Result<T, ApiError>) -> Response {
    match result {
        Ok(body) => json_response(StatusCode::OK, &body),
        Err(e) => error_response(e),
    }
}

fn loaded(state: &AppState) -> Result<Arc<Model>, ApiError> {
    state.snapshot().ok_or_else(ApiError::model_unavailable)
}

async fn health(State(state): State<AppState>) -> Response {
    json_response(StatusCode::OK, &api::health(state.snapshot().as_deref()))
}

async fn pois(State(state): State<AppState>) -> Response {
    reply(loaded(&state).map(|m| api::pois(&m)))
}

async fn recommend(State(state): State<AppState>, body: Bytes) -> Response {
    let request: RecommendRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(ApiError::bad_request(format!("invalid request body: {e}"))),
    };
    let model = match loaded(&state) {
        Ok(m) => m,
        Err(e) => return error_response(e),
    };
    let result = tokio::task::spawn_blocking(move || api::recommend(&model, &request))
        .await
        .unwrap_or_else(|e| Err(ApiError::new(500, "internal", e.to_string())));
    reply(result)
}

#[derive(Debug, Default, Deserialize)]
pub struct FeatureParams {
    pub route: Option<String>,
    pub checked: Option<String>,
}

async fn poi_features(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    params: Result<Query<FeatureParams>, QueryRejection>,
) -> Response {
    let run = || -> Result<api::FeaturesResponse, ApiError> {
        let id: PoiId = id.parse().map_err(|_| ApiError::bad_request(format!("invalid POI id `{id}`")))?;
        let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
        let route = api::parse_id_list(params.route.as_deref().unwrap_or(""))?;
        let checked = api::parse_id_list(params.checked.as_deref().unwrap_or(""))?;
        api::poi_features(&*loaded(&state)?, id, &route, &checked)
    };
    reply(run())
}

async fn fallback() -> Response {
    error_response(ApiError::not_found("no such endpoint"))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/pois", get(pois))
        .route("/recommend", post(recommend))
        .route("/poi/{id}/features", get(poi_features))
        .fallback(fallback)
        .with_state(state)
}

/// Serves until the process is stopped. On Unix, SIGHUP reloads the model
/// file.
pub async fn serve(listener: TcpListener, state: AppState) -> io::Result<()> {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut hangup = signal(SignalKind::hangup())?;
        let state = state.clone();
        tokio::spawn(async move {
            while hangup.recv().await.is_some() {
                match state.reload() {
                    Ok(v) => eprintln!("reloaded model {v}"),
                    Err(e) => eprintln!("reload failed, keeping current model: {e}"),
                }
            }
        });
    }
    axum::serve(listener, router(state)).await
}
