//! HTTP/JSON API for route recommendation.
//!
//! Endpoints: `GET /health`, `GET /pois`, `POST /recommend` and
//! `GET /poi/{id}/features?route=..&checked=..`. Errors come back as
//! `{"error": {"code", "message"}}`.

pub mod api;
pub mod json;
pub mod server;

pub use api::{recommend, ApiError, RecommendRequest, RecommendResponse};
pub use server::{router, serve, AppState};
