//! Request/response types and the pure handlers behind each endpoint. The
//! CLI calls these directly so its JSON output matches the service.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use pathrec_core::display::{scale_feature_scores, scale_route_scores, scale_transition_scores, AffineMap};
use pathrec_core::model::RADAR_AXES;
use pathrec_core::{validate_route, Error, Model, Poi, PoiId, Query, ScoredRoute, TravelMode};

pub const API_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 10;
pub const MAX_K: usize = 50;
/// Radar axes in `/recommend` are scaled over all POIs of each route.
pub const ROUTE_RADAR_SCOPE: &str = "route";
/// `/poi/{id}/features` scales over the checked POIs of the route.
pub const CHECKED_RADAR_SCOPE: &str = "checked";

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub start_poi: PoiId,
    pub length: usize,
    pub mode: TravelMode,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePoi {
    pub id: PoiId,
    pub name: String,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
}

impl From<&Poi> for RoutePoi {
    fn from(p: &Poi) -> Self {
        Self {
            id: p.id,
            name: p.name.clone(),
            category: p.category.clone(),
            lat: p.lat,
            lon: p.lon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarPoi {
    pub id: PoiId,
    /// Unstandardized feature values, one per axis.
    pub raw: Vec<f64>,
    /// Values in [1, 10], one per axis.
    pub scaled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarPayload {
    pub scope: String,
    pub axes: Vec<String>,
    pub pois: Vec<RadarPoi>,
    /// Per axis: true when every POI shares one value.
    pub degenerate: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteView {
    pub rank: usize,
    pub pois: Vec<RoutePoi>,
    pub poi_scores: Vec<f64>,
    pub transition_scores: Vec<f64>,
    pub total: f64,
    pub display_total: f64,
    pub display_poi_scores: Vec<f64>,
    pub display_transition_scores: Vec<f64>,
    pub distance_km: f64,
    pub travel_time_h: f64,
    pub radar: RadarPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayInfo {
    /// Map from raw route totals (and POI scores) to display units.
    pub route_map: AffineMap,
    pub routes_degenerate: bool,
    pub transitions_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub schema_version: u32,
    pub model_version: String,
    pub query: RecommendRequest,
    pub alpha: f64,
    /// Fewer than `k` repeat-free routes exist.
    pub truncated: bool,
    pub radar_scope: String,
    pub display: DisplayInfo,
    pub routes: Vec<RouteView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisResponse {
    pub schema_version: u32,
    pub model_version: String,
    pub pois: Vec<Poi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesResponse {
    pub schema_version: u32,
    pub model_version: String,
    pub poi: PoiId,
    pub route: Vec<PoiId>,
    pub radar: RadarPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ApiError,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_owned(),
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(400, "bad_request", message)
    }

    pub fn model_unavailable() -> Self {
        Self::new(503, "model_unavailable", "no model is loaded")
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(404, "not_found", message)
    }

    pub fn is_user_error(&self) -> bool {
        (400..500).contains(&self.status)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.code, self.status, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UnknownPoi(_) => (400, "unknown_poi"),
            Error::InvalidQuery(_) => (400, "invalid_query"),
            Error::InvalidRoute(_) => (400, "invalid_route"),
            Error::Infeasible { .. } => (422, "infeasible"),
            _ => (500, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

pub fn health(model: Option<&Model>) -> Health {
    match model {
        Some(m) => Health {
            status: "ok".into(),
            model_version: Some(m.version().to_owned()),
        },
        None => Health {
            status: "no_model".into(),
            model_version: None,
        },
    }
}

pub fn pois(model: &Model) -> PoisResponse {
    PoisResponse {
        schema_version: API_SCHEMA_VERSION,
        model_version: model.version().to_owned(),
        pois: model.pois().to_vec(),
    }
}

fn radar(model: &Model, query: &Query, pois: &[PoiId], scope: &str) -> Result<RadarPayload, ApiError> {
    let raw = model.radar_values(query, pois)?;
    let scaled = scale_feature_scores(&raw)?;
    Ok(RadarPayload {
        scope: scope.to_owned(),
        axes: RADAR_AXES.iter().map(|a| a.to_string()).collect(),
        pois: pois
            .iter()
            .enumerate()
            .map(|(i, &id)| RadarPoi {
                id,
                raw: raw.iter().map(|axis| axis[i]).collect(),
                scaled: scaled.iter().map(|axis| axis.scaled[i]).collect(),
            })
            .collect(),
        degenerate: scaled.iter().map(|axis| axis.degenerate).collect(),
    })
}

pub fn recommend(model: &Model, request: &RecommendRequest) -> Result<RecommendResponse, ApiError> {
    if !(1..=MAX_K).contains(&request.k) {
        return Err(ApiError::new(400, "invalid_query", format!("k must lie in [1, {MAX_K}], got {}", request.k)));
    }
    let query = Query::new(request.start_poi, request.length, request.mode);
    let result = model.top_k(&query, request.k)?;
    if result.routes.is_empty() {
        return Err(ApiError::new(422, "infeasible", "no route with non-zero transition probability exists"));
    }

    let totals: Vec<f64> = result.routes.iter().map(|r| r.total).collect();
    let route_scale = scale_route_scores(&totals)?;
    let all_transitions: Vec<f64> = result.routes.iter().flat_map(|r| r.transition_scores.iter().copied()).collect();
    let transition_scale = scale_transition_scores(&all_transitions)?;
    let map = route_scale.map;

    let mut scaled_transitions = transition_scale.scaled.chunks(request.length - 1);
    let routes = result
        .routes
        .iter()
        .zip(&route_scale.scaled)
        .enumerate()
        .map(|(i, (route, &display_total))| {
            let ScoredRoute {
                pois,
                poi_scores,
                transition_scores,
                total,
                distance_km,
                travel_time_h,
            } = route.clone();
            Ok(RouteView {
                rank: i + 1,
                pois: pois
                    .iter()
                    .map(|&id| RoutePoi::from(model.dataset().poi(id).expect("routes use model POIs")))
                    .collect(),
                display_poi_scores: poi_scores.iter().map(|&s| map.apply(s)).collect(),
                display_transition_scores: scaled_transitions.next().expect("one chunk per route").to_vec(),
                radar: radar(model, &query, &pois, ROUTE_RADAR_SCOPE)?,
                poi_scores,
                transition_scores,
                total,
                display_total,
                distance_km,
                travel_time_h,
            })
        })
        .collect::<Result<Vec<_>, ApiError>>()?;

    Ok(RecommendResponse {
        schema_version: API_SCHEMA_VERSION,
        model_version: model.version().to_owned(),
        query: request.clone(),
        alpha: model.alpha(),
        truncated: result.truncated,
        radar_scope: ROUTE_RADAR_SCOPE.to_owned(),
        display: DisplayInfo {
            route_map: map,
            routes_degenerate: route_scale.degenerate,
            transitions_degenerate: transition_scale.degenerate,
        },
        routes,
    })
}

/// Parses a comma-separated POI id list such as `1,5,9`.
pub fn parse_id_list(text: &str) -> Result<Vec<PoiId>, ApiError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| ApiError::bad_request(format!("invalid POI id `{s}`"))))
        .collect()
}

/// Radar payload for POI `id` and the `checked` POIs of `route`. The route
/// is re-validated as a route for the query `(route[0], route.len())`.
pub fn poi_features(model: &Model, id: PoiId, route: &[PoiId], checked: &[PoiId]) -> Result<FeaturesResponse, ApiError> {
    let Some(&start) = route.first() else {
        return Err(ApiError::new(400, "invalid_route", "a non-empty `route` is required"));
    };
    let query = Query::new(start, route.len(), TravelMode::Walking);
    query.validate(model.dataset())?;
    validate_route(&query, route, model.dataset()).map_err(Error::from)?;
    let wanted: HashSet<PoiId> = checked.iter().copied().chain([id]).collect();
    if let Some(stray) = wanted.iter().find(|p| !route.contains(p)) {
        return Err(ApiError::new(400, "invalid_route", format!("POI {stray} is not on the route")));
    }
    let selected: Vec<PoiId> = route.iter().copied().filter(|p| wanted.contains(p)).collect();
    Ok(FeaturesResponse {
        schema_version: API_SCHEMA_VERSION,
        model_version: model.version().to_owned(),
        poi: id,
        route: route.to_vec(),
        radar: radar(model, &query, &selected, CHECKED_RADAR_SCOPE)?,
    })
}
