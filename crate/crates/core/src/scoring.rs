//! Route scores as a convex blend of unary ranking scores and Markov
//! log-transition scores, kept in decomposed form.
//!
//! For a route p₀ … p_{l−1}:
//!
//! ```text
//! poi_scores[j]        = (1 − α) · wᵀΦ(x, p_j)
//! transition_scores[j] = α · ln P[p_j][p_{j+1}]
//! total                = Σ poi_scores + Σ transition_scores
//! ```
//!
//! Both sums run left to right over the stored vectors, so recomputing the
//! total from a serialized route reproduces it bit for bit.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Poi, PoiId, Query};
use crate::error::{Error, Result};
use crate::geo::haversine_km;
use crate::transition::TransitionMatrix;

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRoute {
    pub pois: Vec<PoiId>,
    pub poi_scores: Vec<f64>,
    pub transition_scores: Vec<f64>,
    pub total: f64,
    pub distance_km: f64,
    pub travel_time_h: f64,
}

impl ScoredRoute {
    /// The additive identity every stored route satisfies.
    pub fn recomputed_total(&self) -> f64 {
        decomposed_total(&self.poi_scores, &self.transition_scores)
    }
}

pub fn decomposed_total(poi_scores: &[f64], transition_scores: &[f64]) -> f64 {
    poi_scores.iter().sum::<f64>() + transition_scores.iter().sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RouteViolation {
    WrongStart { expected: PoiId, found: PoiId },
    UnknownPoi { position: usize, poi: PoiId },
    Repeat { position: usize, poi: PoiId },
    LengthMismatch { expected: usize, found: usize },
}

impl fmt::Display for RouteViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteViolation::WrongStart { expected, found } => {
                write!(f, "wrong start: expected {expected}, found {found}")
            }
            RouteViolation::UnknownPoi { position, poi } => write!(f, "unknown POI {poi} at position {position}"),
            RouteViolation::Repeat { position, poi } => write!(f, "repeat at position {position} (POI {poi})"),
            RouteViolation::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
        }
    }
}

impl std::error::Error for RouteViolation {}

/// Checks start, POI existence, repeat-freedom and length, in that order,
/// reporting the first violation.
pub fn validate_route(query: &Query, route: &[PoiId], dataset: &Dataset) -> Result<(), RouteViolation> {
    let mut seen = HashSet::with_capacity(route.len());
    for (position, &poi) in route.iter().enumerate() {
        if position == 0 && poi != query.start {
            return Err(RouteViolation::WrongStart {
                expected: query.start,
                found: poi,
            });
        }
        if dataset.index_of(poi).is_none() {
            return Err(RouteViolation::UnknownPoi { position, poi });
        }
        if !seen.insert(poi) {
            return Err(RouteViolation::Repeat { position, poi });
        }
    }
    if route.len() != query.length {
        return Err(RouteViolation::LengthMismatch {
            expected: query.length,
            found: route.len(),
        });
    }
    Ok(())
}

/// Scores routes for one query. POIs are addressed by dataset index.
#[derive(Debug, Clone)]
pub struct RouteScorer<'a> {
    pois: &'a [Poi],
    transitions: &'a TransitionMatrix,
    unary: Vec<f64>,
    alpha: f64,
    speed_kmh: f64,
    start: usize,
    length: usize,
}

impl<'a> RouteScorer<'a> {
    /// `unary[i]` is the ranking score wᵀΦ(x, p_i) of POI index `i`.
    pub fn new(
        pois: &'a [Poi],
        transitions: &'a TransitionMatrix,
        unary: Vec<f64>,
        alpha: f64,
        speed_kmh: f64,
        start: usize,
        length: usize,
    ) -> Result<Self> {
        let n = pois.len();
        if unary.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: unary.len(),
            });
        }
        if transitions.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: transitions.len(),
            });
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if start >= n {
            return Err(Error::InvalidQuery(format!("start index {start} out of range")));
        }
        if length < 2 {
            return Err(Error::InvalidQuery(format!("trip length must be at least 2, got {length}")));
        }
        if length > n {
            return Err(Error::Infeasible { length, available: n });
        }
        Ok(Self {
            pois,
            transitions,
            unary,
            alpha,
            speed_kmh,
            start,
            length,
        })
    }

    pub fn n_pois(&self) -> usize {
        self.pois.len()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn unary(&self) -> &[f64] {
        &self.unary
    }

    pub fn poi_id(&self, idx: usize) -> PoiId {
        self.pois[idx].id
    }

    /// (1 − α) · wᵀΦ; exactly zero at α = 1.
    pub fn poi_score(&self, idx: usize) -> f64 {
        if self.alpha == 1.0 {
            0.0
        } else {
            (1.0 - self.alpha) * self.unary[idx]
        }
    }

    /// α · ln P[from][to]; exactly zero at α = 0, −∞ on the diagonal otherwise.
    pub fn transition_score(&self, from: usize, to: usize) -> f64 {
        if self.alpha == 0.0 {
            if from == to {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        } else {
            self.alpha * self.transitions.log_prob(from, to)
        }
    }

    /// Scores a route given as dataset indices. The caller guarantees the
    /// route is valid for the query.
    pub fn score_indices(&self, route: &[usize]) -> ScoredRoute {
        let poi_scores: Vec<f64> = route.iter().map(|&i| self.poi_score(i)).collect();
        let transition_scores: Vec<f64> = route.windows(2).map(|w| self.transition_score(w[0], w[1])).collect();
        let total = decomposed_total(&poi_scores, &transition_scores);
        let distance_km: f64 = route
            .windows(2)
            .map(|w| haversine_km(self.pois[w[0]].position(), self.pois[w[1]].position()))
            .sum();
        ScoredRoute {
            pois: route.iter().map(|&i| self.pois[i].id).collect(),
            poi_scores,
            transition_scores,
            total,
            distance_km,
            travel_time_h: distance_km / self.speed_kmh,
        }
    }
}
