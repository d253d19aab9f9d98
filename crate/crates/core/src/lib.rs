//! Travel route recommendation.
//!
//! A pairwise RankSVM scores POIs against a `(start, length)` query, a
//! smoothed Markov chain scores POI-to-POI transitions, and list Viterbi
//! returns the k best repeat-free routes under a convex blend of the two.
//! Route scores stay decomposed into per-POI and per-transition parts, and
//! [`display`] maps them into the ranges used for charts.

pub mod config;
pub mod data;
pub mod display;
pub mod error;
pub mod features;
pub mod geo;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod ranking;
pub mod scoring;
pub mod synth;
pub mod transition;

pub use data::{load_pois, load_trajectories, Dataset, ModeSpeeds, Poi, PoiId, Query, Trajectory, TravelMode, Visit};
pub use error::{Error, Result};
pub use inference::{brute_force_top_k, top_k_routes, TopKResult};
pub use model::{train_model, Model, TrainOptions};
pub use ranking::{RankWeights, TrainConfig};
pub use scoring::{validate_route, RouteScorer, RouteViolation, ScoredRoute};
pub use transition::{fit_markov, TransitionMatrix};
