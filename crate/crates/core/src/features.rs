//! Query-POI features, transition features, and ranking pairs.
//!
//! A unary feature vector is laid out as the category one-hot block (sorted
//! vocabulary) followed by [`NUMERIC_FEATURES`]. The first
//! [`STANDARDIZED_FEATURES`] numeric entries are standardized with statistics
//! frozen at training time; the one-hot block, `same_category_as_start` and
//! `trip_length` pass through unchanged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PoiId};
use crate::error::{Error, Result};
use crate::geo::haversine_km;

pub const FEATURE_SCHEMA_VERSION: u32 = 1;

pub const NUMERIC_FEATURES: [&str; 9] = [
    "popularity",
    "visits",
    "avg_duration",
    "popularity_diff",
    "visits_diff",
    "duration_diff",
    "dist_to_start",
    "same_category_as_start",
    "trip_length",
];

/// Leading entries of [`NUMERIC_FEATURES`] subject to standardization.
pub const STANDARDIZED_FEATURES: usize = 7;

pub const PAIRWISE_FEATURES: [&str; 4] = ["distance_km", "travel_time_h", "same_category", "same_neighbourhood"];

pub const DEFAULT_NEIGHBOURHOOD_RADIUS_KM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub categories: Vec<String>,
    pub unary: Vec<String>,
    pub pairwise: Vec<String>,
}

impl FeatureSchema {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let mut categories: Vec<String> = dataset.pois().iter().map(|p| p.category.clone()).collect();
        categories.sort();
        categories.dedup();
        let unary = categories
            .iter()
            .map(|c| format!("category={c}"))
            .chain(NUMERIC_FEATURES.iter().map(|s| s.to_string()))
            .collect();
        Self {
            version: FEATURE_SCHEMA_VERSION,
            categories,
            unary,
            pairwise: PAIRWISE_FEATURES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.unary.len()
    }

    /// Offset of the numeric block.
    pub fn numeric_offset(&self) -> usize {
        self.categories.len()
    }

    pub fn unary_index(&self, name: &str) -> Option<usize> {
        self.unary.iter().position(|n| n == name)
    }

    pub fn is_standardized(&self, idx: usize) -> bool {
        let off = self.numeric_offset();
        idx >= off && idx < off + STANDARDIZED_FEATURES
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FEATURE_SCHEMA_VERSION {
            return Err(Error::Model(format!(
                "feature schema version {} is not supported (expected {FEATURE_SCHEMA_VERSION})",
                self.version
            )));
        }
        let expected_len = self.categories.len() + NUMERIC_FEATURES.len();
        if self.unary.len() != expected_len {
            return Err(Error::DimensionMismatch {
                expected: expected_len,
                actual: self.unary.len(),
            });
        }
        let mut names = self.unary.clone();
        names.sort();
        names.dedup();
        if names.len() != self.unary.len() {
            return Err(Error::Model("duplicate unary feature names".into()));
        }
        Ok(())
    }
}

/// Per-feature affine standardization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Fits population mean and standard deviation for the standardized
    /// features; a constant feature keeps scale 1.
    pub fn fit<'a>(schema: &FeatureSchema, rows: impl IntoIterator<Item = &'a [f64]> + Clone) -> Self {
        let dim = schema.dim();
        let mut out = Self::identity(dim);
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        for row in rows.clone() {
            n += 1;
            for (s, x) in sum.iter_mut().zip(row) {
                *s += x;
            }
        }
        if n == 0 {
            return out;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; dim];
        for row in rows {
            for ((s, x), m) in sq.iter_mut().zip(row).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        for j in (0..dim).filter(|&j| schema.is_standardized(j)) {
            let sd = (sq[j] / n as f64).sqrt();
            out.mean[j] = mean[j];
            out.scale[j] = if sd > 1e-12 { sd } else { 1.0 };
        }
        out
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *x = (*x - m) / s;
        }
    }
}

/// Raw (pre-standardization) unary features of POI `poi` for a query
/// starting at `start` with `length` POIs. Arguments are dataset indices.
pub fn raw_unary_features(dataset: &Dataset, schema: &FeatureSchema, start: usize, length: usize, poi: usize) -> Result<Vec<f64>> {
    let pois = dataset.pois();
    let (p, s) = (&pois[poi], &pois[start]);
    let cat = schema
        .categories
        .binary_search(&p.category)
        .map_err(|_| Error::InvalidInput(format!("category `{}` of POI {} is not in the schema", p.category, p.id)))?;
    let mut row = vec![0.0; schema.dim()];
    row[cat] = 1.0;
    let numeric = [
        f64::from(p.popularity),
        f64::from(p.visits),
        p.avg_duration,
        f64::from(p.popularity) - f64::from(s.popularity),
        f64::from(p.visits) - f64::from(s.visits),
        p.avg_duration - s.avg_duration,
        haversine_km(p.position(), s.position()),
        if p.category == s.category { 1.0 } else { 0.0 },
        length as f64,
    ];
    row[schema.numeric_offset()..].copy_from_slice(&numeric);
    Ok(row)
}

/// Standardized unary feature vector Φ(x, p) for a query `(start, length)`.
pub fn unary_features(
    dataset: &Dataset,
    schema: &FeatureSchema,
    standardization: &Standardization,
    start: PoiId,
    length: usize,
    poi: PoiId,
) -> Result<Vec<f64>> {
    let s = dataset.index_of(start).ok_or(Error::UnknownPoi(start))?;
    let p = dataset.index_of(poi).ok_or(Error::UnknownPoi(poi))?;
    let mut row = raw_unary_features(dataset, schema, s, length, p)?;
    standardization.apply(&mut row);
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseFeatures {
    pub distance_km: f64,
    pub travel_time_h: f64,
    pub same_category: f64,
    pub same_neighbourhood: f64,
}

impl PairwiseFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.distance_km, self.travel_time_h, self.same_category, self.same_neighbourhood]
    }
}

pub fn pairwise_features(dataset: &Dataset, from: PoiId, to: PoiId, speed_kmh: f64, radius_km: f64) -> Result<PairwiseFeatures> {
    let a = dataset.poi(from).ok_or(Error::UnknownPoi(from))?;
    let b = dataset.poi(to).ok_or(Error::UnknownPoi(to))?;
    let distance_km = haversine_km(a.position(), b.position());
    Ok(PairwiseFeatures {
        distance_km,
        travel_time_h: distance_km / speed_kmh,
        same_category: if a.category == b.category { 1.0 } else { 0.0 },
        same_neighbourhood: if distance_km <= radius_km { 1.0 } else { 0.0 },
    })
}

/// A training query: trajectories are grouped by exact `(start, length)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrainingQuery {
    pub start: PoiId,
    pub length: usize,
}

/// Occurrence counts per POI index and the pairs `(p, q)` with
/// `count[p] > count[q]`, as dataset indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingPairs {
    pub counts: Vec<u32>,
    pub pairs: Vec<(u32, u32)>,
}

impl RankingPairs {
    pub fn from_counts(counts: Vec<u32>) -> Self {
        let mut pairs = Vec::new();
        for (p, &cp) in counts.iter().enumerate() {
            for (q, &cq) in counts.iter().enumerate() {
                if cp > cq {
                    pairs.push((p as u32, q as u32));
                }
            }
        }
        Self { counts, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Groups trajectories (length ≥ 2) by `(first POI, length)` and ranks every
/// POI by how many trajectories of the group contain it. Output is sorted by
/// query.
pub fn build_ranking_pairs(dataset: &Dataset) -> Vec<(TrainingQuery, RankingPairs)> {
    let mut counts: BTreeMap<TrainingQuery, Vec<u32>> = BTreeMap::new();
    for t in dataset.trajectories().iter().filter(|t| t.len() >= 2) {
        let query = TrainingQuery {
            start: t.visits[0].poi_id,
            length: t.len(),
        };
        let c = counts.entry(query).or_insert_with(|| vec![0; dataset.len()]);
        for id in t.pois() {
            // trajectories are repeat-free, so each POI counts once
            c[dataset.index_of(id).expect("validated on load")] += 1;
        }
    }
    counts
        .into_iter()
        .map(|(q, c)| (q, RankingPairs::from_counts(c)))
        .collect()
}
