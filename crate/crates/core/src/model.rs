//! Trained model: ranker, transition chain and the configuration needed to
//! score routes, persisted as one versioned JSON document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, ModeSpeeds, Poi, PoiId, Query};
use crate::error::{Error, Result};
use crate::features::{
    build_ranking_pairs, raw_unary_features, FeatureSchema, Standardization, DEFAULT_NEIGHBOURHOOD_RADIUS_KM,
    NUMERIC_FEATURES,
};
use crate::inference::{brute_force_top_k, top_k_routes, TopKResult};
use crate::ranking::{self, dot, PairGroup, RankWeights, RankingProblem, TrainConfig, TrainReport};
use crate::scoring::{validate_route, RouteScorer, ScoredRoute, DEFAULT_ALPHA};
use crate::transition::{fit_markov, TransitionMatrix, DEFAULT_SMOOTHING};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Unary features shown on the radar chart: the numeric block minus the
/// query-constant trip length.
pub const RADAR_AXES: [&str; 8] = [
    NUMERIC_FEATURES[0],
    NUMERIC_FEATURES[1],
    NUMERIC_FEATURES[2],
    NUMERIC_FEATURES[3],
    NUMERIC_FEATURES[4],
    NUMERIC_FEATURES[5],
    NUMERIC_FEATURES[6],
    NUMERIC_FEATURES[7],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub ranker: TrainConfig,
    pub alpha: f64,
    pub smoothing: f64,
    pub neighbourhood_radius_km: f64,
    pub mode_speeds: ModeSpeeds,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            ranker: TrainConfig::default(),
            alpha: DEFAULT_ALPHA,
            smoothing: DEFAULT_SMOOTHING,
            neighbourhood_radius_km: DEFAULT_NEIGHBOURHOOD_RADIUS_KM,
            mode_speeds: ModeSpeeds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub queries: usize,
    pub pairs: usize,
}

/// The serialized document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model_version: String,
    pub pois: Vec<Poi>,
    pub feature_schema: FeatureSchema,
    pub standardization: Standardization,
    pub weights: RankWeights,
    pub ranker: TrainConfig,
    pub training: TrainingSummary,
    pub transitions: TransitionMatrix,
    pub alpha: f64,
    pub mode_speeds: ModeSpeeds,
    pub neighbourhood_radius_km: f64,
}

#[derive(Debug, Clone)]
pub struct Model {
    file: ModelFile,
    dataset: Dataset,
}

impl Model {
    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Model(format!(
                "schema version {} is not supported (expected {MODEL_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        file.feature_schema.validate()?;
        let dim = file.feature_schema.dim();
        for len in [file.weights.dim(), file.standardization.mean.len(), file.standardization.scale.len()] {
            if len != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: len });
            }
        }
        if file.weights.0.iter().any(|w| !w.is_finite()) {
            return Err(Error::Model("non-finite weights".into()));
        }
        if !(0.0..=1.0).contains(&file.alpha) {
            return Err(Error::Model(format!("alpha {} outside [0, 1]", file.alpha)));
        }
        file.mode_speeds.validate()?;
        let dataset = Dataset::new(file.pois.clone(), vec![])?;
        let ids: Vec<PoiId> = dataset.pois().iter().map(|p| p.id).collect();
        if file.transitions.poi_ids() != ids.as_slice() {
            return Err(Error::Model("transition matrix does not match the POI table".into()));
        }
        Ok(Self { file, dataset })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn file(&self) -> &ModelFile {
        &self.file
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn pois(&self) -> &[Poi] {
        self.dataset.pois()
    }

    pub fn version(&self) -> &str {
        &self.file.model_version
    }

    pub fn weights(&self) -> &RankWeights {
        &self.file.weights
    }

    pub fn alpha(&self) -> f64 {
        self.file.alpha
    }

    pub fn transitions(&self) -> &TransitionMatrix {
        &self.file.transitions
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.file.feature_schema
    }

    /// Returns a copy with a different blend weight.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut file = self.file.clone();
        file.alpha = alpha;
        file.model_version = fingerprint(&file)?;
        Self::from_file(file)
    }

    /// Standardized Φ(x, p) for every POI, by dataset index.
    pub fn feature_rows(&self, start: usize, length: usize) -> Result<Vec<Vec<f64>>> {
        (0..self.dataset.len())
            .map(|p| {
                let mut row = raw_unary_features(&self.dataset, &self.file.feature_schema, start, length, p)?;
                self.file.standardization.apply(&mut row);
                Ok(row)
            })
            .collect()
    }

    /// wᵀΦ(x, p) for every POI, by dataset index.
    pub fn unary_scores(&self, start: usize, length: usize) -> Result<Vec<f64>> {
        Ok(self
            .feature_rows(start, length)?
            .iter()
            .map(|row| dot(&self.file.weights.0, row))
            .collect())
    }

    /// Ranking score wᵀΦ(x, p) of one POI.
    pub fn score_poi(&self, query: &Query, poi: PoiId) -> Result<f64> {
        let start = self.dataset.index_of(query.start).ok_or(Error::UnknownPoi(query.start))?;
        let p = self.dataset.index_of(poi).ok_or(Error::UnknownPoi(poi))?;
        let mut row = raw_unary_features(&self.dataset, &self.file.feature_schema, start, query.length, p)?;
        self.file.standardization.apply(&mut row);
        self.file.weights.score(&row)
    }

    pub fn scorer(&self, query: &Query) -> Result<RouteScorer<'_>> {
        let start = query.validate(&self.dataset)?;
        RouteScorer::new(
            self.dataset.pois(),
            &self.file.transitions,
            self.unary_scores(start, query.length)?,
            self.file.alpha,
            self.file.mode_speeds.speed(query.mode),
            start,
            query.length,
        )
    }

    pub fn route_score(&self, query: &Query, route: &[PoiId]) -> Result<ScoredRoute> {
        let scorer = self.scorer(query)?;
        validate_route(query, route, &self.dataset)?;
        let indices: Vec<usize> = route.iter().map(|&id| self.dataset.index_of(id).expect("validated")).collect();
        Ok(scorer.score_indices(&indices))
    }

    pub fn top_k(&self, query: &Query, k: usize) -> Result<TopKResult> {
        top_k_routes(&self.scorer(query)?, k)
    }

    pub fn brute_force_top_k(&self, query: &Query, k: usize) -> Result<TopKResult> {
        brute_force_top_k(&self.scorer(query)?, k)
    }

    /// Raw radar values `[axis][poi]` for the given POIs under `query`.
    pub fn radar_values(&self, query: &Query, pois: &[PoiId]) -> Result<Vec<Vec<f64>>> {
        let start = query.validate(&self.dataset)?;
        let schema = &self.file.feature_schema;
        let rows = pois
            .iter()
            .map(|&id| {
                let p = self.dataset.index_of(id).ok_or(Error::UnknownPoi(id))?;
                raw_unary_features(&self.dataset, schema, start, query.length, p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RADAR_AXES
            .iter()
            .map(|axis| {
                let j = schema.unary_index(axis).expect("radar axes are schema features");
                rows.iter().map(|r| r[j]).collect()
            })
            .collect())
    }
}

/// Fits the standardization, the ranker and the transition chain.
pub fn train_model(dataset: &Dataset, options: &TrainOptions) -> Result<(Model, TrainReport)> {
    options.ranker.validate()?;
    options.mode_speeds.validate()?;
    if !(0.0..=1.0).contains(&options.alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {}", options.alpha)));
    }
    if !(options.neighbourhood_radius_km.is_finite() && options.neighbourhood_radius_km >= 0.0) {
        return Err(Error::InvalidInput("neighbourhood radius must be non-negative".into()));
    }
    let schema = FeatureSchema::from_dataset(dataset);
    let queries = build_ranking_pairs(dataset);
    if queries.iter().all(|(_, rp)| rp.is_empty()) {
        return Err(Error::NothingToRank);
    }

    let mut blocks = Vec::with_capacity(queries.len());
    for (q, _) in &queries {
        let start = dataset.index_of(q.start).ok_or(Error::UnknownPoi(q.start))?;
        let rows = (0..dataset.len())
            .map(|p| raw_unary_features(dataset, &schema, start, q.length, p))
            .collect::<Result<Vec<_>>>()?;
        blocks.push(rows);
    }
    let standardization = Standardization::fit(&schema, blocks.iter().flatten().map(Vec::as_slice));

    let dim = schema.dim();
    let mut groups = Vec::with_capacity(queries.len());
    for ((_, rp), rows) in queries.iter().zip(blocks) {
        if rp.is_empty() {
            continue;
        }
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for mut row in rows {
            standardization.apply(&mut row);
            flat.extend(row);
        }
        groups.push(PairGroup::new(dim, flat, rp.pairs.clone())?);
    }
    let problem = RankingProblem::new(dim, groups)?;
    let report = ranking::train(&problem, &options.ranker)?;
    let transitions = fit_markov(dataset, options.smoothing)?;

    let mut pois = dataset.pois().to_vec();
    pois.sort_by_key(|p| p.id);
    let mut file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        model_version: String::new(),
        pois,
        feature_schema: schema,
        standardization,
        weights: report.weights.clone(),
        ranker: options.ranker.clone(),
        training: TrainingSummary {
            objective: report.objective,
            gradient_norm: report.gradient_norm,
            iterations: report.iterations,
            converged: report.converged,
            queries: queries.len(),
            pairs: problem.pair_count(),
        },
        transitions,
        alpha: options.alpha,
        mode_speeds: options.mode_speeds,
        neighbourhood_radius_km: options.neighbourhood_radius_km,
    };
    file.model_version = fingerprint(&file)?;
    Ok((Model::from_file(file)?, report))
}

/// Content hash of the model document (with an empty version field).
fn fingerprint(file: &ModelFile) -> Result<String> {
    let mut blank = file.clone();
    blank.model_version.clear();
    let digest = Sha256::digest(serde_json::to_vec(&blank)?);
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}
