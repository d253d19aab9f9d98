//! Held-out evaluation of top-1 routes against observed trajectories.

use std::collections::HashSet;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::data::{PoiId, Query, Trajectory, TravelMode};
use crate::error::{Error, Result};
use crate::model::Model;

fn f1<T: Eq + Hash>(predicted: &HashSet<T>, truth: &HashSet<T>) -> f64 {
    let hits = predicted.intersection(truth).count();
    if hits == 0 {
        return 0.0;
    }
    let precision = hits as f64 / predicted.len() as f64;
    let recall = hits as f64 / truth.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// F1 between the POI sets of two routes.
pub fn points_f1(predicted: &[PoiId], truth: &[PoiId]) -> f64 {
    f1(&predicted.iter().collect(), &truth.iter().collect())
}

/// F1 between the sets of ordered consecutive POI pairs of two routes.
pub fn pairs_f1(predicted: &[PoiId], truth: &[PoiId]) -> f64 {
    let pairs = |r: &[PoiId]| r.windows(2).map(|w| (w[0], w[1])).collect::<HashSet<_>>();
    f1(&pairs(predicted), &pairs(truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEvaluation {
    pub traj_id: String,
    pub start: PoiId,
    pub length: usize,
    pub truth: Vec<PoiId>,
    pub predicted: Vec<PoiId>,
    pub points_f1: f64,
    pub pairs_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub alpha: f64,
    pub evaluated: usize,
    /// Trajectories whose query the model cannot answer.
    pub skipped: usize,
    pub mean_points_f1: f64,
    pub mean_pairs_f1: f64,
    pub queries: Vec<QueryEvaluation>,
}

/// Scores the model's top-1 route for each held-out trajectory's
/// `(first POI, length)` query. Trajectories shorter than two POIs, with an
/// unknown start, or longer than the POI set are skipped and counted.
pub fn evaluate(model: &Model, heldout: &[Trajectory], mode: TravelMode) -> Result<EvalReport> {
    let mut queries = Vec::new();
    let mut skipped = 0;
    for t in heldout {
        let truth: Vec<PoiId> = t.pois().collect();
        let query = Query::new(truth.first().copied().unwrap_or(PoiId(0)), truth.len(), mode);
        let result = match model.top_k(&query, 1) {
            Ok(r) => r,
            Err(Error::UnknownPoi(_) | Error::InvalidQuery(_) | Error::Infeasible { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let predicted = result.routes.into_iter().next().map(|r| r.pois).unwrap_or_default();
        queries.push(QueryEvaluation {
            traj_id: t.id.clone(),
            start: query.start,
            length: query.length,
            points_f1: points_f1(&predicted, &truth),
            pairs_f1: pairs_f1(&predicted, &truth),
            truth,
            predicted,
        });
    }
    let n = queries.len();
    let mean = |f: fn(&QueryEvaluation) -> f64| {
        if n == 0 {
            0.0
        } else {
            queries.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Ok(EvalReport {
        alpha: model.alpha(),
        evaluated: n,
        skipped,
        mean_points_f1: mean(|q| q.points_f1),
        mean_pairs_f1: mean(|q| q.pairs_f1),
        queries,
    })
}
