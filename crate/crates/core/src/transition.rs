//! First-order Markov chain over POIs with add-κ smoothing.
//!
//! Self-transitions are structurally zero: the diagonal carries no mass and
//! its log-probability is −∞.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PoiId};
use crate::error::{Error, Result};

pub const DEFAULT_SMOOTHING: f64 = 1.0;
const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransitionFile", into = "TransitionFile")]
pub struct TransitionMatrix {
    poi_ids: Vec<PoiId>,
    smoothing: f64,
    probs: Vec<f64>,
    logs: Vec<f64>,
}

/// Serialized layout: dense rows indexed like `poi_ids`.
#[derive(Serialize, Deserialize)]
struct TransitionFile {
    level: String,
    smoothing: f64,
    poi_ids: Vec<PoiId>,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<TransitionFile> for TransitionMatrix {
    type Error = Error;

    fn try_from(f: TransitionFile) -> Result<Self> {
        if f.level != "poi" {
            return Err(Error::Model(format!("unsupported transition level `{}`", f.level)));
        }
        let mut m = Self::from_rows(f.poi_ids, f.rows)?;
        m.smoothing = f.smoothing;
        Ok(m)
    }
}

impl From<TransitionMatrix> for TransitionFile {
    fn from(m: TransitionMatrix) -> Self {
        let n = m.len();
        Self {
            level: "poi".into(),
            smoothing: m.smoothing,
            rows: m.probs.chunks_exact(n.max(1)).map(<[f64]>::to_vec).collect(),
            poi_ids: m.poi_ids,
        }
    }
}

impl TransitionMatrix {
    /// Builds a matrix from explicit rows. Rows must be stochastic with a
    /// zero diagonal and non-negative entries.
    pub fn from_rows(poi_ids: Vec<PoiId>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = poi_ids.len();
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: rows.len(),
            });
        }
        let mut probs = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            if row[i] != 0.0 || row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidInput(format!("transition row {} has invalid entries", poi_ids[i])));
            }
            let sum: f64 = row.iter().sum();
            if n > 1 && (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidInput(format!("transition row {} sums to {sum}", poi_ids[i])));
            }
            probs.extend_from_slice(row);
        }
        Ok(Self::assemble(poi_ids, 0.0, probs))
    }

    fn assemble(poi_ids: Vec<PoiId>, smoothing: f64, probs: Vec<f64>) -> Self {
        let n = poi_ids.len();
        let logs = probs
            .iter()
            .enumerate()
            .map(|(k, &p)| if k / n == k % n { f64::NEG_INFINITY } else { p.ln() })
            .collect();
        Self {
            poi_ids,
            smoothing,
            probs,
            logs,
        }
    }

    pub fn len(&self) -> usize {
        self.poi_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poi_ids.is_empty()
    }

    pub fn poi_ids(&self) -> &[PoiId] {
        &self.poi_ids
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.len() + to]
    }

    /// ln P[from][to] by index; −∞ on the diagonal.
    pub fn log_prob(&self, from: usize, to: usize) -> f64 {
        self.logs[from * self.len() + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let n = self.len();
        &self.probs[from * n..(from + 1) * n]
    }

    fn index_of(&self, id: PoiId) -> Result<usize> {
        // ids are sorted when fitted from a dataset; fall back to a scan otherwise
        self.poi_ids
            .binary_search(&id)
            .ok()
            .or_else(|| self.poi_ids.iter().position(|&p| p == id))
            .ok_or(Error::UnknownPoi(id))
    }

    /// Natural log of P[from][to] by POI id.
    pub fn log_transition(&self, from: PoiId, to: PoiId) -> Result<f64> {
        if from == to {
            return Err(Error::SelfTransition(from));
        }
        Ok(self.log_prob(self.index_of(from)?, self.index_of(to)?))
    }
}

/// Fits P[p][q] = (count(p→q) + κ) / (Σ_r count(p→r) + κ·(M−1)) for q ≠ p.
///
/// With κ = 0 every POI needs at least one observed outgoing transition.
pub fn fit_markov(dataset: &Dataset, smoothing: f64) -> Result<TransitionMatrix> {
    if !(smoothing.is_finite() && smoothing >= 0.0) {
        return Err(Error::InvalidInput(format!("smoothing must be non-negative, got {smoothing}")));
    }
    let n = dataset.len();
    let mut counts = vec![0u64; n * n];
    let mut observed = 0u64;
    for t in dataset.trajectories() {
        for pair in t.visits.windows(2) {
            let from = dataset.index_of(pair[0].poi_id).ok_or(Error::UnknownPoi(pair[0].poi_id))?;
            let to = dataset.index_of(pair[1].poi_id).ok_or(Error::UnknownPoi(pair[1].poi_id))?;
            if from != to {
                counts[from * n + to] += 1;
                observed += 1;
            }
        }
    }
    if smoothing == 0.0 {
        if observed == 0 {
            return Err(Error::NoTransitions);
        }
        if let Some(i) = (0..n).find(|&i| counts[i * n..(i + 1) * n].iter().all(|&c| c == 0)) {
            return Err(Error::InvalidInput(format!(
                "POI {} has no outgoing transitions and smoothing is zero",
                dataset.pois()[i].id
            )));
        }
    }

    let mut probs = vec![0.0; n * n];
    for i in 0..n {
        let row = &counts[i * n..(i + 1) * n];
        let total = row.iter().sum::<u64>() as f64 + smoothing * (n as f64 - 1.0);
        for j in (0..n).filter(|&j| j != i) {
            probs[i * n + j] = (row[j] as f64 + smoothing) / total;
        }
    }
    let ids = dataset.pois().iter().map(|p| p.id).collect();
    Ok(TransitionMatrix::assemble(ids, smoothing, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Poi, Trajectory, Visit};
    use proptest::prelude::*;

    fn traj(id: &str, pois: &[u32]) -> Trajectory {
        Trajectory {
            id: id.into(),
            visits: pois
                .iter()
                .map(|&p| Visit {
                    user_id: "u".into(),
                    traj_id: id.into(),
                    poi_id: PoiId(p),
                    arrival: 0,
                    departure: 0,
                })
                .collect(),
        }
    }

    fn dataset(n: u32, trajectories: Vec<Trajectory>) -> Dataset {
        let pois = (1..=n).map(|i| Poi::new(i, "p", "c", 0.0, 0.0)).collect();
        Dataset::new(pois, trajectories).unwrap()
    }

    #[test]
    fn hand_counted_row() {
        let ds = dataset(3, vec![traj("a", &[1, 2]), traj("b", &[1, 2]), traj("c", &[1, 3])]);
        let m = fit_markov(&ds, 1.0).unwrap();
        assert_eq!(m.prob(0, 1), 3.0 / 5.0);
        assert_eq!(m.prob(0, 2), 2.0 / 5.0);
        assert!((m.log_transition(PoiId(1), PoiId(2)).unwrap() - (-0.5108256237659907)).abs() < 1e-12);
        // POI 2 has no outgoing observations: pure smoothing
        assert_eq!(m.prob(1, 0), 0.5);
        assert_eq!(m.prob(1, 2), 0.5);
        assert_eq!(m.log_transition(PoiId(2), PoiId(3)).unwrap(), -(2.0f64).ln());
        for i in 0..3 {
            assert_eq!(m.prob(i, i), 0.0);
            assert_eq!(m.log_prob(i, i), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn self_transition_is_a_domain_error() {
        let m = fit_markov(&dataset(3, vec![]), 1.0).unwrap();
        assert!(matches!(m.log_transition(PoiId(2), PoiId(2)), Err(Error::SelfTransition(_))));
        assert!(matches!(m.log_transition(PoiId(2), PoiId(9)), Err(Error::UnknownPoi(_))));
    }

    #[test]
    fn zero_smoothing_requires_observations() {
        assert!(matches!(fit_markov(&dataset(3, vec![]), 0.0), Err(Error::NoTransitions)));
        let ds = dataset(3, vec![traj("a", &[1, 2]), traj("b", &[2, 3])]);
        assert!(fit_markov(&ds, 0.0).is_err());
        let ds = dataset(3, vec![traj("a", &[1, 2, 3, 1])]);
        assert!(fit_markov(&ds, 0.0).is_ok());
        assert!(fit_markov(&ds, -1.0).is_err());
    }

    #[test]
    fn large_smoothing_tends_to_uniform() {
        let ds = dataset(4, vec![traj("a", &[1, 2, 3]), traj("b", &[1, 2, 4])]);
        let m = fit_markov(&ds, 1e9).unwrap();
        for i in 0..4 {
            for j in (0..4).filter(|&j| j != i) {
                assert!((m.prob(i, j) - 1.0 / 3.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn serde_round_trip() {
        let ds = dataset(3, vec![traj("a", &[1, 2, 3]), traj("b", &[3, 1])]);
        let m = fit_markov(&ds, 0.5).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: TransitionMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn from_rows_validation() {
        let ids = vec![PoiId(1), PoiId(2)];
        assert!(TransitionMatrix::from_rows(ids.clone(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
        assert!(TransitionMatrix::from_rows(ids.clone(), vec![vec![0.5, 0.5], vec![1.0, 0.0]]).is_err());
        assert!(TransitionMatrix::from_rows(ids.clone(), vec![vec![0.0, 0.9], vec![1.0, 0.0]]).is_err());
        assert!(TransitionMatrix::from_rows(ids, vec![vec![0.0, 1.0]]).is_err());
    }

    fn trajectories(n: u32) -> impl Strategy<Value = Vec<Vec<u32>>> {
        prop::collection::vec(prop::collection::vec(1..=n, 0..6), 0..12)
    }

    fn to_dataset(n: u32, raw: &[Vec<u32>]) -> Dataset {
        let ts = raw
            .iter()
            .enumerate()
            .map(|(i, pois)| {
                let mut dedup: Vec<u32> = Vec::new();
                for &p in pois {
                    if !dedup.contains(&p) {
                        dedup.push(p);
                    }
                }
                traj(&i.to_string(), &dedup)
            })
            .collect();
        dataset(n, ts)
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(raw in trajectories(6), kappa in 0.01f64..10.0) {
            let m = fit_markov(&to_dataset(6, &raw), kappa).unwrap();
            for i in 0..m.len() {
                let sum: f64 = m.row(i).iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
                for j in (0..m.len()).filter(|&j| j != i) {
                    prop_assert!(m.prob(i, j) > 0.0);
                    prop_assert!(m.log_prob(i, j).is_finite());
                }
            }
        }

        #[test]
        fn fitting_ignores_trajectory_order(raw in trajectories(5)) {
            let mut reversed = raw.clone();
            reversed.reverse();
            let a = fit_markov(&to_dataset(5, &raw), 1.0).unwrap();
            let b = fit_markov(&to_dataset(5, &reversed), 1.0).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
