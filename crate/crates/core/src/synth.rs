//! Synthetic POI/trajectory fixtures with a planted preference structure.
//!
//! Every POI gets a latent attractiveness: one randomly chosen POI (the
//! planted top) gets 1, the others evenly spaced levels in
//! `[0, 1 − top_gap]`. Trajectories start at a uniformly drawn POI and
//! extend by sampling an unvisited POI with weight
//! `exp(strength · attractiveness − distance / distance_scale)`, so a large
//! `strength · top_gap` makes the planted top dominate visit counts.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Poi, PoiId, Trajectory, Visit};
use crate::error::{Error, Result};
use crate::geo::haversine_km;

const CATEGORIES: [&str; 6] = [
    "City precincts",
    "Entertainment",
    "Institutions",
    "Parks and spaces",
    "Shopping",
    "Structures",
];
const CENTRE: (f64, f64) = (-37.8136, 144.9631);
const BASE_TIME: i64 = 1_483_228_800; // 2017-01-01T00:00:00Z

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_pois: usize,
    pub n_trajectories: usize,
    pub seed: u64,
    /// Weight of attractiveness in the next-POI choice.
    pub strength: f64,
    /// Attractiveness margin of the planted top over every other POI.
    pub top_gap: f64,
    pub distance_scale_km: f64,
    pub max_length: usize,
    /// Half-width of the square the POIs are scattered in, degrees.
    pub spread_deg: f64,
}

impl SynthConfig {
    pub fn new(n_pois: usize, n_trajectories: usize, seed: u64) -> Self {
        Self {
            n_pois,
            n_trajectories,
            seed,
            strength: 8.0,
            top_gap: 0.5,
            distance_scale_km: 5.0,
            max_length: 6,
            spread_deg: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pois < 3 {
            return Err(Error::InvalidInput(format!("need at least 3 POIs, got {}", self.n_pois)));
        }
        if self.n_trajectories < 1 {
            return Err(Error::InvalidInput("need at least 1 trajectory".into()));
        }
        if self.max_length < 2 {
            return Err(Error::InvalidInput("max trajectory length must be at least 2".into()));
        }
        if !(self.distance_scale_km > 0.0 && self.strength.is_finite() && self.spread_deg > 0.0)
            || !(0.0..=1.0).contains(&self.top_gap)
        {
            return Err(Error::InvalidInput("invalid generator parameters".into()));
        }
        Ok(())
    }
}

/// A recovery query with its planted answer, the planted top. Starts range
/// over every other POI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryQuery {
    pub start: PoiId,
    pub length: usize,
    pub expected_top: PoiId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub attractiveness: Vec<(PoiId, f64)>,
    pub planted_top: PoiId,
    pub recovery_queries: Vec<RecoveryQuery>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub pois: Vec<Poi>,
    pub trajectories: Vec<Trajectory>,
    pub truth: GroundTruth,
}

impl SynthData {
    /// The generated data as a [`Dataset`] with visit statistics filled in.
    pub fn dataset(&self) -> Result<Dataset> {
        Ok(Dataset::new(self.pois.clone(), self.trajectories.clone())?.with_recomputed_statistics())
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_pois;

    let spread = 1.0 - config.top_gap;
    let mut levels: Vec<f64> = (0..n - 1).map(|i| spread * i as f64 / (n - 2) as f64).collect();
    levels.push(1.0);
    levels.shuffle(&mut rng);
    let pois: Vec<Poi> = (0..n)
        .map(|i| {
            let lat = round6(CENTRE.0 + rng.random_range(-config.spread_deg..config.spread_deg));
            let lon = round6(CENTRE.1 + rng.random_range(-config.spread_deg..config.spread_deg));
            let category = CATEGORIES[rng.random_range(0..CATEGORIES.len())];
            Poi::new(i as u32 + 1, &format!("POI {}", i + 1), category, lat, lon)
        })
        .collect();
    let base_duration: Vec<i64> = (0..n).map(|_| rng.random_range(600..3600)).collect();

    let n_users = (config.n_trajectories / 3).max(1);
    let max_len = config.max_length.min(n);
    let mut trajectories = Vec::with_capacity(config.n_trajectories);
    for t in 0..config.n_trajectories {
        let user = format!("u{:04}", rng.random_range(0..n_users));
        let id = format!("t{:05}", t + 1);
        let length = rng.random_range(2..=max_len);
        let mut route = vec![rng.random_range(0..n)];
        while route.len() < length {
            let here = *route.last().expect("non-empty");
            let weights: Vec<f64> = (0..n)
                .map(|q| {
                    if route.contains(&q) {
                        0.0
                    } else {
                        let d = haversine_km(pois[here].position(), pois[q].position());
                        (config.strength * levels[q] - d / config.distance_scale_km).exp()
                    }
                })
                .collect();
            let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
            route.push(pick.sample(&mut rng));
        }

        let mut clock = BASE_TIME + 86_400 * t as i64 + rng.random_range(8 * 3600..11 * 3600);
        let mut visits = Vec::with_capacity(length);
        for (j, &p) in route.iter().enumerate() {
            if j > 0 {
                let d = haversine_km(pois[route[j - 1]].position(), pois[p].position());
                clock += (d / 5.0 * 3600.0).round() as i64 + rng.random_range(60..600);
            }
            let stay = base_duration[p] + rng.random_range(-300..300);
            visits.push(Visit {
                user_id: user.clone(),
                traj_id: id.clone(),
                poi_id: pois[p].id,
                arrival: clock,
                departure: clock + stay,
            });
            clock += stay;
        }
        trajectories.push(Trajectory { id, visits });
    }

    let top = levels.iter().position(|&a| a == 1.0).expect("planted above");
    let planted_top = pois[top].id;
    let recovery_queries = (0..n)
        .filter(|&s| s != top)
        .flat_map(|s| (2..=max_len.min(4)).map(move |l| (s, l)))
        .map(|(s, length)| RecoveryQuery {
            start: pois[s].id,
            length,
            expected_top: planted_top,
        })
        .collect();

    let truth = GroundTruth {
        config: config.clone(),
        attractiveness: pois.iter().map(|p| p.id).zip(levels.iter().copied()).collect(),
        planted_top,
        recovery_queries,
    };
    Ok(SynthData {
        pois,
        trajectories,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let a = generate(&SynthConfig::new(12, 40, 5)).unwrap();
        let b = generate(&SynthConfig::new(12, 40, 5)).unwrap();
        assert_eq!(a.pois, b.pois);
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.truth, b.truth);
        let c = generate(&SynthConfig::new(12, 40, 6)).unwrap();
        assert_ne!(a.trajectories, c.trajectories);
    }

    #[test]
    fn respects_loader_invariants() {
        let data = generate(&SynthConfig::new(10, 60, 1)).unwrap();
        let ds = data.dataset().unwrap();
        for t in ds.trajectories() {
            let mut ids: Vec<PoiId> = t.pois().collect();
            assert!(t.visits.windows(2).all(|w| w[0].arrival <= w[1].arrival));
            assert!(t.visits.iter().all(|v| v.departure >= v.arrival));
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), t.len());
        }
        assert!(ds.pois().iter().all(|p| p.popularity <= p.visits));
    }

    #[test]
    fn planted_top_is_most_visited() {
        let data = generate(&SynthConfig::new(15, 300, 2)).unwrap();
        let ds = data.dataset().unwrap();
        let most = ds.pois().iter().max_by_key(|p| p.visits).unwrap().id;
        assert_eq!(most, data.truth.planted_top);
    }

    #[test]
    fn invalid_sizes() {
        assert!(generate(&SynthConfig::new(2, 10, 0)).is_err());
        assert!(generate(&SynthConfig::new(5, 0, 0)).is_err());
    }
}
