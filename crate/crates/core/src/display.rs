//! Affine rescaling of raw scores into display ranges.
//!
//! * route totals: the first route maps to 100 and the tenth (or last) to 10;
//!   POI scores reuse the same affine map;
//! * transition scores: global minimum to 0.1, maximum to 1;
//! * radar feature values: per axis, minimum to 1, maximum to 10.
//!
//! Each map is written as `lo + (hi − lo)·t` with `t ∈ [0, 1]` computed as a
//! ratio, so the range endpoints are hit exactly. Constant inputs are
//! degenerate: they map to the top of the range and are flagged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROUTE_TOP: f64 = 100.0;
pub const ROUTE_ANCHOR: f64 = 10.0;
/// Rank (1-based) of the route mapped to [`ROUTE_ANCHOR`].
pub const ROUTE_ANCHOR_RANK: usize = 10;
pub const TRANSITION_RANGE: (f64, f64) = (0.1, 1.0);
pub const FEATURE_RANGE: (f64, f64) = (1.0, 10.0);

/// `g(s) = a·s + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub a: f64,
    pub b: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        self.a * x + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledRoutes {
    pub scaled: Vec<f64>,
    /// Parameters of the total map, for reuse on POI scores.
    pub map: AffineMap,
    pub degenerate: bool,
}

/// Scales route totals (sorted descending) so the first is 100 and the
/// tenth is 10. Longer lists are extrapolated with the same map; a shorter
/// list anchors on its last entry. A single route maps to 100 by
/// translation.
pub fn scale_route_scores(totals: &[f64]) -> Result<ScaledRoutes> {
    let Some(&first) = totals.first() else {
        return Err(Error::InvalidInput("no route totals to scale".into()));
    };
    if totals.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("route totals must be finite".into()));
    }
    if totals.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidInput("route totals must be sorted in descending order".into()));
    }
    let anchor = totals[totals.len().min(ROUTE_ANCHOR_RANK) - 1];
    let span = first - anchor;
    if totals.len() == 1 || span == 0.0 {
        let map = AffineMap { a: 1.0, b: ROUTE_TOP - first };
        let scaled = totals.iter().map(|&s| ROUTE_TOP + (s - first)).collect();
        return Ok(ScaledRoutes {
            scaled,
            map,
            degenerate: totals.len() > 1,
        });
    }
    let drop = ROUTE_TOP - ROUTE_ANCHOR;
    let a = drop / span;
    let scaled = totals
        .iter()
        .map(|&s| ROUTE_TOP - drop * ((first - s) / span))
        .collect();
    Ok(ScaledRoutes {
        scaled,
        map: AffineMap { a, b: ROUTE_TOP - a * first },
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledRange {
    pub scaled: Vec<f64>,
    pub degenerate: bool,
}

fn scale_into(values: &[f64], (lo, hi): (f64, f64)) -> Result<ScaledRange> {
    if values.is_empty() {
        return Err(Error::InvalidInput("nothing to scale".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("values must be finite".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(ScaledRange {
            scaled: vec![hi; values.len()],
            degenerate: true,
        });
    }
    let span = max - min;
    Ok(ScaledRange {
        scaled: values.iter().map(|&v| lo + (hi - lo) * ((v - min) / span)).collect(),
        degenerate: false,
    })
}

/// Maps all transition scores of the displayed routes into [0.1, 1].
pub fn scale_transition_scores(values: &[f64]) -> Result<ScaledRange> {
    scale_into(values, TRANSITION_RANGE)
}

/// Radar values: `axes[a][i]` is feature `a` of checked POI `i`; each axis
/// is scaled into [1, 10] independently.
pub fn scale_feature_scores(axes: &[Vec<f64>]) -> Result<Vec<ScaledRange>> {
    let n = axes.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::InvalidInput("no POIs to compare".into()));
    }
    if axes.iter().any(|a| a.len() != n) {
        return Err(Error::InvalidInput("ragged feature axes".into()));
    }
    axes.iter().map(|a| scale_into(a, FEATURE_RANGE)).collect()
}
