//! Pairwise RankSVM with squared hinge loss and L2 regularization:
//!
//! ```text
//! f(w) = ½‖w‖² + C · Σ_groups Σ_(p,q) max(0, 1 − wᵀ(φ_p − φ_q))²
//! ```
//!
//! minimized by a full-batch descent method with Armijo backtracking. The
//! default direction is a generalized Newton step (the squared hinge has a
//! piecewise-constant Hessian); plain steepest descent is also available.
//! Group contributions are evaluated in parallel and reduced in group order,
//! so results are bit-stable regardless of thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankWeights(pub Vec<f64>);

impl RankWeights {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// wᵀφ
    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.0.len() {
            return Err(Error::DimensionMismatch {
                expected: self.0.len(),
                actual: features.len(),
            });
        }
        Ok(dot(&self.0, features))
    }
}

/// Search direction used by [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// −H⁻¹∇f with H = I + 2C Σ_active ΔΔᵀ.
    #[default]
    Newton,
    /// −∇f with a Barzilai-Borwein first trial step.
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Trade-off between the margin losses and the regularizer.
    pub c: f64,
    pub max_iters: usize,
    /// First trial step of the line search.
    pub step_size: f64,
    /// Stop once ‖∇f‖ ≤ tolerance · max(1, ‖∇f(0)‖).
    pub tolerance: f64,
    pub seed: u64,
    #[serde(default)]
    pub solver: Solver,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 10.0,
            max_iters: 2000,
            step_size: 1.0,
            tolerance: 1e-6,
            seed: 0,
            solver: Solver::Newton,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidInput(format!("C must be positive, got {}", self.c)));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {}", self.step_size)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be non-negative, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Feature rows of one query plus the ordered pairs `(p, q)` meaning row `p`
/// should outrank row `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGroup {
    dim: usize,
    rows: Vec<f64>,
    pairs: Vec<(u32, u32)>,
}

impl PairGroup {
    pub fn new(dim: usize, rows: Vec<f64>, pairs: Vec<(u32, u32)>) -> Result<Self> {
        if dim == 0 || !rows.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: rows.len(),
            });
        }
        let n = (rows.len() / dim) as u32;
        if let Some(&(p, q)) = pairs.iter().find(|&&(p, q)| p >= n || q >= n || p == q) {
            return Err(Error::InvalidInput(format!("pair ({p}, {q}) invalid for {n} rows")));
        }
        Ok(Self { dim, rows, pairs })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    fn scores(&self, w: &[f64]) -> Vec<f64> {
        self.rows.chunks_exact(self.dim).map(|r| dot(w, r)).collect()
    }

    fn loss(&self, w: &[f64]) -> f64 {
        let s = self.scores(w);
        self.pairs
            .iter()
            .map(|&(p, q)| hinge(s[p as usize] - s[q as usize]).powi(2))
            .sum()
    }

    /// Σ_(p,q) h_pq (φ_p − φ_q), with h the active hinge.
    fn weighted_difference_sum(&self, w: &[f64]) -> Vec<f64> {
        let s = self.scores(w);
        let mut coef = vec![0.0; self.n_rows()];
        for &(p, q) in &self.pairs {
            let h = hinge(s[p as usize] - s[q as usize]);
            if h > 0.0 {
                coef[p as usize] += h;
                coef[q as usize] -= h;
            }
        }
        let mut out = vec![0.0; self.dim];
        for (i, &c) in coef.iter().enumerate() {
            if c != 0.0 {
                for (o, x) in out.iter_mut().zip(self.row(i)) {
                    *o += c * x;
                }
            }
        }
        out
    }

    /// Adds Σ_active ΔΔᵀ (row-major, dim × dim) into `out`.
    fn add_active_outer(&self, w: &[f64], out: &mut [f64]) {
        let s = self.scores(w);
        let mut delta = vec![0.0; self.dim];
        for &(p, q) in &self.pairs {
            if hinge(s[p as usize] - s[q as usize]) > 0.0 {
                for ((d, a), b) in delta.iter_mut().zip(self.row(p as usize)).zip(self.row(q as usize)) {
                    *d = a - b;
                }
                for (i, di) in delta.iter().enumerate() {
                    if *di != 0.0 {
                        for (o, dj) in out[i * self.dim..(i + 1) * self.dim].iter_mut().zip(&delta) {
                            *o += di * dj;
                        }
                    }
                }
            }
        }
    }
}

/// Training data for the ranker: one [`PairGroup`] per training query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingProblem {
    dim: usize,
    groups: Vec<PairGroup>,
}

impl RankingProblem {
    pub fn new(dim: usize, groups: Vec<PairGroup>) -> Result<Self> {
        if let Some(g) = groups.iter().find(|g| g.dim != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: g.dim,
            });
        }
        Ok(Self { dim, groups })
    }

    /// Builds a problem directly from precomputed differences
    /// Δ = φ(p) − φ(p′), one per ranking pair.
    pub fn from_differences(dim: usize, differences: &[Vec<f64>]) -> Result<Self> {
        let mut rows = Vec::with_capacity((differences.len() + 1) * dim);
        for d in differences {
            if d.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: d.len(),
                });
            }
            rows.extend_from_slice(d);
        }
        let zero = differences.len() as u32;
        rows.extend(std::iter::repeat_n(0.0, dim));
        let pairs = (0..zero).map(|i| (i, zero)).collect();
        Self::new(dim, vec![PairGroup::new(dim, rows, pairs)?])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn groups(&self) -> &[PairGroup] {
        &self.groups
    }

    pub fn pair_count(&self) -> usize {
        self.groups.iter().map(|g| g.pairs.len()).sum()
    }

    fn check(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: w.len(),
            });
        }
        Ok(())
    }

    /// ½‖w‖² + C Σ max(0, 1 − wᵀΔ)²
    pub fn objective(&self, w: &[f64], c: f64) -> Result<f64> {
        self.check(w)?;
        let losses: Vec<f64> = self.groups.par_iter().map(|g| g.loss(w)).collect();
        let loss: f64 = losses.iter().sum();
        Ok(0.5 * dot(w, w) + c * loss)
    }

    /// w − 2C Σ max(0, 1 − wᵀΔ) Δ
    pub fn gradient(&self, w: &[f64], c: f64) -> Result<Vec<f64>> {
        self.check(w)?;
        let parts: Vec<Vec<f64>> = self.groups.par_iter().map(|g| g.weighted_difference_sum(w)).collect();
        let mut acc = vec![0.0; self.dim];
        for part in &parts {
            for (a, x) in acc.iter_mut().zip(part) {
                *a += x;
            }
        }
        Ok(w.iter().zip(&acc).map(|(wi, a)| wi - 2.0 * c * a).collect())
    }
}

impl RankingProblem {
    /// Generalized Hessian I + 2C Σ_active ΔΔᵀ, row-major.
    pub fn hessian(&self, w: &[f64], c: f64) -> Result<Vec<f64>> {
        self.check(w)?;
        let d = self.dim;
        let parts: Vec<Vec<f64>> = self
            .groups
            .par_iter()
            .map(|g| {
                let mut out = vec![0.0; d * d];
                g.add_active_outer(w, &mut out);
                out
            })
            .collect();
        let mut h = vec![0.0; d * d];
        for part in &parts {
            for (a, x) in h.iter_mut().zip(part) {
                *a += x;
            }
        }
        for (i, v) in h.iter_mut().enumerate() {
            *v *= 2.0 * c;
            if i / d == i % d {
                *v += 1.0;
            }
        }
        Ok(h)
    }
}

pub fn ranksvm_objective(w: &RankWeights, problem: &RankingProblem, c: f64) -> Result<f64> {
    problem.objective(&w.0, c)
}

pub fn ranksvm_gradient(w: &RankWeights, problem: &RankingProblem, c: f64) -> Result<Vec<f64>> {
    problem.gradient(&w.0, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub weights: RankWeights,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn newton_direction(problem: &RankingProblem, w: &[f64], g: &[f64], c: f64) -> Result<Vec<f64>> {
    let d = problem.dim();
    let h = DMatrix::from_row_slice(d, d, &problem.hessian(w, c)?);
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("Hessian is not positive definite; features must be finite".into()))?;
    let step = chol.solve(&DVector::from_column_slice(g));
    Ok(step.iter().map(|x| -x).collect())
}

/// Minimizes the RankSVM objective from w = 0.
///
/// Each iteration picks a descent direction per [`Solver`], tries the
/// configured step size first (a Barzilai-Borwein step for gradient
/// descent after the first iteration) and halves it until the Armijo
/// condition holds, so accepted objectives never increase.
pub fn train(problem: &RankingProblem, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if problem.pair_count() == 0 {
        return Err(Error::NothingToRank);
    }
    let c = config.c;
    let mut w = vec![0.0; problem.dim()];
    let mut f = problem.objective(&w, c)?;
    let mut g = problem.gradient(&w, c)?;
    let mut history = vec![f];
    let mut trial = config.step_size;
    let mut iterations = 0;
    let threshold = config.tolerance * norm(&g).max(1.0);
    let mut converged = norm(&g) <= threshold;

    while !converged && iterations < config.max_iters {
        let direction = match config.solver {
            Solver::Newton => newton_direction(problem, &w, &g, c)?,
            Solver::GradientDescent => g.iter().map(|x| -x).collect(),
        };
        let slope = dot(&g, &direction);
        // predicted decrease below the rounding of f: nothing left to gain
        if !(-slope > f64::EPSILON * f.abs()) {
            break;
        }
        let mut step = match config.solver {
            Solver::Newton => config.step_size,
            Solver::GradientDescent => trial,
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate: Vec<f64> = w.iter().zip(&direction).map(|(wi, di)| wi + step * di).collect();
            let fc = problem.objective(&candidate, c)?;
            if fc <= f + ARMIJO * step * slope {
                accepted = Some((candidate, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next)) = accepted else {
            // no representable decrease: at the optimum to machine precision
            break;
        };
        let g_next = problem.gradient(&next, c)?;
        iterations += 1;

        let s: Vec<f64> = next.iter().zip(&w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        trial = if sy > 0.0 { dot(&s, &s) / sy } else { step * 2.0 };

        w = next;
        f = f_next;
        g = g_next;
        history.push(f);
        converged = norm(&g) <= threshold;
    }

    Ok(TrainReport {
        weights: RankWeights(w),
        objective: f,
        gradient_norm: norm(&g),
        iterations,
        converged,
        history,
    })
}

fn hinge(margin: f64) -> f64 {
    (1.0 - margin).max(0.0)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
