//! Exact Wasserstein-1 distance between finite weighted point sets on
//! projective space under the metric `d(x,y) = sqrt(1 - |<x,y>|^2)`.
//!
//! Equal-size uniform instances route to a shortest-augmenting-path
//! assignment solver; general instances to a transportation simplex. Both
//! are exact (up to floating point); no entropic regularization anywhere.

mod assignment;
mod simplex;

pub use assignment::solve_assignment;
pub use simplex::solve_transportation;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{C64, CMatrix};
use crate::projective::{distance_unchecked, ProjectivePoint};

/// Default cap on support points per side for the exact solver.
pub const DEFAULT_W1_BUDGET: usize = 5000;

/// Two rays closer than this are merged into one atom before solving.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// Weighted finite point set on projective space; weights are normalized to
/// sum to one.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    points: Vec<ProjectivePoint>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<ProjectivePoint>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("empty measure".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].dim();
        if points.iter().any(|p| p.dim() != dim) {
            return Err(Error::InvalidInput("points of mixed dimension".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be positive and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<ProjectivePoint>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    pub fn dirac(point: ProjectivePoint) -> Self {
        Self {
            points: vec![point],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[ProjectivePoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&x| (x - w).abs() <= 1e-12)
    }

    /// Mean of the rank-one projectors, a density matrix when weights sum
    /// to one.
    pub fn mean_projector(&self) -> CMatrix {
        let k = self.dim();
        let mut acc = CMatrix::zeros(k, k);
        for (p, &w) in self.points.iter().zip(&self.weights) {
            acc += p.projector() * C64::new(w, 0.0);
        }
        acc
    }

    /// Merge atoms whose rays are within `tol` of each other, summing
    /// weights. Points are bucketed on quantized coordinates so exact
    /// duplicates collapse in linear time.
    pub fn merged(&self, tol: f64) -> EmpiricalMeasure {
        use std::collections::HashMap;
        let quantum = 1e-9f64;
        let key_of = |p: &ProjectivePoint| -> Vec<i64> {
            p.coeffs()
                .iter()
                .flat_map(|z| [(z.re / quantum).round() as i64, (z.im / quantum).round() as i64])
                .collect()
        };
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        let mut points: Vec<ProjectivePoint> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (p, &w) in self.points.iter().zip(&self.weights) {
            let key = key_of(p);
            let mut merged_into = None;
            if let Some(cands) = buckets.get(&key) {
                for &idx in cands {
                    if distance_unchecked(&points[idx], p) < tol {
                        merged_into = Some(idx);
                        break;
                    }
                }
            }
            match merged_into {
                Some(idx) => weights[idx] += w,
                None => {
                    points.push(p.clone());
                    weights.push(w);
                    buckets.entry(key).or_default().push(points.len() - 1);
                }
            }
        }
        EmpiricalMeasure { points, weights }
    }

    /// Deterministic subsample of at most `n` atoms. Uniform measures are
    /// drawn without replacement; weighted measures are resampled with
    /// replacement by weight (then uniform).
    pub fn subsample(&self, n: usize, seed: u64) -> EmpiricalMeasure {
        if self.len() <= n {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if self.is_uniform() {
            let mut idx: Vec<usize> = (0..self.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(n);
            idx.sort_unstable();
            let points = idx.iter().map(|&i| self.points[i].clone()).collect();
            EmpiricalMeasure::uniform(points).expect("non-empty subsample")
        } else {
            // systematic resampling by weight
            let step = 1.0 / n as f64;
            let start: f64 = rand::Rng::random::<f64>(&mut rng) * step;
            let mut points = Vec::with_capacity(n);
            let mut cum = 0.0;
            let mut i = 0;
            for j in 0..n {
                let target = start + j as f64 * step;
                while cum + self.weights[i] < target && i + 1 < self.len() {
                    cum += self.weights[i];
                    i += 1;
                }
                points.push(self.points[i].clone());
            }
            EmpiricalMeasure::uniform(points).expect("non-empty subsample")
        }
    }
}

/// Uniform mixture of a non-empty list of measures, duplicates merged.
pub fn cesaro_mix(measures: &[EmpiricalMeasure]) -> Result<EmpiricalMeasure> {
    if measures.is_empty() {
        return Err(Error::InvalidInput("cesaro_mix of an empty list".into()));
    }
    let dim = measures[0].dim();
    if measures.iter().any(|m| m.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: measures.iter().find(|m| m.dim() != dim).unwrap().dim(),
        });
    }
    let share = 1.0 / measures.len() as f64;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for m in measures {
        points.extend(m.points.iter().cloned());
        weights.extend(m.weights.iter().map(|w| w * share));
    }
    Ok(EmpiricalMeasure { points, weights }.merged(DUPLICATE_TOL))
}

/// Exact W1 under the default solver budget.
pub fn w1(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    w1_with_budget(a, b, DEFAULT_W1_BUDGET)
}

/// Exact W1 with an explicit cap on support size per side.
pub fn w1_with_budget(a: &EmpiricalMeasure, b: &EmpiricalMeasure, budget: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let a = a.merged(DUPLICATE_TOL);
    let b = b.merged(DUPLICATE_TOL);
    if a.len() > budget || b.len() > budget {
        return Err(Error::Budget(format!(
            "W1 instance has {}x{} support points, budget is {budget} per side; \
             subsample the measures first",
            a.len(),
            b.len()
        )));
    }
    let cost = |i: usize, j: usize| distance_unchecked(&a.points[i], &b.points[j]);
    if a.len() == b.len() && a.is_uniform() && b.is_uniform() {
        let n = a.len();
        let (_, total) = solve_assignment(n, &cost);
        Ok(total / n as f64)
    } else {
        solve_transportation(&a.weights, &b.weights, &cost)
    }
}
