//! Cost-sensitive classification: the only learning primitive the fairness
//! solver needs.
//!
//! An instance assigns each row `i` a cost `c⁰ᵢ` for predicting 0 and `c¹ᵢ`
//! for predicting 1. An oracle returns a hypothesis minimizing the total cost
//! `Σᵢ h(xᵢ)c¹ᵢ + (1 - h(xᵢ))c⁰ᵢ` over its class. [`ExactOracle`] scans an
//! explicit pool and is a true argmin; [`HeuristicOracle`] fits a linear
//! threshold by regressing the per-row cost advantage and carries no
//! optimality guarantee.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hypothesis::Hypothesis;

#[derive(Debug, Clone)]
pub struct CscInstance<'a> {
    dataset: &'a Dataset,
    costs0: Vec<f64>,
    costs1: Vec<f64>,
}

impl<'a> CscInstance<'a> {
    pub fn new(dataset: &'a Dataset, costs0: Vec<f64>, costs1: Vec<f64>) -> Result<Self> {
        for costs in [&costs0, &costs1] {
            if costs.len() != dataset.n() {
                return Err(Error::DimensionMismatch {
                    expected: dataset.n(),
                    actual: costs.len(),
                });
            }
            if costs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter("non-finite cost".into()));
            }
        }
        Ok(Self {
            dataset,
            costs0,
            costs1,
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn costs0(&self) -> &[f64] {
        &self.costs0
    }

    pub fn costs1(&self) -> &[f64] {
        &self.costs1
    }

    /// Total cost of a fixed prediction vector.
    pub fn cost_of(&self, predictions: &[u8]) -> f64 {
        predictions
            .iter()
            .zip(self.costs0.iter().zip(&self.costs1))
            .map(|(&p, (&c0, &c1))| if p == 1 { c1 } else { c0 })
            .sum()
    }
}

pub fn csc_objective(h: &Hypothesis, inst: &CscInstance<'_>) -> Result<f64> {
    Ok(inst.cost_of(&h.predictions_on(inst.dataset())?))
}

/// A cost-sensitive classification oracle.
pub trait CscOracle: Send + Sync {
    fn name(&self) -> &str;

    fn solve(&self, inst: &CscInstance<'_>) -> Result<Hypothesis>;
}

/// A finite hypothesis class evaluated on one dataset. Must contain a
/// hypothesis that is constant on that dataset, which keeps the fairness
/// program feasible.
#[derive(Debug, Clone)]
pub struct HypothesisPool {
    hypotheses: Vec<Hypothesis>,
    n: usize,
    // Row-major |pool| x n, as f64 so the scan is a plain dot product.
    predictions: Vec<f64>,
}

impl HypothesisPool {
    pub fn new(hypotheses: Vec<Hypothesis>, dataset: &Dataset) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::InvalidPool("empty pool".into()));
        }
        let n = dataset.n();
        let mut predictions = Vec::with_capacity(hypotheses.len() * n);
        let mut has_constant = false;
        for h in &hypotheses {
            let p = h.predictions_on(dataset)?;
            has_constant |= p.iter().all(|&v| v == p[0]);
            predictions.extend(p.into_iter().map(f64::from));
        }
        if !has_constant {
            return Err(Error::InvalidPool("pool has no constant classifier".into()));
        }
        Ok(Self {
            hypotheses,
            n,
            predictions,
        })
    }

    /// All `2ⁿ` labelings of the dataset's rows, indexed so that bit `i` of
    /// the pool index is the prediction on row `i`.
    pub fn all_labelings(dataset: &Dataset) -> Result<Self> {
        let n = dataset.n();
        if n > 20 {
            return Err(Error::InvalidPool(format!("2^{n} labelings is too many to enumerate")));
        }
        let hypotheses = (0..1usize << n)
            .map(|mask| Hypothesis::Tabular {
                predictions: (0..n).map(|i| ((mask >> i) & 1) as u8).collect(),
            })
            .collect();
        Self::new(hypotheses, dataset)
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    /// Index of the first pool member with minimal cost.
    pub fn argmin(&self, inst: &CscInstance<'_>) -> Result<usize> {
        if inst.dataset().n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: inst.dataset().n(),
            });
        }
        // cost(h) = Σc⁰ + Σ h_i (c¹_i - c⁰_i); the constant is shared.
        let delta: Vec<f64> = inst
            .costs1()
            .iter()
            .zip(inst.costs0())
            .map(|(c1, c0)| c1 - c0)
            .collect();
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for (k, row) in self.predictions.chunks_exact(self.n).enumerate() {
            let cost: f64 = row.iter().zip(&delta).map(|(p, d)| p * d).sum();
            if cost < best_cost {
                best_cost = cost;
                best = k;
            }
        }
        Ok(best)
    }
}

/// Exhaustive minimization over a pool; ties go to the lowest pool index.
pub fn solve_exact(inst: &CscInstance<'_>, pool: &HypothesisPool) -> Result<Hypothesis> {
    Ok(pool.hypotheses[pool.argmin(inst)?].clone())
}

#[derive(Debug, Clone)]
pub struct ExactOracle {
    pool: HypothesisPool,
}

impl ExactOracle {
    pub fn new(pool: HypothesisPool) -> Self {
        Self { pool }
    }

    pub fn pool(&self) -> &HypothesisPool {
        &self.pool
    }
}

impl CscOracle for ExactOracle {
    fn name(&self) -> &str {
        "exact"
    }

    fn solve(&self, inst: &CscInstance<'_>) -> Result<Hypothesis> {
        solve_exact(inst, &self.pool)
    }
}

/// Ridge added to the normal equations of [`solve_heuristic`].
pub const HEURISTIC_RIDGE: f64 = 1e-8;

/// Least-squares fit of the cost advantage `c⁰ᵢ - c¹ᵢ` on `[xᵢ, 1]`,
/// thresholded at zero.
pub fn solve_heuristic(inst: &CscInstance<'_>) -> Result<Hypothesis> {
    let ds = inst.dataset();
    let (n, d) = (ds.n(), ds.d());
    let cols = d + 1;
    let mut gram = DMatrix::<f64>::zeros(cols, cols);
    let mut rhs = DVector::<f64>::zeros(cols);
    let mut z = vec![1.0; cols];
    for i in 0..n {
        z[..d].copy_from_slice(ds.row(i));
        let target = inst.costs0()[i] - inst.costs1()[i];
        for a in 0..cols {
            rhs[a] += z[a] * target;
            for b in a..cols {
                gram[(a, b)] += z[a] * z[b];
            }
        }
    }
    for a in 0..cols {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += HEURISTIC_RIDGE;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::DegenerateDesign(format!("normal equations not positive definite (n={n}, d={d})"))
    })?;
    let coef = chol.solve(&rhs);
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::DegenerateDesign("non-finite regression coefficients".into()));
    }
    Hypothesis::linear(coef.iter().take(d).copied().collect(), coef[d])
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicOracle;

impl CscOracle for HeuristicOracle {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn solve(&self, inst: &CscInstance<'_>) -> Result<Hypothesis> {
        solve_heuristic(inst)
    }
}

/// Exact minimizer over every labeling of the sample. The objective is
/// separable, so each row independently takes its cheaper label (0 on ties),
/// which is the pool index [`HypothesisPool::argmin`] would return on
/// [`HypothesisPool::all_labelings`], without the `2ⁿ` scan.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelingOracle;

pub fn solve_labelings(inst: &CscInstance<'_>) -> Hypothesis {
    Hypothesis::Tabular {
        predictions: inst
            .costs1()
            .iter()
            .zip(inst.costs0())
            .map(|(c1, c0)| u8::from(c1 < c0))
            .collect(),
    }
}

impl CscOracle for LabelingOracle {
    fn name(&self) -> &str {
        "labelings"
    }

    fn solve(&self, inst: &CscInstance<'_>) -> Result<Hypothesis> {
        Ok(solve_labelings(inst))
    }
}
