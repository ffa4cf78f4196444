//! Classification error, γ-fairness loss, and the generalization-bound
//! formulas for error and fairness loss.

use serde::{Deserialize, Serialize};

use crate::data::{ConstraintSet, Dataset};
use crate::error::{Error, Result};
use crate::hypothesis::{Point, RandomizedClassifier};

/// `err(D, S) = Σ_k w_k · (1/n) Σ_i 1[h_k(x_i) ≠ y_i]`.
pub fn empirical_error(d: &RandomizedClassifier, dataset: &Dataset) -> Result<f64> {
    let n = dataset.n() as f64;
    let mut total = 0.0;
    for c in d.components() {
        let preds = c.hypothesis.predictions_on(dataset)?;
        let mistakes = preds
            .iter()
            .zip(dataset.labels())
            .filter(|(p, y)| p != y)
            .count();
        total += c.weight * mistakes as f64 / n;
    }
    Ok(total)
}

/// `w · max(0, |disparity| - γ)` from a precomputed disparity.
pub fn fairness_loss_value(weight: f64, gamma: f64, disparity: f64) -> f64 {
    weight * (disparity.abs() - gamma).max(0.0)
}

/// γ-fairness loss of one pair under `d`.
pub fn fairness_loss_pair(
    d: &RandomizedClassifier,
    weight: f64,
    gamma: f64,
    a: Point<'_>,
    b: Point<'_>,
) -> Result<f64> {
    Ok(fairness_loss_value(weight, gamma, d.pair_disparity(a, b)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessLossReport {
    /// Loss of each pair, in input order.
    pub per_pair: Vec<f64>,
    pub mean: f64,
    pub gamma: f64,
    pub pair_count: usize,
}

impl FairnessLossReport {
    fn from_losses(per_pair: Vec<f64>, gamma: f64) -> Result<Self> {
        if per_pair.is_empty() {
            return Err(Error::InvalidParameter("fairness loss over an empty pair collection".into()));
        }
        let mean = per_pair.iter().sum::<f64>() / per_pair.len() as f64;
        Ok(Self {
            pair_count: per_pair.len(),
            per_pair,
            mean,
            gamma,
        })
    }
}

/// Average γ-fairness loss over weighted pairs `(x, x', w)`.
pub fn fairness_loss_set(
    d: &RandomizedClassifier,
    pairs: &[(Point<'_>, Point<'_>, f64)],
    gamma: f64,
) -> Result<FairnessLossReport> {
    let losses = pairs
        .iter()
        .map(|&(a, b, w)| fairness_loss_pair(d, w, gamma, a, b))
        .collect::<Result<Vec<_>>>()?;
    FairnessLossReport::from_losses(losses, gamma)
}

/// Fairness loss over `M = A` (ordered pairs of the constraint set) with the
/// elicited weights `ŵ`.
pub fn fairness_loss_on_constraints(
    d: &RandomizedClassifier,
    dataset: &Dataset,
    constraints: &ConstraintSet,
    gamma: f64,
) -> Result<FairnessLossReport> {
    let rates = d.rates_on(dataset)?;
    let losses = constraints
        .pair_set()
        .ordered_pairs()
        .map(|(i, j)| fairness_loss_value(constraints.weight(i, j), gamma, rates[i] - rates[j]))
        .collect();
    FairnessLossReport::from_losses(losses, gamma)
}

/// Uniform-convergence error bound `√((VC + ln(1/δ)) / n)`, up to the
/// unstated constant of the big-O (taken as 1).
pub fn error_bound(vc_dim: usize, n: usize, delta: f64) -> Result<f64> {
    if vc_dim == 0 || n == 0 || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "error bound needs vc_dim >= 1, n >= 1, delta in (0,1); got ({vc_dim}, {n}, {delta})"
        )));
    }
    Ok(((vc_dim as f64 + (1.0 / delta).ln()) / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Sample size.
    pub n: usize,
    /// Number of sampled constraint pairs.
    pub m: usize,
    pub vc_dim: usize,
    pub epsilon: f64,
    pub delta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.vc_dim == 0 {
            return Err(Error::InvalidParameter("n, m and vc_dim must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {} outside (0, 1)", self.delta)));
        }
        Ok(())
    }
}

/// Mixture size appearing in the sample-side term: `ln(2n²)/(8ε²) + 1`.
pub fn sample_net_size(n: usize, epsilon: f64) -> f64 {
    let n = n as f64;
    (2.0 * n * n).ln() / (8.0 * epsilon * epsilon) + 1.0
}

/// Mixture size appearing in the pair-side term: `2 ln(2m)/ε² + 1`.
pub fn pair_net_size(m: usize, epsilon: f64) -> f64 {
    2.0 * (2.0 * m as f64).ln() / (epsilon * epsilon) + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationBound {
    /// Natural log of the failure-probability bound.
    pub log_value: f64,
    /// `exp(log_value)`; infinite when it overflows.
    pub value: f64,
    pub k: f64,
    pub k_prime: f64,
    /// The bound is at least 1 and says nothing.
    pub vacuous: bool,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Failure probability of fairness-loss generalization:
///
/// ```text
/// 8 (2en/d)^{dk} exp(-nε²/32) + (2en/d)^{dk'} exp(-8mε²)
/// ```
///
/// with `k = ln(2n²)/(8ε²) + 1` and `k' = 2 ln(2m)/ε² + 1`, evaluated in log
/// space.
pub fn fairness_generalization_bound(inputs: &BoundInputs) -> Result<GeneralizationBound> {
    inputs.validate()?;
    let BoundInputs {
        n, m, vc_dim, epsilon, ..
    } = *inputs;
    let (nf, mf, d) = (n as f64, m as f64, vc_dim as f64);
    let k = sample_net_size(n, epsilon);
    let k_prime = pair_net_size(m, epsilon);
    let growth = (std::f64::consts::E * 2.0 * nf / d).ln();
    let eps2 = epsilon * epsilon;
    let sample_term = 8f64.ln() + d * k * growth - nf * eps2 / 32.0;
    let pair_term = d * k_prime * growth - 8.0 * mf * eps2;
    let log_value = log_add_exp(sample_term, pair_term);
    Ok(GeneralizationBound {
        log_value,
        value: log_value.exp(),
        k,
        k_prime,
        vacuous: log_value >= 0.0,
    })
}

/// Pearson correlation; `None` when either side is constant or lengths differ.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
