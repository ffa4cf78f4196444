//! The Lagrangian of the fairness-constrained ERM program and both players'
//! best responses.
//!
//! With `A` the ordered pairs of the elicited pair set, `ŵ` the aggregated
//! weights, and rates `r_i = Pr_{h~D}[h(x_i) = 1]`:
//!
//! ```text
//! L(D, α, λ, τ) = err(D, S)
//!               + Σ_{(i,j)∈A} λ_ij (r_i - r_j - α_ij - γ)
//!               + τ ((1/|A|) Σ_{(i,j)∈A} ŵ_ij α_ij - η)
//! ```
//!
//! Dual mass is only carried on `A`: off `A` the weight is zero, the primal
//! player sets `α = 1`, and the constraint cannot bind.

use serde::{Deserialize, Serialize};

use crate::csc::{CscInstance, CscOracle};
use crate::data::{ConstraintSet, Dataset};
use crate::error::{Error, Result};
use crate::hypothesis::{Hypothesis, RandomizedClassifier};
use crate::metrics::empirical_error;

/// The two fairness relaxation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessParams {
    /// Per-pair disparity allowance.
    pub gamma: f64,
    /// Budget on the weighted average slack.
    pub eta: f64,
}

impl FairnessParams {
    pub fn new(gamma: f64, eta: f64) -> Result<Self> {
        let p = Self { gamma, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("eta", self.eta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Dual box sizes and the target approximation `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeBudgets {
    pub c_lambda: f64,
    pub c_tau: f64,
    pub nu: f64,
}

impl GuaranteeBudgets {
    pub fn new(c_lambda: f64, c_tau: f64, nu: f64) -> Result<Self> {
        let b = Self { c_lambda, c_tau, nu };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c_lambda", self.c_lambda), ("c_tau", self.c_tau), ("nu", self.nu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Dual play: one `λ` per ordered pair of `A` (same order as
/// [`FairErm::pairs`]) and the scalar `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVars {
    pub lambda: Vec<f64>,
    pub tau: f64,
}

impl DualVars {
    pub fn zeros(len: usize) -> Self {
        Self {
            lambda: vec![0.0; len],
            tau: 0.0,
        }
    }
}

/// Primal play: a randomized classifier and one slack per ordered pair of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalVars {
    pub classifier: RandomizedClassifier,
    pub alpha: Vec<f64>,
}

/// `L = err + ψ₁(λ) + ψ₂(τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSplit {
    pub error: f64,
    pub lambda_part: f64,
    pub tau_part: f64,
}

/// `L = ρ₁(D) + ρ₂(α) + offset(λ, τ)`, where `ρ₁` includes the error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimalSplit {
    pub classifier_part: f64,
    pub slack_part: f64,
    pub offset: f64,
}

/// One instance of the fair ERM program: sample, constraints and knobs.
#[derive(Debug, Clone)]
pub struct FairErm<'a> {
    dataset: &'a Dataset,
    params: FairnessParams,
    pairs: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl<'a> FairErm<'a> {
    pub fn new(
        dataset: &'a Dataset,
        constraints: &ConstraintSet,
        params: FairnessParams,
    ) -> Result<Self> {
        params.validate()?;
        if let Some(max) = constraints.pair_set().max_index() {
            if max >= dataset.n() {
                return Err(Error::IndexOutOfRange {
                    index: max,
                    n: dataset.n(),
                });
            }
        }
        let pairs: Vec<(usize, usize)> = constraints.pair_set().ordered_pairs().collect();
        let weights = pairs.iter().map(|&(i, j)| constraints.weight(i, j)).collect();
        Ok(Self {
            dataset,
            params,
            pairs,
            weights,
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn params(&self) -> FairnessParams {
        self.params
    }

    /// Ordered pairs of `A`: each canonical pair followed by its reverse.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `ŵ` aligned with [`Self::pairs`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `|A|`, counting ordered pairs.
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.pairs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.pairs.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// `r_i - r_j` for every ordered pair.
    pub fn disparities(&self, rates: &[f64]) -> Vec<f64> {
        self.pairs.iter().map(|&(i, j)| rates[i] - rates[j]).collect()
    }

    /// `disparity - α - γ` for every ordered pair: the `λ` gradient.
    pub fn violations(&self, rates: &[f64], alpha: &[f64]) -> Vec<f64> {
        self.pairs
            .iter()
            .zip(alpha)
            .map(|(&(i, j), a)| rates[i] - rates[j] - a - self.params.gamma)
            .collect()
    }

    /// `(1/|A|) Σ ŵ α`; zero when `A` is empty.
    pub fn weighted_slack(&self, alpha: &[f64]) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        let total: f64 = self.weights.iter().zip(alpha).map(|(w, a)| w * a).sum();
        total / self.pairs.len() as f64
    }

    /// The `τ` gradient: `(1/|A|) Σ ŵ α - η`.
    pub fn slack_excess(&self, alpha: &[f64]) -> f64 {
        self.weighted_slack(alpha) - self.params.eta
    }

    pub fn lambda_part(&self, rates: &[f64], alpha: &[f64], lambda: &[f64]) -> f64 {
        self.violations(rates, alpha)
            .iter()
            .zip(lambda)
            .map(|(v, l)| v * l)
            .sum()
    }

    pub fn tau_part(&self, alpha: &[f64], tau: f64) -> f64 {
        tau * self.slack_excess(alpha)
    }

    fn shapes(&self, p: &PrimalVars, dv: &DualVars) -> Result<Vec<f64>> {
        self.check_len(p.alpha.len())?;
        self.check_len(dv.lambda.len())?;
        p.classifier.rates_on(self.dataset)
    }

    pub fn dual_split(&self, p: &PrimalVars, dv: &DualVars) -> Result<DualSplit> {
        let rates = self.shapes(p, dv)?;
        Ok(DualSplit {
            error: empirical_error(&p.classifier, self.dataset)?,
            lambda_part: self.lambda_part(&rates, &p.alpha, &dv.lambda),
            tau_part: self.tau_part(&p.alpha, dv.tau),
        })
    }

    pub fn primal_split(&self, p: &PrimalVars, dv: &DualVars) -> Result<PrimalSplit> {
        let rates = self.shapes(p, dv)?;
        let error = empirical_error(&p.classifier, self.dataset)?;
        let coupling: f64 = self
            .disparities(&rates)
            .iter()
            .zip(&dv.lambda)
            .map(|(d, l)| d * l)
            .sum();
        let scale = if self.pairs.is_empty() {
            0.0
        } else {
            dv.tau / self.pairs.len() as f64
        };
        let slack_part: f64 = p
            .alpha
            .iter()
            .zip(dv.lambda.iter().zip(&self.weights))
            .map(|(a, (l, w))| a * (scale * w - l))
            .sum();
        let lambda_mass: f64 = dv.lambda.iter().sum();
        Ok(PrimalSplit {
            classifier_part: error + coupling,
            slack_part,
            offset: -self.params.gamma * lambda_mass - dv.tau * self.params.eta,
        })
    }

    pub fn lagrangian_value(&self, p: &PrimalVars, dv: &DualVars) -> Result<f64> {
        let s = self.dual_split(p, dv)?;
        Ok(s.error + s.lambda_part + s.tau_part)
    }

    /// `L - err`.
    pub fn penalty(&self, p: &PrimalVars, dv: &DualVars) -> Result<f64> {
        let s = self.dual_split(p, dv)?;
        Ok(s.lambda_part + s.tau_part)
    }

    /// Per-row costs for the primal player's classifier choice: a label
    /// mismatch costs `1/n`, and predicting 1 on row `i` additionally costs
    /// `Σ_j λ_ij - λ_ji`.
    pub fn build_costs(&self, lambda: &[f64]) -> Result<CscInstance<'a>> {
        self.check_len(lambda.len())?;
        let n = self.dataset.n();
        let mut net = vec![0.0; n];
        for (&(i, j), &l) in self.pairs.iter().zip(lambda) {
            net[i] += l;
            net[j] -= l;
        }
        let inv_n = 1.0 / n as f64;
        let mut costs0 = Vec::with_capacity(n);
        let mut costs1 = Vec::with_capacity(n);
        for (i, &coupling) in net.iter().enumerate() {
            if self.dataset.label(i) == 0 {
                costs0.push(0.0);
                costs1.push(inv_n + coupling);
            } else {
                costs0.push(inv_n);
                costs1.push(coupling);
            }
        }
        CscInstance::new(self.dataset, costs0, costs1)
    }

    /// `α_ij = 1` when `τ ŵ_ij / |A| - λ_ij <= 0`, else 0.
    pub fn best_alpha(&self, dv: &DualVars) -> Result<Vec<f64>> {
        self.check_len(dv.lambda.len())?;
        let scale = if self.pairs.is_empty() {
            0.0
        } else {
            dv.tau / self.pairs.len() as f64
        };
        Ok(self
            .weights
            .iter()
            .zip(&dv.lambda)
            .map(|(w, l)| if scale * w - l <= 0.0 { 1.0 } else { 0.0 })
            .collect())
    }

    /// The primal best response: a deterministic classifier from the oracle
    /// and a 0/1 slack vector.
    pub fn best_response_primal(
        &self,
        dv: &DualVars,
        oracle: &dyn CscOracle,
    ) -> Result<(Hypothesis, Vec<f64>)> {
        let inst = self.build_costs(&dv.lambda)?;
        let h = oracle.solve(&inst)?;
        Ok((h, self.best_alpha(dv)?))
    }

    /// [`Self::best_response_primal`] packaged as [`PrimalVars`].
    pub fn best_response_primal_vars(
        &self,
        dv: &DualVars,
        oracle: &dyn CscOracle,
    ) -> Result<PrimalVars> {
        let (h, alpha) = self.best_response_primal(dv, oracle)?;
        Ok(PrimalVars {
            classifier: RandomizedClassifier::deterministic(h),
            alpha,
        })
    }

    /// The dual best response from rates and slacks: all `λ` mass on the
    /// first most-violated pair if its violation is positive, `τ` at its cap
    /// if the slack budget is exceeded.
    pub fn best_response_dual_from(
        &self,
        rates: &[f64],
        alpha: &[f64],
        budgets: &GuaranteeBudgets,
    ) -> Result<DualVars> {
        self.check_len(alpha.len())?;
        let mut dv = DualVars::zeros(self.pairs.len());
        let mut best: Option<(usize, f64)> = None;
        for (k, v) in self.violations(rates, alpha).into_iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        if let Some((k, v)) = best {
            if v > 0.0 {
                dv.lambda[k] = budgets.c_lambda;
            }
        }
        if self.slack_excess(alpha) > 0.0 {
            dv.tau = budgets.c_tau;
        }
        Ok(dv)
    }

    pub fn best_response_dual(&self, p: &PrimalVars, budgets: &GuaranteeBudgets) -> Result<DualVars> {
        let rates = p.classifier.rates_on(self.dataset)?;
        self.best_response_dual_from(&rates, &p.alpha, budgets)
    }

    /// `max_{λ∈Λ, τ∈T} penalty`, attained at the dual best response.
    pub fn max_penalty_from(&self, rates: &[f64], alpha: &[f64], budgets: &GuaranteeBudgets) -> f64 {
        let max_violation = self
            .violations(rates, alpha)
            .into_iter()
            .fold(0.0f64, f64::max);
        budgets.c_lambda * max_violation + budgets.c_tau * self.slack_excess(alpha).max(0.0)
    }
}
