//! No-regret dynamics for the fair ERM game.
//!
//! Each round the dual player moves first from the previous primal play:
//! `λ` by exponentiated gradient over the pairs of `A` (plus an implicit
//! no-charge coordinate) and `τ` by projected online gradient ascent. The
//! primal player then best-responds through the CSC oracle. The output is the
//! uniform average of the primal hypotheses.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csc::CscOracle;
use crate::data::{ConstraintSet, Dataset};
use crate::error::{Error, Result};
use crate::hypothesis::{Component, Hypothesis, RandomizedClassifier};
use crate::lagrangian::{DualVars, FairErm, FairnessParams, GuaranteeBudgets};
use crate::metrics::{empirical_error, fairness_loss_on_constraints};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub params: FairnessParams,
    pub budgets: GuaranteeBudgets,
    /// Run this many rounds instead of the closed-form horizon.
    pub t_override: Option<usize>,
    /// Echoed into the report; the dynamics themselves draw no randomness.
    pub seed: u64,
    /// Record a trajectory row every `trajectory_stride` rounds.
    pub trajectory_stride: usize,
    /// Stop at a trajectory checkpoint once the dual certificate is `<= ν`.
    pub early_stop: bool,
}

impl SolverConfig {
    pub fn new(params: FairnessParams, budgets: GuaranteeBudgets) -> Self {
        Self {
            params,
            budgets,
            t_override: None,
            seed: 0,
            trajectory_stride: 100,
            early_stop: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.budgets.validate()?;
        if self.t_override == Some(0) {
            return Err(Error::InvalidParameter("t_override must be at least 1".into()));
        }
        if self.trajectory_stride == 0 {
            return Err(Error::InvalidParameter("trajectory_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// `⌈((2 C_λ √(ln n) + C_τ) / ν)²⌉`.
pub fn compute_iterations(budgets: &GuaranteeBudgets, n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2 rows, got {n}")));
    }
    budgets.validate()?;
    Ok(iteration_horizon(budgets.c_lambda, budgets.c_tau, budgets.nu, (n as f64).ln()))
}

/// The horizon formula with `ln n` supplied directly.
pub fn iteration_horizon(c_lambda: f64, c_tau: f64, nu: f64, ln_n: f64) -> usize {
    let root = (2.0 * c_lambda * ln_n.sqrt() + c_tau) / nu;
    (root * root).ceil() as usize
}

/// `μ_λ = (1/C_λ) √(ln n / T)`.
pub fn lambda_step(c_lambda: f64, n: usize, rounds: usize) -> f64 {
    ((n as f64).ln() / rounds as f64).sqrt() / c_lambda
}

/// `μ_τ = C_τ / √T`.
pub fn tau_step(c_tau: f64, rounds: usize) -> f64 {
    c_tau / (rounds as f64).sqrt()
}

/// `λ_k = C_λ exp θ_k / (1 + Σ exp θ)`, shifted by `max(θ, 0)` so no
/// exponent is positive; the `1` becomes `exp(-shift)` accordingly.
pub fn eg_lambda(theta: &[f64], c_lambda: f64) -> Vec<f64> {
    let shift = theta.iter().copied().fold(0.0f64, f64::max);
    let exps: Vec<f64> = theta.iter().map(|t| (t - shift).exp()).collect();
    let denom = (-shift).exp() + exps.iter().sum::<f64>();
    exps.into_iter().map(|e| c_lambda * e / denom).collect()
}

/// `θ_k += μ C_λ (disparity_k - α_k - γ)`; returns the new `λ`.
///
/// The dual payoff is `C_λ p · ζ` for the simplex weights `p`, so the
/// exponentiated-gradient step on `p` scales the gradient `ζ` by `C_λ`. With
/// `μ = (1/C_λ)√(ln n / T)` this is the step whose regret is
/// `O(C_λ √(T ln n))`.
pub fn eg_update(
    theta: &mut [f64],
    disparities: &[f64],
    alpha: &[f64],
    gamma: f64,
    mu_lambda: f64,
    c_lambda: f64,
) -> Vec<f64> {
    for ((t, d), a) in theta.iter_mut().zip(disparities).zip(alpha) {
        *t += mu_lambda * c_lambda * (d - a - gamma);
    }
    eg_lambda(theta, c_lambda)
}

/// `proj_[0, C_τ](τ + μ g)`.
pub fn ogd_update(tau: f64, gradient: f64, mu_tau: f64, c_tau: f64) -> f64 {
    (tau + mu_tau * gradient).clamp(0.0, c_tau)
}

/// What an observer sees after each round's primal best response.
#[derive(Debug, Clone, Copy)]
pub struct RoundRecord<'r> {
    /// 1-based.
    pub iteration: usize,
    pub lambda: &'r [f64],
    pub tau: f64,
    pub predictions: &'r [u8],
    pub alpha: &'r [f64],
    /// `disparity - α - γ` per ordered pair: the `λ` payoff gradient.
    pub violations: &'r [f64],
    /// `(1/|A|) Σ ŵ α - η`: the `τ` payoff gradient.
    pub slack_excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    /// Error of the running average classifier.
    pub error: f64,
    /// Largest `|r_i - r_j|` over constrained pairs (`ŵ > 0`).
    pub max_disparity: f64,
    /// Largest `disparity - ᾱ - γ` over `A` for the running averages.
    pub max_violation: f64,
}

/// Everything needed to recompute the realized dual regret.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualLedger {
    pub rounds: usize,
    /// `Σ_t λ^t · ζ^t`.
    pub lambda_payoff: f64,
    /// `Σ_t τ^t g^t`.
    pub tau_payoff: f64,
    /// `Σ_t ζ^t` per ordered pair.
    pub cumulative_violation: Vec<f64>,
    /// `Σ_t g^t`.
    pub cumulative_slack_excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lambda_regret: f64,
    pub tau_regret: f64,
    /// `2 C_λ √(T ln n)`.
    pub lambda_regret_bound: f64,
    /// `C_τ √T`.
    pub tau_regret_bound: f64,
    /// Average dual regret `(λ regret + τ regret) / T`.
    pub xi_psi: f64,
    /// `max_{λ,τ} L(D̄, ᾱ, λ, τ) - err(D̄)`: the dual best response's gain.
    pub penalty: f64,
}

impl Certificate {
    pub fn within_bounds(&self) -> bool {
        self.lambda_regret <= self.lambda_regret_bound && self.tau_regret <= self.tau_regret_bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub classifier: RandomizedClassifier,
    /// Ordered pairs of `A`, aligned with `avg_alpha`.
    pub pairs: Vec<(usize, usize)>,
    pub avg_alpha: Vec<f64>,
    pub train_error: f64,
    /// `max_A (disparity - ᾱ - γ)`; 0 when `A` is empty.
    pub max_violation: f64,
    pub weighted_slack: f64,
    pub rounds: usize,
    pub params: FairnessParams,
    pub budgets: GuaranteeBudgets,
    pub oracle: String,
    pub seed: u64,
    pub certificate: Certificate,
    pub ledger: Option<DualLedger>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub stopped_early: bool,
    /// `A` was empty and the run reduced to plain ERM.
    pub unconstrained: bool,
}

pub fn solve(
    dataset: &Dataset,
    constraints: &ConstraintSet,
    config: &SolverConfig,
    oracle: &dyn CscOracle,
) -> Result<SolveReport> {
    solve_observed(dataset, constraints, config, oracle, |_| {})
}

/// [`solve`] with a callback after every round.
pub fn solve_observed(
    dataset: &Dataset,
    constraints: &ConstraintSet,
    config: &SolverConfig,
    oracle: &dyn CscOracle,
    mut observe: impl FnMut(&RoundRecord<'_>),
) -> Result<SolveReport> {
    config.validate()?;
    let budgets = config.budgets;
    let n = dataset.n();
    let erm = FairErm::new(dataset, constraints, config.params)?;
    let rounds = match config.t_override {
        Some(t) => t,
        None => compute_iterations(&budgets, n)?,
    };
    let m = erm.pair_count();
    let mu_lambda = lambda_step(budgets.c_lambda, n, rounds);
    let mu_tau = tau_step(budgets.c_tau, rounds);
    let constrained: Vec<usize> = (0..m).filter(|&k| erm.weights()[k] > 0.0).collect();

    // With γ >= 1 no disparity can exceed α + γ, so every λ coordinate is
    // pinned at 0 instead of starting from the EG prior.
    let vacuous = config.params.gamma >= 1.0;
    let refresh = |theta: &[f64]| {
        if vacuous {
            vec![0.0; theta.len()]
        } else {
            eg_lambda(theta, budgets.c_lambda)
        }
    };
    let mut theta = vec![0.0; m];
    let mut dual = DualVars {
        lambda: refresh(&theta),
        tau: 0.0,
    };
    let mut prev_alpha = vec![0.0; m];

    let mut history: Vec<(Hypothesis, u64)> = Vec::new();
    let mut seen: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut positive_counts = vec![0u64; n];
    let mut alpha_sum = vec![0.0; m];
    let mut ledger = DualLedger {
        rounds: 0,
        lambda_payoff: 0.0,
        tau_payoff: 0.0,
        cumulative_violation: vec![0.0; m],
        cumulative_slack_excess: 0.0,
    };
    let mut trajectory = Vec::new();
    let mut stopped_early = false;

    for t in 1..=rounds {
        // λ^t was refreshed at the end of round t-1 (or is the θ = 0 start);
        // τ^t steps on α^{t-1}, with α⁰ = 0.
        dual.tau = ogd_update(dual.tau, erm.slack_excess(&prev_alpha), mu_tau, budgets.c_tau);

        let (h, alpha) = erm
            .best_response_primal(&dual, oracle)
            .map_err(|e| Error::Oracle { iteration: t, source: Box::new(e) })?;
        let predictions = h
            .predictions_on(dataset)
            .map_err(|e| Error::Oracle { iteration: t, source: Box::new(e) })?;
        let rates: Vec<f64> = predictions.iter().map(|&p| f64::from(p)).collect();
        let violations = erm.violations(&rates, &alpha);
        let excess = erm.slack_excess(&alpha);

        ledger.lambda_payoff += violations.iter().zip(&dual.lambda).map(|(v, l)| v * l).sum::<f64>();
        ledger.tau_payoff += dual.tau * excess;
        for (c, v) in ledger.cumulative_violation.iter_mut().zip(&violations) {
            *c += v;
        }
        ledger.cumulative_slack_excess += excess;
        ledger.rounds = t;

        observe(&RoundRecord {
            iteration: t,
            lambda: &dual.lambda,
            tau: dual.tau,
            predictions: &predictions,
            alpha: &alpha,
            violations: &violations,
            slack_excess: excess,
        });

        for (c, &p) in positive_counts.iter_mut().zip(&predictions) {
            *c += u64::from(p);
        }
        for (s, a) in alpha_sum.iter_mut().zip(&alpha) {
            *s += a;
        }
        match seen.get(&predictions) {
            Some(&k) => history[k].1 += 1,
            None => {
                seen.insert(predictions, history.len());
                history.push((h, 1));
            }
        }

        // Dual update for round t+1 from this round's primal play.
        for (th, v) in theta.iter_mut().zip(&violations) {
            *th += mu_lambda * budgets.c_lambda * v;
        }
        dual.lambda = refresh(&theta);
        prev_alpha = alpha;

        if t % config.trajectory_stride == 0 || t == rounds {
            let point = trajectory_point(&erm, dataset, &constrained, &positive_counts, &alpha_sum, t);
            trajectory.push(point);
            if config.early_stop && t < rounds {
                let avg_rates: Vec<f64> = positive_counts.iter().map(|&c| c as f64 / t as f64).collect();
                let avg_alpha: Vec<f64> = alpha_sum.iter().map(|s| s / t as f64).collect();
                if erm.max_penalty_from(&avg_rates, &avg_alpha, &budgets) <= budgets.nu {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let played = ledger.rounds;
    let classifier = RandomizedClassifier::new(
        history
            .into_iter()
            .map(|(hypothesis, count)| Component {
                hypothesis,
                weight: count as f64 / played as f64,
            })
            .collect(),
    )?;
    let avg_alpha: Vec<f64> = alpha_sum.iter().map(|s| s / played as f64).collect();
    let rates = classifier.rates_on(dataset)?;
    let certificate = build_certificate(&erm, &ledger, &rates, &avg_alpha, &budgets, n);
    Ok(SolveReport {
        train_error: empirical_error(&classifier, dataset)?,
        max_violation: max_violation(&erm, &rates, &avg_alpha),
        weighted_slack: erm.weighted_slack(&avg_alpha),
        classifier,
        pairs: erm.pairs().to_vec(),
        avg_alpha,
        rounds: played,
        params: config.params,
        budgets,
        oracle: oracle.name().to_string(),
        seed: config.seed,
        certificate,
        ledger: Some(ledger),
        trajectory,
        stopped_early,
        unconstrained: m == 0,
    })
}

fn max_violation(erm: &FairErm<'_>, rates: &[f64], alpha: &[f64]) -> f64 {
    erm.violations(rates, alpha)
        .into_iter()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .unwrap_or(0.0)
}

fn trajectory_point(
    erm: &FairErm<'_>,
    dataset: &Dataset,
    constrained: &[usize],
    positive_counts: &[u64],
    alpha_sum: &[f64],
    t: usize,
) -> TrajectoryPoint {
    let tf = t as f64;
    let rates: Vec<f64> = positive_counts.iter().map(|&c| c as f64 / tf).collect();
    let error = rates
        .iter()
        .zip(dataset.labels())
        .map(|(r, &y)| if y == 1 { 1.0 - r } else { *r })
        .sum::<f64>()
        / dataset.n() as f64;
    let pairs = erm.pairs();
    let max_disparity = constrained
        .iter()
        .map(|&k| {
            let (i, j) = pairs[k];
            (rates[i] - rates[j]).abs()
        })
        .fold(0.0, f64::max);
    let avg_alpha: Vec<f64> = alpha_sum.iter().map(|s| s / tf).collect();
    TrajectoryPoint {
        iteration: t,
        error,
        max_disparity,
        max_violation: max_violation(erm, &rates, &avg_alpha),
    }
}

fn build_certificate(
    erm: &FairErm<'_>,
    ledger: &DualLedger,
    rates: &[f64],
    avg_alpha: &[f64],
    budgets: &GuaranteeBudgets,
    n: usize,
) -> Certificate {
    let (lambda_regret, tau_regret) = realized_regret(ledger, budgets);
    let t = ledger.rounds as f64;
    Certificate {
        lambda_regret,
        tau_regret,
        lambda_regret_bound: 2.0 * budgets.c_lambda * (t * (n as f64).ln()).sqrt(),
        tau_regret_bound: budgets.c_tau * t.sqrt(),
        xi_psi: (lambda_regret + tau_regret) / t,
        penalty: erm.max_penalty_from(rates, avg_alpha, budgets),
    }
}

/// Best fixed dual vertex in hindsight minus the realized dual payoff, for
/// `λ` and `τ` separately. The payoff is linear in the dual variables, so
/// the best fixed play is a vertex: all of `C_λ` on the pair with the
/// largest positive cumulative violation (or nothing), and `τ ∈ {0, C_τ}`.
pub fn realized_regret(ledger: &DualLedger, budgets: &GuaranteeBudgets) -> (f64, f64) {
    let best_lambda = budgets.c_lambda
        * ledger
            .cumulative_violation
            .iter()
            .copied()
            .fold(0.0f64, f64::max);
    let best_tau = budgets.c_tau * ledger.cumulative_slack_excess.max(0.0);
    (best_lambda - ledger.lambda_payoff, best_tau - ledger.tau_payoff)
}

/// Recomputes the certificate from a report and its inputs. The hindsight
/// best dual is taken from [`FairErm::best_response_dual_from`] on the
/// averaged play, since `Σ_t ζ^t = T ζ(D̄, ᾱ)`.
pub fn certify(
    report: &SolveReport,
    dataset: &Dataset,
    constraints: &ConstraintSet,
    params: &FairnessParams,
    budgets: &GuaranteeBudgets,
) -> Result<Certificate> {
    let ledger = report.ledger.as_ref().ok_or(Error::MissingTrajectory)?;
    let erm = FairErm::new(dataset, constraints, *params)?;
    if erm.pair_count() != report.avg_alpha.len() {
        return Err(Error::DimensionMismatch {
            expected: erm.pair_count(),
            actual: report.avg_alpha.len(),
        });
    }
    let rates = report.classifier.rates_on(dataset)?;
    let best = erm.best_response_dual_from(&rates, &report.avg_alpha, budgets)?;
    let t = ledger.rounds as f64;
    let best_lambda = t * erm.lambda_part(&rates, &report.avg_alpha, &best.lambda);
    let best_tau = t * erm.tau_part(&report.avg_alpha, best.tau);
    let lambda_regret = best_lambda - ledger.lambda_payoff;
    let tau_regret = best_tau - ledger.tau_payoff;
    Ok(Certificate {
        lambda_regret,
        tau_regret,
        lambda_regret_bound: 2.0 * budgets.c_lambda * (t * (dataset.n() as f64).ln()).sqrt(),
        tau_regret_bound: budgets.c_tau * t.sqrt(),
        xi_psi: (lambda_regret + tau_regret) / t,
        penalty: erm.max_penalty_from(&rates, &report.avg_alpha, budgets),
    })
}

/// One row of a Pareto sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub gamma: f64,
    pub eta: f64,
    pub error: f64,
    pub max_violation: f64,
    pub weighted_slack: f64,
    /// Mean γ-fairness loss over `A`; 0 when `A` is empty.
    pub fairness_loss: f64,
}

impl CurveRow {
    pub const CSV_HEADER: &'static str = "gamma,eta,error,max_violation,weighted_slack,fairness_loss";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.gamma, self.eta, self.error, self.max_violation, self.weighted_slack, self.fairness_loss
        )
    }

    pub fn from_report(report: &SolveReport, dataset: &Dataset, constraints: &ConstraintSet) -> Result<Self> {
        let gamma = report.params.gamma;
        let fairness_loss = if constraints.pair_set().is_empty() {
            0.0
        } else {
            fairness_loss_on_constraints(&report.classifier, dataset, constraints, gamma)?.mean
        };
        Ok(Self {
            gamma,
            eta: report.params.eta,
            error: report.train_error,
            max_violation: report.max_violation,
            weighted_slack: report.weighted_slack,
            fairness_loss,
        })
    }
}

/// A sweep grid point and its outcome; failures do not stop the sweep.
#[derive(Debug)]
pub struct SweepPoint {
    pub gamma: f64,
    pub eta: f64,
    pub outcome: Result<(CurveRow, SolveReport)>,
}

/// Solves every `(γ, η)` in the grid product concurrently. Results come back
/// in grid order (γ outer, η inner).
pub fn pareto_sweep(
    dataset: &Dataset,
    constraints: &ConstraintSet,
    base: &SolverConfig,
    gamma_grid: &[f64],
    eta_grid: &[f64],
    oracle: &dyn CscOracle,
) -> Result<Vec<SweepPoint>> {
    if gamma_grid.is_empty() || eta_grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grids must be non-empty".into()));
    }
    for &v in gamma_grid.iter().chain(eta_grid) {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("grid value {v} outside [0, 1]")));
        }
    }
    let grid: Vec<(f64, f64)> = gamma_grid
        .iter()
        .flat_map(|&g| eta_grid.iter().map(move |&e| (g, e)))
        .collect();
    Ok(grid
        .into_par_iter()
        .map(|(gamma, eta)| {
            let mut config = *base;
            config.params = FairnessParams { gamma, eta };
            let outcome = solve(dataset, constraints, &config, oracle).and_then(|report| {
                let row = CurveRow::from_report(&report, dataset, constraints)?;
                Ok((row, report))
            });
            SweepPoint { gamma, eta, outcome }
        })
        .collect())
}

/// Error of the mixture that plays the unconstrained classifier with
/// probability `γ` and the best constant otherwise. Every pair disparity of
/// that mixture is at most `γ`, so it is feasible for any pair set.
pub fn mixture_baseline(gamma: f64, constant_error: f64, unconstrained_error: f64) -> f64 {
    (1.0 - gamma) * constant_error + gamma * unconstrained_error
}

/// Error of the better constant classifier: `min(base rate, 1 - base rate)`.
pub fn best_constant_error(dataset: &Dataset) -> f64 {
    let p = dataset.base_rate();
    p.min(1.0 - p)
}
