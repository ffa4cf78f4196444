//! Fairness-constrained classification from elicited pairwise judgments.
//!
//! Judges label pairs of records as deserving the same or different
//! treatment; the aggregated answers become per-pair constraint weights.
//! The learner then minimizes error subject to bounded pairwise disparity by
//! running no-regret dynamics over a Lagrangian, reducing each primal step to
//! cost-sensitive classification.

pub mod csc;
pub mod data;
pub mod error;
pub mod hypothesis;
pub mod lagrangian;
pub mod metrics;
pub mod solver;

pub use csc::{CscInstance, CscOracle, ExactOracle, HeuristicOracle, HypothesisPool, LabelingOracle};
pub use data::{
    build_constraints, load_dataset, sample_pairs, simulate_judge, synthetic_dataset,
    ConstraintSet, Dataset, JudgeKind, JudgeResponse, PairSet, SyntheticJudgeSpec,
};
pub use error::{Error, Result};
pub use hypothesis::{Component, Hypothesis, Point, RandomizedClassifier};
pub use lagrangian::{DualVars, FairErm, FairnessParams, GuaranteeBudgets, PrimalVars};
pub use metrics::{empirical_error, BoundInputs, FairnessLossReport, GeneralizationBound};
pub use solver::{
    certify, compute_iterations, pareto_sweep, solve, solve_observed, Certificate, CurveRow,
    SolveReport, SolverConfig, SweepPoint,
};
