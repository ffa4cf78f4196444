//! Shared fixtures for the criterion benches in `benches/`.

use subfair_core::{
    build_constraints, sample_pairs, simulate_judge, synthetic_dataset, ConstraintSet, Dataset, SyntheticJudgeSpec,
};

/// A synthetic dataset with one threshold judge over `m` sampled pairs.
pub struct Workload {
    pub dataset: Dataset,
    pub constraints: ConstraintSet,
}

impl Workload {
    pub fn new(n: usize, d: usize, m: usize, seed: u64) -> Self {
        let dataset = synthetic_dataset(n, d, seed).expect("valid synthetic sizes");
        let pairs = sample_pairs(n, m, seed + 1).expect("enough pairs");
        let judge = SyntheticJudgeSpec::metric_threshold(d as f64, 0.1, seed + 2);
        let responses = simulate_judge(&dataset, &pairs, &judge, "bench").expect("valid judge");
        let constraints = build_constraints(&responses, &pairs, 1).expect("consistent responses");
        Self { dataset, constraints }
    }
}
