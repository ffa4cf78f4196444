//! Base hypotheses, randomized classifiers (finite mixtures) and the
//! sparsification of a mixture into a small uniform one.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Something a hypothesis can be evaluated on.
#[derive(Debug, Clone, Copy)]
pub enum Point<'a> {
    /// A raw feature vector. Only linear hypotheses accept it.
    Features(&'a [f64]),
    /// Row `index` of a dataset.
    Row { dataset: &'a Dataset, index: usize },
}

impl<'a> Point<'a> {
    pub fn row(dataset: &'a Dataset, index: usize) -> Self {
        Point::Row { dataset, index }
    }
}

/// A deterministic binary classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum Hypothesis {
    /// Predicts 1 exactly when `weights · x + bias >= 0`.
    LinearThreshold { weights: Vec<f64>, bias: f64 },
    /// A fixed labeling of the rows of one dataset.
    Tabular { predictions: Vec<u8> },
}

impl Hypothesis {
    pub fn linear(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::InvalidClassifier("non-finite linear weights".into()));
        }
        Ok(Hypothesis::LinearThreshold { weights, bias })
    }

    pub fn tabular(predictions: Vec<u8>) -> Result<Self> {
        if predictions.iter().any(|&p| p > 1) {
            return Err(Error::InvalidClassifier("tabular predictions must be 0 or 1".into()));
        }
        Ok(Hypothesis::Tabular { predictions })
    }

    /// The tabular hypothesis predicting `value` on all `n` rows.
    pub fn constant(value: u8, n: usize) -> Self {
        Hypothesis::Tabular {
            predictions: vec![value.min(1); n],
        }
    }

    pub fn predict(&self, point: Point<'_>) -> Result<u8> {
        match (self, point) {
            (Hypothesis::LinearThreshold { weights, bias }, Point::Features(x)) => {
                linear_predict(weights, *bias, x)
            }
            (Hypothesis::LinearThreshold { weights, bias }, Point::Row { dataset, index }) => {
                check_index(index, dataset.n())?;
                linear_predict(weights, *bias, dataset.row(index))
            }
            (Hypothesis::Tabular { .. }, Point::Features(_)) => Err(Error::TabularNeedsIndex),
            (Hypothesis::Tabular { predictions }, Point::Row { dataset, index }) => {
                if predictions.len() != dataset.n() {
                    return Err(Error::DimensionMismatch {
                        expected: dataset.n(),
                        actual: predictions.len(),
                    });
                }
                check_index(index, dataset.n())?;
                Ok(predictions[index])
            }
        }
    }

    /// Predictions on every row of `dataset`.
    pub fn predictions_on(&self, dataset: &Dataset) -> Result<Vec<u8>> {
        match self {
            Hypothesis::LinearThreshold { weights, bias } => {
                if weights.len() != dataset.d() {
                    return Err(Error::DimensionMismatch {
                        expected: dataset.d(),
                        actual: weights.len(),
                    });
                }
                Ok(dataset
                    .rows()
                    .map(|x| linear_score(weights, *bias, x) >= 0.0)
                    .map(u8::from)
                    .collect())
            }
            Hypothesis::Tabular { predictions } => {
                if predictions.len() != dataset.n() {
                    return Err(Error::DimensionMismatch {
                        expected: dataset.n(),
                        actual: predictions.len(),
                    });
                }
                Ok(predictions.clone())
            }
        }
    }
}

fn check_index(index: usize, n: usize) -> Result<()> {
    if index >= n {
        Err(Error::IndexOutOfRange { index, n })
    } else {
        Ok(())
    }
}

fn linear_score(weights: &[f64], bias: f64, x: &[f64]) -> f64 {
    weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias
}

fn linear_predict(weights: &[f64], bias: f64, x: &[f64]) -> Result<u8> {
    if weights.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            actual: x.len(),
        });
    }
    Ok(u8::from(linear_score(weights, bias, x) >= 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub hypothesis: Hypothesis,
    pub weight: f64,
}

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// A probability distribution over finitely many hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct RandomizedClassifier {
    components: Vec<Component>,
}

#[derive(Serialize, Deserialize)]
struct MixtureRepr {
    components: Vec<Component>,
}

impl TryFrom<MixtureRepr> for RandomizedClassifier {
    type Error = Error;

    fn try_from(repr: MixtureRepr) -> Result<Self> {
        Self::new(repr.components)
    }
}

impl From<RandomizedClassifier> for MixtureRepr {
    fn from(c: RandomizedClassifier) -> Self {
        MixtureRepr {
            components: c.components,
        }
    }
}

impl RandomizedClassifier {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidClassifier("no components".into()));
        }
        if components.iter().any(|c| !(c.weight >= 0.0) || !c.weight.is_finite()) {
            return Err(Error::InvalidClassifier("weights must be finite and non-negative".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidClassifier(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn deterministic(h: Hypothesis) -> Self {
        Self {
            components: vec![Component {
                hypothesis: h,
                weight: 1.0,
            }],
        }
    }

    /// Equal weight on every listed hypothesis (duplicates kept).
    pub fn uniform(hypotheses: Vec<Hypothesis>) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::InvalidClassifier("no components".into()));
        }
        let w = 1.0 / hypotheses.len() as f64;
        Self::new(
            hypotheses
                .into_iter()
                .map(|hypothesis| Component { hypothesis, weight: w })
                .collect(),
        )
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `Pr_{h~D}[h(x) = 1]`.
    pub fn positive_rate(&self, point: Point<'_>) -> Result<f64> {
        let mut rate = 0.0;
        for c in &self.components {
            rate += c.weight * c.hypothesis.predict(point)? as f64;
        }
        Ok(rate)
    }

    /// `E_{h~D}[h(x) - h(x')]`.
    pub fn pair_disparity(&self, a: Point<'_>, b: Point<'_>) -> Result<f64> {
        Ok(self.positive_rate(a)? - self.positive_rate(b)?)
    }

    /// Positive rate on every row of `dataset`.
    pub fn rates_on(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let mut rates = vec![0.0; dataset.n()];
        for c in &self.components {
            let preds = c.hypothesis.predictions_on(dataset)?;
            for (r, p) in rates.iter_mut().zip(preds) {
                *r += c.weight * p as f64;
            }
        }
        Ok(rates)
    }

    /// Merges components that make identical predictions on `dataset`,
    /// keeping the first representative and summing weights.
    pub fn compact(&self, dataset: &Dataset) -> Result<Self> {
        let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut merged: Vec<Component> = Vec::new();
        for c in &self.components {
            let key = c.hypothesis.predictions_on(dataset)?;
            match index.get(&key) {
                Some(&k) => merged[k].weight += c.weight,
                None => {
                    index.insert(key, merged.len());
                    merged.push(c.clone());
                }
            }
        }
        Ok(Self { components: merged })
    }

    /// Draws one hypothesis index according to the mixture weights.
    fn sample_index(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                return k;
            }
        }
        // Rounding left u above the final cumulative sum.
        self.components
            .iter()
            .rposition(|c| c.weight > 0.0)
            .unwrap_or(self.components.len() - 1)
    }
}

/// Size of the uniform mixture that approximates any mixture on `n` points to
/// within `epsilon` on every pair: `⌈2 ln(2n²)/ε² + 1⌉`.
pub fn sparsify_size(n: usize, epsilon: f64) -> usize {
    let n = n as f64;
    (2.0 * (2.0 * n * n).ln() / (epsilon * epsilon) + 1.0).ceil() as usize
}

pub const DEFAULT_SPARSIFY_RETRIES: usize = 100;

#[derive(Debug, Clone)]
pub struct Sparsified {
    pub classifier: RandomizedClassifier,
    pub k: usize,
    /// Largest `|disparity_D - disparity_sparse|` over all ordered row pairs.
    pub deviation: f64,
    pub attempts: usize,
}

/// Largest pairwise-disparity gap between two rate vectors over all ordered
/// pairs: `max_{i,j} |(a_i - a_j) - (b_i - b_j)|`.
pub fn max_disparity_gap(a: &[f64], b: &[f64]) -> f64 {
    let (lo, hi) = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Replaces `d` with a uniform mixture of `k = sparsify_size(n, ε)` draws from
/// it, retrying with fresh draws until every pairwise disparity on `dataset`
/// is preserved to within `epsilon`.
pub fn sparsify(
    d: &RandomizedClassifier,
    dataset: &Dataset,
    epsilon: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<Sparsified> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    let k = sparsify_size(dataset.n(), epsilon);
    let table: Vec<Vec<u8>> = d
        .components()
        .iter()
        .map(|c| c.hypothesis.predictions_on(dataset))
        .collect::<Result<_>>()?;
    let target = d.rates_on(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for attempt in 1..=max_attempts {
        let draws: Vec<usize> = (0..k).map(|_| d.sample_index(&mut rng)).collect();
        let mut counts = vec![0usize; dataset.n()];
        for &h in &draws {
            for (c, &p) in counts.iter_mut().zip(&table[h]) {
                *c += p as usize;
            }
        }
        let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / k as f64).collect();
        let deviation = max_disparity_gap(&target, &rates);
        best = best.min(deviation);
        if deviation <= epsilon {
            let classifier = RandomizedClassifier::uniform(
                draws
                    .into_iter()
                    .map(|h| d.components()[h].hypothesis.clone())
                    .collect(),
            )?;
            return Ok(Sparsified {
                classifier,
                k,
                deviation,
                attempts: attempt,
            });
        }
    }
    Err(Error::SparsifyExhausted {
        attempts: max_attempts,
        best_deviation: best,
    })
}
