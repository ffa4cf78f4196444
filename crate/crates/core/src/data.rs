//! Datasets, elicited pair sets, judge responses and their aggregation into
//! constraint weights, plus synthetic judges that stand in for human subjects.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labeled sample: `n` feature vectors of width `d` with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        let n = rows.len();
        let d = feature_names.len();
        if n == 0 {
            return Err(Error::InvalidDataset("no rows".into()));
        }
        if d == 0 {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        if labels.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} rows",
                labels.len(),
                n
            )));
        }
        if let Some(pos) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidLabel {
                line: pos + 1,
                value: labels[pos].to_string(),
            });
        }
        let mut features = Vec::with_capacity(n * d);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidDataset(format!(
                    "row {r} has {} features, expected {d}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("row {r} has a non-finite feature")));
            }
            features.extend(row);
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.d())
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Fraction of positive labels.
    pub fn base_rate(&self) -> f64 {
        self.labels.iter().map(|&y| y as f64).sum::<f64>() / self.n() as f64
    }
}

/// Reads a comma-separated table with a header row. Every column other than
/// `label_column` must be numeric; categorical data has to be encoded first.
pub fn load_dataset(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = line + 1;
        let raw_label = record.get(label_idx).unwrap_or("");
        let label = match raw_label.parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => {
                return Err(Error::InvalidLabel {
                    line,
                    value: raw_label.to_string(),
                })
            }
        };
        let mut row = Vec::with_capacity(feature_names.len());
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                continue;
            }
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericFeature {
                    line,
                    column: headers.get(c).unwrap_or("?").to_string(),
                    value: cell.to_string(),
                })?;
            row.push(value);
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::EmptyTable(path.to_path_buf()));
    }
    Dataset::new(rows, labels, feature_names)
}

/// Gaussian features with labels from a noisy linear rule. Used for tests,
/// benchmarks and the synthetic elicitation experiments.
pub fn synthetic_dataset(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction: Vec<f64> = (0..d).map(|k| 1.0 / (k as f64 + 1.0)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let noise: f64 = rng.sample(StandardNormal);
        let score: f64 = row.iter().zip(&direction).map(|(x, w)| x * w).sum::<f64>() + 0.5 * noise;
        labels.push(u8::from(score > 0.2));
        rows.push(row);
    }
    let names = (0..d).map(|k| format!("x{k}")).collect();
    Dataset::new(rows, labels, names)
}

/// Orders an unordered pair as `(min, max)`.
pub fn canonical(i: usize, j: usize) -> (usize, usize) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

/// A symmetric set of index pairs. Stored canonically; iterated as ordered
/// pairs so that `(i, j)` is always followed by `(j, i)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct PairSet {
    pairs: BTreeSet<(usize, usize)>,
}

impl PairSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = Self::new();
        for (i, j) in pairs {
            set.insert(i, j)?;
        }
        Ok(set)
    }

    /// Inserts the unordered pair `{i, j}`; returns whether it was new.
    pub fn insert(&mut self, i: usize, j: usize) -> Result<bool> {
        if i == j {
            return Err(Error::InvalidConstraints(format!("self-pair ({i}, {i})")));
        }
        Ok(self.pairs.insert(canonical(i, j)))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i != j && self.pairs.contains(&canonical(i, j))
    }

    /// Number of unordered pairs.
    pub fn unordered_len(&self) -> usize {
        self.pairs.len()
    }

    /// Number of ordered pairs in the symmetric closure, `|A|`.
    pub fn ordered_len(&self) -> usize {
        2 * self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn canonical_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn ordered_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().flat_map(|&(i, j)| [(i, j), (j, i)])
    }

    pub fn max_index(&self) -> Option<usize> {
        self.pairs.iter().map(|&(_, j)| j).max()
    }
}

impl TryFrom<Vec<(usize, usize)>> for PairSet {
    type Error = Error;

    fn try_from(pairs: Vec<(usize, usize)>) -> Result<Self> {
        Self::from_pairs(pairs)
    }
}

impl From<PairSet> for Vec<(usize, usize)> {
    fn from(set: PairSet) -> Self {
        set.pairs.into_iter().collect()
    }
}

fn unrank_pair(mut rank: usize, n: usize) -> (usize, usize) {
    // Row i holds the pairs (i, i+1..n).
    let mut i = 0;
    loop {
        let row_len = n - 1 - i;
        if rank < row_len {
            return (i, i + 1 + rank);
        }
        rank -= row_len;
        i += 1;
    }
}

/// Draws `m` distinct unordered pairs over `0..n` uniformly without
/// replacement, in draw order.
pub fn sample_pair_sequence(n: usize, m: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let available = n.saturating_mul(n.saturating_sub(1)) / 2;
    if n < 2 || m == 0 || m > available {
        return Err(Error::TooManyPairs {
            requested: m,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, available, m)
        .into_iter()
        .map(|rank| unrank_pair(rank, n))
        .collect())
}

/// [`sample_pair_sequence`] collected into a symmetric [`PairSet`] with `2m`
/// ordered pairs.
pub fn sample_pairs(n: usize, m: usize, seed: u64) -> Result<PairSet> {
    PairSet::from_pairs(sample_pair_sequence(n, m, seed)?)
}

/// One judge's answer on one pair: `same` means "treat these two alike".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub judge_id: String,
    pub i: usize,
    pub j: usize,
    pub same: bool,
}

/// Aggregated elicitation result: the presented pairs and, for each, how many
/// judges asked for equal treatment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSet {
    pair_set: PairSet,
    same_counts: BTreeMap<(usize, usize), u32>,
    num_judges: u32,
}

impl ConstraintSet {
    /// A constraint set with no pairs at all.
    pub fn empty() -> Self {
        Self {
            pair_set: PairSet::new(),
            same_counts: BTreeMap::new(),
            num_judges: 1,
        }
    }

    pub fn pair_set(&self) -> &PairSet {
        &self.pair_set
    }

    pub fn num_judges(&self) -> u32 {
        self.num_judges
    }

    /// `ŵ_ij`: the fraction of judges that asked for equal treatment of `i`
    /// and `j`. Zero for pairs outside the pair set.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.same_counts
            .get(&canonical(i, j))
            .map_or(0.0, |&c| c as f64 / self.num_judges as f64)
    }

    /// Unordered pairs with strictly positive weight.
    pub fn constrained_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.same_counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&p, _)| p)
    }

    pub fn constrained_len(&self) -> usize {
        self.constrained_pairs().count()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_set.is_empty()
    }

    pub fn to_file(&self) -> ConstraintFile {
        ConstraintFile {
            num_judges: self.num_judges,
            pairs: self
                .pair_set
                .canonical_pairs()
                .map(|(i, j)| WeightedPair {
                    i,
                    j,
                    weight: self.weight(i, j),
                })
                .collect(),
        }
    }

    pub fn from_file(file: &ConstraintFile) -> Result<Self> {
        if file.num_judges == 0 {
            return Err(Error::InvalidConstraints("num_judges must be positive".into()));
        }
        let u = file.num_judges as f64;
        let mut pair_set = PairSet::new();
        let mut same_counts = BTreeMap::new();
        for p in &file.pairs {
            if !pair_set.insert(p.i, p.j)? {
                return Err(Error::InvalidConstraints(format!(
                    "pair ({}, {}) listed twice",
                    p.i, p.j
                )));
            }
            let scaled = p.weight * u;
            let count = scaled.round();
            if !(0.0..=u).contains(&count) || (scaled - count).abs() > 1e-9 {
                return Err(Error::InvalidConstraints(format!(
                    "weight {} of pair ({}, {}) is not a multiple of 1/{}",
                    p.weight, p.i, p.j, file.num_judges
                )));
            }
            same_counts.insert(canonical(p.i, p.j), count as u32);
        }
        Ok(Self {
            pair_set,
            same_counts,
            num_judges: file.num_judges,
        })
    }
}

/// On-disk form of a [`ConstraintSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub num_judges: u32,
    pub pairs: Vec<WeightedPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPair {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Aggregates judge responses into weights `ŵ_ij = (#judges answering same) /
/// num_judges`. "Different" answers contribute nothing.
pub fn build_constraints(
    responses: &[JudgeResponse],
    pair_set: &PairSet,
    num_judges: u32,
) -> Result<ConstraintSet> {
    if num_judges == 0 {
        return Err(Error::InvalidConstraints("num_judges must be positive".into()));
    }
    let mut seen = HashSet::new();
    let mut judges = HashSet::new();
    let mut same_counts: BTreeMap<(usize, usize), u32> =
        pair_set.canonical_pairs().map(|p| (p, 0)).collect();
    for r in responses {
        if !pair_set.contains(r.i, r.j) {
            return Err(Error::PairOutsideSet { i: r.i, j: r.j });
        }
        let key = canonical(r.i, r.j);
        if !seen.insert((r.judge_id.as_str(), key)) {
            return Err(Error::DuplicateResponse {
                judge: r.judge_id.clone(),
                i: r.i,
                j: r.j,
            });
        }
        judges.insert(r.judge_id.as_str());
        if r.same {
            *same_counts.get_mut(&key).expect("pair checked above") += 1;
        }
    }
    if judges.len() > num_judges as usize {
        return Err(Error::InvalidConstraints(format!(
            "{} distinct judges responded but num_judges is {num_judges}",
            judges.len()
        )));
    }
    Ok(ConstraintSet {
        pair_set: pair_set.clone(),
        same_counts,
        num_judges,
    })
}

/// Builds constraints from a log alone: the pair set is every pair that
/// received a response and the judge count is the number of distinct judges.
pub fn constraints_from_log(responses: &[JudgeResponse]) -> Result<ConstraintSet> {
    if responses.is_empty() {
        return Ok(ConstraintSet::empty());
    }
    let pair_set = PairSet::from_pairs(responses.iter().map(|r| (r.i, r.j)))?;
    let judges: HashSet<&str> = responses.iter().map(|r| r.judge_id.as_str()).collect();
    build_constraints(responses, &pair_set, judges.len() as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JudgeKind {
    /// Same iff the weighted L1 distance is within the threshold.
    MetricThreshold,
    /// Same iff the unweighted L1 distance over `features` is within the threshold.
    FeatureSubset,
    /// Ignores the records: every base answer is "different" and the flip
    /// probability alone decides how many pairs get constrained.
    RandomFlip,
}

/// Parameters of a simulated judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticJudgeSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub kind: JudgeKind,
    /// Per-feature weights for `metric-threshold`; all ones when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Feature indices for `feature-subset`.
    #[serde(default)]
    pub features: Option<Vec<usize>>,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default)]
    pub flip_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticJudgeSpec {
    pub fn metric_threshold(threshold: f64, flip_prob: f64, seed: u64) -> Self {
        Self {
            id: None,
            kind: JudgeKind::MetricThreshold,
            weights: None,
            features: None,
            threshold,
            flip_prob,
            seed,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidJudgeSpec(format!(
                "threshold {} must be non-negative",
                self.threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::InvalidJudgeSpec(format!(
                "flip probability {} outside [0, 1]",
                self.flip_prob
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: w.len(),
                });
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidJudgeSpec("weights must be finite and non-negative".into()));
            }
        }
        if self.kind == JudgeKind::FeatureSubset {
            match &self.features {
                Some(f) if !f.is_empty() => {
                    if let Some(&bad) = f.iter().find(|&&k| k >= d) {
                        return Err(Error::InvalidJudgeSpec(format!("feature index {bad} >= {d}")));
                    }
                }
                _ => return Err(Error::InvalidJudgeSpec("feature-subset needs `features`".into())),
            }
        }
        Ok(())
    }

    /// Distance the judge thresholds on; `None` for record-blind judges.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Option<f64> {
        match self.kind {
            JudgeKind::MetricThreshold => Some(match &self.weights {
                Some(w) => a.iter().zip(b).zip(w).map(|((x, y), w)| w * (x - y).abs()).sum(),
                None => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            }),
            JudgeKind::FeatureSubset => Some(
                self.features
                    .as_deref()
                    .unwrap_or_default()
                    .iter()
                    .map(|&k| (a[k] - b[k]).abs())
                    .sum(),
            ),
            JudgeKind::RandomFlip => None,
        }
    }
}

/// Answers every pair of `pair_set` (canonical order) as the specified judge
/// would. Deterministic given `spec.seed`.
pub fn simulate_judge(
    dataset: &Dataset,
    pair_set: &PairSet,
    spec: &SyntheticJudgeSpec,
    judge_id: &str,
) -> Result<Vec<JudgeResponse>> {
    spec.validate(dataset.d())?;
    if let Some(max) = pair_set.max_index() {
        if max >= dataset.n() {
            return Err(Error::IndexOutOfRange {
                index: max,
                n: dataset.n(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(pair_set
        .canonical_pairs()
        .map(|(i, j)| {
            let base = spec
                .distance(dataset.row(i), dataset.row(j))
                .is_some_and(|dist| dist <= spec.threshold);
            let flip = rng.random::<f64>() < spec.flip_prob;
            JudgeResponse {
                judge_id: judge_id.to_string(),
                i,
                j,
                same: base ^ flip,
            }
        })
        .collect())
}

/// Parses a judgments file: one JSON object per line; blank lines skipped.
pub fn parse_judgments(text: &str) -> Result<Vec<JudgeResponse>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn read_judgments(path: impl AsRef<Path>) -> Result<Vec<JudgeResponse>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_judgments(&text)
}
