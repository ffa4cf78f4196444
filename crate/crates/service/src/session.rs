//! On-disk elicitation sessions.
//!
//! A session directory holds `session.json` (the [`SessionConfig`]), the
//! append-only `judgments.jsonl` log, and optionally `sweep.json` written by
//! the CLI after a Pareto sweep.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subfair_core::data::{canonical, constraints_from_log, parse_judgments, sample_pairs};
use subfair_core::{ConstraintSet, CurveRow, Dataset, JudgeResponse, PairSet};

use crate::ServiceError;

pub const CONFIG_FILE: &str = "session.json";
pub const LOG_FILE: &str = "judgments.jsonl";
pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    /// Dataset CSV; relative paths resolve against the session directory.
    pub dataset: PathBuf,
    pub label_column: String,
    /// Size of the session's pair pool.
    pub pool_pairs: usize,
    /// Pairs presented to each judge, drawn from the pool.
    pub pairs_per_judge: usize,
    pub seed: u64,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.session_id.is_empty()
            || !self
                .session_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(ServiceError::BadRequest(format!(
                "session id {:?} must be non-empty [A-Za-z0-9_-]",
                self.session_id
            )));
        }
        if self.pairs_per_judge == 0 || self.pairs_per_judge > self.pool_pairs {
            return Err(ServiceError::BadRequest(format!(
                "pairs_per_judge {} must be in 1..={}",
                self.pairs_per_judge, self.pool_pairs
            )));
        }
        Ok(())
    }
}

/// What the CLI leaves behind after sweeping a session's log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Digest of the constraints the sweep consumed; see [`constraint_digest`].
    pub constraints_digest: String,
    pub rows: Vec<CurveRow>,
}

/// SHA-256 of the canonical JSON form of a constraint set, hex encoded.
pub fn constraint_digest(constraints: &ConstraintSet) -> String {
    let json = serde_json::to_vec(&constraints.to_file()).expect("constraint file serializes");
    hex(&Sha256::digest(&json))
}

pub fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write as _;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Creates `root/<id>/session.json`; refuses to overwrite an existing one.
pub fn create_session(root: &Path, config: &SessionConfig) -> Result<PathBuf, ServiceError> {
    config.validate()?;
    let dir = root.join(&config.session_id);
    std::fs::create_dir_all(&dir).map_err(|e| ServiceError::io(&dir, e))?;
    let path = dir.join(CONFIG_FILE);
    let mut file = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
        .map_err(|e| ServiceError::io(&path, e))?;
    let body = serde_json::to_vec_pretty(config).expect("session config serializes");
    file.write_all(&body).map_err(|e| ServiceError::io(&path, e))?;
    file.sync_all().map_err(|e| ServiceError::io(&path, e))?;
    Ok(dir)
}

pub struct Session {
    pub config: SessionConfig,
    pub dir: PathBuf,
    pub dataset: Dataset,
    pub pool: Vec<(usize, usize)>,
    log: File,
    answered: HashSet<(String, (usize, usize))>,
    responses: Vec<JudgeResponse>,
}

impl Session {
    /// Loads the config, the dataset and the existing log.
    pub fn open(dir: &Path) -> Result<Self, ServiceError> {
        let config_path = dir.join(CONFIG_FILE);
        let raw = std::fs::read(&config_path).map_err(|e| ServiceError::io(&config_path, e))?;
        let config: SessionConfig = serde_json::from_slice(&raw)
            .map_err(|e| ServiceError::Internal(format!("{}: {e}", config_path.display())))?;
        config.validate()?;
        let dataset_path = if config.dataset.is_absolute() {
            config.dataset.clone()
        } else {
            dir.join(&config.dataset)
        };
        let dataset = subfair_core::load_dataset(&dataset_path, &config.label_column)?;
        let pool: Vec<(usize, usize)> = sample_pairs(dataset.n(), config.pool_pairs, config.seed)?
            .canonical_pairs()
            .collect();

        let log_path = dir.join(LOG_FILE);
        let responses = match std::fs::read_to_string(&log_path) {
            Ok(text) => parse_judgments(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(ServiceError::io(&log_path, e)),
        };
        let answered = responses
            .iter()
            .map(|r| (r.judge_id.clone(), canonical(r.i, r.j)))
            .collect();
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| ServiceError::io(&log_path, e))?;
        Ok(Self {
            config,
            dir: dir.to_path_buf(),
            dataset,
            pool,
            log,
            answered,
            responses,
        })
    }

    /// The judge's presented pairs: a permutation of the pool seeded by the
    /// session seed and the judge id, truncated to `pairs_per_judge`.
    pub fn assignment(&self, judge_id: &str) -> Vec<(usize, usize)> {
        let digest = Sha256::digest(judge_id.as_bytes());
        let mut judge_seed = [0u8; 8];
        judge_seed.copy_from_slice(&digest[..8]);
        let seed = self.config.seed ^ u64::from_le_bytes(judge_seed);
        let mut pairs = self.pool.clone();
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        pairs.truncate(self.config.pairs_per_judge);
        pairs
    }

    pub fn responses(&self) -> &[JudgeResponse] {
        &self.responses
    }

    /// Validates and durably appends one response.
    pub fn record(&mut self, response: JudgeResponse) -> Result<usize, ServiceError> {
        if response.judge_id.is_empty() {
            return Err(ServiceError::BadRequest("judge_id must be non-empty".into()));
        }
        let key = canonical(response.i, response.j);
        if !self.assignment(&response.judge_id).contains(&key) {
            return Err(ServiceError::NotPresented {
                i: response.i,
                j: response.j,
            });
        }
        if self.answered.contains(&(response.judge_id.clone(), key)) {
            return Err(ServiceError::Duplicate {
                i: response.i,
                j: response.j,
            });
        }
        let mut line = serde_json::to_vec(&response).expect("response serializes");
        line.push(b'\n');
        let path = self.dir.join(LOG_FILE);
        self.log.write_all(&line).map_err(|e| ServiceError::io(&path, e))?;
        self.log.sync_data().map_err(|e| ServiceError::io(&path, e))?;
        self.answered.insert((response.judge_id.clone(), key));
        self.responses.push(response);
        Ok(self.responses.len())
    }

    /// Constraints as the CLI would rebuild them from the log.
    pub fn constraints(&self) -> Result<ConstraintSet, ServiceError> {
        Ok(constraints_from_log(&self.responses)?)
    }

    /// Number of "same" answers per judge.
    pub fn judge_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.responses {
            let c = counts.entry(r.judge_id.clone()).or_insert(0);
            if r.same {
                *c += 1;
            }
        }
        counts
    }

    pub fn sweep(&self) -> Result<Option<SweepRecord>, ServiceError> {
        let path = self.dir.join(SWEEP_FILE);
        match std::fs::read(&path) {
            Ok(raw) => serde_json::from_slice(&raw)
                .map(Some)
                .map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ServiceError::io(&path, e)),
        }
    }

    pub fn pool_set(&self) -> PairSet {
        PairSet::from_pairs(self.pool.iter().copied()).expect("pool pairs are valid")
    }
}
