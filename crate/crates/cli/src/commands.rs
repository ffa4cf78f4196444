use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use subfair_core::data::constraints_from_log;
use subfair_core::metrics::{error_bound, fairness_generalization_bound, pearson};
use subfair_core::{
    load_dataset, pareto_sweep, sample_pairs, simulate_judge, solve, synthetic_dataset, BoundInputs,
    ConstraintSet, CurveRow, Dataset, JudgeResponse, SolveReport, SyntheticJudgeSpec,
};
use subfair_service::session::{CONFIG_FILE, LOG_FILE, SWEEP_FILE};
use subfair_service::{constraint_digest, SessionConfig, SweepRecord};

use crate::config::{Overrides, RunConfig};
use crate::manifest::{read_json, write_json, RunManifest, MANIFEST_FILE};
use crate::DataArgs;

struct Inputs {
    dataset: Dataset,
    dataset_path: PathBuf,
    judgments_path: Option<PathBuf>,
    responses: Vec<JudgeResponse>,
    session: Option<PathBuf>,
}

impl Inputs {
    fn load(args: &DataArgs) -> Result<Self> {
        let (dataset_path, label, judgments_path) = match &args.session {
            Some(dir) => {
                let config: SessionConfig = read_json(&dir.join(CONFIG_FILE))?;
                let dataset = if config.dataset.is_absolute() {
                    config.dataset.clone()
                } else {
                    dir.join(&config.dataset)
                };
                let log = dir.join(LOG_FILE);
                (dataset, config.label_column, log.exists().then_some(log))
            }
            None => (
                args.dataset.clone().expect("clap requires --dataset without --session"),
                args.label.clone(),
                args.judgments.clone(),
            ),
        };
        let dataset = load_dataset(&dataset_path, &label).with_context(|| format!("loading {}", dataset_path.display()))?;
        let responses = match &judgments_path {
            Some(p) => read_judgments(p)?,
            None => Vec::new(),
        };
        Ok(Self {
            dataset,
            dataset_path,
            judgments_path,
            responses,
            session: args.session.clone(),
        })
    }

    fn constraints(&self) -> Result<ConstraintSet> {
        if self.responses.is_empty() {
            tracing::warn!("no judgments supplied; solving unconstrained ERM");
        }
        let constraints = constraints_from_log(&self.responses).context("aggregating judgments")?;
        if let Some(max) = constraints.pair_set().max_index() {
            ensure!(
                max < self.dataset.n(),
                "judgment references row {max} but the dataset has {} rows",
                self.dataset.n()
            );
        }
        Ok(constraints)
    }

    fn record(&self, manifest: &mut RunManifest) -> Result<()> {
        manifest.input("dataset", &self.dataset_path)?;
        if let Some(p) = &self.judgments_path {
            manifest.input("judgments", p)?;
        }
        Ok(())
    }
}

/// Judgments with `path:line` context on parse failures.
fn read_judgments(path: &Path) -> Result<Vec<JudgeResponse>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l).with_context(|| format!("{}:{}: malformed judgment", path.display(), k + 1))
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn trajectory_csv(report: &SolveReport) -> String {
    let mut out = String::from("iteration,error,max_disparity,max_violation\n");
    for p in &report.trajectory {
        let _ = writeln!(out, "{},{},{},{}", p.iteration, p.error, p.max_disparity, p.max_violation);
    }
    out
}

pub fn train(data: &DataArgs, overrides: &Overrides, out: &Path) -> Result<()> {
    let cfg = overrides.resolve()?;
    let inputs = Inputs::load(data)?;
    let constraints = inputs.constraints()?;
    let oracle = cfg.oracle.oracle();
    let report = solve(&inputs.dataset, &constraints, &cfg.solver_config()?, oracle.as_ref())?;

    create_dir(out)?;
    let mut manifest = RunManifest::new("train", &cfg);
    inputs.record(&mut manifest)?;
    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;
    manifest.output("report", &report_path)?;
    let constraints_path = out.join("constraints.json");
    write_json(&constraints_path, &constraints.to_file())?;
    manifest.output("constraints", &constraints_path)?;
    let trajectory_path = out.join("trajectory.csv");
    write_text(&trajectory_path, &trajectory_csv(&report))?;
    manifest.output("trajectory", &trajectory_path)?;
    manifest.write(&out.join(MANIFEST_FILE))?;

    println!(
        "rounds={} error={:.6} max_violation={:.6} weighted_slack={:.6} pairs={} unconstrained={}",
        report.rounds,
        report.train_error,
        report.max_violation,
        report.weighted_slack,
        constraints.constrained_len(),
        report.unconstrained
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRecord {
    gamma: f64,
    eta: f64,
    row: Option<CurveRow>,
    rounds: Option<usize>,
    error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JudgeRow {
    judge_id: String,
    same_count: usize,
    answered: usize,
    error: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PerJudgeSummary {
    gamma: f64,
    eta: f64,
    correlation: Option<f64>,
    judges: Vec<JudgeRow>,
}

pub fn sweep(data: &DataArgs, overrides: &Overrides, out: &Path, jobs: Option<usize>, per_judge: bool) -> Result<()> {
    let cfg = overrides.resolve()?;
    let inputs = Inputs::load(data)?;
    let constraints = inputs.constraints()?;
    let base = cfg.solver_config()?;
    let oracle = cfg.oracle.oracle();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let points = pool.install(|| pareto_sweep(&inputs.dataset, &constraints, &base, &cfg.gammas, &cfg.etas, oracle.as_ref()))?;

    create_dir(out)?;
    let points_dir = out.join("points");
    create_dir(&points_dir)?;
    let mut manifest = RunManifest::new("sweep", &cfg);
    inputs.record(&mut manifest)?;

    let mut csv = format!("{}\n", CurveRow::CSV_HEADER);
    let mut rows = Vec::new();
    let mut failures = 0;
    for (k, point) in points.into_iter().enumerate() {
        let record = match point.outcome {
            Ok((row, report)) => {
                csv.push_str(&row.to_csv());
                csv.push('\n');
                rows.push(row);
                PointRecord {
                    gamma: point.gamma,
                    eta: point.eta,
                    row: Some(row),
                    rounds: Some(report.rounds),
                    error: None,
                }
            }
            Err(e) => {
                failures += 1;
                eprintln!("sweep point gamma={} eta={} failed: {e}", point.gamma, point.eta);
                PointRecord {
                    gamma: point.gamma,
                    eta: point.eta,
                    row: None,
                    rounds: None,
                    error: Some(e.to_string()),
                }
            }
        };
        let path = points_dir.join(format!("point-{k:03}.json"));
        write_json(&path, &record)?;
        manifest.output("point", &path)?;
    }
    let curve_path = out.join("curve.csv");
    write_text(&curve_path, &csv)?;
    manifest.output("curve", &curve_path)?;
    print!("{csv}");

    if per_judge {
        let summary = per_judge_errors(&inputs, &cfg)?;
        let path = out.join("judges.json");
        write_json(&path, &summary)?;
        manifest.output("per-judge", &path)?;
        match summary.correlation {
            Some(r) => println!(
                "per-judge correlation(same count, error at gamma={}) = {r:.4} over {} judges",
                summary.gamma,
                summary.judges.len()
            ),
            None => println!("per-judge correlation undefined (constant counts or errors)"),
        }
    }

    if let Some(dir) = &inputs.session {
        let record = SweepRecord {
            constraints_digest: constraint_digest(&constraints),
            rows,
        };
        let path = dir.join(SWEEP_FILE);
        write_json(&path, &record)?;
        manifest.output("session-sweep", &path)?;
    }
    manifest.write(&out.join(MANIFEST_FILE))?;
    if failures > 0 {
        bail!("{failures} sweep point(s) failed; see {}", points_dir.display());
    }
    Ok(())
}

fn per_judge_errors(inputs: &Inputs, cfg: &RunConfig) -> Result<PerJudgeSummary> {
    let mut by_judge: BTreeMap<&str, Vec<JudgeResponse>> = BTreeMap::new();
    for r in &inputs.responses {
        by_judge.entry(&r.judge_id).or_default().push(r.clone());
    }
    let config = cfg.solver_config()?;
    let oracle = cfg.oracle.oracle();
    let judges = by_judge
        .into_par_iter()
        .map(|(judge, responses)| {
            let constraints = constraints_from_log(&responses)?;
            let report = solve(&inputs.dataset, &constraints, &config, oracle.as_ref())?;
            Ok(JudgeRow {
                judge_id: judge.to_string(),
                same_count: responses.iter().filter(|r| r.same).count(),
                answered: responses.len(),
                error: report.train_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<f64> = judges.iter().map(|j| j.same_count as f64).collect();
    let errors: Vec<f64> = judges.iter().map(|j| j.error).collect();
    Ok(PerJudgeSummary {
        gamma: cfg.gamma,
        eta: cfg.eta,
        correlation: pearson(&counts, &errors),
        judges,
    })
}

#[derive(Debug, Serialize)]
struct BoundsReport {
    n: usize,
    m: usize,
    vc_dim: usize,
    epsilon: f64,
    delta: f64,
    error_bound: f64,
    error_bound_vacuous: bool,
    fairness_bound: f64,
    fairness_bound_log: f64,
    fairness_bound_vacuous: bool,
    k: f64,
    k_prime: f64,
}

pub fn bounds(n: usize, m: usize, vc_dim: usize, epsilon: f64, delta: f64, json: bool) -> Result<()> {
    let inputs = BoundInputs {
        n,
        m,
        vc_dim,
        epsilon,
        delta,
    };
    inputs.validate()?;
    let err = error_bound(vc_dim, n, delta)?;
    let fair = fairness_generalization_bound(&inputs)?;
    let report = BoundsReport {
        n,
        m,
        vc_dim,
        epsilon,
        delta,
        error_bound: err,
        error_bound_vacuous: err >= 1.0,
        fairness_bound: fair.value,
        fairness_bound_log: fair.log_value,
        fairness_bound_vacuous: fair.vacuous,
        k: fair.k,
        k_prime: fair.k_prime,
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    let flag = |v: bool| if v { "vacuous" } else { "non-vacuous" };
    println!("error_bound      = {:.6e} ({})", report.error_bound, flag(report.error_bound_vacuous));
    println!(
        "fairness_bound   = {:.6e} (ln = {:.6e}, {})",
        report.fairness_bound,
        report.fairness_bound_log,
        flag(report.fairness_bound_vacuous)
    );
    println!("k                = {:.6e}", report.k);
    println!("k_prime          = {:.6e}", report.k_prime);
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Many(Vec<SyntheticJudgeSpec>),
    One(SyntheticJudgeSpec),
}

/// Each judge sees its own `pairs` pairs, drawn with seed `seed + k` for the
/// k-th spec.
pub fn simulate(dataset_path: &Path, label: &str, spec_path: &Path, pairs: usize, seed: u64, out: &Path) -> Result<()> {
    let dataset = load_dataset(dataset_path, label).with_context(|| format!("loading {}", dataset_path.display()))?;
    let specs = match read_json::<SpecFile>(spec_path)? {
        SpecFile::Many(v) => v,
        SpecFile::One(s) => vec![s],
    };
    ensure!(!specs.is_empty(), "{}: no judge specs", spec_path.display());
    let mut text = String::new();
    for (k, spec) in specs.iter().enumerate() {
        let id = spec.id.clone().unwrap_or_else(|| format!("judge-{:02}", k + 1));
        let pair_set = sample_pairs(dataset.n(), pairs, seed.wrapping_add(k as u64))?;
        let responses =
            simulate_judge(&dataset, &pair_set, spec, &id).with_context(|| format!("judge spec {} ({id})", k + 1))?;
        for r in responses {
            text.push_str(&serde_json::to_string(&r)?);
            text.push('\n');
        }
    }
    write_text(out, &text)?;

    let cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    let mut manifest = RunManifest::new("simulate", &cfg);
    manifest.input("dataset", dataset_path)?;
    manifest.input("judge-spec", spec_path)?;
    manifest.output("judgments", out)?;
    manifest.write(&sibling(out, "manifest.json"))?;
    println!("wrote {} responses from {} judges to {}", text.lines().count(), specs.len(), out.display());
    Ok(())
}

/// `dir/name.ext` → `dir/name.ext.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn generate(rows: usize, dims: usize, seed: u64, out: &Path) -> Result<()> {
    let dataset = synthetic_dataset(rows, dims, seed)?;
    let mut text = dataset.feature_names().join(",");
    text.push_str(",label\n");
    for i in 0..dataset.n() {
        for v in dataset.row(i) {
            let _ = write!(text, "{v},");
        }
        let _ = writeln!(text, "{}", dataset.label(i));
    }
    write_text(out, &text)?;
    println!("wrote {rows} rows x {dims} features to {}", out.display());
    Ok(())
}

pub fn serve(root: PathBuf, session_config: Option<&Path>, addr: SocketAddr, ui: Option<PathBuf>) -> Result<()> {
    create_dir(&root)?;
    if let Some(path) = session_config {
        let mut config: SessionConfig = read_json(path)?;
        if config.dataset.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            config.dataset = std::fs::canonicalize(base.join(&config.dataset))
                .with_context(|| format!("resolving dataset {}", config.dataset.display()))?;
        }
        let existing = root.join(&config.session_id).join(CONFIG_FILE);
        if existing.exists() {
            let current: SessionConfig = read_json(&existing)?;
            ensure!(
                current == config,
                "session `{}` already exists with a different config",
                config.session_id
            );
        } else {
            subfair_service::create_session(&root, &config)?;
        }
        // Fail before binding if the dataset or log is unusable.
        subfair_service::Session::open(&root.join(&config.session_id))?;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting runtime")?;
    runtime
        .block_on(subfair_service::serve(addr, root, ui))
        .with_context(|| format!("serving on {addr}"))
}

pub fn report(dir: &Path) -> Result<()> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
    println!("command: {} (version {}, seed {})", manifest.command, manifest.version, manifest.seed);
    for f in manifest.inputs.iter().chain(&manifest.outputs) {
        println!("  {:<14} {} {}", f.role, &f.sha256[..12], f.path.display());
    }
    let report_path = dir.join("report.json");
    if report_path.exists() {
        let report: SolveReport = read_json(&report_path)?;
        println!(
            "gamma={} eta={} rounds={} error={:.6} max_violation={:.6} weighted_slack={:.6}",
            report.params.gamma,
            report.params.eta,
            report.rounds,
            report.train_error,
            report.max_violation,
            report.weighted_slack
        );
        let c = report.certificate;
        println!(
            "regret: lambda {:.4e} / bound {:.4e}, tau {:.4e} / bound {:.4e}, penalty {:.4e}",
            c.lambda_regret, c.lambda_regret_bound, c.tau_regret, c.tau_regret_bound, c.penalty
        );
        if let Some(last) = report.trajectory.last() {
            println!(
                "final trajectory point: iteration {} error {:.6} max_disparity {:.6}",
                last.iteration, last.error, last.max_disparity
            );
        }
    }
    let curve_path = dir.join("curve.csv");
    if curve_path.exists() {
        print!("{}", std::fs::read_to_string(&curve_path)?);
    }
    let mismatches = manifest.mismatches();
    for (f, now) in &mismatches {
        eprintln!("digest mismatch: {} recorded {} now {}", f.path.display(), f.sha256, now);
    }
    ensure!(mismatches.is_empty(), "{} file(s) no longer match the manifest", mismatches.len());
    println!("manifest verified");
    Ok(())
}
