//! Flat `key = value` run configuration. Precedence: flags > file > defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use subfair_core::{FairnessParams, GuaranteeBudgets, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// Weighted ridge regression fit to the cost difference.
    Heuristic,
    /// Exact minimizer over every labeling of the training set.
    Labelings,
}

impl std::str::FromStr for OracleKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(Self::Heuristic),
            "labelings" => Ok(Self::Labelings),
            other => bail!("unknown oracle `{other}` (expected heuristic or labelings)"),
        }
    }
}

impl OracleKind {
    pub fn oracle(self) -> Box<dyn subfair_core::CscOracle> {
        match self {
            Self::Heuristic => Box::new(subfair_core::HeuristicOracle),
            Self::Labelings => Box::new(subfair_core::LabelingOracle),
        }
    }
}

/// Fully resolved settings, echoed into every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub gamma: f64,
    pub eta: f64,
    pub c_lambda: f64,
    pub c_tau: f64,
    pub nu: f64,
    pub seed: u64,
    pub iterations: Option<usize>,
    pub trajectory_stride: usize,
    pub early_stop: bool,
    pub oracle: OracleKind,
    pub gammas: Vec<f64>,
    pub etas: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gamma: 0.3,
            eta: 0.0,
            c_lambda: 10.0,
            c_tau: 10.0,
            nu: 0.05,
            seed: 0,
            iterations: None,
            trajectory_stride: 100,
            early_stop: false,
            oracle: OracleKind::Heuristic,
            gammas: (0..=10).map(|k| k as f64 / 10.0).collect(),
            etas: vec![0.0],
        }
    }
}

/// Settings that may come from a flag or the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Run configuration file (`key = value` lines, `#` comments).
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Per-pair disparity allowance γ.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weighted-slack budget η.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Bound on the pair multipliers.
    #[arg(long)]
    pub c_lambda: Option<f64>,
    /// Bound on the slack multiplier.
    #[arg(long)]
    pub c_tau: Option<f64>,
    /// Target approximation; sets the closed-form horizon.
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run exactly this many rounds instead of the closed-form horizon.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Trajectory sampling interval in rounds.
    #[arg(long)]
    pub trajectory_stride: Option<usize>,
    /// Stop once the dual certificate drops below ν.
    #[arg(long)]
    pub early_stop: bool,
    #[arg(long, value_enum)]
    pub oracle: Option<OracleKind>,
    /// Comma-separated γ grid for sweeps.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Comma-separated η grid for sweeps.
    #[arg(long, value_delimiter = ',')]
    pub etas: Option<Vec<f64>>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            apply_file(&mut cfg, path)?;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { cfg.$f = v; })* };
        }
        set!(gamma, eta, c_lambda, c_tau, nu, seed, trajectory_stride, oracle, gammas, etas);
        if self.iterations.is_some() {
            cfg.iterations = self.iterations;
        }
        cfg.early_stop |= self.early_stop;
        cfg.solver_config()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let params = FairnessParams::new(self.gamma, self.eta)?;
        let budgets = GuaranteeBudgets::new(self.c_lambda, self.c_tau, self.nu)?;
        let mut config = SolverConfig::new(params, budgets);
        config.t_override = self.iterations;
        config.seed = self.seed;
        config.trajectory_stride = self.trajectory_stride;
        config.early_stop = self.early_stop;
        config.validate()?;
        Ok(config)
    }
}

fn apply_file(cfg: &mut RunConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    apply_text(cfg, &text).with_context(|| format!("in {}", path.display()))
}

pub fn apply_text(cfg: &mut RunConfig, text: &str) -> Result<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ctx = || format!("line {}: `{}`", lineno + 1, raw.trim());
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .with_context(|| format!("{}: expected key = value", ctx()))?;
        let grid = |v: &str| -> Result<Vec<f64>> {
            v.split(',').map(|x| x.trim().parse::<f64>().map_err(Into::into)).collect()
        };
        match key {
            "gamma" => cfg.gamma = value.parse().with_context(ctx)?,
            "eta" => cfg.eta = value.parse().with_context(ctx)?,
            "c_lambda" => cfg.c_lambda = value.parse().with_context(ctx)?,
            "c_tau" => cfg.c_tau = value.parse().with_context(ctx)?,
            "nu" => cfg.nu = value.parse().with_context(ctx)?,
            "seed" => cfg.seed = value.parse().with_context(ctx)?,
            "iterations" | "t_override" => cfg.iterations = Some(value.parse().with_context(ctx)?),
            "trajectory_stride" => cfg.trajectory_stride = value.parse().with_context(ctx)?,
            "early_stop" => cfg.early_stop = value.parse().with_context(ctx)?,
            "oracle" => cfg.oracle = value.parse().with_context(ctx)?,
            "gammas" => cfg.gammas = grid(value).with_context(ctx)?,
            "etas" => cfg.etas = grid(value).with_context(ctx)?,
            _ => bail!("{}: unknown key `{key}`", ctx()),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let cfg = Overrides::default().resolve().unwrap();
        assert_eq!((cfg.gamma, cfg.eta, cfg.c_lambda, cfg.c_tau, cfg.nu), (0.3, 0.0, 10.0, 10.0, 0.05));
        assert_eq!(cfg.gammas.len(), 11);
    }

    #[test]
    fn file_then_flags() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(
            &mut file,
            b"# run\ngamma = 0.1\nnu=0.2\ngammas = 0, 0.5 ,1\noracle = labelings\n\n",
        )
        .unwrap();
        let overrides = Overrides {
            config: Some(file.path().to_path_buf()),
            nu: Some(0.4),
            ..Default::default()
        };
        let cfg = overrides.resolve().unwrap();
        assert_eq!(cfg.gamma, 0.1);
        assert_eq!(cfg.nu, 0.4);
        assert_eq!(cfg.gammas, vec![0.0, 0.5, 1.0]);
        assert_eq!(cfg.oracle, OracleKind::Labelings);
    }

    #[test]
    fn rejects_bad_lines() {
        let mut cfg = RunConfig::default();
        assert!(apply_text(&mut cfg, "gamma 0.3").is_err());
        assert!(apply_text(&mut cfg, "colour = red").is_err());
        assert!(apply_text(&mut cfg, "gamma = high").is_err());
        let err = Overrides {
            gamma: Some(1.5),
            ..Default::default()
        }
        .resolve()
        .unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }
}
