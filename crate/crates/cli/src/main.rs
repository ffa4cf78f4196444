//! `subfair`: elicit pairwise fairness judgments, train fair randomized
//! classifiers against them, and sweep the error/fairness trade-off.

mod commands;
mod config;
mod manifest;

use std::io::IsTerminal;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "subfair", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the training data and judgments come from.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset CSV with a header row.
    #[arg(long, required_unless_present = "session")]
    pub dataset: Option<PathBuf>,
    /// Name of the 0/1 label column.
    #[arg(long, default_value = "label")]
    pub label: String,
    /// Judgments file (JSON lines: judge_id, i, j, same). Omit for plain ERM.
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    /// Service session directory; supplies the dataset and judgment log.
    #[arg(long, conflicts_with_all = ["dataset", "judgments"])]
    pub session: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one (γ, η) problem and write report.json, constraints.json,
    /// trajectory.csv and manifest.json.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve every point of the γ × η grid and write curve.csv plus
    /// per-point records. With --session, also leaves sweep.json for the
    /// service's results endpoint.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Also solve each judge's constraints alone at the configured γ and
        /// correlate their "same" counts with the resulting error.
        #[arg(long)]
        per_judge: bool,
    },
    /// Print the uniform-convergence error bound and the fairness-loss
    /// generalization bound.
    Bounds {
        /// Sample size.
        #[arg(long)]
        n: usize,
        /// Number of sampled constraint pairs.
        #[arg(long)]
        m: usize,
        #[arg(long)]
        vc_dim: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Answer sampled pairs with synthetic judges and write a judgments file.
    Simulate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "label")]
        label: String,
        /// Judge spec JSON: one spec object or an array of them.
        #[arg(long)]
        spec: PathBuf,
        /// Pairs per judge.
        #[arg(long, default_value_t = 50)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic Gaussian dataset CSV with a `label` column.
    Generate {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        dims: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the judgment-collection service.
    Serve {
        /// Directory holding one subdirectory per session.
        #[arg(long)]
        root: PathBuf,
        /// Session config JSON to create (or check) under the root.
        #[arg(long)]
        session_config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Static UI bundle to serve for non-API paths.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Summarize a train or sweep output directory and verify its manifest.
    Report {
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .without_time()
        .with_target(false)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { data, overrides, out } => commands::train(&data, &overrides, &out),
        Command::Sweep {
            data,
            overrides,
            out,
            jobs,
            per_judge,
        } => commands::sweep(&data, &overrides, &out, jobs, per_judge),
        Command::Bounds {
            n,
            m,
            vc_dim,
            epsilon,
            delta,
            json,
        } => commands::bounds(n, m, vc_dim, epsilon, delta, json),
        Command::Simulate {
            dataset,
            label,
            spec,
            pairs,
            seed,
            out,
        } => commands::simulate(&dataset, &label, &spec, pairs, seed, &out),
        Command::Generate { rows, dims, seed, out } => commands::generate(rows, dims, seed, &out),
        Command::Serve {
            root,
            session_config,
            addr,
            ui,
        } => commands::serve(root, session_config.as_deref(), addr, ui),
        Command::Report { dir } => commands::report(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
