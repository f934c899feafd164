use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use lexgp::experiment::{run_experiment, ExperimentConfig};

/// Run GP symbolic regression experiments comparing parent selection methods.
///
/// Writes one generation log per (problem, method, trial) plus summary.csv
/// and runs.csv to the output directory.
#[derive(Parser, Debug)]
#[command(name = "lexgp", version)]
struct Args {
    /// key=value file; command-line flags take precedence over it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in problem(s), comma separated: uball5d
    #[arg(long)]
    problem: Option<String>,
    /// CSV dataset with a header row; numeric columns only
    #[arg(long)]
    data: Option<PathBuf>,
    /// Target column of --data (default: last column)
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated methods: rand, tourn, afp, lex, lex-eps-y,
    /// lex-eps-e, lex-eps-y-lambda, lex-eps-e-lambda
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Trial k uses seed + k
    #[arg(long)]
    seed: Option<u64>,
    /// Population size
    #[arg(long)]
    pop: Option<usize>,
    /// Generations per trial
    #[arg(long)]
    gens: Option<usize>,
    #[arg(long)]
    eps_e: Option<f64>,
    #[arg(long)]
    eps_y: Option<f64>,
    #[arg(long)]
    tournament_size: Option<usize>,
    /// Training fraction for --data
    #[arg(long)]
    split: Option<f64>,
    /// UBall5D training rows
    #[arg(long)]
    uball_train: Option<usize>,
    /// UBall5D test rows
    #[arg(long)]
    uball_test: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Write zero timings so reruns produce identical files
    #[arg(long)]
    no_timing: bool,
}

impl Args {
    fn settings(&self) -> Vec<(&'static str, String)> {
        let mut s = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                s.push((k, v));
            }
        };
        put("problem", self.problem.clone());
        put("data", self.data.as_ref().map(|p| p.display().to_string()));
        put("target", self.target.clone());
        put("uball-train", self.uball_train.map(|v| v.to_string()));
        put("uball-test", self.uball_test.map(|v| v.to_string()));
        put("methods", self.methods.clone());
        put("trials", self.trials.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("pop", self.pop.map(|v| v.to_string()));
        put("gens", self.gens.map(|v| v.to_string()));
        put("eps-e", self.eps_e.map(|v| v.to_string()));
        put("eps-y", self.eps_y.map(|v| v.to_string()));
        put("tournament-size", self.tournament_size.map(|v| v.to_string()));
        put("split", self.split.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("jobs", self.jobs.map(|v| v.to_string()));
        if self.no_timing {
            put("timing", Some("false".into()));
        }
        s
    }
}

fn build_config(args: &Args) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config
            .apply_kv(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    // --data alone means "just this dataset"
    if args.data.is_some() && args.problem.is_none() {
        config.set("problem", "")?;
    }
    for (k, v) in args.settings() {
        config.set(k, &v).with_context(|| format!("--{k}"))?;
    }
    config.validate()?;
    Ok(config)
}

fn run(args: Args) -> Result<()> {
    let config = build_config(&args)?;
    if config.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build_global()
            .context("starting worker pool")?;
    }
    let report = run_experiment(&config)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{:<18} {:<12} {:>16} {:>6} {:>14}",
        "method", "problem", "median_test_mae", "rank", "total_time_s"
    );
    for r in &report.summary {
        println!(
            "{:<18} {:<12} {:>16.6} {:>6.1} {:>14.2}",
            r.method.key(),
            r.problem,
            r.median_test_mae,
            r.rank,
            r.total_time_s
        );
    }
    eprintln!("wrote {} files to {}", report.files.len(), config.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // thiserror messages often embed their source already
            let mut msg = String::new();
            for cause in e.chain() {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&text);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
