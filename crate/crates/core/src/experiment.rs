//! Batch experiments: every (problem, method, trial) combination, a
//! generation log per run, and a per-method summary table.
//!
//! Trial `k` uses seed `seed + k` for both the data partition and the engine,
//! so all methods in a trial see the same data (paired comparisons).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{generate_uball5d, load_csv, split_normalize, DataError, SplitDataset, UBALL5D_TEST, UBALL5D_TRAIN};
use crate::engine::{run_trial, EngineConfig, EngineError, RunLog};
use crate::metrics::median;
use crate::selection::{Method, SelectionError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl From<SelectionError> for ExperimentError {
    fn from(e: SelectionError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Uball5d { n_train: usize, n_test: usize },
    Csv { path: PathBuf, target: Option<String> },
}

impl Problem {
    pub fn name(&self) -> String {
        match self {
            Problem::Uball5d { .. } => "uball5d".into(),
            Problem::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned()),
        }
    }

    /// Train/test data for one trial.
    pub fn load(&self, seed: u64) -> Result<SplitDataset, ExperimentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Problem::Uball5d { n_train, n_test } => Ok(generate_uball5d(*n_train, *n_test, &mut rng)),
            Problem::Csv { .. } => unreachable!("csv problems are loaded once and split per trial"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problems: Vec<Problem>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub split: f64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 means available parallelism.
    pub jobs: usize,
    pub engine: EngineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        ExperimentConfig {
            problems: vec![Problem::Uball5d {
                n_train: UBALL5D_TRAIN,
                n_test: UBALL5D_TEST,
            }],
            methods: vec![Method::LexEpsELambda],
            trials: engine.trials,
            seed: 0,
            split: 0.7,
            out_dir: PathBuf::from("results"),
            jobs: 0,
            engine,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ExperimentError> {
    value
        .trim()
        .parse()
        .map_err(|_| ExperimentError::Config(format!("{key}: cannot parse {value:?}")))
}

impl ExperimentConfig {
    /// Applies one `key=value` setting. Keys match the long command-line
    /// flags without the leading dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "problem" => {
                self.problems.retain(|p| matches!(p, Problem::Csv { .. }));
                for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    match name {
                        "uball5d" => self.problems.push(Problem::Uball5d {
                            n_train: UBALL5D_TRAIN,
                            n_test: UBALL5D_TEST,
                        }),
                        other => {
                            return Err(ExperimentError::Config(format!("unknown problem {other:?}")))
                        }
                    }
                }
            }
            "data" => {
                let target = self.csv_target();
                self.problems.retain(|p| !matches!(p, Problem::Csv { .. }));
                self.problems.push(Problem::Csv {
                    path: PathBuf::from(value),
                    target,
                });
            }
            "target" => {
                let mut found = false;
                for p in self.problems.iter_mut() {
                    if let Problem::Csv { target, .. } = p {
                        *target = Some(value.to_string());
                        found = true;
                    }
                }
                if !found {
                    self.problems.push(Problem::Csv {
                        path: PathBuf::new(),
                        target: Some(value.to_string()),
                    });
                }
            }
            "uball-train" | "uball-test" => {
                let n: usize = parse_num(&key, value)?;
                for p in self.problems.iter_mut() {
                    if let Problem::Uball5d { n_train, n_test } = p {
                        if key == "uball-train" {
                            *n_train = n;
                        } else {
                            *n_test = n;
                        }
                    }
                }
            }
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_, _>>()?;
            }
            "trials" => self.trials = parse_num(&key, value)?,
            "seed" => self.seed = parse_num(&key, value)?,
            "pop" => self.engine.population_size = parse_num(&key, value)?,
            "gens" => self.engine.generations = parse_num(&key, value)?,
            "eps-e" => self.engine.selection.eps_e = parse_num(&key, value)?,
            "eps-y" => self.engine.selection.eps_y = parse_num(&key, value)?,
            "tournament-size" => self.engine.selection.tournament_size = parse_num(&key, value)?,
            "split" => self.split = parse_num(&key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "jobs" => self.jobs = parse_num(&key, value)?,
            "timing" => self.engine.record_timing = parse_num(&key, value)?,
            other => return Err(ExperimentError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    fn csv_target(&self) -> Option<String> {
        self.problems.iter().find_map(|p| match p {
            Problem::Csv { target, .. } => target.clone(),
            _ => None,
        })
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), ExperimentError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.problems.is_empty() {
            return bad("no problem selected".into());
        }
        for p in &self.problems {
            match p {
                Problem::Csv { path, .. } if path.as_os_str().is_empty() => {
                    return bad("--target given without --data".into())
                }
                Problem::Uball5d { n_train, n_test } if *n_train == 0 || *n_test == 0 => {
                    return bad("UBall5D partitions must be nonempty".into())
                }
                _ => {}
            }
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split ratio {} must lie in (0, 1)", self.split));
        }
        let mut engine = self.engine.clone();
        engine.trials = self.trials;
        engine.validate()?;
        Ok(())
    }
}

/// One finished run.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub problem: String,
    pub trial: usize,
    pub log: RunLog,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub problem: String,
    pub median_test_mae: f64,
    /// 1 = best median test MAE on this problem; ties share the mean rank.
    pub rank: f64,
    pub total_time_s: f64,
    pub median_generation_time_s: f64,
}

/// Ranks `values` ascending, 1-based, averaging ranks over ties.
pub fn mean_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// One row per (problem, method), ordered by problem then method of first
/// appearance.
pub fn emit_summary(results: &[TrialResult]) -> Vec<SummaryRow> {
    let mut groups: Vec<((String, Method), Vec<&RunLog>)> = Vec::new();
    for r in results {
        let key = (r.problem.clone(), r.log.method);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, logs)) => logs.push(&r.log),
            None => groups.push((key, vec![&r.log])),
        }
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((problem, method), logs)| {
            let test: Vec<f64> = logs.iter().map(|l| l.test_mae).collect();
            let gen_times: Vec<f64> = logs
                .iter()
                .flat_map(|l| l.records.iter().map(|r| r.elapsed_s))
                .collect();
            SummaryRow {
                method,
                problem,
                median_test_mae: median(&test),
                rank: 0.0,
                total_time_s: logs.iter().map(|l| l.total_seconds).sum(),
                median_generation_time_s: if gen_times.is_empty() { 0.0 } else { median(&gen_times) },
            }
        })
        .collect();
    let problems: Vec<String> = rows.iter().fold(Vec::new(), |mut acc, r| {
        if !acc.contains(&r.problem) {
            acc.push(r.problem.clone());
        }
        acc
    });
    for p in problems {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].problem == p).collect();
        let medians: Vec<f64> = idx.iter().map(|&i| rows[i].median_test_mae).collect();
        for (&i, r) in idx.iter().zip(mean_ranks(&medians)) {
            rows[i].rank = r;
        }
    }
    rows
}

/// Mean rank of each method across problems.
pub fn mean_rank_by_method(rows: &[SummaryRow]) -> Vec<(Method, f64)> {
    let mut acc: BTreeMap<&'static str, (Method, f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.method.key()).or_insert((r.method, 0.0, 0));
        e.1 += r.rank;
        e.2 += 1;
    }
    let mut out: Vec<(Method, f64)> = acc.into_values().map(|(m, s, n)| (m, s / n as f64)).collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    out
}

pub const GENERATION_LOG_HEADER: [&str; 5] =
    ["generation", "best_train_mae", "diversity", "median_cases_used", "elapsed_s"];
pub const SUMMARY_HEADER: [&str; 6] = [
    "method",
    "problem",
    "median_test_mae",
    "rank",
    "total_time_s",
    "median_generation_time_s",
];

pub fn write_generation_log<W: Write>(log: &RunLog, writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(GENERATION_LOG_HEADER)?;
    for r in &log.records {
        w.write_record([
            r.generation.to_string(),
            r.best_train_mae.to_string(),
            r.diversity.to_string(),
            r.median_cases_used.to_string(),
            r.elapsed_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.key().to_string(),
            r.problem.clone(),
            r.median_test_mae.to_string(),
            r.rank.to_string(),
            r.total_time_s.to_string(),
            r.median_generation_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_runs<W: Write>(results: &[TrialResult], writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["problem", "method", "trial", "seed", "train_mae", "test_mae", "total_time_s", "program"])?;
    for r in results {
        w.write_record([
            r.problem.clone(),
            r.log.method.key().to_string(),
            r.trial.to_string(),
            r.log.seed.to_string(),
            r.log.best_train_mae.to_string(),
            r.log.test_mae.to_string(),
            r.log.total_seconds.to_string(),
            r.log.best_program.to_sexpr(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn generation_log_path(out: &Path, problem: &str, method: Method, trial: usize) -> PathBuf {
    out.join(format!("{problem}_{}_trial{trial:02}.csv", method.key()))
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub results: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
    /// Data issues worth telling the user about, such as constant features.
    pub warnings: Vec<String>,
}

#[cfg(feature = "parallel")]
fn run_tasks<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_tasks<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Runs every (problem, method, trial) and writes:
///
/// * `<problem>_<method>_trialNN.csv` generation logs
/// * `summary.csv` with one row per (method, problem)
/// * `runs.csv` with each run's best-of-run errors and program
/// * `ranks.csv` with mean rank per method, when more than one problem ran
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;

    let mut results = Vec::new();
    let mut warnings = Vec::new();
    for problem in &config.problems {
        let name = problem.name();
        let datasets: Vec<SplitDataset> = match problem {
            Problem::Uball5d { .. } => (0..config.trials)
                .map(|k| problem.load(config.seed + k as u64))
                .collect::<Result<_, _>>()?,
            Problem::Csv { path, target } => {
                let raw = load_csv(path, target.as_deref())?;
                let splits: Vec<SplitDataset> = (0..config.trials)
                    .map(|k| {
                        let mut rng = ChaCha8Rng::seed_from_u64(config.seed + k as u64);
                        split_normalize(&raw, config.split, &mut rng)
                    })
                    .collect::<Result<_, _>>()?;
                for (k, s) in splits.iter().enumerate() {
                    for col in s.normalization.constant_features(&s.train) {
                        warnings.push(format!(
                            "{name}, trial {k}: feature {col:?} is constant on the training split and was left unnormalized"
                        ));
                    }
                }
                splits
            }
        };
        let tasks: Vec<(usize, Method)> = (0..config.trials)
            .flat_map(|k| config.methods.iter().map(move |&m| (k, m)))
            .collect();
        let logs = run_tasks(tasks.len(), |i| {
            let (k, method) = tasks[i];
            let mut engine = config.engine.clone();
            engine.selection.method = method;
            engine.seed = config.seed + k as u64;
            engine.trials = config.trials;
            run_trial(&engine, &datasets[k])
        });
        for ((k, _), log) in tasks.iter().zip(logs) {
            results.push(TrialResult {
                problem: name.clone(),
                trial: *k,
                log: log?,
            });
        }
    }

    fs::create_dir_all(&config.out_dir)?;
    let mut files = Vec::new();
    for r in &results {
        let path = generation_log_path(&config.out_dir, &r.problem, r.log.method, r.trial);
        write_generation_log(&r.log, std::io::BufWriter::new(fs::File::create(&path)?))?;
        files.push(path);
    }
    let summary = emit_summary(&results);
    let path = config.out_dir.join("summary.csv");
    write_summary(&summary, fs::File::create(&path)?)?;
    files.push(path);
    let path = config.out_dir.join("runs.csv");
    write_runs(&results, fs::File::create(&path)?)?;
    files.push(path);
    if config.problems.len() > 1 {
        let path = config.out_dir.join("ranks.csv");
        let mut w = csv::Writer::from_writer(fs::File::create(&path)?);
        w.write_record(["method", "mean_rank"])?;
        for (m, r) in mean_rank_by_method(&summary) {
            w.write_record([m.key().to_string(), r.to_string()])?;
        }
        w.flush()?;
        files.push(path);
    }
    Ok(ExperimentReport {
        results,
        summary,
        files,
        warnings,
    })
}
