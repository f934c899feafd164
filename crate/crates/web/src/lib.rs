//! Browser bindings. Each exported function takes plain numbers or strings
//! and returns a JSON document; on bad input the document is
//! `{"error": "..."}`.

use lexgp::data::generate_uball5d;
use lexgp::engine::{run_trial, EngineConfig};
use lexgp::selection::{
    exact_selection_probabilities, ErrorMatrix, Method, PassMatrix, SelectionConfig, Selector,
    ORACLE_MAX_CASES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct SelectionReport {
    pub method: String,
    pub probabilities: Vec<f64>,
    /// Per-case pass threshold; empty for standard lexicase.
    pub thresholds: Vec<f64>,
    /// `passes[i][t]`; empty for standard lexicase.
    pub passes: Vec<Vec<bool>>,
    pub elite: Vec<f64>,
    pub mad: Vec<f64>,
    pub fitness: Vec<f64>,
}

/// Rows separated by newlines or `;`, values by commas or whitespace.
pub fn parse_matrix(text: &str) -> Result<ErrorMatrix, String> {
    let rows: Vec<Vec<f64>> = text
        .split(['\n', ';'])
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|v| !v.is_empty())
                .map(|v| v.parse::<f64>().map_err(|_| format!("not a number: {v:?}")))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    ErrorMatrix::from_rows(&rows).map_err(|e| e.to_string())
}

pub fn selection_report(
    matrix: &str,
    method: &str,
    eps_e: f64,
    eps_y: f64,
) -> Result<SelectionReport, String> {
    let errors = parse_matrix(matrix)?;
    let method: Method = method.parse().map_err(|e: lexgp::selection::SelectionError| e.to_string())?;
    if method.is_lexicase() && errors.n_cases() > ORACLE_MAX_CASES {
        return Err(format!("at most {ORACLE_MAX_CASES} cases can be enumerated"));
    }
    let config = SelectionConfig {
        method,
        eps_e,
        eps_y,
        ..Default::default()
    };
    let probabilities = exact_selection_probabilities(&errors, &config).map_err(|e| e.to_string())?;
    let (thresholds, passes) = if method.is_epsilon() {
        let pm = PassMatrix::build(&errors, &config).map_err(|e| e.to_string())?;
        let passes = (0..pm.n_individuals())
            .map(|i| (0..pm.n_cases()).map(|t| pm.passes(i, t)).collect())
            .collect();
        (pm.thresholds().to_vec(), passes)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(SelectionReport {
        method: method.key().into(),
        probabilities,
        thresholds,
        passes,
        elite: errors.elite().to_vec(),
        mad: errors.mad().to_vec(),
        fitness: errors.fitness().to_vec(),
    })
}

#[derive(Debug, Serialize)]
pub struct EvolutionReport {
    pub method: String,
    pub best_train_mae: Vec<f64>,
    pub diversity: Vec<f64>,
    pub median_cases_used: Vec<f64>,
    pub best_program: String,
    pub train_mae: f64,
    pub test_mae: f64,
}

/// A small UBall5D run.
pub fn evolution_report(
    method: &str,
    population: usize,
    generations: usize,
    n_train: usize,
    seed: u64,
) -> Result<EvolutionReport, String> {
    let method: Method = method.parse().map_err(|e: lexgp::selection::SelectionError| e.to_string())?;
    if n_train == 0 {
        return Err("need at least one training row".into());
    }
    let data = generate_uball5d(n_train, n_train, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut config = EngineConfig {
        population_size: population,
        generations,
        seed,
        record_timing: false,
        ..Default::default()
    };
    config.selection.method = method;
    let log = run_trial(&config, &data).map_err(|e| e.to_string())?;
    Ok(EvolutionReport {
        method: method.key().into(),
        best_train_mae: log.records.iter().map(|r| r.best_train_mae).collect(),
        diversity: log.records.iter().map(|r| r.diversity).collect(),
        median_cases_used: log.records.iter().map(|r| r.median_cases_used).collect(),
        best_program: log.best_program.to_string(),
        train_mae: log.best_train_mae,
        test_mae: log.test_mae,
    })
}

#[derive(Debug, Serialize)]
pub struct CaseUsage {
    pub method: String,
    /// `histogram[k]` = events that examined exactly `k` cases.
    pub histogram: Vec<usize>,
    pub mean: f64,
}

/// Cases examined per selection event on one random error matrix, for every
/// lexicase variant. `discrete` draws errors from {0, 1, 2, 3}, which makes
/// ties common; otherwise errors are uniform on [0, 1).
pub fn case_usage(
    population: usize,
    cases: usize,
    events: usize,
    discrete: bool,
    seed: u64,
) -> Result<Vec<CaseUsage>, String> {
    if population == 0 || cases == 0 {
        return Err("population and cases must be positive".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..population)
        .map(|_| {
            (0..cases)
                .map(|_| {
                    if discrete {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect();
    let errors = ErrorMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
    Method::ALL
        .into_iter()
        .filter(|m| m.is_lexicase())
        .map(|method| {
            let sel = Selector::new(&errors, SelectionConfig::new(method)).map_err(|e| e.to_string())?;
            let mut histogram = vec![0; cases + 1];
            for _ in 0..events {
                histogram[sel.select(&mut rng).cases_examined] += 1;
            }
            let total: usize = histogram.iter().enumerate().map(|(k, c)| k * c).sum();
            Ok(CaseUsage {
                method: method.key().into(),
                histogram,
                mean: total as f64 / events.max(1) as f64,
            })
        })
        .collect()
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[wasm_bindgen]
pub fn selection_probabilities(matrix: &str, method: &str, eps_e: f64, eps_y: f64) -> String {
    to_json(selection_report(matrix, method, eps_e, eps_y))
}

#[wasm_bindgen]
pub fn evolve(method: &str, population: usize, generations: usize, n_train: usize, seed: u32) -> String {
    to_json(evolution_report(method, population, generations, n_train, seed.into()))
}

#[wasm_bindgen]
pub fn case_usage_histogram(population: usize, cases: usize, events: usize, discrete: bool, seed: u32) -> String {
    to_json(case_usage(population, cases, events, discrete, seed.into()))
}
