//! The generational loop.
//!
//! Each generation evaluates the population, records diagnostics, breeds a
//! full set of children (80% crossover, 20% mutation by default), applies one
//! constant hill-climbing pass to every child, and keeps the best individual.
//! AFP replaces parent selection and replacement with age-fitness Pareto
//! survival.
//!
//! Every child slot draws from its own ChaCha stream derived from the trial
//! seed, so serial and parallel execution produce identical logs.

#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::afp::{afp_generation, AfpHooks, AfpMember};
use crate::data::{Dataset, SplitDataset};
use crate::expr::{
    finite_mae, hill_climb, point_mutation, random_program, subtree_crossover, ExprError,
    OperatorSet, Program, SizeLimits,
};
use crate::metrics::median;
use crate::selection::{ErrorMatrix, Method, SelectionConfig, SelectionError, Selector};

pub use crate::metrics::{diversity, mae};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Limits(#[from] ExprError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Fraction of child slots filled by crossover; the rest use mutation.
    pub crossover_fraction: f64,
    pub limits: SizeLimits,
    pub erc_range: (f64, f64),
    /// Keep the best individual of each generation.
    pub elitism: bool,
    pub selection: SelectionConfig,
    /// Relative standard deviation of the constant hill climber.
    pub hill_climb_scale: f64,
    pub seed: u64,
    pub trials: usize,
    /// Measure wall time. Disable for bit-reproducible logs.
    pub record_timing: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            population_size: 1000,
            generations: 1000,
            crossover_fraction: 0.8,
            limits: SizeLimits::default(),
            erc_range: (-1.0, 1.0),
            elitism: true,
            selection: SelectionConfig::default(),
            hill_climb_scale: 0.1,
            seed: 0,
            trials: 30,
            record_timing: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_string()));
        if self.population_size == 0 {
            return bad("population size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_fraction) {
            return bad("crossover fraction must lie in [0, 1]");
        }
        if !(self.erc_range.0 <= self.erc_range.1) || !self.erc_range.0.is_finite() || !self.erc_range.1.is_finite() {
            return bad("ERC range must be a finite, ordered interval");
        }
        if !(self.hill_climb_scale >= 0.0) {
            return bad("hill-climb scale must be non-negative");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        SizeLimits::new(self.limits.min, self.limits.max)?;
        self.selection.validate()?;
        Ok(())
    }

    /// Number of crossover children among `slots` child slots.
    pub fn crossover_slots(&self, slots: usize) -> usize {
        (slots as f64 * self.crossover_fraction).round() as usize
    }
}

/// Diagnostics for one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_train_mae: f64,
    /// Fraction of distinct training output vectors.
    pub diversity: f64,
    /// Median cases examined per parent selection event.
    pub median_cases_used: f64,
    pub elapsed_s: f64,
    /// Individuals evaluated this generation.
    pub population: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub method: Method,
    pub seed: u64,
    pub records: Vec<GenerationRecord>,
    pub best_program: Program,
    pub best_train_mae: f64,
    pub test_mae: f64,
    pub total_seconds: f64,
}

impl RunLog {
    /// Copy with every wall-clock field zeroed.
    pub fn without_timing(&self) -> RunLog {
        let mut log = self.clone();
        log.total_seconds = 0.0;
        for r in log.records.iter_mut() {
            r.elapsed_s = 0.0;
        }
        log
    }
}

#[derive(Clone, Debug)]
struct Individual {
    program: Program,
    outputs: Vec<f64>,
    error: f64,
}

impl AfpMember for Individual {
    fn age(&self) -> u32 {
        self.program.age
    }

    fn error(&self) -> f64 {
        self.error
    }

    fn grow_older(&mut self) {
        self.program.age += 1;
    }
}

fn slot_rng(seed: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot);
    rng
}

#[cfg(feature = "parallel")]
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] Option<Instant>);

impl Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    fn start(enabled: bool) -> Self {
        Stopwatch(enabled.then(Instant::now))
    }

    #[cfg(target_arch = "wasm32")]
    fn start(_enabled: bool) -> Self {
        Stopwatch()
    }

    #[cfg(not(target_arch = "wasm32"))]
    fn seconds(&self) -> f64 {
        self.0.map_or(0.0, |t| t.elapsed().as_secs_f64())
    }

    #[cfg(target_arch = "wasm32")]
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Shared read-only state for breeding.
struct Breeder<'a> {
    config: &'a EngineConfig,
    ops: OperatorSet,
    train: &'a Dataset,
}

impl Breeder<'_> {
    fn evaluate(&self, program: Program) -> Individual {
        let outputs = program.predict(self.train);
        let error = finite_mae(&outputs, self.train.targets());
        Individual {
            program,
            outputs,
            error,
        }
    }

    fn fresh(&self, rng: &mut ChaCha8Rng) -> Individual {
        self.evaluate(random_program(&self.config.limits, &self.ops, rng))
    }

    fn climb(&self, child: Program, rng: &mut ChaCha8Rng) -> Individual {
        let outputs = child.predict(self.train);
        let c = hill_climb(child, outputs, self.train, self.config.hill_climb_scale, rng);
        Individual {
            program: c.program,
            outputs: c.outputs,
            error: c.mae,
        }
    }

    /// Children for `slots` slots; `choose` picks a parent and reports the
    /// cases it examined.
    fn breed<F>(&self, parents: &[Individual], slots: usize, seed: u64, choose: F) -> (Vec<Individual>, Vec<usize>)
    where
        F: Fn(&mut ChaCha8Rng) -> (usize, usize) + Sync,
    {
        let n_cross = self.config.crossover_slots(slots);
        let bred = par_map(slots, |s| {
            let mut rng = slot_rng(seed, s as u64);
            let (child, cases) = if s < n_cross {
                let (a, ca) = choose(&mut rng);
                let (b, cb) = choose(&mut rng);
                let child = subtree_crossover(
                    &parents[a].program,
                    &parents[b].program,
                    &self.config.limits,
                    &mut rng,
                );
                (child, vec![ca, cb])
            } else {
                let (a, ca) = choose(&mut rng);
                (point_mutation(&parents[a].program, &self.ops, &mut rng), vec![ca])
            };
            (self.climb(child, &mut rng), cases)
        });
        let mut cases = Vec::with_capacity(slots * 2);
        let children = bred
            .into_iter()
            .map(|(c, k)| {
                cases.extend(k);
                c
            })
            .collect();
        (children, cases)
    }
}

struct AfpBreeding<'a, 'b> {
    breeder: &'b Breeder<'a>,
    seed: u64,
}

impl AfpHooks<Individual> for AfpBreeding<'_, '_> {
    fn breed(&mut self, parents: &[Individual], n: usize) -> Vec<Individual> {
        let p = parents.len();
        self.breeder
            .breed(parents, n, self.seed, |rng| (rng.random_range(0..p), 0))
            .0
    }

    fn random_individual(&mut self) -> Individual {
        // stream 2^32 is never used by a breeding slot
        let mut rng = slot_rng(self.seed, 1 << 32);
        self.breeder.fresh(&mut rng)
    }
}

/// Runs one evolutionary trial on `data` with `config.seed`.
pub fn run_trial(config: &EngineConfig, data: &SplitDataset) -> Result<RunLog, EngineError> {
    config.validate()?;
    let train = &data.train;
    let trial_clock = Stopwatch::start(config.record_timing);
    let mut ops = OperatorSet::new(train.n_features());
    (ops.erc_low, ops.erc_high) = config.erc_range;
    let breeder = Breeder {
        config,
        ops,
        train,
    };
    let method = config.selection.method;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);

    let init_seed: u64 = master.random();
    let mut population: Vec<Individual> = par_map(config.population_size, |s| {
        breeder.fresh(&mut slot_rng(init_seed, s as u64))
    });

    let mut records = Vec::with_capacity(config.generations);
    for generation in 0..config.generations {
        let clock = Stopwatch::start(config.record_timing);
        let outputs: Vec<&[f64]> = population.iter().map(|i| i.outputs.as_slice()).collect();
        let errors = ErrorMatrix::build(&outputs, train.targets());
        let best = errors.best();
        let best_train_mae = errors.fitness()[best];
        let div = diversity(&outputs);
        let evaluated = outputs.len();
        let gen_seed: u64 = master.random();

        let (next, cases) = if method == Method::Afp {
            let mut hooks = AfpBreeding {
                breeder: &breeder,
                seed: gen_seed,
            };
            let out = afp_generation(population, &mut hooks);
            (out.survivors, Vec::new())
        } else {
            let selector = Selector::new(&errors, config.selection)?;
            let keep_elite = config.elitism;
            let slots = config.population_size - usize::from(keep_elite);
            let (children, cases) = breeder.breed(&population, slots, gen_seed, |rng| {
                let ev = selector.select(rng);
                (ev.index, ev.cases_examined)
            });
            let mut next = Vec::with_capacity(config.population_size);
            if keep_elite {
                next.push(population.swap_remove(best));
            }
            next.extend(children);
            for ind in next.iter_mut() {
                ind.grow_older();
            }
            (next, cases)
        };
        population = next;

        let median_cases_used = if cases.is_empty() {
            0.0
        } else {
            median(&cases.iter().map(|&c| c as f64).collect::<Vec<_>>())
        };
        records.push(GenerationRecord {
            generation,
            best_train_mae,
            diversity: div,
            median_cases_used,
            elapsed_s: clock.seconds(),
            population: evaluated,
        });
    }

    let best = population
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.error.total_cmp(&b.1.error))
        .map(|(i, _)| i)
        .expect("nonempty population");
    let champion = &population[best];
    let test_mae = finite_mae(&champion.program.predict(&data.test), data.test.targets());
    Ok(RunLog {
        method,
        seed: config.seed,
        records,
        best_program: champion.program.clone(),
        best_train_mae: champion.error,
        test_mae,
        total_seconds: trial_clock.seconds(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_uball5d;

    fn small(method: Method) -> (EngineConfig, SplitDataset) {
        let data = generate_uball5d(64, 64, &mut ChaCha8Rng::seed_from_u64(5));
        let config = EngineConfig {
            population_size: 30,
            generations: 8,
            selection: SelectionConfig::new(method),
            seed: 42,
            record_timing: false,
            ..Default::default()
        };
        (config, data)
    }

    #[test]
    fn defaults_match_reference_settings() {
        let c = EngineConfig::default();
        assert_eq!(c.population_size, 1000);
        assert_eq!(c.generations, 1000);
        assert_eq!(c.crossover_fraction, 0.8);
        assert_eq!(c.limits, SizeLimits { min: 3, max: 50 });
        assert_eq!(c.erc_range, (-1.0, 1.0));
        assert_eq!(c.trials, 30);
        assert!(c.elitism);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_configs_rejected() {
        let (c, d) = small(Method::Lex);
        for bad in [
            EngineConfig { population_size: 0, ..c.clone() },
            EngineConfig { crossover_fraction: 1.5, ..c.clone() },
            EngineConfig { limits: SizeLimits { min: 9, max: 3 }, ..c.clone() },
            EngineConfig { erc_range: (1.0, -1.0), ..c.clone() },
        ] {
            assert!(run_trial(&bad, &d).is_err());
        }
    }

    #[test]
    fn zero_generations() {
        let (mut c, d) = small(Method::Tourn);
        c.generations = 0;
        let log = run_trial(&c, &d).unwrap();
        assert!(log.records.is_empty());
        assert!(log.test_mae.is_finite());
        assert_eq!(log.best_program.age, 0);
    }

    #[test]
    fn crossover_allocation_is_exact() {
        let c = EngineConfig::default();
        assert_eq!(c.crossover_slots(999), 799);
        assert_eq!(c.crossover_slots(1000), 800);
        assert_eq!(c.crossover_slots(199), 159);
    }

    #[test]
    fn every_method_runs_and_is_deterministic() {
        for method in Method::ALL {
            let (c, d) = small(method);
            let a = run_trial(&c, &d).unwrap();
            let b = run_trial(&c, &d).unwrap();
            assert_eq!(a, b, "{method}");
            assert_eq!(a.records.len(), 8);
            for w in a.records.windows(2) {
                assert!(w[1].best_train_mae <= w[0].best_train_mae, "{method}");
            }
            assert!(a.best_train_mae <= a.records.last().unwrap().best_train_mae);
            for r in &a.records {
                assert!(r.diversity > 0.0 && r.diversity <= 1.0);
            }
        }
    }

    #[test]
    fn case_usage_by_method() {
        let (c, d) = small(Method::Rand);
        assert!(run_trial(&c, &d).unwrap().records.iter().all(|r| r.median_cases_used == 0.0));
        let (c, d) = small(Method::Tourn);
        assert!(run_trial(&c, &d).unwrap().records.iter().all(|r| r.median_cases_used == 64.0));
        let (c, d) = small(Method::Lex);
        assert!(run_trial(&c, &d).unwrap().records[0].median_cases_used >= 1.0);
    }

    #[test]
    fn different_seeds_diverge() {
        let (c, d) = small(Method::LexEpsELambda);
        let a = run_trial(&c, &d).unwrap();
        let b = run_trial(&EngineConfig { seed: 43, ..c }, &d).unwrap();
        assert_ne!(a, b);
    }
}
