use rand::Rng;

use super::{
    pick, random_select, tournament_select, ErrorMatrix, Method, PassMatrix, SelectionConfig,
    SelectionError, SelectionEvent,
};

/// Filters `pool` through `cases` in order until one individual remains.
/// Returns the number of cases examined.
///
/// Without a pass matrix a case keeps the pool's own elites. With one, a case
/// keeps its passers, unless none of them are still in the pool, in which
/// case the pool is left unchanged.
fn filter_pool<I>(
    errors: &ErrorMatrix,
    pass: Option<&PassMatrix>,
    cases: I,
    pool: &mut Vec<usize>,
) -> usize
where
    I: IntoIterator<Item = usize>,
{
    let mut examined = 0;
    for t in cases {
        if pool.len() <= 1 {
            break;
        }
        examined += 1;
        match pass {
            None => {
                let best = pool
                    .iter()
                    .map(|&i| errors.get(i, t))
                    .fold(f64::INFINITY, f64::min);
                pool.retain(|&i| errors.get(i, t) <= best);
            }
            Some(pm) => {
                if pool.iter().any(|&i| pm.passes(i, t)) {
                    pool.retain(|&i| pm.passes(i, t));
                }
            }
        }
    }
    examined
}

/// One lexicase selection event over an explicit case ordering.
///
/// `pass` selects the variant: `None` is standard lexicase, a [`PassMatrix`]
/// gives the corresponding ε-lexicase.
pub fn lexicase_select<R: Rng + ?Sized>(
    errors: &ErrorMatrix,
    pass: Option<&PassMatrix>,
    order: &[usize],
    rng: &mut R,
) -> SelectionEvent {
    let mut pool: Vec<usize> = (0..errors.n_individuals()).collect();
    let cases_examined = filter_pool(errors, pass, order.iter().copied(), &mut pool);
    let (index, tie_break) = pick(&pool, rng);
    SelectionEvent {
        index,
        cases_examined,
        tie_break,
    }
}

/// Yields a uniformly random permutation one element at a time, so an event
/// that resolves after k cases only pays for k swaps.
struct LazyShuffle<'a, R: Rng + ?Sized> {
    order: Vec<usize>,
    next: usize,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Iterator for LazyShuffle<'_, R> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let k = self.next;
        if k >= self.order.len() {
            return None;
        }
        let j = self.rng.random_range(k..self.order.len());
        self.order.swap(k, j);
        self.next += 1;
        Some(self.order[k])
    }
}

/// Per-generation selection state: the error matrix plus, for ε variants,
/// the precomputed pass matrix.
#[derive(Clone, Debug)]
pub struct Selector<'a> {
    errors: &'a ErrorMatrix,
    pass: Option<PassMatrix>,
    config: SelectionConfig,
}

impl<'a> Selector<'a> {
    pub fn new(errors: &'a ErrorMatrix, config: SelectionConfig) -> Result<Self, SelectionError> {
        config.validate()?;
        let pass = if config.method.is_epsilon() {
            Some(PassMatrix::build(errors, &config)?)
        } else {
            None
        };
        Ok(Selector {
            errors,
            pass,
            config,
        })
    }

    pub fn errors(&self) -> &ErrorMatrix {
        self.errors
    }

    pub fn pass_matrix(&self) -> Option<&PassMatrix> {
        self.pass.as_ref()
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> SelectionEvent {
        match self.config.method {
            m if m.is_lexicase() => {
                let mut pool: Vec<usize> = (0..self.errors.n_individuals()).collect();
                let cases = LazyShuffle {
                    order: (0..self.errors.n_cases()).collect(),
                    next: 0,
                    rng: &mut *rng,
                };
                let cases_examined = filter_pool(self.errors, self.pass.as_ref(), cases, &mut pool);
                let (index, tie_break) = pick(&pool, rng);
                SelectionEvent {
                    index,
                    cases_examined,
                    tie_break,
                }
            }
            Method::Tourn => tournament_select(self.errors, self.config.tournament_size, rng),
            _ => random_select(self.errors.n_individuals(), rng),
        }
    }
}
