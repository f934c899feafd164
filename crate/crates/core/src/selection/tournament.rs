use rand::Rng;

use super::{ErrorMatrix, SelectionEvent};

/// Tournament on aggregate fitness: `size` contestants drawn with
/// replacement, lowest MAE wins, ties broken uniformly among the tied draws.
/// Aggregate fitness consumes every case, so `cases_examined = N`.
pub fn tournament_select<R: Rng + ?Sized>(
    errors: &ErrorMatrix,
    size: usize,
    rng: &mut R,
) -> SelectionEvent {
    let fitness = errors.fitness();
    let n = fitness.len();
    assert!(n > 0 && size > 0, "tournament needs contestants");
    let mut best = f64::INFINITY;
    let mut winner = 0;
    let mut ties = 0usize;
    for _ in 0..size {
        let c = rng.random_range(0..n);
        let f = fitness[c];
        if f < best {
            best = f;
            winner = c;
            ties = 1;
        } else if f == best {
            // reservoir sampling over tied draws
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                winner = c;
            }
        }
    }
    SelectionEvent {
        index: winner,
        cases_examined: errors.n_cases(),
        tie_break: ties > 1,
    }
}

/// Uniform parent choice; examines no cases.
pub fn random_select<R: Rng + ?Sized>(population: usize, rng: &mut R) -> SelectionEvent {
    assert!(population > 0, "empty population");
    SelectionEvent {
        index: rng.random_range(0..population),
        cases_examined: 0,
        tie_break: false,
    }
}
