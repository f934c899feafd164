//! Exact selection probabilities by enumeration.
//!
//! Deliberately shares no filtering code with the selection routines: the
//! per-case thresholds are recomputed here from the raw error rows with a
//! sort-based median, and case orderings are enumerated explicitly.

use super::{ErrorMatrix, Method, SelectionConfig, SelectionError};

/// Largest case count for which all N! orderings are enumerated.
pub const ORACLE_MAX_CASES: usize = 8;

fn sorted_median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Pass predicate for the ε variants, or `None` for pool-relative elitism.
fn case_rule(rows: &[Vec<f64>], config: &SelectionConfig) -> Option<Vec<Vec<bool>>> {
    let n = rows[0].len();
    let thresholds: Vec<(f64, bool)> = (0..n)
        .map(|t| {
            let col: Vec<f64> = rows.iter().map(|r| r[t]).collect();
            let best = col.iter().copied().fold(f64::INFINITY, f64::min);
            let med = sorted_median(&col);
            let dev: Vec<f64> = col.iter().map(|e| (e - med).abs()).collect();
            let lambda = sorted_median(&dev);
            match config.method {
                Method::LexEpsE => (best * (1.0 + config.eps_e), true),
                Method::LexEpsY => (config.eps_y, false),
                Method::LexEpsELambda => (best + lambda, true),
                Method::LexEpsYLambda => (lambda, false),
                _ => (0.0, false),
            }
        })
        .collect();
    if !config.method.is_epsilon() {
        return None;
    }
    Some(
        rows.iter()
            .map(|r| {
                r.iter()
                    .zip(&thresholds)
                    .map(|(&e, &(thr, inclusive))| if inclusive { e <= thr } else { e < thr })
                    .collect()
            })
            .collect(),
    )
}

/// Heap's algorithm over all orderings of `0..n`.
fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            f(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn lexicase_probabilities(rows: &[Vec<f64>], config: &SelectionConfig) -> Vec<f64> {
    let p = rows.len();
    let n = rows[0].len();
    let rule = case_rule(rows, config);
    let mut prob = vec![0.0; p];
    let mut orderings = 0usize;
    for_each_permutation(n, |order| {
        orderings += 1;
        let mut pool: Vec<usize> = (0..p).collect();
        for &t in order {
            if pool.len() == 1 {
                break;
            }
            let next: Vec<usize> = match &rule {
                None => {
                    let best = pool.iter().map(|&i| rows[i][t]).fold(f64::INFINITY, f64::min);
                    pool.iter().copied().filter(|&i| rows[i][t] == best).collect()
                }
                Some(passes) => pool.iter().copied().filter(|&i| passes[i][t]).collect(),
            };
            if !next.is_empty() {
                pool = next;
            }
        }
        let share = 1.0 / pool.len() as f64;
        for &i in &pool {
            prob[i] += share;
        }
    });
    for v in prob.iter_mut() {
        *v /= orderings as f64;
    }
    prob
}

/// Tournament with replacement: the winner's fitness group is the one whose
/// members are the minimum of `k` draws; tied members share equally.
fn tournament_probabilities(fitness: &[f64], k: usize) -> Vec<f64> {
    let p = fitness.len();
    let pf = p as f64;
    let mut prob = vec![0.0; p];
    let mut values: Vec<f64> = fitness.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut at_least = p;
    for v in values {
        let members: Vec<usize> = (0..p).filter(|&i| fitness[i] == v).collect();
        let above = at_least - members.len();
        let group = (at_least as f64 / pf).powi(k as i32) - (above as f64 / pf).powi(k as i32);
        for &i in &members {
            prob[i] = group / members.len() as f64;
        }
        at_least = above;
    }
    prob
}

/// Probability that each individual is selected in one event, averaged over
/// every case ordering (lexicase family) or computed in closed form
/// (tournament, random).
pub fn exact_selection_probabilities(
    errors: &ErrorMatrix,
    config: &SelectionConfig,
) -> Result<Vec<f64>, SelectionError> {
    config.validate()?;
    let p = errors.n_individuals();
    match config.method {
        m if m.is_lexicase() => {
            let n = errors.n_cases();
            if n > ORACLE_MAX_CASES {
                return Err(SelectionError::TooManyCases {
                    n,
                    max: ORACLE_MAX_CASES,
                });
            }
            let rows: Vec<Vec<f64>> = (0..p).map(|i| errors.row(i).to_vec()).collect();
            Ok(lexicase_probabilities(&rows, config))
        }
        Method::Tourn => Ok(tournament_probabilities(errors.fitness(), config.tournament_size)),
        _ => Ok(vec![1.0 / p as f64; p]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[Vec<f64>], method: Method) -> Vec<f64> {
        let m = ErrorMatrix::from_rows(rows).unwrap();
        exact_selection_probabilities(&m, &SelectionConfig::new(method)).unwrap()
    }

    #[test]
    fn permutation_count() {
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(4, |o| {
            seen.insert(o.to_vec());
        });
        assert_eq!(seen.len(), 24);
    }

    #[test]
    fn symmetric_specialists() {
        assert_eq!(probs(&[vec![0.0, 1.0], vec![1.0, 0.0]], Method::Lex), vec![0.5, 0.5]);
    }

    #[test]
    fn dominant_individual_always_wins() {
        let rows = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.5, 2.0], vec![0.5, 3.0, 0.1]];
        assert_eq!(probs(&rows, Method::Lex), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn identical_rows_uniform() {
        let rows = vec![vec![0.3, 0.6]; 4];
        for m in [Method::Lex, Method::LexEpsE, Method::LexEpsELambda, Method::Tourn, Method::Rand] {
            for v in probs(&rows, m) {
                assert!((v - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn three_way_hand_computation() {
        // case orders: (0,1) -> 0 ; (1,0) -> 1 ; individual 2 never wins
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(probs(&rows, Method::Lex), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn tournament_closed_form() {
        // distinct f, size 2 over 2 individuals: best wins unless both draws are the worst
        let rows = vec![vec![0.1], vec![0.9]];
        let p = probs(&rows, Method::Tourn);
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn too_many_cases() {
        let m = ErrorMatrix::from_rows(&[vec![0.0; 9]]).unwrap();
        assert_eq!(
            exact_selection_probabilities(&m, &SelectionConfig::new(Method::Lex)),
            Err(SelectionError::TooManyCases { n: 9, max: 8 })
        );
    }
}
