//! Age-fitness Pareto survival.
//!
//! Candidates are points `(age, error)`, both minimized. Survival follows
//! SPEA2 environmental selection: nondominated candidates are kept first,
//! the remainder is filled by lowest SPEA2 fitness, and an oversized
//! nondominated set is truncated by repeatedly removing the candidate
//! closest to its neighbors.
//!
//! Density distances use objectives rescaled to `[0, 1]` over the pool.

use std::cmp::Ordering;

/// Objective vector `(age, error)`.
pub type Objectives = (f64, f64);

/// `a` dominates `b`: no worse in both objectives and strictly better in one.
pub fn dominates(a: Objectives, b: Objectives) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spea2Score {
    /// Number of candidates this one dominates.
    pub strength: usize,
    /// Sum of the strengths of this candidate's dominators.
    pub raw: f64,
    /// `1 / (σ_k + 2)`.
    pub density: f64,
    /// `raw + density`; below 1 exactly when nondominated.
    pub fitness: f64,
}

fn normalized(points: &[Objectives]) -> Vec<Objectives> {
    let range = |f: fn(&Objectives) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi - lo)
    };
    let (lo0, r0) = range(|p| p.0);
    let (lo1, r1) = range(|p| p.1);
    let scale = |v: f64, lo: f64, r: f64| if r > 0.0 && r.is_finite() { (v - lo) / r } else { 0.0 };
    points
        .iter()
        .map(|p| (scale(p.0, lo0, r0), scale(p.1, lo1, r1)))
        .collect()
}

fn distance(a: Objectives, b: Objectives) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Neighbor count for the density estimate: `floor(sqrt(pool size))`.
pub fn density_k(pool: usize) -> usize {
    (pool as f64).sqrt().floor() as usize
}

pub fn spea2_fitness(points: &[Objectives]) -> Vec<Spea2Score> {
    let n = points.len();
    let strength: Vec<usize> = points
        .iter()
        .map(|&a| points.iter().filter(|&&b| dominates(a, b)).count())
        .collect();
    let norm = normalized(points);
    let k = density_k(n).min(n.saturating_sub(1));
    (0..n)
        .map(|i| {
            let raw: f64 = (0..n)
                .filter(|&j| dominates(points[j], points[i]))
                .map(|j| strength[j] as f64)
                .sum();
            let sigma = if k == 0 {
                0.0
            } else {
                let mut d: Vec<f64> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| distance(norm[i], norm[j]))
                    .collect();
                d.select_nth_unstable_by(k - 1, f64::total_cmp);
                d[k - 1]
            };
            let density = 1.0 / (sigma + 2.0);
            Spea2Score {
                strength: strength[i],
                raw,
                density,
                fitness: raw + density,
            }
        })
        .collect()
}

/// Removes members of `set` one at a time until `capacity` remain. Each
/// round drops the member whose sorted neighbor distances are
/// lexicographically smallest (lowest index on exact ties).
fn truncate(set: &mut Vec<usize>, norm: &[Objectives], capacity: usize) {
    let mut lists: Vec<Vec<(f64, usize)>> = set
        .iter()
        .map(|&i| {
            let mut l: Vec<(f64, usize)> = set
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (distance(norm[i], norm[j]), j))
                .collect();
            l.sort_by(|a, b| a.0.total_cmp(&b.0));
            l
        })
        .collect();
    while set.len() > capacity {
        let mut victim = 0;
        for pos in 1..set.len() {
            let ord = lists[pos]
                .iter()
                .map(|e| e.0)
                .cmp_by_total(lists[victim].iter().map(|e| e.0));
            if ord == Ordering::Less {
                victim = pos;
            }
        }
        let removed = set.remove(victim);
        lists.remove(victim);
        for l in lists.iter_mut() {
            if let Some(p) = l.iter().position(|e| e.1 == removed) {
                l.remove(p);
            }
        }
    }
}

trait CmpByTotal: Iterator<Item = f64> + Sized {
    fn cmp_by_total<I: Iterator<Item = f64>>(self, other: I) -> Ordering {
        let mut a = self;
        let mut b = other;
        loop {
            match (a.next(), b.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some(x), Some(y)) => match x.total_cmp(&y) {
                    Ordering::Equal => continue,
                    o => return o,
                },
            }
        }
    }
}

impl<I: Iterator<Item = f64>> CmpByTotal for I {}

/// Indices (ascending) of the `capacity` survivors of `points`.
pub fn environmental_select(points: &[Objectives], capacity: usize) -> Vec<usize> {
    assert!(capacity >= 1, "capacity must be at least 1");
    if points.len() <= capacity {
        return (0..points.len()).collect();
    }
    let scores = spea2_fitness(points);
    let mut chosen: Vec<usize> = (0..points.len()).filter(|&i| scores[i].raw == 0.0).collect();
    if chosen.len() <= capacity {
        let mut dominated: Vec<usize> = (0..points.len()).filter(|&i| scores[i].raw > 0.0).collect();
        dominated.sort_by(|&a, &b| scores[a].fitness.total_cmp(&scores[b].fitness).then(a.cmp(&b)));
        chosen.extend(dominated.into_iter().take(capacity - chosen.len()));
    } else {
        truncate(&mut chosen, &normalized(points), capacity);
    }
    chosen.sort_unstable();
    chosen
}

/// What AFP needs to know about a population member.
pub trait AfpMember {
    fn age(&self) -> u32;
    /// Aggregate training error.
    fn error(&self) -> f64;
    fn grow_older(&mut self);
}

/// Engine-side operations AFP delegates to.
pub trait AfpHooks<T> {
    /// Breeds `n` children from uniformly random parents.
    fn breed(&mut self, parents: &[T], n: usize) -> Vec<T>;
    /// A fresh random individual with age 0.
    fn random_individual(&mut self) -> T;
}

#[derive(Debug)]
pub struct AfpGeneration<T> {
    pub survivors: Vec<T>,
    /// Candidates that entered environmental selection.
    pub pool_size: usize,
}

/// One AFP generation: breed `|P|` children, inject one random individual,
/// run environmental selection over parents, children and the newcomer,
/// keep the lowest-error candidate, then age every survivor by one.
pub fn afp_generation<T, H>(population: Vec<T>, hooks: &mut H) -> AfpGeneration<T>
where
    T: AfpMember,
    H: AfpHooks<T>,
{
    let capacity = population.len();
    assert!(capacity > 0, "empty population");
    let children = hooks.breed(&population, capacity);
    let mut pool = population;
    pool.extend(children);
    pool.push(hooks.random_individual());
    let pool_size = pool.len();

    let points: Vec<Objectives> = pool.iter().map(|m| (m.age() as f64, m.error())).collect();
    let mut keep = environmental_select(&points, capacity);

    let best = (0..pool_size)
        .min_by(|&a, &b| {
            points[a]
                .1
                .total_cmp(&points[b].1)
                .then(points[a].0.total_cmp(&points[b].0))
        })
        .expect("nonempty pool");
    if !keep.contains(&best) {
        let scores = spea2_fitness(&points);
        let worst = (0..keep.len())
            .max_by(|&a, &b| scores[keep[a]].fitness.total_cmp(&scores[keep[b]].fitness))
            .expect("nonempty survivors");
        keep[worst] = best;
        keep.sort_unstable();
    }

    let mut slots: Vec<Option<T>> = pool.into_iter().map(Some).collect();
    let survivors = keep
        .into_iter()
        .map(|i| {
            let mut m = slots[i].take().expect("distinct survivor indices");
            m.grow_older();
            m
        })
        .collect();
    AfpGeneration {
        survivors,
        pool_size,
    }
}
