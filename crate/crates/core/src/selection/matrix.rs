use crate::metrics::mad_in_place;

use super::{Method, SelectionConfig, SelectionError};

/// Absolute errors of a population on every training case, with the
/// per-case statistics the ε pass conditions need.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMatrix {
    n_individuals: usize,
    n_cases: usize,
    /// Row-major, one row per individual.
    errors: Vec<f64>,
    elite: Vec<f64>,
    mad: Vec<f64>,
    fitness: Vec<f64>,
}

#[inline]
fn clamp_finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::MAX
    }
}

impl ErrorMatrix {
    /// `e_t(i) = |y_t - ŷ_t(i)|` for every individual's output vector.
    pub fn build<V: AsRef<[f64]>>(outputs: &[V], targets: &[f64]) -> Self {
        let n = targets.len();
        let mut errors = Vec::with_capacity(outputs.len() * n);
        for out in outputs {
            let out = out.as_ref();
            assert_eq!(out.len(), n, "output vector length must match targets");
            errors.extend(out.iter().zip(targets).map(|(p, y)| clamp_finite((y - p).abs())));
        }
        Self::from_flat(outputs.len(), n, errors)
    }

    /// Builds from explicit error rows, e.g. for analysis or testing.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SelectionError> {
        let p = rows.len();
        if p == 0 {
            return Err(SelectionError::BadMatrix("no individuals".into()));
        }
        let n = rows[0].len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(SelectionError::BadMatrix("rows must share a nonzero length".into()));
        }
        if rows.iter().flatten().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(SelectionError::BadMatrix("errors must be finite and non-negative".into()));
        }
        Ok(Self::from_flat(p, n, rows.concat()))
    }

    fn from_flat(n_individuals: usize, n_cases: usize, errors: Vec<f64>) -> Self {
        let mut elite = vec![f64::INFINITY; n_cases];
        for row in errors.chunks_exact(n_cases.max(1)) {
            for (e, &v) in elite.iter_mut().zip(row) {
                if v < *e {
                    *e = v;
                }
            }
        }
        let mut column = vec![0.0; n_individuals];
        let mad = (0..n_cases)
            .map(|t| {
                for (i, c) in column.iter_mut().enumerate() {
                    *c = errors[i * n_cases + t];
                }
                mad_in_place(&mut column)
            })
            .collect();
        let fitness = errors
            .chunks_exact(n_cases.max(1))
            .map(|row| clamp_finite(row.iter().sum::<f64>() / n_cases as f64))
            .collect();
        ErrorMatrix {
            n_individuals,
            n_cases,
            errors,
            elite,
            mad,
            fitness,
        }
    }

    pub fn n_individuals(&self) -> usize {
        self.n_individuals
    }

    pub fn n_cases(&self) -> usize {
        self.n_cases
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.errors[i * self.n_cases + t]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.errors[i * self.n_cases..(i + 1) * self.n_cases]
    }

    /// Per-case minimum error over the population, `e*_t`.
    pub fn elite(&self) -> &[f64] {
        &self.elite
    }

    /// Per-case median absolute deviation over the population, `λ(e_t)`.
    pub fn mad(&self) -> &[f64] {
        &self.mad
    }

    /// Per-individual mean absolute error.
    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    /// Index of the lowest aggregate error (first on ties).
    pub fn best(&self) -> usize {
        self.fitness
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty population")
    }
}

/// Which individuals pass which cases under an ε pass condition.
#[derive(Clone, Debug, PartialEq)]
pub struct PassMatrix {
    method: Method,
    n_individuals: usize,
    n_cases: usize,
    pass: Vec<bool>,
    thresholds: Vec<f64>,
}

impl PassMatrix {
    pub fn build(errors: &ErrorMatrix, config: &SelectionConfig) -> Result<Self, SelectionError> {
        let n = errors.n_cases();
        let (thresholds, inclusive): (Vec<f64>, bool) = match config.method {
            Method::LexEpsE => (
                errors.elite().iter().map(|e| e * (1.0 + config.eps_e)).collect(),
                true,
            ),
            Method::LexEpsY => (vec![config.eps_y; n], false),
            Method::LexEpsELambda => (
                errors
                    .elite()
                    .iter()
                    .zip(errors.mad())
                    .map(|(e, l)| e + l)
                    .collect(),
                true,
            ),
            Method::LexEpsYLambda => (errors.mad().to_vec(), false),
            other => return Err(SelectionError::NotEpsilon(other)),
        };
        let pass = errors
            .errors
            .chunks_exact(n)
            .flat_map(|row| {
                row.iter().zip(&thresholds).map(move |(&e, &thr)| {
                    if inclusive {
                        e <= thr
                    } else {
                        e < thr
                    }
                })
            })
            .collect();
        Ok(PassMatrix {
            method: config.method,
            n_individuals: errors.n_individuals(),
            n_cases: n,
            pass,
            thresholds,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    #[inline]
    pub fn passes(&self, i: usize, t: usize) -> bool {
        self.pass[i * self.n_cases + t]
    }

    /// Per-case threshold the errors were compared against.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn n_individuals(&self) -> usize {
        self.n_individuals
    }

    pub fn n_cases(&self) -> usize {
        self.n_cases
    }

    /// Number of individuals passing case `t`.
    pub fn passers(&self, t: usize) -> usize {
        (0..self.n_individuals).filter(|&i| self.passes(i, t)).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(method: Method) -> SelectionConfig {
        SelectionConfig::new(method)
    }

    fn column(errors: &[f64]) -> ErrorMatrix {
        let rows: Vec<Vec<f64>> = errors.iter().map(|&e| vec![e]).collect();
        ErrorMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn build_examples() {
        let y = [0.0, 0.0];
        let m = ErrorMatrix::build(&[vec![0.0, 0.0], vec![1.0, 2.0]], &y);
        assert_eq!(m.row(0), &[0.0, 0.0]);
        assert_eq!(m.fitness()[0], 0.0);
        assert_eq!(m.row(1), &[1.0, 2.0]);
        assert_eq!(m.fitness()[1], 1.5);

        let m = ErrorMatrix::from_rows(&[vec![1.0, 3.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(m.elite(), &[1.0, 0.0]);
        assert_eq!(m.mad(), &[0.5, 1.5]);
    }

    #[test]
    fn overflowing_outputs_stay_finite() {
        let m = ErrorMatrix::build(&[vec![f64::MAX, -f64::MAX]], &[-f64::MAX, f64::MAX]);
        assert!(m.row(0).iter().all(|e| e.is_finite()));
        assert!(m.fitness()[0].is_finite());
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(ErrorMatrix::from_rows(&[]).is_err());
        assert!(ErrorMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(ErrorMatrix::from_rows(&[vec![-1.0]]).is_err());
        assert!(ErrorMatrix::from_rows(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn eps_e_threshold() {
        let pm = PassMatrix::build(&column(&[1.0, 3.0, 7.0]), &cfg(Method::LexEpsE)).unwrap();
        assert_eq!(pm.thresholds(), &[6.0]);
        assert_eq!((pm.passes(0, 0), pm.passes(1, 0), pm.passes(2, 0)), (true, true, false));
    }

    #[test]
    fn eps_e_lambda_equal_column_all_pass() {
        let m = column(&[0.4, 0.4, 0.4]);
        let pm = PassMatrix::build(&m, &cfg(Method::LexEpsELambda)).unwrap();
        assert_eq!(m.mad(), &[0.0]);
        assert_eq!(pm.passers(0), 3);
        // zero elite error: the elite still passes its own case
        let pm = PassMatrix::build(&column(&[0.0, 0.5]), &cfg(Method::LexEpsE)).unwrap();
        assert!(pm.passes(0, 0));
        assert!(!pm.passes(1, 0));
    }

    #[test]
    fn eps_y_strict() {
        let pm = PassMatrix::build(&column(&[0.05, 0.10, 0.2]), &cfg(Method::LexEpsY)).unwrap();
        assert_eq!((pm.passes(0, 0), pm.passes(1, 0), pm.passes(2, 0)), (true, false, false));
    }

    #[test]
    fn eps_y_lambda_uses_mad() {
        // median 3, deviations (2,1,0,1,2): λ = 1; strict
        let pm = PassMatrix::build(&column(&[1.0, 2.0, 3.0, 4.0, 5.0]), &cfg(Method::LexEpsYLambda)).unwrap();
        assert_eq!(pm.thresholds(), &[1.0]);
        assert_eq!(pm.passers(0), 0);
        let pm = PassMatrix::build(&column(&[0.0, 0.5, 3.0, 4.0, 5.0]), &cfg(Method::LexEpsYLambda)).unwrap();
        assert_eq!(pm.passers(0), 2);
    }

    #[test]
    fn non_epsilon_methods_have_no_pass_matrix() {
        let m = column(&[1.0]);
        for method in [Method::Lex, Method::Tourn, Method::Rand, Method::Afp] {
            assert_eq!(
                PassMatrix::build(&m, &cfg(method)),
                Err(SelectionError::NotEpsilon(method))
            );
        }
    }

    fn small_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..8, 1usize..6).prop_flat_map(|(p, n)| {
            prop::collection::vec(prop::collection::vec(0f64..10.0, n), p)
        })
    }

    proptest! {
        #[test]
        fn matrix_invariants(rows in small_matrix()) {
            let m = ErrorMatrix::from_rows(&rows).unwrap();
            for t in 0..m.n_cases() {
                prop_assert!(m.mad()[t] >= 0.0);
                for i in 0..m.n_individuals() {
                    prop_assert!(m.elite()[t] <= m.get(i, t));
                }
            }
            for method in [Method::LexEpsE, Method::LexEpsELambda] {
                let pm = PassMatrix::build(&m, &cfg(method)).unwrap();
                for t in 0..m.n_cases() {
                    prop_assert!(pm.passers(t) >= 1);
                    for i in 0..m.n_individuals() {
                        if m.get(i, t) == m.elite()[t] {
                            prop_assert!(pm.passes(i, t));
                        }
                    }
                }
            }
        }

        #[test]
        fn raising_epsilon_only_adds_passes(rows in small_matrix(), lo in 0f64..3.0, extra in 0f64..3.0) {
            let m = ErrorMatrix::from_rows(&rows).unwrap();
            for method in [Method::LexEpsE, Method::LexEpsY] {
                let a = PassMatrix::build(&m, &SelectionConfig { method, eps_e: lo, eps_y: lo, ..Default::default() }).unwrap();
                let b = PassMatrix::build(&m, &SelectionConfig { method, eps_e: lo + extra, eps_y: lo + extra, ..Default::default() }).unwrap();
                for i in 0..m.n_individuals() {
                    for t in 0..m.n_cases() {
                        prop_assert!(!a.passes(i, t) || b.passes(i, t));
                    }
                }
            }
        }
    }
}
