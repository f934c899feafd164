//! Parent selection.
//!
//! Lexicase selection and its four ε variants filter a selection pool case by
//! case. The ε variants compare each error against a per-case threshold that
//! is computed once per generation from the whole population (the elite
//! error `e*_t` and the median absolute deviation `λ(e_t)`), never from the
//! shrinking pool. Tournament and uniform random selection are the baselines.

mod lexicase;
mod matrix;
mod oracle;
mod tournament;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

pub use crate::metrics::mad;
pub use lexicase::{lexicase_select, Selector};
pub use matrix::{ErrorMatrix, PassMatrix};
pub use oracle::{exact_selection_probabilities, ORACLE_MAX_CASES};
pub use tournament::{random_select, tournament_select};

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("method {0} has no pass matrix")]
    NotEpsilon(Method),
    #[error("exact enumeration over {n} cases exceeds the limit of {max}")]
    TooManyCases { n: usize, max: usize },
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error("error matrix: {0}")]
    BadMatrix(String),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
}

/// Parent selection (and survival) scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Standard lexicase: pool-relative elitism per case.
    Lex,
    /// `e_t(i) <= e*_t (1 + ε_e)`
    LexEpsE,
    /// `e_t(i) < ε_y`
    LexEpsY,
    /// `e_t(i) <= e*_t + λ(e_t)`
    LexEpsELambda,
    /// `e_t(i) < λ(e_t)`
    LexEpsYLambda,
    Tourn,
    Rand,
    /// Age-fitness Pareto survival; breeding parents are chosen at random.
    Afp,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Rand,
        Method::Tourn,
        Method::Afp,
        Method::Lex,
        Method::LexEpsY,
        Method::LexEpsE,
        Method::LexEpsYLambda,
        Method::LexEpsELambda,
    ];

    pub fn is_lexicase(self) -> bool {
        matches!(
            self,
            Method::Lex
                | Method::LexEpsE
                | Method::LexEpsY
                | Method::LexEpsELambda
                | Method::LexEpsYLambda
        )
    }

    pub fn is_epsilon(self) -> bool {
        self.is_lexicase() && self != Method::Lex
    }

    /// Stable identifier used on the command line and in file names.
    pub fn key(self) -> &'static str {
        match self {
            Method::Lex => "lex",
            Method::LexEpsE => "lex-eps-e",
            Method::LexEpsY => "lex-eps-y",
            Method::LexEpsELambda => "lex-eps-e-lambda",
            Method::LexEpsYLambda => "lex-eps-y-lambda",
            Method::Tourn => "tourn",
            Method::Rand => "rand",
            Method::Afp => "afp",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Lex => "Lex",
            Method::LexEpsE => "Lex εe",
            Method::LexEpsY => "Lex εy",
            Method::LexEpsELambda => "Lex εeλ",
            Method::LexEpsYLambda => "Lex εyλ",
            Method::Tourn => "Tourn",
            Method::Rand => "Rand Sel",
            Method::Afp => "AFP",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Method {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.key() == norm)
            .ok_or_else(|| SelectionError::UnknownMethod(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionConfig {
    pub method: Method,
    pub eps_e: f64,
    pub eps_y: f64,
    pub tournament_size: usize,
}

impl SelectionConfig {
    pub fn new(method: Method) -> Self {
        SelectionConfig {
            method,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        if !(self.eps_e >= 0.0) || !(self.eps_y >= 0.0) {
            return Err(SelectionError::InvalidConfig(format!(
                "ε values must be non-negative (eps_e={}, eps_y={})",
                self.eps_e, self.eps_y
            )));
        }
        if self.tournament_size == 0 {
            return Err(SelectionError::InvalidConfig(
                "tournament size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            method: Method::LexEpsELambda,
            eps_e: 5.0,
            eps_y: 0.10,
            tournament_size: 2,
        }
    }
}

/// Outcome of one parent selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelectionEvent {
    pub index: usize,
    /// Fitness cases examined before the event resolved.
    pub cases_examined: usize,
    /// True when the winner came from a uniform pick among several survivors.
    pub tie_break: bool,
}

fn pick<R: Rng + ?Sized>(pool: &[usize], rng: &mut R) -> (usize, bool) {
    if pool.len() == 1 {
        (pool[0], false)
    } else {
        (pool[rng.random_range(0..pool.len())], true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_keys_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.key().parse::<Method>(), Ok(m));
        }
        assert_eq!("LEX_EPS_E_LAMBDA".parse::<Method>(), Ok(Method::LexEpsELambda));
        assert!("best".parse::<Method>().is_err());
    }

    #[test]
    fn default_parameters() {
        let c = SelectionConfig::default();
        assert_eq!((c.eps_e, c.eps_y, c.tournament_size), (5.0, 0.10, 2));
        assert!(c.validate().is_ok());
        let bad = SelectionConfig {
            eps_y: -1.0,
            ..c
        };
        assert!(bad.validate().is_err());
        let bad = SelectionConfig {
            tournament_size: 0,
            ..c
        };
        assert!(bad.validate().is_err());
    }
}
