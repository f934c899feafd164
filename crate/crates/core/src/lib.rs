//! Genetic-programming symbolic regression with lexicase and ε-lexicase
//! parent selection.
//!
//! * [`expr`] – expression-tree programs, evaluation and variation operators
//! * [`data`] – CSV datasets, train/test splitting, UBall5D
//! * [`selection`] – error matrices, pass conditions and all parent selectors
//! * [`afp`] – age-fitness Pareto survival (SPEA2 environmental selection)
//! * [`engine`] – the generational loop and its run log
//! * [`experiment`] – batch runs over methods and trials with CSV output

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod afp;
pub mod data;
pub mod engine;
pub mod experiment;
pub mod expr;
pub mod metrics;
pub mod selection;

pub use data::{Dataset, SplitDataset};
pub use engine::{run_trial, EngineConfig, GenerationRecord, RunLog};
pub use expr::{Program, SizeLimits};
pub use selection::{ErrorMatrix, Method, PassMatrix, SelectionConfig, SelectionEvent};
