//! Multi-instance domain adaptation: a sparse max-rule logistic classifier
//! over bags of keyword-count instances, pulled toward a single-class source
//! domain by a generalized MMD penalty and fitted with ADMM.

pub mod cli;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mmd;
pub mod model;
pub mod solver;
pub mod synth;

pub use error::{MidaError, Result};
pub use mmd::{MmdWeights, PartitionPlan};
pub use model::{Coefficients, Dataset, DesignMatrix, Hyperparams, KeywordVocabulary, ReportSet, UserBag};
pub use solver::{fit, predict, Model, SolveTrace};
