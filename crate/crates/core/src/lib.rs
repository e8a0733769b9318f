//! Staged tree models for categorical data with missing values: likelihoods
//! and pseudo-likelihoods, greedy structure search, EM variants, simulation
//! and a benchmark harness.

pub mod benchmark;
pub mod data;
pub mod em;
pub mod error;
pub mod likelihood;
pub mod metrics;
pub mod model_io;
pub mod search;
pub mod simulate;
pub mod trees;

pub use data::{read_csv, CsvOptions, DataSet, Sample};
pub use error::{Error, Result};
pub use likelihood::LikKind;
pub use trees::{build_event_tree, EventTree, StagedTreeModel, Staging, Theta, VariableSpec};
