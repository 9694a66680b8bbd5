//! Novelty ranking by incremental-SVD reconstruction error.
//!
//! Items are selected greedily by how poorly a model of the previously
//! selected items reconstructs them. Each selection comes with an
//! explanation: the part the model could represent and the residual it
//! could not. The [`eval`] module measures how quickly a ranking discovers
//! the classes present in labeled data.

pub mod cli;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod io;
pub mod linalg;
pub mod manifest;
pub mod sampling;
pub mod selectors;
pub mod subspace;

pub use error::{Error, Result};
pub use explain::Explanation;
pub use selectors::{Method, RankingResult, SelectionRecord};
pub use subspace::{FeatureKind, FeatureMatrix, SubspaceModel};
