//! Bagged CART regression forest with impurity importances, least-squares
//! baselines and the versioned model file.

mod ensemble;
mod linear;
mod model_file;
pub mod tree;

use thiserror::Error;

pub use ensemble::{fit_forest, tree_rng, Forest, ForestParams};
pub use linear::{fit_linear, fit_linear_on, identifiable_columns, LinearModel};
pub use model_file::{Model, ModelKind, TrainedModel, MODEL_FORMAT_VERSION};
pub use tree::{fit_tree, TreeNode, TreeParams};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("{rows} feature rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unsupported model format version {0}")]
    UnsupportedFormat(u64),
    #[error("model file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
