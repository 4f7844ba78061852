use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::embedding::EmbeddingError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::forest::ForestError;
use crate::geo::GeoError;
use crate::synth::SynthError;

/// Any pipeline failure, with a stable process exit code per kind.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact {}: {what}", path.display())]
    MissingArtifact { path: PathBuf, what: &'static str },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ForestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// `(kind, exit code)` for every error kind, in code order.
pub const EXIT_CODES: [(&str, i32); 10] = [
    ("config", 2),
    ("missing_artifact", 3),
    ("dataset", 4),
    ("geo", 5),
    ("embedding", 6),
    ("feature", 7),
    ("model", 8),
    ("eval", 9),
    ("synth", 10),
    ("io", 11),
];

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::Dataset(_) => "dataset",
            Error::Geo(_) => "geo",
            Error::Embedding(_) => "embedding",
            Error::Feature(_) => "feature",
            Error::Model(_) => "model",
            Error::Eval(_) => "eval",
            Error::Synth(_) => "synth",
            Error::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        let kind = self.kind();
        EXIT_CODES.iter().find(|(k, _)| *k == kind).map_or(1, |(_, c)| *c)
    }

    /// One-line JSON rendering for machine consumers.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "code": self.exit_code(), "message": self.to_string() }).to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct() {
        let mut codes: Vec<i32> = EXIT_CODES.iter().map(|(_, c)| *c).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), EXIT_CODES.len());
        assert!(!codes.contains(&0) && !codes.contains(&1));
    }

    #[test]
    fn json_line_is_single_line() {
        let e = Error::Config("bad\nkey".into());
        let line = e.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["code"], 2);
        assert_eq!(v["error"], "config");
    }
}
