use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Forest, ForestError, LinearModel};
use crate::features::{FeatureMatrix, ScalerParams};

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Forest,
    Linear,
    Ridge,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Linear => "linear",
            ModelKind::Ridge => "ridge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Forest(Forest),
    Linear(LinearModel),
}

/// A fitted model with everything needed to score raw feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub format_version: u64,
    pub feature_names: Vec<String>,
    /// Scaler fitted on the training rows, if features were scaled.
    pub scaler: Option<ScalerParams>,
    /// Checksum of the embedding the features were assembled from.
    pub embedding_ref: Option<String>,
    pub model: Model,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

impl TrainedModel {
    pub fn new(
        feature_names: Vec<String>,
        scaler: Option<ScalerParams>,
        embedding_ref: Option<String>,
        model: Model,
    ) -> Self {
        Self { format_version: MODEL_FORMAT_VERSION, feature_names, scaler, embedding_ref, model }
    }

    pub fn forest(&self) -> Option<&Forest> {
        match &self.model {
            Model::Forest(f) => Some(f),
            Model::Linear(_) => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.model {
            Model::Forest(_) => "forest",
            Model::Linear(m) if m.ridge_lambda > 0.0 => "ridge",
            Model::Linear(_) => "linear",
        }
    }

    /// Predicts already-scaled rows; columns must match the training layout.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ForestError> {
        if x.columns != self.feature_names {
            return Err(ForestError::SchemaMismatch(format!(
                "model expects {} columns [{}...], matrix has {}",
                self.feature_names.len(),
                self.feature_names.first().map_or("", String::as_str),
                x.columns.len()
            )));
        }
        Ok(self.predict_values(&x.values))
    }

    fn predict_values(&self, values: &[f64]) -> Vec<f64> {
        let p = self.feature_names.len();
        match &self.model {
            Model::Forest(f) => f.predict_values(values, p),
            Model::Linear(m) => m.predict_values(values, p),
        }
    }

    /// Scales raw row-major values with the stored scaler, then predicts.
    pub fn predict_raw(&self, values: &[f64]) -> Result<Vec<f64>, ForestError> {
        let p = self.feature_names.len();
        if p == 0 || !values.len().is_multiple_of(p) {
            return Err(ForestError::SchemaMismatch(format!(
                "{} values is not a multiple of {p} columns",
                values.len()
            )));
        }
        let mut scaled = values.to_vec();
        if let Some(s) = &self.scaler {
            scaled.chunks_exact_mut(p).for_each(|r| s.scale_row(r));
        }
        Ok(self.predict_values(&scaled))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ForestError> {
        fn parser(text: &str) -> serde_json::Deserializer<serde_json::de::StrRead<'_>> {
            let mut de = serde_json::Deserializer::from_str(text);
            de.disable_recursion_limit();
            de
        }
        let probe = VersionProbe::deserialize(&mut parser(text)).map_err(|e| ForestError::Format(e.to_string()))?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(ForestError::UnsupportedFormat(probe.format_version));
        }
        let model = Self::deserialize(&mut parser(text)).map_err(|e| ForestError::Format(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ForestError> {
        let p = self.feature_names.len();
        if let Some(s) = &self.scaler {
            if s.columns != self.feature_names {
                return Err(ForestError::Format("scaler columns differ from feature names".into()));
            }
        }
        match &self.model {
            Model::Forest(f) => {
                if f.trees.is_empty() {
                    return Err(ForestError::Format("forest has no trees".into()));
                }
                if f.importances.len() != p || f.trees.iter().any(|t| t.max_feature().is_some_and(|m| m >= p)) {
                    return Err(ForestError::Format("forest refers to features beyond the schema".into()));
                }
            }
            Model::Linear(m) => {
                if m.coefficients.len() != p {
                    return Err(ForestError::Format("coefficient count differs from feature names".into()));
                }
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), ForestError> {
        w.write_all(self.to_json().as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, ForestError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ForestError> {
        self.write(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, ForestError> {
        Self::read(std::fs::File::open(path)?)
    }
}
