//! Persisted classifier: network parameters together with the feature
//! layout, vectorizer options and scaler it was trained against.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{GroupSet, Scaler, VectorizerOptions};
use crate::mlp::{predict_proba, MlpError, NetworkState, Prediction};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("unsupported model format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("layout mismatch: {0}")]
    Layout(String),
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub groups: GroupSet,
    /// Column names in input order, frozen at training time.
    pub feature_names: Vec<String>,
    pub vectorizer: VectorizerOptions,
    pub scaler: Scaler,
    pub network: NetworkState,
}

impl ModelArtifact {
    pub fn new(
        groups: GroupSet,
        vectorizer: VectorizerOptions,
        scaler: Scaler,
        network: NetworkState,
    ) -> Result<Self, ModelError> {
        let m = ModelArtifact {
            format_version: FORMAT_VERSION,
            groups,
            feature_names: groups.dimension_names(),
            vectorizer,
            scaler,
            network,
        };
        m.check_layout()?;
        Ok(m)
    }

    pub fn check_layout(&self) -> Result<(), ModelError> {
        let width = self.groups.width();
        if self.scaler.groups != self.groups {
            return Err(ModelError::Layout(format!(
                "scaler fitted on {} but model uses {}",
                self.scaler.groups, self.groups
            )));
        }
        if self.scaler.mean.len() != width || self.network.input_dim() != width {
            return Err(ModelError::Layout(format!(
                "{} expects {width} inputs, scaler has {}, network has {}",
                self.groups,
                self.scaler.mean.len(),
                self.network.input_dim()
            )));
        }
        if self.feature_names != self.groups.dimension_names() {
            return Err(ModelError::Layout("feature names differ from the group layout".into()));
        }
        Ok(())
    }

    pub fn predict(&self, raw: &[f64]) -> Result<Prediction, ModelError> {
        Ok(predict_proba(&self.network, &self.scaler, raw)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string(self).map_err(|e| ModelError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, json).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let m: ModelArtifact = serde_json::from_str(&text).map_err(|e| ModelError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if m.format_version != FORMAT_VERSION {
            return Err(ModelError::Version(m.format_version));
        }
        m.check_layout()?;
        Ok(m)
    }
}
