use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureError, GroupSet};

/// Per-dimension standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    pub groups: GroupSet,
}

const CONSTANT_STD: f64 = 1e-12;

impl Scaler {
    pub fn fit<V: AsRef<[f64]>>(groups: GroupSet, train: &[V]) -> Result<Self, FeatureError> {
        let dim = groups.width();
        if train.is_empty() {
            return Err(FeatureError::EmptyTrainingSet);
        }
        let mut mean = vec![0.0; dim];
        for row in train {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(FeatureError::DimensionMismatch(dim, row.len()));
            }
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        let n = train.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in train {
            for ((v, x), m) in var.iter_mut().zip(row.as_ref()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Scaler { mean, std, groups })
    }

    /// Dimensions with (near) zero spread are centered only.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if x.len() != self.mean.len() {
            return Err(FeatureError::DimensionMismatch(self.mean.len(), x.len()));
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s < CONSTANT_STD { v - m } else { (v - m) / s })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| FeatureError::Encoding(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| FeatureError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path).map_err(|e| FeatureError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| FeatureError::Encoding(e.to_string()))
    }
}
