use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureSchema, SplitFractions, SyntheticConfig, TimeFormat};
use crate::model::ModelConfig;
use crate::stgraph::GraphConfig;
use crate::trainer::{Strategy, TrainConfig};

use super::ExperimentError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Path {
        path: PathBuf,
        #[serde(default)]
        time_format: TimeFormat,
    },
    Synthetic(SyntheticConfig),
}

/// One reproducible run. `seed` initializes the model and overrides `train.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub schema: FeatureSchema,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    /// Default synthetic benchmark with the given seed.
    pub fn synthetic(seed: u64) -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticConfig::default()),
            split: SplitFractions::default(),
            schema: FeatureSchema::default(),
            graph: GraphConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            strategy: Strategy::Ignore,
            out_dir: None,
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }

    /// Applies `key.path=value` overrides. Values parse as JSON, falling back to a string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ExperimentError> {
        let mut value = self.to_json();
        for o in overrides {
            set_path(&mut value, o.as_ref())?;
        }
        serde_json::from_value(value).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.graph.validate()?;
        self.model.validate()?;
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        }
        if !(self.train.adam.lr > 0.0) {
            return Err(ExperimentError::Config("train.adam.lr must be positive".into()));
        }
        Ok(())
    }
}

pub fn set_path(root: &mut serde_json::Value, assignment: &str) -> Result<(), ExperimentError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ExperimentError::Config(format!("override {assignment:?} is not key=value")))?;
    let new: serde_json::Value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| ExperimentError::Config(format!("{path}: {key:?} is not inside an object")))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), new);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert_with(|| serde_json::json!({}));
    }
    unreachable!("split yields at least one key")
}
