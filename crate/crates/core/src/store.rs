//! Trained models on disk, one JSON file per target, so training and
//! recommending can run as separate processes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::scalar::Scalar;

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Envelope<T> {
    version: u32,
    target: String,
    model: TrainedModel<T>,
}

#[derive(Debug, Clone)]
pub struct ModelStore {
    root: PathBuf,
}

impl ModelStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// File holding the model of `target`.
    pub fn path(&self, target: &str) -> PathBuf {
        let safe: String = target
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        self.root.join(format!("{safe}.json"))
    }

    pub fn save<T: Scalar>(&self, target: &str, model: &TrainedModel<T>) -> Result<PathBuf> {
        let path = self.path(target);
        let env = Envelope {
            version: STORE_VERSION,
            target: target.to_string(),
            model: model.clone(),
        };
        let json = serde_json::to_string_pretty(&env).map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load<T: Scalar>(&self, target: &str) -> Result<TrainedModel<T>> {
        let path = self.path(target);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let env: Envelope<T> =
            serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;
        if env.version != STORE_VERSION {
            return Err(Error::parse(
                &path,
                format!("store version {} (expected {STORE_VERSION})", env.version),
            ));
        }
        if env.target != target {
            return Err(Error::parse(
                &path,
                format!("holds a model for `{}`, not `{target}`", env.target),
            ));
        }
        Ok(env.model)
    }
}
