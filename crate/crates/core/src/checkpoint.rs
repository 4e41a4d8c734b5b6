//! Versioned JSON checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distill::Trained;
use crate::error::{Error, Result};
use crate::method::Method;
use crate::model::{FeatureSchema, Network, TowerConfig};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

pub const FORMAT: &str = "posdistill-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub label: String,
    pub seed: u64,
    pub method: Method,
    pub schema: FeatureSchema,
    pub tower: TowerConfig,
    pub params: Vec<NamedTensor>,
}

/// A checkpoint rebound to a network, ready for scoring.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub label: String,
    pub seed: u64,
    pub method: Method,
    pub network: Network,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn from_parts(label: &str, seed: u64, method: &Method, net: &Network, params: &ParamStore) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            label: label.into(),
            seed,
            method: *method,
            schema: net.schema.clone(),
            tower: net.tower_config.clone(),
            params: params
                .ids()
                .map(|id| {
                    let t = params.value(id);
                    NamedTensor {
                        name: params.name(id).into(),
                        shape: t.shape().to_vec(),
                        values: t.values().to_vec(),
                    }
                })
                .collect(),
        }
    }

    pub fn from_trained(t: &Trained) -> Self {
        Self::from_parts(t.method.name().as_str(), t.seed, &t.method, &t.network, &t.params)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Artifact(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s).map_err(|e| Error::Artifact(e.to_string()))?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Artifact(format!(
                "unsupported checkpoint {}/{}, expected {FORMAT}/{VERSION}",
                ck.format, ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s).map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))
    }

    /// Rebuilds the parameter store and binds it. Unknown, missing or
    /// misshapen parameters are artifact errors.
    pub fn into_model(self) -> Result<LoadedModel> {
        self.method.validate().map_err(|e| Error::Artifact(e.to_string()))?;
        let mut store = ParamStore::new();
        for p in self.params {
            let t = Tensor::new(p.shape, p.values).map_err(|e| Error::Artifact(format!("{}: {e}", p.name)))?;
            store
                .insert(&p.name, t)
                .map_err(|e| Error::Artifact(e.to_string()))?;
        }
        let network = Network::bind(&self.schema, &self.tower, self.method.components(), &store)?;
        Ok(LoadedModel {
            label: self.label,
            seed: self.seed,
            method: self.method,
            network,
            params: store,
        })
    }

    /// Errors unless the checkpoint was trained for `schema`.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if &self.schema != schema {
            return Err(Error::Artifact(format!(
                "checkpoint {} was trained for a different feature schema",
                self.label
            )));
        }
        Ok(())
    }
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    Checkpoint::load(path)?.into_model()
}
