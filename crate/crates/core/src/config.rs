//! Run configuration: TOML file, serde defaults, flag overrides on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{BaselineKind, DEFAULT_DROPOUT_RATE};
use crate::data::GenConfig;
use crate::distill::{DistillConfig, TrainConfig, DEFAULT_LAMBDA_GRID};
use crate::error::{Error, Result};
use crate::method::{Method, ModelName};
use crate::model::{FeatureSchema, TowerConfig};

pub const OUT_ENV: &str = "POSDISTILL_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineOptions {
    pub dropout_rate: f64,
    /// Pin PAL's seen probability at 1 (ablation).
    pub pal_freeze_seen: bool,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            dropout_rate: DEFAULT_DROPOUT_RATE,
            pal_freeze_seen: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub grid: Vec<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            grid: DEFAULT_LAMBDA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Dataset directory; `<out>/data` when unset.
    pub data: Option<PathBuf>,
    /// Output root; `$POSDISTILL_OUT` or `./runs` when unset.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: FeatureSchema,
    pub tower: TowerConfig,
    pub train: TrainConfig,
    pub gen: GenConfig,
    pub distill: DistillConfig,
    pub baseline: BaselineOptions,
    pub sweep: SweepOptions,
    pub seeds: Vec<u64>,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: FeatureSchema::default(),
            tower: TowerConfig::default(),
            train: TrainConfig::default(),
            gen: GenConfig::default(),
            distill: DistillConfig::default(),
            baseline: BaselineOptions::default(),
            sweep: SweepOptions::default(),
            seeds: (0..5).collect(),
            paths: Paths::default(),
        }
    }
}

fn cfg_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(cfg_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(cfg_err)
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate().map_err(cfg_err)?;
        self.tower.validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        self.gen.validate().map_err(cfg_err)?;
        self.distill.validate().map_err(cfg_err)?;
        self.baseline_kind(ModelName::PosDropout).validate().map_err(cfg_err)?;
        if self.sweep.grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Config("sweep grid values must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn out_root(&self) -> PathBuf {
        self.paths
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.paths.data.clone().unwrap_or_else(|| self.out_root().join("data"))
    }

    fn baseline_kind(&self, name: ModelName) -> BaselineKind {
        match name {
            ModelName::FixedPos => BaselineKind::FixedPosition,
            ModelName::PosDropout => BaselineKind::PosDropout {
                dropout_rate: self.baseline.dropout_rate,
            },
            ModelName::Pal => BaselineKind::Pal {
                freeze_seen: self.baseline.pal_freeze_seen,
            },
            _ => BaselineKind::Backbone,
        }
    }

    pub fn method(&self, name: ModelName) -> Method {
        match name {
            ModelName::Ours => Method::Distill(self.distill),
            other => Method::Baseline(self.baseline_kind(other)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn roundtrip_and_hash() {
        let mut c = RunConfig::default();
        c.train.epochs = 7;
        c.distill.lambda = 0.2;
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(c.hash(), RunConfig::default().hash());
    }

    #[test]
    fn unknown_key_is_config_error() {
        let e = RunConfig::from_toml("[train]\nepochz = 3\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn missing_file_names_path() {
        let e = RunConfig::load(Path::new("/nonexistent/run.toml")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/run.toml"));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.sweep.grid, vec![0.01, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert!(c.validate().is_ok());
    }
}
