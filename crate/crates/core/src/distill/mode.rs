use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum DistillVariant {
    /// Soft-label cross entropy against the teacher's prediction.
    Logit,
    /// Squared error between teacher and student encoder outputs.
    Feature,
    None,
}

impl DistillVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            DistillVariant::Logit => "logit",
            DistillVariant::Feature => "feature",
            DistillVariant::None => "none",
        }
    }
}

/// How the feature term is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLoss {
    /// `‖z_s − z_t‖² / dim`
    #[default]
    Mean,
    /// `‖z_s − z_t‖²`
    SquaredNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub mode: DistillVariant,
    pub lambda: f64,
    /// Detach the teacher's outputs inside the distillation term.
    pub teacher_stop_gradient: bool,
    pub feature_loss: FeatureLoss,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            mode: DistillVariant::Logit,
            lambda: 1.0,
            teacher_stop_gradient: true,
            feature_loss: FeatureLoss::Mean,
        }
    }
}

impl DistillConfig {
    pub fn new(mode: DistillVariant, lambda: f64) -> Result<Self> {
        let cfg = DistillConfig {
            mode,
            lambda,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// λ as applied; `None` mode always contributes nothing.
    pub fn effective_lambda(&self) -> f64 {
        match self.mode {
            DistillVariant::None => 0.0,
            _ => self.lambda,
        }
    }
}
