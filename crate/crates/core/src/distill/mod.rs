//! Distillation losses, the joint training loop, the λ sweep and serving.

pub mod loss;
pub mod mode;
pub mod objective;
pub mod sweep;
pub mod train;

pub use loss::{ce_loss, feature_distill_loss, logit_distill_loss, total_loss, PROB_CLAMP};
pub use mode::{DistillConfig, DistillVariant, FeatureLoss};
pub use objective::{distill_objective, LossParts};
pub use sweep::{sweep_lambda, SweepResult, SweepRow, DEFAULT_LAMBDA_GRID};
pub use train::{fit, train, EpochRecord, PathMetrics, TrainConfig, TrainHistory, Trained};

use crate::data::Features;
use crate::error::Result;
use crate::method::Method;
use crate::model::Network;
use crate::nn::ParamStore;

/// Serving pCTR of the distilled model: `h_s` from the features, then the
/// student tower. The signature carries no position.
pub fn serve(net: &Network, params: &ParamStore, features: &Features) -> Result<f64> {
    let method = Method::Distill(DistillConfig::default());
    Ok(method.serve(net, params, &[features])?[0])
}
