//! Base module, position embedding, and the teacher / student towers.

pub mod base;
pub mod batch;
pub mod network;
pub mod schema;
pub mod tower;

pub use base::{concat_features, cross_layer, dcn_forward, din_pool, BaseModule, BaseOutput, CrossLayer};
pub use batch::Batch;
pub use network::{Components, Network};
pub use schema::{FeatureSchema, TowerConfig};
pub use tower::{student_forward, teacher_forward, Tower, TowerOutput};
