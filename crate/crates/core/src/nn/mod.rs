//! Reverse-mode differentiation, parameters, layers, and the Adam optimizer.

pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use gradcheck::grad_check;
pub use layers::{Dense, FinalActivation, Mlp};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{ParamId, ParamStore};
pub use tape::{sigmoid, Gradients, Tape, Var};
