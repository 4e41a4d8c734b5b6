use rand::Rng;

use crate::error::Result;
use crate::nn::{FinalActivation, Mlp, ParamId, ParamStore, Tape, Var};
use crate::model::schema::TowerConfig;

/// Encoder (dense + ReLU stack) followed by a head ending in one logit.
#[derive(Debug, Clone)]
pub struct Tower {
    encoder: Mlp,
    head: Mlp,
}

#[derive(Debug, Clone, Copy)]
pub struct TowerOutput {
    /// Encoder output (`z_t` or `z_s`).
    pub z: Var,
    pub logit: Var,
    /// `sigmoid(logit)`
    pub prob: Var,
}

impl Tower {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        cfg: &TowerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let encoder = Mlp::register(
            store,
            &format!("{prefix}.enc"),
            input,
            &cfg.encoder,
            FinalActivation::Relu,
            rng,
        )?;
        let head = Mlp::register(
            store,
            &format!("{prefix}.head"),
            cfg.z_dim(),
            &cfg.head,
            FinalActivation::Linear,
            rng,
        )?;
        Ok(Tower { encoder, head })
    }

    pub fn lookup(store: &ParamStore, prefix: &str, cfg: &TowerConfig) -> Result<Self> {
        Ok(Tower {
            encoder: Mlp::lookup(store, &format!("{prefix}.enc"), cfg.encoder.len(), FinalActivation::Relu)?,
            head: Mlp::lookup(store, &format!("{prefix}.head"), cfg.head.len(), FinalActivation::Linear)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<TowerOutput> {
        let z = self.encoder.forward(tape, input)?;
        let logit = self.head.forward(tape, z)?;
        let prob = tape.sigmoid(logit);
        Ok(TowerOutput { z, logit, prob })
    }
}

/// Position-aware tower: `z_t = Encoder([h_s; e_p])`, `ŷ_t = σ(MLP(z_t))`.
///
/// `positions` may include the reserved unknown slot `K`.
pub fn teacher_forward(
    tape: &mut Tape,
    h_s: Var,
    positions: &[usize],
    position_table: ParamId,
    tower: &Tower,
) -> Result<TowerOutput> {
    let table = tape.param(position_table);
    let e_p = tape.gather(table, positions)?;
    let input = tape.concat(&[h_s, e_p])?;
    tower.forward(tape, input)
}

/// Position-free tower: `z_s = Encoder(h_s)`, `ŷ_s = σ(MLP(z_s))`.
pub fn student_forward(tape: &mut Tape, h_s: Var, tower: &Tower) -> Result<TowerOutput> {
    tower.forward(tape, h_s)
}
