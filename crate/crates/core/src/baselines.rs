//! Comparison systems trained over the same base module and loop:
//! a position-free backbone, position-as-feature with a fixed serving slot,
//! position dropout, and a seen × click factorization.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::distill::loss::ce_term;
use crate::distill::LossParts;
use crate::error::{Error, Result};
use crate::model::{student_forward, teacher_forward, Batch, Network, TowerOutput};
use crate::nn::{Tape, Var};
use crate::rng::Rng;

pub const DEFAULT_DROPOUT_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    Backbone,
    /// Trains with logged positions, serves every request at slot 0.
    FixedPosition,
    /// Replaces the position with the unknown slot at `dropout_rate` during
    /// training; serves at the unknown slot.
    PosDropout { dropout_rate: f64 },
    /// Trains `σ(seen[k]) · pClick(h_s)`, serves `pClick`. `freeze_seen`
    /// pins the seen factor at 1.
    Pal { freeze_seen: bool },
}

impl BaselineKind {
    pub fn pos_dropout() -> Self {
        BaselineKind::PosDropout {
            dropout_rate: DEFAULT_DROPOUT_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let BaselineKind::PosDropout { dropout_rate } = self {
            if !(0.0..=1.0).contains(dropout_rate) {
                return Err(Error::Config(format!(
                    "dropout_rate must lie in [0, 1], got {dropout_rate}"
                )));
            }
        }
        Ok(())
    }
}

/// PAL's training-time prediction and its serving factor.
pub struct PalOutput {
    pub seen: Var,
    pub click: TowerOutput,
    pub train: Var,
}

pub fn pal_forward(
    tape: &mut Tape,
    net: &Network,
    h_s: Var,
    positions: &[usize],
    freeze_seen: bool,
) -> Result<PalOutput> {
    let seen_table = net
        .pal_seen
        .ok_or_else(|| Error::contract("network has no seen factor"))?;
    let click = student_forward(tape, h_s, net.student()?)?;
    let table = tape.param(seen_table);
    let logits = tape.gather(table, positions)?;
    let seen = if freeze_seen {
        let n = positions.len();
        tape.constant(n, 1, vec![1.0; n])?
    } else {
        tape.sigmoid(logits)
    };
    let train = tape.mul(seen, click.prob)?;
    Ok(PalOutput { seen, click, train })
}

/// Positions fed to the position-aware tower during training.
pub fn training_positions(kind: &BaselineKind, batch: &Batch, unknown: usize, rng: &mut Rng) -> Vec<usize> {
    match kind {
        BaselineKind::PosDropout { dropout_rate } => batch
            .positions
            .iter()
            .map(|&p| if rng.random::<f64>() < *dropout_rate { unknown } else { p })
            .collect(),
        _ => batch.positions.clone(),
    }
}

pub fn baseline_objective(
    kind: &BaselineKind,
    tape: &mut Tape,
    net: &Network,
    batch: &Batch,
    rng: &mut Rng,
) -> Result<(Var, LossParts)> {
    let base = net.base_forward(tape, batch)?;
    let prob = match kind {
        BaselineKind::Backbone => student_forward(tape, base.h_s, net.student()?)?.prob,
        BaselineKind::FixedPosition | BaselineKind::PosDropout { .. } => {
            let positions = training_positions(kind, batch, net.schema.unknown_position(), rng);
            let (tower, table) = net.teacher()?;
            teacher_forward(tape, base.h_s, &positions, table, tower)?.prob
        }
        BaselineKind::Pal { freeze_seen } => {
            pal_forward(tape, net, base.h_s, &batch.positions, *freeze_seen)?.train
        }
    };
    let loss = ce_term(tape, prob, &batch.labels)?;
    let v = tape.scalar(loss);
    Ok((
        loss,
        LossParts {
            student_ce: v,
            total: v,
            ..Default::default()
        },
    ))
}

/// Slot every serving request is scored at, if the baseline reads one.
pub fn serving_position(kind: &BaselineKind, net: &Network) -> Option<usize> {
    match kind {
        BaselineKind::FixedPosition => Some(0),
        BaselineKind::PosDropout { .. } => Some(net.schema.unknown_position()),
        BaselineKind::Backbone | BaselineKind::Pal { .. } => None,
    }
}

/// Learned `σ(seen[k])` per slot.
pub fn pal_seen_probabilities(net: &Network, params: &crate::nn::ParamStore) -> Option<Vec<f64>> {
    net.pal_seen
        .map(|id| params.value(id).values().iter().map(|&x| crate::nn::sigmoid(x)).collect())
}
