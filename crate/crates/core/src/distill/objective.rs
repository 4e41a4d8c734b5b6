use crate::distill::loss::{ce_term, feature_distill_loss, feature_distill_term, logit_distill_loss, logit_distill_term};
use crate::distill::mode::{DistillConfig, DistillVariant};
use crate::error::Result;
use crate::model::{student_forward, teacher_forward, Batch, Network};
use crate::nn::{Tape, Var};

/// Batch means of each objective component. `distill` is unweighted.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub student_ce: f64,
    pub teacher_ce: f64,
    pub distill: f64,
    pub total: f64,
}

/// Joint teacher + student objective over a shared base module.
pub fn distill_objective(
    tape: &mut Tape,
    net: &Network,
    batch: &Batch,
    cfg: &DistillConfig,
) -> Result<(Var, LossParts)> {
    let (teacher, pos_table) = net.teacher()?;
    let student = net.student()?;
    let base = net.base_forward(tape, batch)?;
    let t = teacher_forward(tape, base.h_s, &batch.positions, pos_table, teacher)?;
    let s = student_forward(tape, base.h_s, student)?;

    let ce_s = ce_term(tape, s.prob, &batch.labels)?;
    let ce_t = ce_term(tape, t.prob, &batch.labels)?;
    let mut loss = tape.add(ce_s, ce_t)?;

    let distill_value = match cfg.mode {
        DistillVariant::Logit => {
            let (ys, yt) = (tape.value(s.prob), tape.value(t.prob));
            ys.iter().zip(yt).map(|(&a, &b)| logit_distill_loss(a, b)).sum::<f64>() / ys.len().max(1) as f64
        }
        DistillVariant::Feature => {
            let d = tape.shape(s.z).1.max(1);
            let (zs, zt) = (tape.value(s.z), tape.value(t.z));
            zs.chunks(d)
                .zip(zt.chunks(d))
                .map(|(a, b)| feature_distill_loss(a, b, cfg.feature_loss))
                .sum::<Result<f64>>()?
                / batch.len.max(1) as f64
        }
        DistillVariant::None => 0.0,
    };

    let lambda = cfg.effective_lambda();
    if lambda > 0.0 {
        let term = match cfg.mode {
            DistillVariant::Logit => {
                let target = if cfg.teacher_stop_gradient { tape.detach(t.prob) } else { t.prob };
                logit_distill_term(tape, s.prob, target)?
            }
            DistillVariant::Feature => {
                let target = if cfg.teacher_stop_gradient { tape.detach(t.z) } else { t.z };
                feature_distill_term(tape, s.z, target, cfg.feature_loss)?
            }
            DistillVariant::None => unreachable!("effective lambda is zero"),
        };
        let weighted = tape.scale(term, lambda);
        loss = tape.add(loss, weighted)?;
    }

    let parts = LossParts {
        student_ce: tape.scalar(ce_s),
        teacher_ce: tape.scalar(ce_t),
        distill: distill_value,
        total: tape.scalar(loss),
    };
    Ok((loss, parts))
}
