//! Pointwise and distillation losses, as plain functions and as tape terms.

use crate::distill::mode::{DistillConfig, DistillVariant, FeatureLoss};
use crate::error::{Error, Result};
use crate::nn::{Tape, Var};

/// Probabilities are clamped into `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Negative log-likelihood `−[y ln p + (1 − y) ln(1 − p)]`. `y` may be soft.
pub fn ce_loss(p: f64, y: f64) -> f64 {
    let q = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
}

pub fn mean_ce(p: &[f64], y: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    p.iter().zip(y).map(|(&p, &y)| ce_loss(p, y)).sum::<f64>() / p.len() as f64
}

/// Student prediction against the teacher's prediction as a soft label.
pub fn logit_distill_loss(y_hat_s: f64, y_hat_t: f64) -> f64 {
    ce_loss(y_hat_s, y_hat_t)
}

pub fn feature_distill_loss(z_s: &[f64], z_t: &[f64], norm: FeatureLoss) -> Result<f64> {
    if z_s.len() != z_t.len() {
        return Err(Error::Shape {
            op: "feature_distill_loss",
            left: vec![z_s.len()],
            right: vec![z_t.len()],
        });
    }
    let sq: f64 = z_s.iter().zip(z_t).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(match norm {
        FeatureLoss::Mean if !z_s.is_empty() => sq / z_s.len() as f64,
        _ => sq,
    })
}

/// Full objective for one example:
/// `CE(ŷ_s, y) + CE(ŷ_t, y) + λ · distill`.
pub fn total_loss(
    y_hat_s: f64,
    y_hat_t: f64,
    z_s: &[f64],
    z_t: &[f64],
    y_g: f64,
    cfg: &DistillConfig,
) -> Result<f64> {
    let pointwise = ce_loss(y_hat_s, y_g) + ce_loss(y_hat_t, y_g);
    let lambda = cfg.effective_lambda();
    if lambda == 0.0 {
        return Ok(pointwise);
    }
    let d = match cfg.mode {
        DistillVariant::Logit => logit_distill_loss(y_hat_s, y_hat_t),
        DistillVariant::Feature => feature_distill_loss(z_s, z_t, cfg.feature_loss)?,
        DistillVariant::None => 0.0,
    };
    Ok(pointwise + lambda * d)
}

/// Batch-mean cross entropy of `p [B, 1]` against constant labels.
pub fn ce_term(tape: &mut Tape, p: Var, labels: &[f64]) -> Result<Var> {
    let (r, c) = tape.shape(p);
    let y = tape.constant(r, c, labels.to_vec())?;
    let l = tape.bce(p, y, PROB_CLAMP)?;
    Ok(tape.mean(l))
}

/// Batch-mean soft-label cross entropy between student and teacher.
pub fn logit_distill_term(tape: &mut Tape, y_s: Var, y_t: Var) -> Result<Var> {
    let l = tape.bce(y_s, y_t, PROB_CLAMP)?;
    Ok(tape.mean(l))
}

/// Batch mean of the per-row feature distance.
pub fn feature_distill_term(tape: &mut Tape, z_s: Var, z_t: Var, norm: FeatureLoss) -> Result<Var> {
    let diff = tape.sub(z_s, z_t)?;
    let sq = tape.mul(diff, diff)?;
    let m = tape.mean(sq);
    Ok(match norm {
        FeatureLoss::Mean => m,
        FeatureLoss::SquaredNorm => {
            let dim = tape.shape(z_s).1 as f64;
            tape.scale(m, dim)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn ce_examples() {
        assert!((ce_loss(0.5, 1.0) - LN_2).abs() < 1e-12);
        assert!((ce_loss(0.5, 0.0) - LN_2).abs() < 1e-12);
        assert!((ce_loss(0.9, 1.0) - 0.105_360_515_657_826_3).abs() < 1e-12);
        // Clamped at both ends.
        assert!(ce_loss(0.0, 1.0).is_finite());
        assert!(ce_loss(1.0, 0.0).is_finite());
    }

    #[test]
    fn logit_distill_examples() {
        assert!((logit_distill_loss(0.5, 0.5) - LN_2).abs() < 1e-12);
        // Binary entropy at t is the minimum over s.
        for s in [0.3, 0.45, 0.55, 0.7] {
            assert!(logit_distill_loss(s, 0.5) > LN_2);
        }
        let eps: f64 = 1e-4;
        let v = logit_distill_loss(1.0 - eps, 1.0 - eps);
        let expect = -(1.0 - eps) * (1.0 - eps).ln() - eps * eps.ln();
        assert!((v - expect).abs() < 1e-12);
        assert!(v < 2e-3);
    }

    #[test]
    fn feature_distill_examples() {
        let m = FeatureLoss::Mean;
        assert_eq!(feature_distill_loss(&[1.0, 2.0], &[1.0, 2.0], m).unwrap(), 0.0);
        assert_eq!(feature_distill_loss(&[1.0, 0.0], &[0.0, 0.0], m).unwrap(), 0.5);
        assert_eq!(
            feature_distill_loss(&[1.0, 0.0], &[0.0, 0.0], FeatureLoss::SquaredNorm).unwrap(),
            1.0
        );
        let a = [0.3, -1.0, 2.0];
        let b = [1.0, 0.5, 0.25];
        assert_eq!(
            feature_distill_loss(&a, &b, m).unwrap(),
            feature_distill_loss(&b, &a, m).unwrap()
        );
        assert!(feature_distill_loss(&[1.0], &[1.0, 2.0], m).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let none = DistillConfig::new(DistillVariant::Logit, 0.0).unwrap();
        let v = total_loss(0.3, 0.8, &[], &[], 1.0, &none).unwrap();
        assert_eq!(v, ce_loss(0.3, 1.0) + ce_loss(0.8, 1.0));
        let logit = DistillConfig::new(DistillVariant::Logit, 1.0).unwrap();
        let v = total_loss(0.5, 0.5, &[], &[], 1.0, &logit).unwrap();
        assert!((v - 2.079_441_541_679_836).abs() < 1e-12);
        let feat = DistillConfig::new(DistillVariant::Feature, 0.7).unwrap();
        let z = [0.1, 0.2];
        let v = total_loss(0.2, 0.6, &z, &z, 0.0, &feat).unwrap();
        assert_eq!(v, ce_loss(0.2, 0.0) + ce_loss(0.6, 0.0));
        assert!(DistillConfig::new(DistillVariant::Logit, -0.1).is_err());
        let n = DistillConfig::new(DistillVariant::None, 5.0).unwrap();
        assert_eq!(n.effective_lambda(), 0.0);
    }

    #[test]
    fn logit_term_gradient_vanishes_at_target() {
        let store = crate::nn::ParamStore::new();
        let mut tape = Tape::new(&store);
        let s = tape.constant(1, 1, vec![0.37]).unwrap();
        let t = tape.constant(1, 1, vec![0.37]).unwrap();
        let l = logit_distill_term(&mut tape, s, t).unwrap();
        let g = tape.backward(l).unwrap();
        assert!(g.wrt(s).unwrap()[0].abs() < 1e-12);
    }
}
