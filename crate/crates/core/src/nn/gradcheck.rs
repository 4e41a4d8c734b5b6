//! Central-difference gradient checking.

use crate::error::Result;
use crate::nn::params::ParamStore;
use crate::nn::tape::{Tape, Var};

/// Compares analytic gradients from `forward` against central differences
/// for every parameter entry and returns the largest
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
///
/// `forward` must build a scalar loss deterministically from the tape.
pub fn grad_check<F>(forward: F, params: &mut ParamStore, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    params.zero_grads();
    let grads = {
        let mut tape = Tape::new(params);
        let loss = forward(&mut tape)?;
        tape.backward(loss)?
    };
    params.accumulate(&grads);
    let analytic: Vec<Vec<f64>> = params
        .ids()
        .map(|id| params.grad(id).values().to_vec())
        .collect();
    params.zero_grads();

    let eval = |p: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(p);
        let loss = forward(&mut tape)?;
        Ok(tape.scalar(loss))
    };

    let ids: Vec<_> = params.ids().collect();
    let mut worst = 0.0f64;
    for (id, grad) in ids.into_iter().zip(&analytic) {
        for (j, &a) in grad.iter().enumerate() {
            let orig = params.value(id).values()[j];
            params.value_mut(id).values_mut()[j] = orig + eps;
            let up = eval(params)?;
            params.value_mut(id).values_mut()[j] = orig - eps;
            let down = eval(params)?;
            params.value_mut(id).values_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
