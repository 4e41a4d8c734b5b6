use rayon::prelude::*;
use serde::Serialize;

use crate::data::Example;
use crate::distill::mode::{DistillConfig, DistillVariant};
use crate::distill::train::{fit, path_metrics, TrainConfig};
use crate::error::{Error, Result};
use crate::method::Method;
use crate::model::{FeatureSchema, TowerConfig};

pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [0.01, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// Serving-path validation metrics, or the training error for this cell.
    pub outcome: std::result::Result<(f64, Option<f64>), String>,
}

impl SweepRow {
    pub fn logloss(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|(l, _)| *l)
    }

    pub fn auc(&self) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|(_, a)| *a)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub mode: DistillVariant,
    pub rows: Vec<SweepRow>,
    /// λ with the lowest validation LogLoss; first wins ties.
    pub selected: Option<f64>,
}

/// Trains one distilled model per λ with the same seed and picks the λ
/// whose student has the lowest validation LogLoss. A failing cell is
/// recorded and the rest still run.
#[allow(clippy::too_many_arguments)]
pub fn sweep_lambda(
    train: &[Example],
    validation: &[Example],
    schema: &FeatureSchema,
    tower: &TowerConfig,
    cfg: &TrainConfig,
    base: &DistillConfig,
    mode: DistillVariant,
    grid: &[f64],
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::contract("lambda grid is empty"));
    }
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&lambda| {
            let dc = DistillConfig {
                mode,
                lambda,
                ..*base
            };
            let outcome = fit(&Method::Distill(dc), train, validation, schema, tower, cfg)
                .and_then(|t| {
                    let s = t.serve_examples(validation)?;
                    let m = path_metrics(&s, validation);
                    Ok((m.logloss, m.auc))
                })
                .map_err(|e| e.to_string());
            SweepRow { lambda, outcome }
        })
        .collect();
    let selected = rows
        .iter()
        .filter_map(|r| r.logloss().map(|l| (r.lambda, l)))
        .fold(None, |best: Option<(f64, f64)>, (lam, l)| match best {
            Some((_, bl)) if bl <= l => best,
            _ => Some((lam, l)),
        })
        .map(|(lam, _)| lam);
    Ok(SweepResult { mode, rows, selected })
}
