//! Seeded mini-batch training shared by the distilled model and every baseline.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::distill::mode::DistillConfig;
use crate::error::{Error, Result};
use crate::eval::metrics::{auc, logloss};
use crate::method::Method;
use crate::model::{Batch, FeatureSchema, Network, TowerConfig};
use crate::nn::{AdamConfig, AdamState, ParamStore, Tape};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Validate every this many epochs (the last epoch is always validated).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 256,
            seed: 0,
            adam: AdamConfig::default(),
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Validation AUC and LogLoss of one scoring path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub auc: Option<f64>,
    pub logloss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub student_ce: f64,
    pub teacher_ce: f64,
    pub distill: f64,
    /// Serving path.
    pub val_s: Option<PathMetrics>,
    /// Training path with logged positions.
    pub val_t: Option<PathMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str =
    "epoch,student_ce,teacher_ce,distill,val_auc_s,val_logloss_s,val_auc_t,val_logloss_t";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(HISTORY_HEADER);
        s.push('\n');
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                r.student_ce,
                r.teacher_ce,
                r.distill,
                opt(r.val_s.and_then(|m| m.auc)),
                opt(r.val_s.map(|m| m.logloss)),
                opt(r.val_t.and_then(|m| m.auc)),
                opt(r.val_t.map(|m| m.logloss)),
            );
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// A trained system: its method, bound network, parameters and history.
#[derive(Debug, Clone)]
pub struct Trained {
    pub method: Method,
    pub seed: u64,
    pub network: Network,
    pub params: ParamStore,
    pub history: TrainHistory,
}

impl Trained {
    pub fn serve_examples(&self, data: &[Example]) -> Result<Vec<f64>> {
        self.method.serve_examples(&self.network, &self.params, data)
    }

    pub fn score_with_positions(&self, data: &[Example]) -> Result<Vec<f64>> {
        self.method.score_with_positions(&self.network, &self.params, data)
    }
}

pub fn path_metrics(scores: &[f64], data: &[Example]) -> PathMetrics {
    let labels: Vec<bool> = data.iter().map(|e| e.click).collect();
    PathMetrics {
        auc: auc(scores, &labels).ok(),
        logloss: logloss(scores, &labels),
    }
}

/// Trains `method` from a fresh seeded initialization.
pub fn fit(
    method: &Method,
    train: &[Example],
    validation: &[Example],
    schema: &FeatureSchema,
    tower: &TowerConfig,
    cfg: &TrainConfig,
) -> Result<Trained> {
    if train.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    cfg.validate()?;
    method.validate()?;
    for e in train.iter().chain(validation) {
        e.validate(schema)?;
    }

    let (network, mut params) = Network::init(schema, tower, method.components(), cfg.seed)?;
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = stream(cfg.seed, "shuffle");
    let mut aux_rng = stream(cfg.seed, "position-dropout");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut s_ce, mut t_ce, mut dist) = (0.0, 0.0, 0.0);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::from_examples(chunk.iter().map(|&i| &train[i]));
            let grads = {
                let mut tape = Tape::new(&params);
                let (loss, parts) = method.objective(&mut tape, &network, &batch, &mut aux_rng)?;
                if !parts.total.is_finite() {
                    return Err(Error::NumericalAbort {
                        epoch,
                        step,
                        detail: format!(
                            "total={} student_ce={} teacher_ce={} distill={}",
                            parts.total, parts.student_ce, parts.teacher_ce, parts.distill
                        ),
                    });
                }
                let w = chunk.len() as f64;
                s_ce += parts.student_ce * w;
                t_ce += parts.teacher_ce * w;
                dist += parts.distill * w;
                tape.backward(loss)?
            };
            params.accumulate(&grads);
            adam.step(&mut params, &cfg.adam);
        }
        let n = train.len() as f64;
        let validate = !validation.is_empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        let (val_s, val_t) = if validate {
            let s = method.serve_examples(&network, &params, validation)?;
            let t = method.score_with_positions(&network, &params, validation)?;
            (Some(path_metrics(&s, validation)), Some(path_metrics(&t, validation)))
        } else {
            (None, None)
        };
        history.epochs.push(EpochRecord {
            epoch,
            student_ce: s_ce / n,
            teacher_ce: t_ce / n,
            distill: dist / n,
            val_s,
            val_t,
        });
    }

    Ok(Trained {
        method: *method,
        seed: cfg.seed,
        network,
        params,
        history,
    })
}

/// Joint teacher–student training of the distilled model.
pub fn train(
    train: &[Example],
    validation: &[Example],
    schema: &FeatureSchema,
    tower: &TowerConfig,
    cfg: &TrainConfig,
    distill: &DistillConfig,
) -> Result<Trained> {
    fit(&Method::Distill(*distill), train, validation, schema, tower, cfg)
}
