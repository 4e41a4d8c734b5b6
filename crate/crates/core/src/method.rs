//! The five trainable systems and their training / serving paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_objective, pal_forward, serving_position, BaselineKind};
use crate::data::{Example, Features};
use crate::distill::{distill_objective, DistillConfig, LossParts};
use crate::error::{Error, Result};
use crate::model::{student_forward, teacher_forward, Batch, Components, Network};
use crate::nn::{ParamStore, Tape, Var};
use crate::rng::Rng;

const SCORE_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Position-aware teacher distilled into a position-free student.
    Distill(DistillConfig),
    Baseline(BaselineKind),
}

/// Short model names used on the command line and in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Ours,
    Backbone,
    FixedPos,
    PosDropout,
    Pal,
}

impl ModelName {
    pub const ALL: [ModelName; 5] = [
        ModelName::Backbone,
        ModelName::FixedPos,
        ModelName::PosDropout,
        ModelName::Pal,
        ModelName::Ours,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Ours => "ours",
            ModelName::Backbone => "backbone",
            ModelName::FixedPos => "fixed_pos",
            ModelName::PosDropout => "pos_dropout",
            ModelName::Pal => "pal",
        }
    }
}

impl std::fmt::Display for ModelName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Method {
    pub fn name(&self) -> ModelName {
        match self {
            Method::Distill(_) => ModelName::Ours,
            Method::Baseline(BaselineKind::Backbone) => ModelName::Backbone,
            Method::Baseline(BaselineKind::FixedPosition) => ModelName::FixedPos,
            Method::Baseline(BaselineKind::PosDropout { .. }) => ModelName::PosDropout,
            Method::Baseline(BaselineKind::Pal { .. }) => ModelName::Pal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Method::Distill(c) => c.validate(),
            Method::Baseline(k) => k.validate(),
        }
    }

    pub fn components(&self) -> Components {
        match self {
            Method::Distill(_) => Components {
                position: true,
                teacher: true,
                student: true,
                pal: false,
            },
            Method::Baseline(BaselineKind::Backbone) => Components {
                student: true,
                ..Default::default()
            },
            Method::Baseline(BaselineKind::FixedPosition | BaselineKind::PosDropout { .. }) => Components {
                position: true,
                teacher: true,
                ..Default::default()
            },
            Method::Baseline(BaselineKind::Pal { .. }) => Components {
                student: true,
                pal: true,
                ..Default::default()
            },
        }
    }

    pub fn objective(
        &self,
        tape: &mut Tape,
        net: &Network,
        batch: &Batch,
        rng: &mut Rng,
    ) -> Result<(Var, LossParts)> {
        match self {
            Method::Distill(cfg) => distill_objective(tape, net, batch, cfg),
            Method::Baseline(kind) => baseline_objective(kind, tape, net, batch, rng),
        }
    }

    /// Serving-path probabilities for one batch of position-free features.
    fn serve_batch(&self, net: &Network, params: &ParamStore, batch: &Batch) -> Result<Vec<f64>> {
        let mut tape = Tape::new(params);
        let base = net.base_forward(&mut tape, batch)?;
        let out = match self {
            Method::Distill(_)
            | Method::Baseline(BaselineKind::Backbone | BaselineKind::Pal { .. }) => {
                student_forward(&mut tape, base.h_s, net.student()?)?.prob
            }
            Method::Baseline(kind) => {
                let slot = serving_position(kind, net).expect("position-aware baseline");
                let (tower, table) = net.teacher()?;
                let positions = vec![slot; batch.len];
                teacher_forward(&mut tape, base.h_s, &positions, table, tower)?.prob
            }
        };
        Ok(tape.value(out).to_vec())
    }

    /// Training-path probabilities with logged positions (teacher for the
    /// distilled model, the seen × click product for PAL).
    fn train_path_batch(&self, net: &Network, params: &ParamStore, batch: &Batch) -> Result<Vec<f64>> {
        let mut tape = Tape::new(params);
        let base = net.base_forward(&mut tape, batch)?;
        let out = match self {
            Method::Baseline(BaselineKind::Backbone) => student_forward(&mut tape, base.h_s, net.student()?)?.prob,
            Method::Baseline(BaselineKind::Pal { freeze_seen }) => {
                pal_forward(&mut tape, net, base.h_s, &batch.positions, *freeze_seen)?.train
            }
            Method::Distill(_) | Method::Baseline(_) => {
                let (tower, table) = net.teacher()?;
                teacher_forward(&mut tape, base.h_s, &batch.positions, table, tower)?.prob
            }
        };
        Ok(tape.value(out).to_vec())
    }

    /// pCTR as served. Only features reach the model; no position exists here.
    pub fn serve(&self, net: &Network, params: &ParamStore, features: &[&Features]) -> Result<Vec<f64>> {
        for f in features {
            f.validate(&net.schema)?;
        }
        let chunks: Vec<Vec<f64>> = features
            .par_chunks(SCORE_CHUNK)
            .map(|c| self.serve_batch(net, params, &Batch::from_features(c.iter().copied())))
            .collect::<Result<_>>()?;
        Ok(chunks.concat())
    }

    pub fn serve_examples(&self, net: &Network, params: &ParamStore, data: &[Example]) -> Result<Vec<f64>> {
        let feats: Vec<&Features> = data.iter().map(|e| &e.features).collect();
        self.serve(net, params, &feats)
    }

    /// Training-path scores with the logged positions. Diagnostic only.
    pub fn score_with_positions(&self, net: &Network, params: &ParamStore, data: &[Example]) -> Result<Vec<f64>> {
        for e in data {
            e.validate(&net.schema)?;
        }
        let chunks: Vec<Vec<f64>> = data
            .par_chunks(SCORE_CHUNK)
            .map(|c| self.train_path_batch(net, params, &Batch::from_examples(c)))
            .collect::<Result<_>>()?;
        Ok(chunks.concat())
    }
}

impl std::str::FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))
    }
}
