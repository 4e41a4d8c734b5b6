//! Synthetic click logs under the examination hypothesis.
//!
//! Each session draws a user, a context and a behavior history, then `K`
//! candidate ads. A logging policy sorts the candidates by their relevance
//! logit plus Gaussian noise and assigns positions `0..K` in that order, so
//! position is confounded with relevance. A click is drawn with probability
//! `propensity(k) · relevance`, with `propensity(k) = (k + 1)^(-η)`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::example::{Dataset, DatasetSplit, Example, Features, SplitManifest};
use crate::error::{Error, Result};
use crate::model::FeatureSchema;
use crate::nn::sigmoid;
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Propensity decay exponent η.
    pub eta: f64,
    /// Std of the logging policy's ranking noise, in logit units.
    pub logging_noise: f64,
    /// Std of per-impression relevance noise hidden from the features.
    pub relevance_noise: f64,
    pub relevance_bias: f64,
    /// Width of the hidden relevance embeddings.
    pub hidden_dim: usize,
    /// Weight of the behavior-to-target affinity term.
    pub behavior_weight: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_train: 200_000,
            n_validation: 10_000,
            n_test: 20_000,
            eta: 1.0,
            logging_noise: 1.0,
            relevance_noise: 0.5,
            relevance_bias: -1.0,
            hidden_dim: 4,
            behavior_weight: 1.5,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be ≥ 0, got {}", self.eta)));
        }
        if self.logging_noise < 0.0 || self.relevance_noise < 0.0 {
            return Err(Error::Config("noise levels must be ≥ 0".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        Ok(())
    }
}

/// Examination probability per slot.
pub fn propensities(eta: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| ((i + 1) as f64).powf(-eta)).collect()
}

/// Ground-truth click probability for one impression.
pub fn click_probability(propensity: &[f64], pos: usize, rel: f64) -> f64 {
    propensity[pos] * rel
}

pub fn sample_click(rng: &mut Rng, propensity: &[f64], pos: usize, rel: f64) -> bool {
    rng.random::<f64>() < click_probability(propensity, pos, rel)
}

/// Hidden relevance model: per-value biases and embeddings for every field.
#[derive(Debug, Clone)]
pub struct RelevanceModel {
    bias: f64,
    user: Vec<FieldTable>,
    ctx: Vec<FieldTable>,
    ad: Vec<FieldTable>,
    /// Ad fields beyond the item id are a fixed function of the item.
    item_attrs: Vec<Vec<usize>>,
    behavior_weight: f64,
}

#[derive(Debug, Clone)]
struct FieldTable {
    bias: Vec<f64>,
    emb: Vec<Vec<f64>>,
}

impl FieldTable {
    fn draw(rng: &mut Rng, vocab: usize, dim: usize) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let bias = (0..vocab).map(|_| 0.5 * normal(rng)).collect();
        let emb = (0..vocab)
            .map(|_| (0..dim).map(|_| scale * normal(rng)).collect())
            .collect();
        FieldTable { bias, emb }
    }
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_to(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

impl RelevanceModel {
    pub fn draw(schema: &FeatureSchema, cfg: &GenConfig) -> Self {
        let mut rng = stream(cfg.seed, "relevance-model");
        let d = cfg.hidden_dim;
        let tables = |rng: &mut Rng, vocab: &[usize]| -> Vec<FieldTable> {
            vocab.iter().map(|&v| FieldTable::draw(rng, v, d)).collect()
        };
        let user = tables(&mut rng, &schema.user_vocab);
        let ctx = tables(&mut rng, &schema.ctx_vocab);
        let ad = tables(&mut rng, &schema.ad_vocab);
        let item_attrs = (0..schema.ad_vocab[0])
            .map(|_| {
                schema.ad_vocab[1..]
                    .iter()
                    .map(|&v| rng.random_range(0..v))
                    .collect()
            })
            .collect();
        RelevanceModel {
            bias: cfg.relevance_bias,
            user,
            ctx,
            ad,
            item_attrs,
            behavior_weight: cfg.behavior_weight,
        }
    }

    /// Ad field values for an item id.
    pub fn ad_fields(&self, item: usize) -> Vec<usize> {
        let mut v = Vec::with_capacity(1 + self.item_attrs[item].len());
        v.push(item);
        v.extend_from_slice(&self.item_attrs[item]);
        v
    }

    /// Noise-free relevance logit of a feature vector.
    pub fn logit(&self, f: &Features) -> f64 {
        let dim = self.ad[0].emb[0].len();
        let mut s = self.bias;
        let mut u = vec![0.0; dim];
        for (t, &i) in self.user.iter().zip(&f.user).chain(self.ctx.iter().zip(&f.ctx)) {
            s += t.bias[i];
            add_to(&mut u, &t.emb[i]);
        }
        let mut a = vec![0.0; dim];
        for (t, &i) in self.ad.iter().zip(&f.ad) {
            s += t.bias[i];
            add_to(&mut a, &t.emb[i]);
        }
        s += dot(&u, &a);
        if !f.behaviors.is_empty() {
            let items = &self.ad[0].emb;
            let target = &items[f.ad[0]];
            let aff: f64 = f.behaviors.iter().map(|&b| dot(&items[b], target)).sum();
            s += self.behavior_weight * aff / f.behaviors.len() as f64;
        }
        s
    }
}

struct Candidate {
    ad: Vec<usize>,
    rel: f64,
    logging_score: f64,
}

/// Draws `n` impressions, `K` per session (the last session may be cut short).
fn draw_impressions(
    rng: &mut Rng,
    model: &RelevanceModel,
    schema: &FeatureSchema,
    cfg: &GenConfig,
    propensity: &[f64],
    n: usize,
    first_id: u64,
) -> Vec<Vec<Example>> {
    let k = schema.num_positions;
    let mut sessions = Vec::with_capacity(n.div_ceil(k));
    let mut id = first_id;
    let mut remaining = n;
    while remaining > 0 {
        let user: Vec<usize> = schema.user_vocab.iter().map(|&v| rng.random_range(0..v)).collect();
        let ctx: Vec<usize> = schema.ctx_vocab.iter().map(|&v| rng.random_range(0..v)).collect();
        let len = rng.random_range(0..=schema.max_behaviors);
        let behaviors: Vec<usize> = (0..len)
            .map(|_| rng.random_range(0..schema.behavior_vocab))
            .collect();
        let mut cands: Vec<Candidate> = (0..k)
            .map(|_| {
                let ad = model.ad_fields(rng.random_range(0..schema.ad_vocab[0]));
                let f = Features {
                    user: user.clone(),
                    ctx: ctx.clone(),
                    ad: ad.clone(),
                    behaviors: behaviors.clone(),
                };
                let logit = model.logit(&f) + cfg.relevance_noise * normal(rng);
                let logging_score = logit + cfg.logging_noise * normal(rng);
                Candidate {
                    ad,
                    rel: sigmoid(logit),
                    logging_score,
                }
            })
            .collect();
        cands.sort_by(|a, b| b.logging_score.total_cmp(&a.logging_score));
        let take = remaining.min(k);
        let session = cands
            .into_iter()
            .take(take)
            .enumerate()
            .map(|(pos, c)| {
                let click = sample_click(rng, propensity, pos, c.rel);
                let e = Example {
                    id,
                    features: Features {
                        user: user.clone(),
                        ctx: ctx.clone(),
                        ad: c.ad,
                        behaviors: behaviors.clone(),
                    },
                    pos,
                    click,
                    rel: Some(c.rel),
                };
                id += 1;
                e
            })
            .collect();
        sessions.push(session);
        remaining -= take;
    }
    sessions
}

/// Generates train / validation / test splits. Validation sessions are
/// sampled out of the training period; test comes from a separate stream.
pub fn generate(schema: &FeatureSchema, cfg: &GenConfig) -> Result<DatasetSplit> {
    schema.validate()?;
    cfg.validate()?;
    let model = RelevanceModel::draw(schema, cfg);
    let propensity = propensities(cfg.eta, schema.num_positions);
    let k = schema.num_positions;

    let mut period = stream(cfg.seed, "train-period");
    let n_period = cfg.n_train + cfg.n_validation;
    let mut sessions = draw_impressions(&mut period, &model, schema, cfg, &propensity, n_period, 0);
    // Keep the one possibly-partial session out of validation.
    let full = if n_period.is_multiple_of(k) { sessions.len() } else { sessions.len() - 1 };
    sessions[..full].shuffle(&mut stream(cfg.seed, "validation-split"));
    let n_val_sessions = cfg.n_validation / k;
    let mut validation: Dataset = Vec::with_capacity(cfg.n_validation);
    let mut train: Dataset = Vec::with_capacity(cfg.n_train);
    for (i, s) in sessions.into_iter().enumerate() {
        if i < n_val_sessions {
            validation.extend(s);
        } else {
            train.extend(s);
        }
    }
    // Leftover examples when n_validation is not a multiple of K.
    let short = cfg.n_validation - validation.len();
    if short > 0 {
        validation.extend(train.drain(..short));
    }
    train.sort_by_key(|e| e.id);
    validation.sort_by_key(|e| e.id);

    let mut next_day = stream(cfg.seed, "test-period");
    let test: Dataset = draw_impressions(
        &mut next_day,
        &model,
        schema,
        cfg,
        &propensity,
        cfg.n_test,
        n_period as u64,
    )
    .into_iter()
    .flatten()
    .collect();

    let manifest = SplitManifest {
        seed: cfg.seed,
        train: train.len(),
        validation: validation.len(),
        test: test.len(),
        num_positions: k,
        propensity,
    };
    Ok(DatasetSplit {
        train,
        validation,
        test,
        manifest,
    })
}
