//! Shared base module: behavior attention pooling and a cross network over
//! the profile, context and target-ad embeddings, concatenated into `h_s`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::batch::Batch;
use crate::model::schema::{FeatureSchema, TowerConfig};
use crate::nn::{FinalActivation, Mlp, ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct CrossLayer {
    /// `[n, 1]`
    pub w: ParamId,
    /// `[n]`
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub struct BaseModule {
    user: Vec<ParamId>,
    ctx: Vec<ParamId>,
    ad: Vec<ParamId>,
    attention: Mlp,
    cross: Vec<CrossLayer>,
    normalize_attention: bool,
}

/// Intermediate embeddings of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct BaseOutput {
    pub h_din: Var,
    pub h_dcn: Var,
    pub h_s: Var,
}

fn table_names(group: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("base.emb.{group}.{i}"))
}

impl BaseModule {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        schema: &FeatureSchema,
        cfg: &TowerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let d = schema.embed_dim;
        let mut tables = |group: &str, vocab: &[usize]| -> Result<Vec<ParamId>> {
            table_names(group, vocab.len())
                .zip(vocab)
                .map(|(name, &v)| store.insert_uniform(&name, vec![v, d], d, rng))
                .collect()
        };
        let user = tables("user", &schema.user_vocab)?;
        let ctx = tables("ctx", &schema.ctx_vocab)?;
        let ad = tables("ad", &schema.ad_vocab)?;
        let attention = Mlp::register(
            store,
            "base.din.attn",
            4 * d,
            &[cfg.attention_hidden, 1],
            FinalActivation::Linear,
            rng,
        )?;
        let n = cfg.dcn_dim(schema);
        let cross = (0..cfg.cross_layers)
            .map(|l| {
                Ok(CrossLayer {
                    w: store.insert_uniform(&format!("base.dcn.cross.{l}.w"), vec![n, 1], n, rng)?,
                    b: store.insert_uniform(&format!("base.dcn.cross.{l}.b"), vec![n], n, rng)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(BaseModule {
            user,
            ctx,
            ad,
            attention,
            cross,
            normalize_attention: cfg.normalize_attention,
        })
    }

    pub fn lookup(store: &ParamStore, schema: &FeatureSchema, cfg: &TowerConfig) -> Result<Self> {
        let tables = |group: &str, n: usize| -> Result<Vec<ParamId>> {
            table_names(group, n).map(|name| store.require(&name)).collect()
        };
        Ok(BaseModule {
            user: tables("user", schema.user_vocab.len())?,
            ctx: tables("ctx", schema.ctx_vocab.len())?,
            ad: tables("ad", schema.ad_vocab.len())?,
            attention: Mlp::lookup(store, "base.din.attn", 2, FinalActivation::Linear)?,
            cross: (0..cfg.cross_layers)
                .map(|l| {
                    Ok(CrossLayer {
                        w: store.require(&format!("base.dcn.cross.{l}.w"))?,
                        b: store.require(&format!("base.dcn.cross.{l}.b"))?,
                    })
                })
                .collect::<Result<_>>()?,
            normalize_attention: cfg.normalize_attention,
        })
    }

    fn embed_fields(&self, tape: &mut Tape, tables: &[ParamId], cols: &[Vec<usize>], group: &str) -> Result<Vec<Var>> {
        if tables.len() != cols.len() {
            return Err(Error::contract(format!(
                "{group}: batch has {} fields, schema has {}",
                cols.len(),
                tables.len()
            )));
        }
        tables
            .iter()
            .zip(cols)
            .map(|(&t, idx)| {
                let tv = tape.param(t);
                tape.gather(tv, idx)
            })
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape, batch: &Batch) -> Result<BaseOutput> {
        let user = self.embed_fields(tape, &self.user, &batch.user, "user")?;
        let ctx = self.embed_fields(tape, &self.ctx, &batch.ctx, "ctx")?;
        let ad = self.embed_fields(tape, &self.ad, &batch.ad, "ad")?;

        let items = tape.param(self.ad[0]);
        let behaviors = tape.gather(items, &batch.behaviors)?;
        let h_din = din_pool(
            tape,
            behaviors,
            &batch.behavior_lens,
            ad[0],
            &self.attention,
            self.normalize_attention,
        )?;

        let fields: Vec<Var> = user.into_iter().chain(ctx).chain(ad).collect();
        let h_dcn = dcn_forward(tape, &fields, &self.cross)?;
        let h_s = concat_features(tape, h_din, h_dcn)?;
        Ok(BaseOutput { h_din, h_dcn, h_s })
    }
}

/// Attention pooling of behavior embeddings against the target ad.
///
/// `behaviors` is `[T, d]` with segment lengths `lens` (one per row of
/// `target [B, d]`). Each item is scored by `attention([e_i; e_t; e_i⊙e_t;
/// e_i−e_t])`; an empty segment pools to zeros.
pub fn din_pool(
    tape: &mut Tape,
    behaviors: Var,
    lens: &[usize],
    target: Var,
    attention: &Mlp,
    normalize: bool,
) -> Result<Var> {
    let (b, d) = tape.shape(target);
    let (t, bd) = tape.shape(behaviors);
    if lens.len() != b || bd != d || lens.iter().sum::<usize>() != t {
        return Err(Error::Shape {
            op: "din_pool",
            left: vec![t, bd],
            right: vec![b, d],
        });
    }
    let tgt = tape.repeat_segments(target, lens)?;
    let prod = tape.mul(behaviors, tgt)?;
    let diff = tape.sub(behaviors, tgt)?;
    let feats = tape.concat(&[behaviors, tgt, prod, diff])?;
    let scores = attention.forward(tape, feats)?;
    tape.segment_pool(scores, behaviors, lens, normalize)
}

/// `x_{l+1} = x0 · (xlᵀ w) + b + xl`, row by row.
pub fn cross_layer(tape: &mut Tape, x0: Var, xl: Var, w: Var, b: Var) -> Result<Var> {
    let (_, n) = tape.shape(x0);
    let (wr, wc) = tape.shape(w);
    if tape.shape(xl) != tape.shape(x0) || wr != n || wc != 1 {
        return Err(Error::Shape {
            op: "cross_layer",
            left: vec![tape.shape(x0).0, n],
            right: vec![wr, wc],
        });
    }
    let s = tape.matmul(xl, w)?;
    let scaled = tape.scale_rows(x0, s)?;
    let biased = tape.add_bias(scaled, b)?;
    tape.add(biased, xl)
}

/// Concatenates field embeddings into `x0` and applies the cross layers.
pub fn dcn_forward(tape: &mut Tape, fields: &[Var], cross: &[CrossLayer]) -> Result<Var> {
    let x0 = tape.concat(fields)?;
    let mut x = x0;
    for layer in cross {
        let w = tape.param(layer.w);
        let b = tape.param(layer.b);
        x = cross_layer(tape, x0, x, w, b)?;
    }
    Ok(x)
}

pub fn concat_features(tape: &mut Tape, h_din: Var, h_dcn: Var) -> Result<Var> {
    tape.concat(&[h_din, h_dcn])
}
