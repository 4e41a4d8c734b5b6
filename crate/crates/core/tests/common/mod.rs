#![allow(dead_code)]

use posdistill::data::{Example, Features};
use posdistill::model::{FeatureSchema, TowerConfig};
use posdistill::rng::stream;
use rand::Rng;

/// Small schema that still exercises every field group.
pub fn tiny_schema() -> FeatureSchema {
    FeatureSchema {
        user_vocab: vec![5, 3],
        ctx_vocab: vec![4],
        ad_vocab: vec![6, 3],
        behavior_vocab: 6,
        embed_dim: 3,
        position_dim: 2,
        num_positions: 4,
        max_behaviors: 4,
    }
}

pub fn tiny_tower() -> TowerConfig {
    TowerConfig {
        encoder: vec![5, 4],
        head: vec![3, 1],
        attention_hidden: 3,
        cross_layers: 2,
        normalize_attention: true,
    }
}

pub fn random_features<R: Rng>(rng: &mut R, schema: &FeatureSchema) -> Features {
    let draw = |rng: &mut R, vocab: &[usize]| vocab.iter().map(|&v| rng.random_range(0..v)).collect();
    let len = rng.random_range(0..=schema.max_behaviors);
    Features {
        user: draw(rng, &schema.user_vocab),
        ctx: draw(rng, &schema.ctx_vocab),
        ad: draw(rng, &schema.ad_vocab),
        behaviors: (0..len).map(|_| rng.random_range(0..schema.behavior_vocab)).collect(),
    }
}

/// Schema-valid examples with random positions and labels.
pub fn random_examples(schema: &FeatureSchema, n: usize, seed: u64) -> Vec<Example> {
    let mut rng = stream(seed, "test/examples");
    (0..n)
        .map(|i| Example {
            id: i as u64,
            features: random_features(&mut rng, schema),
            pos: rng.random_range(0..schema.num_positions),
            click: rng.random::<bool>(),
            rel: None,
        })
        .collect()
}
