use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vocabulary sizes and embedding widths of every input field.
///
/// The first ad field is the item id; behavior sequences index the same
/// item vocabulary and share its embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSchema {
    pub user_vocab: Vec<usize>,
    pub ctx_vocab: Vec<usize>,
    pub ad_vocab: Vec<usize>,
    pub behavior_vocab: usize,
    pub embed_dim: usize,
    pub position_dim: usize,
    /// Number of real slots K. The position table has K + 1 rows; row K is
    /// the reserved unknown position.
    pub num_positions: usize,
    pub max_behaviors: usize,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema {
            user_vocab: vec![100, 8],
            ctx_vocab: vec![24, 4],
            ad_vocab: vec![200, 20, 50],
            behavior_vocab: 200,
            embed_dim: 8,
            position_dim: 4,
            num_positions: 10,
            max_behaviors: 20,
        }
    }
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        let fields = self
            .user_vocab
            .iter()
            .chain(&self.ctx_vocab)
            .chain(&self.ad_vocab);
        if fields.clone().any(|&v| v == 0) || self.behavior_vocab == 0 {
            return Err(Error::Config("every vocabulary size must be at least 1".into()));
        }
        if self.ad_vocab.is_empty() {
            return Err(Error::Config("at least one ad field (the item id) is required".into()));
        }
        if self.ad_vocab[0] != self.behavior_vocab {
            return Err(Error::Config(format!(
                "behavior_vocab {} must equal the item-id vocabulary ad_vocab[0] = {}",
                self.behavior_vocab, self.ad_vocab[0]
            )));
        }
        if self.embed_dim == 0 || self.position_dim == 0 {
            return Err(Error::Config("embedding dims must be at least 1".into()));
        }
        if self.num_positions == 0 {
            return Err(Error::Config("num_positions must be at least 1".into()));
        }
        Ok(())
    }

    pub fn position_vocab(&self) -> usize {
        self.num_positions + 1
    }

    pub fn unknown_position(&self) -> usize {
        self.num_positions
    }

    pub fn num_fields(&self) -> usize {
        self.user_vocab.len() + self.ctx_vocab.len() + self.ad_vocab.len()
    }
}

/// Tower widths and depths. Teacher and student share this config and so
/// produce `z` vectors of the same width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TowerConfig {
    pub encoder: Vec<usize>,
    pub head: Vec<usize>,
    pub attention_hidden: usize,
    pub cross_layers: usize,
    /// Softmax-normalize behavior attention weights. Off gives raw scores.
    pub normalize_attention: bool,
}

impl Default for TowerConfig {
    fn default() -> Self {
        TowerConfig {
            encoder: vec![64, 32],
            head: vec![16, 1],
            attention_hidden: 16,
            cross_layers: 2,
            normalize_attention: true,
        }
    }
}

impl TowerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() || self.encoder.contains(&0) {
            return Err(Error::Config("encoder needs at least one non-empty layer".into()));
        }
        if self.head.last() != Some(&1) || self.head.contains(&0) {
            return Err(Error::Config("head must end in a single unit".into()));
        }
        if self.attention_hidden == 0 {
            return Err(Error::Config("attention_hidden must be at least 1".into()));
        }
        Ok(())
    }

    pub fn din_dim(&self, schema: &FeatureSchema) -> usize {
        schema.embed_dim
    }

    pub fn dcn_dim(&self, schema: &FeatureSchema) -> usize {
        schema.embed_dim * schema.num_fields()
    }

    pub fn hs_dim(&self, schema: &FeatureSchema) -> usize {
        self.din_dim(schema) + self.dcn_dim(schema)
    }

    pub fn teacher_input_dim(&self, schema: &FeatureSchema) -> usize {
        self.hs_dim(schema) + schema.position_dim
    }

    pub fn student_input_dim(&self, schema: &FeatureSchema) -> usize {
        self.hs_dim(schema)
    }

    pub fn z_dim(&self) -> usize {
        *self.encoder.last().expect("validated encoder")
    }
}
