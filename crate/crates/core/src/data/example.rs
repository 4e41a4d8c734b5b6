use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeatureSchema;

/// Everything about an impression that is known at serving time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Features {
    pub user: Vec<usize>,
    pub ctx: Vec<usize>,
    pub ad: Vec<usize>,
    pub behaviors: Vec<usize>,
}

impl Features {
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        check_fields("user", &self.user, &schema.user_vocab)?;
        check_fields("ctx", &self.ctx, &schema.ctx_vocab)?;
        check_fields("ad", &self.ad, &schema.ad_vocab)?;
        if self.behaviors.len() > schema.max_behaviors {
            return Err(Error::contract(format!(
                "behavior sequence of length {} exceeds max {}",
                self.behaviors.len(),
                schema.max_behaviors
            )));
        }
        for &b in &self.behaviors {
            if b >= schema.behavior_vocab {
                return Err(Error::IndexOutOfRange {
                    what: "behaviors".into(),
                    index: b,
                    vocab: schema.behavior_vocab,
                });
            }
        }
        Ok(())
    }
}

fn check_fields(group: &str, idx: &[usize], vocab: &[usize]) -> Result<()> {
    if idx.len() != vocab.len() {
        return Err(Error::contract(format!(
            "{group} has {} fields, schema expects {}",
            idx.len(),
            vocab.len()
        )));
    }
    for (f, (&i, &v)) in idx.iter().zip(vocab).enumerate() {
        if i >= v {
            return Err(Error::IndexOutOfRange {
                what: format!("{group}[{f}]"),
                index: i,
                vocab: v,
            });
        }
    }
    Ok(())
}

/// One logged impression.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Unique within a generated split set; line number for loaded files.
    pub id: u64,
    pub features: Features,
    pub pos: usize,
    pub click: bool,
    /// Hidden relevance; only synthetic data has it.
    pub rel: Option<f64>,
}

impl Example {
    pub fn label(&self) -> f64 {
        if self.click {
            1.0
        } else {
            0.0
        }
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        self.features.validate(schema)?;
        if self.pos >= schema.num_positions {
            return Err(Error::IndexOutOfRange {
                what: "pos".into(),
                index: self.pos,
                vocab: schema.num_positions,
            });
        }
        Ok(())
    }
}

pub type Dataset = Vec<Example>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub num_positions: usize,
    pub propensity: Vec<f64>,
}

/// Train and validation come from the same period; test is a later tranche.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub manifest: SplitManifest,
}

impl DatasetSplit {
    /// True when no example id appears in more than one split.
    pub fn is_disjoint(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .all(|e| seen.insert(e.id))
    }
}
