use crate::data::{Example, Features};

/// Column-major view of a mini-batch: one index vector per field, behaviors
/// packed back to back with per-row lengths.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub len: usize,
    pub user: Vec<Vec<usize>>,
    pub ctx: Vec<Vec<usize>>,
    pub ad: Vec<Vec<usize>>,
    pub behaviors: Vec<usize>,
    pub behavior_lens: Vec<usize>,
    /// Logged positions; empty for a serving batch.
    pub positions: Vec<usize>,
    pub labels: Vec<f64>,
}

fn columns<'a>(rows: impl Iterator<Item = &'a [usize]> + Clone, width: usize) -> Vec<Vec<usize>> {
    (0..width)
        .map(|f| rows.clone().map(|r| r[f]).collect())
        .collect()
}

impl Batch {
    pub fn from_features<'a>(features: impl IntoIterator<Item = &'a Features>) -> Self {
        let feats: Vec<&Features> = features.into_iter().collect();
        let Some(first) = feats.first() else {
            return Batch::default();
        };
        let (nu, nc, na) = (first.user.len(), first.ctx.len(), first.ad.len());
        Batch {
            len: feats.len(),
            user: columns(feats.iter().map(|f| f.user.as_slice()), nu),
            ctx: columns(feats.iter().map(|f| f.ctx.as_slice()), nc),
            ad: columns(feats.iter().map(|f| f.ad.as_slice()), na),
            behaviors: feats.iter().flat_map(|f| f.behaviors.iter().copied()).collect(),
            behavior_lens: feats.iter().map(|f| f.behaviors.len()).collect(),
            positions: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_examples<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Self {
        let ex: Vec<&Example> = examples.into_iter().collect();
        let mut b = Batch::from_features(ex.iter().map(|e| &e.features));
        b.positions = ex.iter().map(|e| e.pos).collect();
        b.labels = ex.iter().map(|e| e.label()).collect();
        b
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}
