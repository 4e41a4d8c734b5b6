//! Examples, the synthetic click-log generator, and JSONL ingestion.

pub mod ctr;
pub mod example;
pub mod generate;
pub mod io;

pub use ctr::{ctr_csv, ctr_table, empirical_ctr_by_position, PositionCtr};
pub use example::{Dataset, DatasetSplit, Example, Features, SplitManifest};
pub use generate::{click_probability, generate, propensities, sample_click, GenConfig, RelevanceModel};
pub use io::{load_jsonl, load_split, write_jsonl, write_split};
