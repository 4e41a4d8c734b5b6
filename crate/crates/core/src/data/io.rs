//! JSONL example files and the split manifest sidecar.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::example::{Dataset, DatasetSplit, Example, Features, SplitManifest};
use crate::error::{Error, Result};
use crate::model::FeatureSchema;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    user: Vec<usize>,
    ctx: Vec<usize>,
    ad: Vec<usize>,
    behaviors: Vec<usize>,
    pos: usize,
    click: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rel: Option<f64>,
}

impl From<&Example> for Record {
    fn from(e: &Example) -> Self {
        Record {
            user: e.features.user.clone(),
            ctx: e.features.ctx.clone(),
            ad: e.features.ad.clone(),
            behaviors: e.features.behaviors.clone(),
            pos: e.pos,
            click: u8::from(e.click),
            rel: e.rel,
        }
    }
}

pub fn write_jsonl(path: &Path, data: &[Example]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in data {
        serde_json::to_writer(&mut w, &Record::from(e))
            .map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads one example per line; blank lines are skipped. Ids are the
/// zero-based line numbers.
pub fn load_jsonl(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let r: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if r.click > 1 {
            return Err(parse_err(format!("click must be 0 or 1, got {}", r.click)));
        }
        if let Some(rel) = r.rel {
            if !(rel > 0.0 && rel < 1.0) {
                return Err(parse_err(format!("rel must lie in (0, 1), got {rel}")));
            }
        }
        let e = Example {
            id: i as u64,
            features: Features {
                user: r.user,
                ctx: r.ctx,
                ad: r.ad,
                behaviors: r.behaviors,
            },
            pos: r.pos,
            click: r.click == 1,
            rel: r.rel,
        };
        e.validate(schema).map_err(|err| parse_err(err.to_string()))?;
        out.push(e);
    }
    Ok(out)
}

pub fn write_split(dir: &Path, split: &DatasetSplit) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join(TRAIN_FILE), &split.train)?;
    write_jsonl(&dir.join(VALIDATION_FILE), &split.validation)?;
    write_jsonl(&dir.join(TEST_FILE), &split.test)?;
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&split.manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_split(dir: &Path, schema: &FeatureSchema) -> Result<DatasetSplit> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SplitManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    Ok(DatasetSplit {
        train: load_jsonl(&dir.join(TRAIN_FILE), schema)?,
        validation: load_jsonl(&dir.join(VALIDATION_FILE), schema)?,
        test: load_jsonl(&dir.join(TEST_FILE), schema)?,
        manifest,
    })
}
