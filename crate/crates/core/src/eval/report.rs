//! Per-model metric reports, per-position pCTR curves and the comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{empirical_ctr_by_position, Example};
use crate::error::{Error, Result};
use crate::eval::metrics::{auc, logloss, mean_std, relevance_auc};
use crate::method::Method;
use crate::model::Network;
use crate::nn::ParamStore;

/// How examples are scored for a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreRule {
    /// The model's serving path (features only).
    Serving,
    /// Training path with the logged position. Diagnostic only.
    WithPositions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub logloss: f64,
    pub n: usize,
    pub pctr_by_pos: Vec<Option<f64>>,
    pub ctr_by_pos: Vec<Option<f64>>,
    pub relevance_auc: Option<f64>,
}

pub fn score(
    method: &Method,
    net: &Network,
    params: &ParamStore,
    data: &[Example],
    rule: ScoreRule,
) -> Result<Vec<f64>> {
    match rule {
        ScoreRule::Serving => method.serve_examples(net, params, data),
        ScoreRule::WithPositions => method.score_with_positions(net, params, data),
    }
}

/// Mean score per logged position; `None` for an empty bucket.
pub fn mean_by_position(scores: &[f64], positions: &[usize], k: usize) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; k];
    let mut cnt = vec![0usize; k];
    for (&s, &p) in scores.iter().zip(positions) {
        if p < k {
            sum[p] += s;
            cnt[p] += 1;
        }
    }
    sum.into_iter()
        .zip(cnt)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect()
}

pub fn pctr_by_position(
    method: &Method,
    net: &Network,
    params: &ParamStore,
    data: &[Example],
    rule: ScoreRule,
) -> Result<Vec<Option<f64>>> {
    let scores = score(method, net, params, data, rule)?;
    let pos: Vec<usize> = data.iter().map(|e| e.pos).collect();
    Ok(mean_by_position(&scores, &pos, net.schema.num_positions))
}

pub fn pctr_csv(curve: &[Option<f64>]) -> String {
    let mut s = String::from("position,mean_pctr\n");
    for (k, v) in curve.iter().enumerate() {
        let _ = writeln!(s, "{k},{}", v.map(|x| x.to_string()).unwrap_or_default());
    }
    s
}

/// Builds a report from precomputed scores.
pub fn report_from_scores(scores: &[f64], data: &[Example], k: usize) -> Result<MetricsReport> {
    if scores.len() != data.len() {
        return Err(Error::Shape {
            op: "report",
            left: vec![scores.len()],
            right: vec![data.len()],
        });
    }
    let labels: Vec<bool> = data.iter().map(|e| e.click).collect();
    let pos: Vec<usize> = data.iter().map(|e| e.pos).collect();
    let rel: Option<Vec<f64>> = data.iter().map(|e| e.rel).collect();
    Ok(MetricsReport {
        auc: auc(scores, &labels)?,
        logloss: logloss(scores, &labels),
        n: data.len(),
        pctr_by_pos: mean_by_position(scores, &pos, k),
        ctr_by_pos: empirical_ctr_by_position(data, k).into_iter().map(|r| r.ctr).collect(),
        relevance_auc: rel.and_then(|r| relevance_auc(scores, &r).ok()),
    })
}

pub fn evaluate(
    method: &Method,
    net: &Network,
    params: &ParamStore,
    data: &[Example],
    rule: ScoreRule,
) -> Result<MetricsReport> {
    let scores = score(method, net, params, data, rule)?;
    report_from_scores(&scores, data, net.schema.num_positions)
}

/// One aggregated row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub runs: usize,
    pub auc: (f64, f64),
    pub logloss: (f64, f64),
    pub relevance_auc: Option<(f64, f64)>,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Aggregates each model's runs into mean ± std (n − 1) and flags the row
/// with the highest mean AUC. Deltas are reported against the first row.
pub fn compare_models(entries: &[(String, Vec<MetricsReport>)]) -> Result<Comparison> {
    if entries.is_empty() {
        return Err(Error::contract("compare_models needs at least one entry"));
    }
    let mut rows: Vec<ComparisonRow> = entries
        .iter()
        .map(|(name, runs)| {
            if runs.is_empty() {
                return Err(Error::contract(format!("model {name} has no runs")));
            }
            let aucs: Vec<f64> = runs.iter().map(|r| r.auc).collect();
            let lls: Vec<f64> = runs.iter().map(|r| r.logloss).collect();
            let rel: Option<Vec<f64>> = runs.iter().map(|r| r.relevance_auc).collect();
            Ok(ComparisonRow {
                name: name.clone(),
                runs: runs.len(),
                auc: mean_std(&aucs),
                logloss: mean_std(&lls),
                relevance_auc: rel.map(|r| mean_std(&r)),
                best: false,
            })
        })
        .collect::<Result<_>>()?;
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.auc.0 > rows[b].auc.0 { i } else { b });
    rows[best].best = true;
    Ok(Comparison { rows })
}

fn pct(delta: f64, base: f64) -> f64 {
    if base == 0.0 {
        f64::NAN
    } else {
        100.0 * delta / base
    }
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let base = &self.rows[0];
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<name_w$}  {:>4}  {:>19}  {:>19}  {:>19}  {:>10}  {:>8}  {:>10}  {:>8}  best",
            "model", "runs", "AUC", "LogLoss", "RelAUC", "dAUC", "dAUC%", "dLogLoss", "dLL%"
        );
        for r in &self.rows {
            let rel = r
                .relevance_auc
                .map(|(m, sd)| format!("{m:.4} ± {sd:.4}"))
                .unwrap_or_else(|| "-".into());
            let da = r.auc.0 - base.auc.0;
            let dl = r.logloss.0 - base.logloss.0;
            let _ = writeln!(
                s,
                "{:<name_w$}  {:>4}  {:>19}  {:>19}  {:>19}  {:>+10.4}  {:>+7.2}%  {:>+10.4}  {:>+7.2}%  {}",
                r.name,
                r.runs,
                format!("{:.4} ± {:.4}", r.auc.0, r.auc.1),
                format!("{:.4} ± {:.4}", r.logloss.0, r.logloss.1),
                rel,
                da,
                pct(da, base.auc.0),
                dl,
                pct(dl, base.logloss.0),
                if r.best { "*" } else { "" }
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let base = &self.rows[0];
        let mut s = String::from(
            "model,runs,auc_mean,auc_std,logloss_mean,logloss_std,rel_auc_mean,rel_auc_std,\
             delta_auc,delta_auc_pct,delta_logloss,delta_logloss_pct,best\n",
        );
        for r in &self.rows {
            let (rm, rs) = r
                .relevance_auc
                .map(|(m, sd)| (m.to_string(), sd.to_string()))
                .unwrap_or_default();
            let da = r.auc.0 - base.auc.0;
            let dl = r.logloss.0 - base.logloss.0;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.name,
                r.runs,
                r.auc.0,
                r.auc.1,
                r.logloss.0,
                r.logloss.1,
                rm,
                rs,
                da,
                pct(da, base.auc.0),
                dl,
                pct(dl, base.logloss.0),
                r.best
            );
        }
        s
    }
}
