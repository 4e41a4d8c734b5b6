//! AUC, LogLoss and the small statistics used by the reports.

use crate::distill::loss::ce_loss;
use crate::error::{Error, Result};

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Sort-and-rank with mid-ranks, accumulated in doubled
/// integer units so the result is exact.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            op: "auc",
            left: vec![scores.len()],
            right: vec![labels.len()],
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::contract("auc: NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Σ over positives of twice their 1-based mid-rank.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j) as u64;
        let p = order[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        rank_sum2 += p * mid2;
        i = j;
    }
    let num2 = rank_sum2 - pos * (pos + 1);
    Ok(num2 as f64 / (2 * pos * neg) as f64)
}

/// Mean cross entropy with clamped probabilities.
pub fn logloss(scores: &[f64], labels: &[bool]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores
        .iter()
        .zip(labels)
        .map(|(&p, &y)| ce_loss(p, if y { 1.0 } else { 0.0 }))
        .sum::<f64>()
        / scores.len() as f64
}

/// AUC against true relevance thresholded at its median: items strictly
/// above the median are the positives.
pub fn relevance_auc(scores: &[f64], relevance: &[f64]) -> Result<f64> {
    let mut sorted = relevance.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = match sorted.len() {
        0 => return Err(Error::AucUndefined),
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    };
    let labels: Vec<bool> = relevance.iter().map(|&r| r > median).collect();
    auc(scores, &labels)
}

/// Mid-ranks (1-based) with ties averaged.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            r[k] = mid;
        }
        i = j;
    }
    r
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

/// Spearman correlation between slot index and a per-slot curve, skipping
/// empty slots.
pub fn position_spearman(curve: &[Option<f64>]) -> Option<f64> {
    let (pos, vals): (Vec<f64>, Vec<f64>) = curve
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k as f64, v)))
        .unzip();
    spearman(&pos, &vals)
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, var.sqrt())
}
