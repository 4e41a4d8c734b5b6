use std::fmt::Write as _;

use crate::data::example::Example;

#[derive(Debug, Clone, PartialEq)]
pub struct PositionCtr {
    pub position: usize,
    pub impressions: usize,
    pub clicks: usize,
    /// `None` for a slot with no impressions.
    pub ctr: Option<f64>,
}

/// Exact impression and click counts per logged position `0..k`.
pub fn empirical_ctr_by_position(data: &[Example], k: usize) -> Vec<PositionCtr> {
    let mut imp = vec![0usize; k];
    let mut clk = vec![0usize; k];
    for e in data {
        if e.pos < k {
            imp[e.pos] += 1;
            clk[e.pos] += usize::from(e.click);
        }
    }
    (0..k)
        .map(|p| PositionCtr {
            position: p,
            impressions: imp[p],
            clicks: clk[p],
            ctr: (imp[p] > 0).then(|| clk[p] as f64 / imp[p] as f64),
        })
        .collect()
}

/// `position,impressions,ctr` with an empty cell for empty slots.
pub fn ctr_csv(rows: &[PositionCtr]) -> String {
    let mut s = String::from("position,impressions,ctr\n");
    for r in rows {
        let ctr = r.ctr.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", r.position, r.impressions, ctr);
    }
    s
}

pub fn ctr_table(rows: &[PositionCtr]) -> String {
    let mut s = format!("{:>8} {:>12} {:>8} {:>8}\n", "position", "impressions", "clicks", "ctr");
    for r in rows {
        let ctr = r.ctr.map_or_else(|| "-".to_string(), |c| format!("{c:.4}"));
        let _ = writeln!(s, "{:>8} {:>12} {:>8} {:>8}", r.position, r.impressions, r.clicks, ctr);
    }
    s
}
