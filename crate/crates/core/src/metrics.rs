//! Threshold metrics, ROC/AUC and PR/average precision.

use std::io::Write;

use serde::Serialize;

use crate::error::{MidaError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredLabel {
    pub score: f64,
    pub label: u8,
}

impl ScoredLabel {
    pub fn new(score: f64, label: u8) -> Self {
        ScoredLabel { score, label }
    }

    fn positive(&self) -> bool {
        self.label == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdMetrics {
    pub acc: f64,
    pub pr: f64,
    pub re: f64,
    pub fs: f64,
}

/// Harmonic mean of precision and recall; 0 when both vanish.
pub fn f_score(pr: f64, re: f64) -> f64 {
    if pr + re == 0.0 {
        0.0
    } else {
        2.0 * pr * re / (pr + re)
    }
}

/// Scores at or above `threshold` are predicted positive.
pub fn threshold_metrics(scored: &[ScoredLabel], threshold: f64) -> Result<ThresholdMetrics> {
    if scored.is_empty() {
        return Err(MidaError::EmptyInput("no scored samples".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for s in scored {
        match (s.score >= threshold, s.positive()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let pr = ratio(tp, tp + fp);
    let re = ratio(tp, tp + fn_);
    Ok(ThresholdMetrics {
        acc: ratio(tp + tn, scored.len()),
        pr,
        re,
        fs: f_score(pr, re),
    })
}

/// Cumulative (tp, fp) after each block of tied scores, highest score first.
fn sweep(scored: &[ScoredLabel]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<&ScoredLabel> = scored.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].score;
        while i < sorted.len() && sorted[i].score == t {
            if sorted[i].positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((t, tp, fp));
    }
    out
}

fn class_counts(scored: &[ScoredLabel]) -> (usize, usize) {
    let p = scored.iter().filter(|s| s.positive()).count();
    (p, scored.len() - p)
}

/// ROC points `(FPR, TPR)` from `(0, 0)` at threshold `+inf` down to `(1, 1)`,
/// and the trapezoidal area under them.
pub fn roc_auc(scored: &[ScoredLabel]) -> Result<(f64, Vec<CurvePoint>)> {
    let (p, n) = class_counts(scored);
    if p == 0 || n == 0 {
        return Err(MidaError::UndefinedMetric("ROC AUC needs both classes".into()));
    }
    let mut points = vec![CurvePoint { threshold: f64::INFINITY, x: 0.0, y: 0.0 }];
    let mut auc = 0.0;
    for (t, tp, fp) in sweep(scored) {
        let prev = *points.last().unwrap();
        let pt = CurvePoint { threshold: t, x: fp as f64 / n as f64, y: tp as f64 / p as f64 };
        auc += (pt.x - prev.x) * (pt.y + prev.y) / 2.0;
        points.push(pt);
    }
    Ok((auc, points))
}

/// Mann-Whitney statistic over all positive/negative pairs, ties counted 1/2.
pub fn pairwise_auc(scored: &[ScoredLabel]) -> Result<f64> {
    let (p, n) = class_counts(scored);
    if p == 0 || n == 0 {
        return Err(MidaError::UndefinedMetric("ROC AUC needs both classes".into()));
    }
    let mut wins = 0.0;
    for a in scored.iter().filter(|s| s.positive()) {
        for b in scored.iter().filter(|s| !s.positive()) {
            wins += if a.score > b.score {
                1.0
            } else if a.score == b.score {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (p * n) as f64)
}

/// PR points `(recall, precision)` per distinct threshold and the average
/// precision `sum_k (R_k - R_{k-1}) P_k`.
pub fn pr_aupr(scored: &[ScoredLabel]) -> Result<(f64, Vec<CurvePoint>)> {
    let (p, _) = class_counts(scored);
    if p == 0 {
        return Err(MidaError::UndefinedMetric("PR curve needs at least one positive".into()));
    }
    let mut points = Vec::new();
    let mut aupr = 0.0;
    let mut prev_recall = 0.0;
    for (t, tp, fp) in sweep(scored) {
        let recall = tp as f64 / p as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        aupr += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(CurvePoint { threshold: t, x: recall, y: precision });
    }
    Ok((aupr, points))
}

/// Writes `threshold,x,y` rows.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
