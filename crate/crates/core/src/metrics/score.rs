use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::MetricError;

pub const BLEU_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bleu {
    /// Plain BLEU-4: zero as soon as one n-gram order has no match.
    pub raw: f64,
    /// Add-one smoothing of the 2..4-gram precisions.
    pub smoothed: f64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

/// Single-reference BLEU-4 with brevity penalty, uniform weights.
pub fn bleu(pred: &[String], reference: &[String]) -> Result<Bleu, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    if pred.is_empty() {
        return Ok(Bleu { raw: 0.0, smoothed: 0.0 });
    }
    let mut log_raw = 0.0;
    let mut log_smooth = 0.0;
    let mut raw_zero = false;
    for n in 1..=BLEU_ORDER {
        let p = ngram_counts(pred, n);
        let r = ngram_counts(reference, n);
        let total: usize = p.values().sum();
        let matched: usize = p.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
        if matched == 0 {
            raw_zero = true;
        } else {
            log_raw += (matched as f64 / total as f64).ln();
        }
        let smooth = if n == 1 {
            if matched == 0 {
                return Ok(Bleu { raw: 0.0, smoothed: 0.0 });
            }
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_smooth += smooth.ln();
    }
    let (c, r) = (pred.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    let w = 1.0 / BLEU_ORDER as f64;
    Ok(Bleu {
        raw: if raw_zero { 0.0 } else { bp * (w * log_raw).exp() },
        smoothed: (bp * (w * log_smooth).exp()).min(1.0),
    })
}

/// Jaccard index of the two token sets.
pub fn iou(pred: &[String], reference: &[String]) -> Result<f64, MetricError> {
    let a: HashSet<&String> = pred.iter().collect();
    let b: HashSet<&String> = reference.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return Err(MetricError::BothEmpty);
    }
    Ok(a.intersection(&b).count() as f64 / union as f64)
}

/// Pearson product-moment correlation, computed in two passes.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooFewPoints(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Relative threshold, so a constant series with rounding noise still counts as degenerate.
    let scale_x = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let scale_y = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if sxx <= 1e-24 * scale_x * scale_x * n || syy <= 1e-24 * scale_y * scale_y * n {
        return Err(MetricError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
