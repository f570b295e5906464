//! Rank-based detection metrics. OOD is the positive class and a higher
//! score means "more OOD". Samples with equal scores always move between
//! confusion cells together, so results do not depend on input order.

use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::tensor_io::Label;

pub const DEFAULT_TPR_TARGET: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub sample_id: String,
    pub score: f64,
    pub label: Label,
}

impl ScoredSample {
    pub fn new(sample_id: impl Into<String>, score: f64, label: Label) -> Self {
        Self {
            sample_id: sample_id.into(),
            score,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsTriple {
    pub auroc: f64,
    pub aupr: f64,
    pub fpr_at_tpr: f64,
    pub tpr_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub mean: MetricsTriple,
    pub sd: MetricsTriple,
    pub n_trials: usize,
}

/// Cumulative `(true positives, false positives)` after admitting each
/// distinct score, highest first.
struct Curve {
    points: Vec<(usize, usize)>,
    positives: usize,
    negatives: usize,
}

fn curve(samples: &[ScoredSample]) -> Result<Curve> {
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(OodError::Degenerate(format!(
            "non-finite score for {:?}",
            s.sample_id
        )));
    }
    let mut order: Vec<(f64, bool)> = samples.iter().map(|s| (s.score, s.label.is_ood())).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let score = order[i].0;
        while i < order.len() && order[i].0 == score {
            if order[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp, fp));
    }
    Ok(Curve {
        points,
        positives: tp,
        negatives: fp,
    })
}

fn require_both(c: &Curve) -> Result<()> {
    if c.positives == 0 || c.negatives == 0 {
        return Err(OodError::Degenerate(format!(
            "need both classes, got {} OOD and {} ID",
            c.positives, c.negatives
        )));
    }
    Ok(())
}

/// Probability that a random OOD sample outscores a random ID sample, ties
/// counting one half (trapezoidal ROC area).
pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    let c = curve(samples)?;
    require_both(&c)?;
    let mut area = 0.0;
    let (mut prev_tp, mut prev_fp) = (0usize, 0usize);
    for &(tp, fp) in &c.points {
        area += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 * 0.5;
        prev_tp = tp;
        prev_fp = fp;
    }
    Ok(area / (c.positives as f64 * c.negatives as f64))
}

/// Average precision: `Σ (R_k − R_{k−1}) P_k` over distinct score thresholds.
pub fn aupr(samples: &[ScoredSample]) -> Result<f64> {
    let c = curve(samples)?;
    if c.positives == 0 {
        return Err(OodError::Degenerate("no OOD samples".into()));
    }
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for &(tp, fp) in &c.points {
        if tp > prev_tp {
            let recall_step = (tp - prev_tp) as f64 / c.positives as f64;
            ap += recall_step * tp as f64 / (tp + fp) as f64;
        }
        prev_tp = tp;
    }
    Ok(ap)
}

/// Smallest false positive rate over thresholds reaching `tpr_target`.
pub fn fpr_at_tpr(samples: &[ScoredSample], tpr_target: f64) -> Result<f64> {
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(OodError::Config(format!(
            "tpr_target must be in (0, 1], got {tpr_target}"
        )));
    }
    let c = curve(samples)?;
    require_both(&c)?;
    let best = c
        .points
        .iter()
        .filter(|&&(tp, _)| tp as f64 / c.positives as f64 >= tpr_target)
        .map(|&(_, fp)| fp)
        .min()
        .expect("the lowest threshold always reaches TPR 1");
    Ok(best as f64 / c.negatives as f64)
}

pub fn evaluate_at(samples: &[ScoredSample], tpr_target: f64) -> Result<MetricsTriple> {
    Ok(MetricsTriple {
        auroc: auroc(samples)?,
        aupr: aupr(samples)?,
        fpr_at_tpr: fpr_at_tpr(samples, tpr_target)?,
        tpr_target,
    })
}

/// AUROC, AUPR and FPR at 75% TPR.
pub fn evaluate(samples: &[ScoredSample]) -> Result<MetricsTriple> {
    evaluate_at(samples, DEFAULT_TPR_TARGET)
}

/// Fieldwise mean and population standard deviation.
pub fn aggregate_trials(triples: &[MetricsTriple]) -> Result<TrialSummary> {
    let first = triples
        .first()
        .ok_or_else(|| OodError::Degenerate("no trials to aggregate".into()))?;
    if triples.iter().any(|t| t.tpr_target != first.tpr_target) {
        return Err(OodError::Config("trials disagree on tpr_target".into()));
    }
    let n = triples.len() as f64;
    let stats = |f: fn(&MetricsTriple) -> f64| {
        let mean = triples.iter().map(f).sum::<f64>() / n;
        let var = triples.iter().map(|t| (f(t) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (auroc_m, auroc_s) = stats(|t| t.auroc);
    let (aupr_m, aupr_s) = stats(|t| t.aupr);
    let (fpr_m, fpr_s) = stats(|t| t.fpr_at_tpr);
    Ok(TrialSummary {
        mean: MetricsTriple {
            auroc: auroc_m,
            aupr: aupr_m,
            fpr_at_tpr: fpr_m,
            tpr_target: first.tpr_target,
        },
        sd: MetricsTriple {
            auroc: auroc_s,
            aupr: aupr_s,
            fpr_at_tpr: fpr_s,
            tpr_target: first.tpr_target,
        },
        n_trials: triples.len(),
    })
}

/// Build samples from parallel score and label slices with generated ids.
pub fn scored(scores: &[f64], labels: &[Label]) -> Vec<ScoredSample> {
    scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&s, &l))| ScoredSample::new(format!("s{i}"), s, l))
        .collect()
}
