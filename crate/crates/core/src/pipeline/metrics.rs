use serde::{Deserialize, Serialize};

use super::config::MetricsConfig;
use crate::error::{Error, Result};
use crate::pose::PoseSkeleton;

pub const DEFAULT_KAPPA: f64 = 0.1;

/// Mean over joints present in both skeletons of
/// `exp(-d^2 / (2 s^2 kappa^2))`, with `s` the truth's bounding-box
/// diagonal (at least 1 px). Zero when no joint is shared.
pub fn keypoint_similarity(pred: &PoseSkeleton, truth: &PoseSkeleton, kappa: f64) -> f64 {
    let s = truth.bbox_diagonal().max(1.0);
    let denom = 2.0 * s * s * kappa * kappa;
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, t) in pred.joints.iter().zip(&truth.joints) {
        if let (Some(p), Some(t)) = (p, t) {
            let d2 = (p.x - t.x).powi(2) + (p.y - t.y).powi(2);
            sum += (-d2 / denom).exp();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatch {
    pub pred: usize,
    pub truth: Option<usize>,
    pub similarity: f64,
    pub score: f64,
}

/// Predictions in score order (ties by index) each take the unmatched
/// truth of highest similarity, if it reaches `threshold`.
pub fn match_detections(pred: &[PoseSkeleton], truth: &[PoseSkeleton], threshold: f64) -> Vec<DetectionMatch> {
    match_detections_with(pred, truth, threshold, DEFAULT_KAPPA)
}

pub fn match_detections_with(
    pred: &[PoseSkeleton],
    truth: &[PoseSkeleton],
    threshold: f64,
    kappa: f64,
) -> Vec<DetectionMatch> {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[b].total_score.total_cmp(&pred[a].total_score).then(a.cmp(&b)));
    let mut taken = vec![false; truth.len()];
    order
        .into_iter()
        .map(|pi| {
            let mut best: Option<(usize, f64)> = None;
            for (ti, t) in truth.iter().enumerate() {
                if taken[ti] {
                    continue;
                }
                let s = keypoint_similarity(&pred[pi], t, kappa);
                if s >= threshold && best.is_none_or(|(_, b)| s > b) {
                    best = Some((ti, s));
                }
            }
            if let Some((ti, _)) = best {
                taken[ti] = true;
            }
            DetectionMatch {
                pred: pi,
                truth: best.map(|(t, _)| t),
                similarity: best.map_or(0.0, |(_, s)| s),
                score: pred[pi].total_score,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    pub class: usize,
    pub score: f64,
    pub true_positive: bool,
}

/// Stable sort by descending score; equal scores keep input order.
pub fn rank_detections(dets: &mut [ScoredDetection]) {
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
}

/// `sum_i P(i) * (R(i) - R(i-1))` over a ranked list of hit flags.
pub fn average_precision(ranked: &[bool], ground_truth: usize) -> f64 {
    if ground_truth == 0 {
        return 0.0;
    }
    // Every recall step is 1/ground_truth, so divide once at the end.
    let (mut tp, mut sum) = (0usize, 0.0);
    for (i, &hit) in ranked.iter().enumerate() {
        if hit {
            tp += 1;
            sum += tp as f64 / (i + 1) as f64;
        }
    }
    sum / ground_truth as f64
}

/// Mean of the recall `R(i)` reached at each rank; 0 for an empty list.
pub fn average_recall(ranked: &[bool], ground_truth: usize) -> f64 {
    if ranked.is_empty() || ground_truth == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut sum = 0usize;
    for &hit in ranked {
        tp += hit as usize;
        sum += tp;
    }
    sum as f64 / (ground_truth * ranked.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub ground_truth: usize,
    pub detections: usize,
    pub matched: usize,
    pub unmatched_detections: usize,
    pub unmatched_truth: usize,
    /// `None` when the class has no ground truth.
    pub ap: Option<f64>,
    pub ar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub classes: Vec<ClassMetrics>,
    pub map: Option<f64>,
    pub ar: Option<f64>,
    pub excluded_classes: Vec<String>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Per-class AP/AR over detections pooled across a dataset. Classes with no
/// ground truth are reported but left out of the means.
pub fn compute_metrics(
    threshold: f64,
    detections: &[ScoredDetection],
    truth_counts: &[usize],
    class_names: &[String],
) -> Result<ThresholdMetrics> {
    if truth_counts.len() != class_names.len() {
        return Err(Error::Evaluation(format!(
            "{} ground-truth counts for {} classes",
            truth_counts.len(),
            class_names.len()
        )));
    }
    if let Some(d) = detections.iter().find(|d| d.class >= class_names.len()) {
        return Err(Error::Evaluation(format!("detection class {} out of range", d.class)));
    }
    if detections.iter().any(|d| !d.score.is_finite()) {
        return Err(Error::Evaluation("detection scores must be finite".into()));
    }
    let mut ranked = detections.to_vec();
    rank_detections(&mut ranked);
    let classes: Vec<ClassMetrics> = class_names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let hits: Vec<bool> = ranked.iter().filter(|d| d.class == c).map(|d| d.true_positive).collect();
            let gt = truth_counts[c];
            let matched = hits.iter().filter(|&&h| h).count();
            ClassMetrics {
                name: name.clone(),
                ground_truth: gt,
                detections: hits.len(),
                matched,
                unmatched_detections: hits.len() - matched,
                unmatched_truth: gt.saturating_sub(matched),
                ap: (gt > 0).then(|| average_precision(&hits, gt)),
                ar: (gt > 0).then(|| average_recall(&hits, gt)),
            }
        })
        .collect();
    Ok(ThresholdMetrics {
        threshold,
        map: mean(classes.iter().filter_map(|c| c.ap)),
        ar: mean(classes.iter().filter_map(|c| c.ar)),
        excluded_classes: classes.iter().filter(|c| c.ap.is_none()).map(|c| c.name.clone()).collect(),
        classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub thresholds: Vec<ThresholdMetrics>,
    /// Mean of the per-threshold mAPs.
    pub map: Option<f64>,
    pub ar: Option<f64>,
    /// Mean pixel distance over shared joints of pairs matched at the lowest
    /// threshold.
    pub mean_joint_error: Option<f64>,
}

impl MetricsReport {
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds.iter().find(|t| t.threshold == threshold).and_then(|t| t.map)
    }
}

pub const PERSON_CLASS: &str = "person";

/// Matches predictions to truth frame by frame and pools the detections
/// into one ranked list per threshold.
pub fn evaluate_frames(
    pred: &[Vec<PoseSkeleton>],
    truth: &[Vec<PoseSkeleton>],
    cfg: &MetricsConfig,
) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return Err(Error::Evaluation(format!(
            "{} predicted frames against {} ground-truth frames",
            pred.len(),
            truth.len()
        )));
    }
    let names = vec![PERSON_CLASS.to_string()];
    let total_truth: usize = truth.iter().map(Vec::len).sum();
    let lowest = cfg.thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    let mut joint_err = (0.0, 0usize);
    let mut thresholds = Vec::new();
    for &thr in &cfg.thresholds {
        let mut dets = Vec::new();
        for (p, t) in pred.iter().zip(truth) {
            for m in match_detections_with(p, t, thr, cfg.kappa) {
                dets.push(ScoredDetection {
                    class: 0,
                    score: m.score,
                    true_positive: m.truth.is_some(),
                });
                if thr == lowest {
                    if let Some(ti) = m.truth {
                        for (a, b) in p[m.pred].joints.iter().zip(&t[ti].joints) {
                            if let (Some(a), Some(b)) = (a, b) {
                                joint_err.0 += (a.x - b.x).hypot(a.y - b.y);
                                joint_err.1 += 1;
                            }
                        }
                    }
                }
            }
        }
        thresholds.push(compute_metrics(thr, &dets, &[total_truth], &names)?);
    }
    Ok(MetricsReport {
        frames: pred.len(),
        map: mean(thresholds.iter().filter_map(|t| t.map)),
        ar: mean(thresholds.iter().filter_map(|t| t.ar)),
        thresholds,
        mean_joint_error: (joint_err.1 > 0).then(|| joint_err.0 / joint_err.1 as f64),
    })
}
