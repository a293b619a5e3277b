//! Detection evaluation: greedy per-class per-image matching, cumulative
//! precision/recall curves, 101-point interpolated average precision, and
//! the mAP50 / mAP50-95 report.

use std::collections::BTreeMap;

use crate::boxloss::{iou, BBox};
use crate::{Error, Result};

/// The ten-threshold grid 0.50, 0.55, ..., 0.95.
pub fn full_threshold_grid() -> Vec<f64> {
    (0..10u32).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

/// Grid thresholds are exact decimals while IoU carries float rounding, so
/// an overlap within this margin of the threshold counts as meeting it.
pub const IOU_THRESHOLD_EPS: f64 = 1e-9;

/// Threshold test used by the matcher.
#[inline]
pub fn meets_threshold(overlap: f64, threshold: f64) -> bool {
    overlap >= threshold - IOU_THRESHOLD_EPS
}

/// A scored class prediction on one image.
#[derive(Debug, Clone)]
pub struct Detection {
    pub image_id: String,
    pub class_id: usize,
    pub confidence: f64,
    pub bbox: BBox<f64>,
}

impl Detection {
    pub fn new(image_id: String, class_id: usize, confidence: f64, bbox: BBox<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::param(format!(
                "confidence {confidence} outside [0,1]"
            )));
        }
        Ok(Self {
            image_id,
            class_id,
            confidence,
            bbox,
        })
    }
}

/// A labeled instance on one image.
#[derive(Debug, Clone)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BBox<f64>,
}

/// Per-detection and per-ground-truth match flags, aligned with the input
/// slices.
#[derive(Debug, Clone, Default)]
pub struct MatchResult {
    /// `true` where the detection is a true positive.
    pub det_is_tp: Vec<bool>,
    /// `true` where the ground truth was matched by some detection.
    pub gt_matched: Vec<bool>,
}

/// Greedy one-to-one matching: detections are processed in descending
/// confidence within each (image, class) group, each taking the unmatched
/// same-class ground truth of highest IoU `≥ iou_threshold` (ties prefer the
/// lower ground-truth index).
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> MatchResult {
    let mut result = MatchResult {
        det_is_tp: vec![false; dets.len()],
        gt_matched: vec![false; gts.len()],
    };

    // group indices per (image, class); BTreeMap keeps iteration deterministic
    let mut det_groups: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        det_groups
            .entry((d.image_id.as_str(), d.class_id))
            .or_default()
            .push(i);
    }
    let mut gt_groups: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
    for (j, g) in gts.iter().enumerate() {
        gt_groups
            .entry((g.image_id.as_str(), g.class_id))
            .or_default()
            .push(j);
    }

    for (key, det_idx) in det_groups {
        let Some(gt_idx) = gt_groups.get(&key) else {
            continue;
        };
        let mut order = det_idx.clone();
        order.sort_by(|&a, &b| {
            dets[b]
                .confidence
                .partial_cmp(&dets[a].confidence)
                .expect("finite confidences")
        });
        for di in order {
            let mut best: Option<(f64, usize)> = None;
            for &gj in gt_idx {
                if result.gt_matched[gj] {
                    continue;
                }
                let overlap = iou(&dets[di].bbox, &gts[gj].bbox);
                if !meets_threshold(overlap, iou_threshold) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((best_iou, _)) => overlap > best_iou,
                };
                if better {
                    best = Some((overlap, gj));
                }
            }
            if let Some((_, gj)) = best {
                result.det_is_tp[di] = true;
                result.gt_matched[gj] = true;
            }
        }
    }
    result
}

/// One point of a cumulative precision/recall sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
    pub confidence: f64,
}

/// Raw cumulative precision/recall points, confidence descending. The
/// non-increasing precision envelope is applied later, during integration.
pub fn pr_curve(flags: &[bool], confidences: &[f64], num_gt: usize) -> Vec<PrPoint> {
    assert_eq!(flags.len(), confidences.len());
    let mut order: Vec<usize> = (0..flags.len()).collect();
    order.sort_by(|&a, &b| {
        confidences[b]
            .partial_cmp(&confidences[a])
            .expect("finite confidences")
    });
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(order.len());
    for (rank, &i) in order.iter().enumerate() {
        if flags[i] {
            tp += 1;
        }
        let seen = rank + 1;
        points.push(PrPoint {
            precision: tp as f64 / seen as f64,
            recall: if num_gt == 0 {
                0.0
            } else {
                tp as f64 / num_gt as f64
            },
            confidence: confidences[i],
        });
    }
    points
}

/// 101-point interpolated average precision: the mean over the recall grid
/// 0.00..1.00 (step 0.01) of the envelope precision `max{p_i : r_i ≥ r}`.
pub fn average_precision(points: &[PrPoint]) -> f64 {
    let mut total = 0.0;
    for step in 0..=100 {
        let r = step as f64 * 0.01;
        let mut best = 0.0f64;
        for p in points {
            if p.recall >= r - 1e-12 && p.precision > best {
                best = p.precision;
            }
        }
        total += best;
    }
    total / 101.0
}

#[derive(Debug, Clone)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub num_gt: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap50: f64,
    pub ap50_95: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
}

/// Per-class and aggregate evaluation figures.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Classes present in the ground truth, ascending id.
    pub per_class: Vec<ClassMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub map50_95: f64,
    /// Pooled counts over every class at the reporting confidence threshold
    /// (IoU 0.50 matching).
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    /// Confidence threshold maximizing pooled F1 at IoU 0.50.
    pub reporting_confidence: f64,
    pub num_detections: usize,
    pub num_ground_truths: usize,
}

/// Validate a threshold list: non-empty subset of the 0.50..0.95 grid.
pub fn validate_thresholds(thresholds: &[f64]) -> Result<Vec<f64>> {
    if thresholds.is_empty() {
        return Err(Error::param("iou threshold list is empty"));
    }
    let grid = full_threshold_grid();
    let mut cleaned: Vec<f64> = Vec::new();
    for &t in thresholds {
        let snapped = grid
            .iter()
            .find(|&&g| (g - t).abs() < 1e-9)
            .copied()
            .ok_or_else(|| {
                Error::param(format!(
                    "iou threshold {t} not on the 0.50..0.95 grid (step 0.05)"
                ))
            })?;
        if !cleaned.iter().any(|&c| (c - snapped).abs() < 1e-9) {
            cleaned.push(snapped);
        }
    }
    cleaned.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(cleaned)
}

/// Evaluate detections against ground truth.
///
/// `map50` always integrates at IoU 0.50; `map50_95` averages per-class AP
/// over `thresholds` (the full ten-step grid by default). Classes absent
/// from the ground truth are excluded from the means. The single-point
/// precision/recall columns are taken at the pooled-F1-maximizing confidence.
pub fn map_at(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    thresholds: &[f64],
    num_classes: usize,
) -> Result<EvalReport> {
    let thresholds = validate_thresholds(thresholds)?;
    for d in dets {
        if d.class_id >= num_classes {
            return Err(Error::param(format!(
                "detection class id {} outside schema of {num_classes}",
                d.class_id
            )));
        }
    }
    for g in gts {
        if g.class_id >= num_classes {
            return Err(Error::param(format!(
                "ground-truth class id {} outside schema of {num_classes}",
                g.class_id
            )));
        }
    }

    let matches50 = match_detections(dets, gts, 0.50);
    let gt_count_per_class = |c: usize| gts.iter().filter(|g| g.class_id == c).count();

    // global reporting threshold: maximize pooled F1 at IoU 0.50
    let total_gt = gts.len();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .expect("finite confidences")
    });
    let mut best_f1 = 0.0f64;
    let mut best_cut = 0usize; // number of detections kept
    let mut tp_so_far = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if matches50.det_is_tp[i] {
            tp_so_far += 1;
        }
        // only evaluate at confidence boundaries so equal scores stay together
        let is_boundary = rank + 1 == order.len()
            || dets[order[rank + 1]].confidence < dets[i].confidence;
        if !is_boundary {
            continue;
        }
        let kept = rank + 1;
        let p = tp_so_far as f64 / kept as f64;
        let r = if total_gt == 0 {
            0.0
        } else {
            tp_so_far as f64 / total_gt as f64
        };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        if f1 > best_f1 {
            best_f1 = f1;
            best_cut = kept;
        }
    }
    let reporting_confidence = if best_cut == 0 {
        1.0
    } else {
        dets[order[best_cut - 1]].confidence
    };
    let kept: Vec<bool> = {
        let mut kept = vec![false; dets.len()];
        for &i in order.iter().take(best_cut) {
            kept[i] = true;
        }
        kept
    };

    // per-threshold matches reused across classes
    let per_thr_matches: Vec<MatchResult> = thresholds
        .iter()
        .map(|&t| match_detections(dets, gts, t))
        .collect();

    let mut per_class = Vec::new();
    let mut pooled_tp = 0usize;
    let mut pooled_fp = 0usize;
    for c in 0..num_classes {
        let num_gt = gt_count_per_class(c);
        let det_idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class_id == c).collect();

        // counts at the reporting threshold (IoU 0.50)
        let tp = det_idx
            .iter()
            .filter(|&&i| kept[i] && matches50.det_is_tp[i])
            .count();
        let fp = det_idx.iter().filter(|&&i| kept[i]).count() - tp;
        pooled_tp += tp;
        pooled_fp += fp;
        if num_gt == 0 {
            continue;
        }

        let flags50: Vec<bool> = det_idx.iter().map(|&i| matches50.det_is_tp[i]).collect();
        let confs: Vec<f64> = det_idx.iter().map(|&i| dets[i].confidence).collect();
        let ap50 = average_precision(&pr_curve(&flags50, &confs, num_gt));
        let mut ap_sum = 0.0;
        for m in &per_thr_matches {
            let flags: Vec<bool> = det_idx.iter().map(|&i| m.det_is_tp[i]).collect();
            ap_sum += average_precision(&pr_curve(&flags, &confs, num_gt));
        }
        let ap50_95 = ap_sum / thresholds.len() as f64;

        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = tp as f64 / num_gt as f64;
        per_class.push(ClassMetrics {
            class_id: c,
            num_gt,
            precision,
            recall,
            ap50,
            ap50_95,
            tp,
            fp,
            fn_count: num_gt - tp,
        });
    }

    let classes = per_class.len().max(1) as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| -> f64 {
        if per_class.is_empty() {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / classes
        }
    };
    Ok(EvalReport {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        map50: mean(|m| m.ap50),
        map50_95: mean(|m| m.ap50_95),
        tp: pooled_tp,
        fp: pooled_fp,
        fn_count: total_gt - pooled_tp,
        reporting_confidence,
        num_detections: dets.len(),
        num_ground_truths: total_gt,
        per_class,
    })
}
