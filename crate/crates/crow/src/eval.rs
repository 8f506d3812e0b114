//! COCO-protocol mean Average Precision.
//!
//! Per category and IoU threshold, detections are visited by descending
//! score (ties: lower input index first), truncated to `max_dets` per
//! image, and greedily matched to the unmatched ground-truth box of
//! highest IoU at or above the threshold. Crowd ground truth acts as an
//! ignore region: detections matching it count neither as true nor as
//! false positives. The precision-recall curve is summarized by 101-point
//! interpolated AP; categories without ground truth are skipped in the
//! mean.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetIndex;
use crate::error::{Error, Result};
use crate::merge::{iou, DetectionRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Strictly increasing IoU thresholds in (0, 1].
    pub iou_thresholds: Vec<f64>,
    /// Maximum number of detections considered per image.
    pub max_dets: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: default_thresholds(),
            max_dets: 500,
        }
    }
}

/// The 0.50:0.95:0.05 threshold grid.
pub fn default_thresholds() -> Vec<f64> {
    (10..=19).map(|i| f64::from(i) * 0.05).collect()
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Argument("at least one IoU threshold required".into()));
        }
        for pair in self.iou_thresholds.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Argument("IoU thresholds must be strictly increasing".into()));
            }
        }
        if self
            .iou_thresholds
            .iter()
            .any(|&t| !(t > 0.0 && t <= 1.0))
        {
            return Err(Error::Argument("IoU thresholds must lie in (0, 1]".into()));
        }
        if self.max_dets == 0 {
            return Err(Error::Argument("max_dets must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// AP averaged over all thresholds and categories.
    pub map: f64,
    /// AP at threshold 0.50, when that threshold was evaluated.
    pub map50: Option<f64>,
    pub per_threshold: Vec<ThresholdAp>,
    /// Per-category AP averaged over thresholds.
    pub per_category: BTreeMap<u64, f64>,
}

pub fn evaluate(gt: &DatasetIndex, dets: &[DetectionRecord], cfg: &EvalConfig) -> Result<EvalResult> {
    cfg.validate()?;
    gt.validate()?;

    let image_ids: HashSet<u64> = gt.images.iter().map(|i| i.id).collect();
    let category_ids: HashSet<u64> = gt.categories.iter().map(|c| c.id).collect();
    for det in dets {
        det.validate()?;
        if !image_ids.contains(&det.image_id) {
            return Err(Error::Validation(format!(
                "detection references unknown image_id {}",
                det.image_id
            )));
        }
        if !category_ids.contains(&det.category_id) {
            return Err(Error::Validation(format!(
                "detection references unknown category_id {}",
                det.category_id
            )));
        }
    }

    // Per-image truncation to max_dets by descending score (ties: input order).
    let mut per_image: HashMap<u64, Vec<usize>> = HashMap::new();
    for (idx, det) in dets.iter().enumerate() {
        per_image.entry(det.image_id).or_default().push(idx);
    }
    let mut considered: HashSet<usize> = HashSet::new();
    for indices in per_image.values_mut() {
        indices.sort_by(|&a, &b| {
            dets[b].score.partial_cmp(&dets[a].score).unwrap().then(a.cmp(&b))
        });
        considered.extend(indices.iter().take(cfg.max_dets));
    }

    // ap[(category, threshold index)]
    let mut ap_matrix: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for cat in &gt.categories {
        let gt_anns: Vec<_> = gt
            .annotations
            .iter()
            .filter(|a| a.category_id == cat.id)
            .collect();
        let positives = gt_anns.iter().filter(|a| !a.iscrowd).count();
        if positives == 0 {
            continue; // no ground truth: skipped in the mean
        }
        let mut gt_by_image: HashMap<u64, Vec<&crate::dataset::AnnotationRecord>> = HashMap::new();
        for ann in &gt_anns {
            gt_by_image.entry(ann.image_id).or_default().push(ann);
        }
        let mut det_by_image: HashMap<u64, Vec<usize>> = HashMap::new();
        for (image_id, indices) in &per_image {
            let filtered: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|i| considered.contains(i) && dets[*i].category_id == cat.id)
                .collect();
            if !filtered.is_empty() {
                det_by_image.insert(*image_id, filtered);
            }
        }

        let aps = cfg
            .iou_thresholds
            .iter()
            .map(|&threshold| {
                category_ap(dets, &gt_by_image, &det_by_image, positives, threshold)
            })
            .collect();
        ap_matrix.insert(cat.id, aps);
    }

    let n_thresholds = cfg.iou_thresholds.len();
    let per_threshold: Vec<ThresholdAp> = (0..n_thresholds)
        .map(|t| ThresholdAp {
            threshold: cfg.iou_thresholds[t],
            ap: mean(ap_matrix.values().map(|aps| aps[t])),
        })
        .collect();
    let per_category: BTreeMap<u64, f64> = ap_matrix
        .iter()
        .map(|(&cat, aps)| (cat, mean(aps.iter().copied())))
        .collect();
    let map = mean(per_category.values().copied());
    let map50 = cfg
        .iou_thresholds
        .iter()
        .position(|&t| (t - 0.5).abs() < 1e-9)
        .map(|i| per_threshold[i].ap);

    Ok(EvalResult {
        map,
        map50,
        per_threshold,
        per_category,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// AP of one category at one threshold.
fn category_ap(
    dets: &[DetectionRecord],
    gt_by_image: &HashMap<u64, Vec<&crate::dataset::AnnotationRecord>>,
    det_by_image: &HashMap<u64, Vec<usize>>,
    positives: usize,
    threshold: f64,
) -> f64 {
    // (score, input index, is_tp), ignored detections excluded
    let mut marks: Vec<(f64, usize, bool)> = Vec::new();
    for (image_id, det_indices) in det_by_image {
        let gts = gt_by_image.get(image_id).map_or(&[][..], Vec::as_slice);
        let mut matched = vec![false; gts.len()];
        for &det_idx in det_indices {
            let det = &dets[det_idx];
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if g.iscrowd || matched[gi] {
                    continue;
                }
                let overlap = iou(&det.bbox, &g.bbox);
                if overlap >= threshold && best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((gi, overlap));
                }
            }
            match best {
                Some((gi, _)) => {
                    matched[gi] = true;
                    marks.push((det.score, det_idx, true));
                }
                None => {
                    let ignored = gts
                        .iter()
                        .any(|g| g.iscrowd && iou(&det.bbox, &g.bbox) >= threshold);
                    if !ignored {
                        marks.push((det.score, det_idx, false));
                    }
                }
            }
        }
    }
    marks.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

    let mut precisions = Vec::with_capacity(marks.len());
    let mut recalls = Vec::with_capacity(marks.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, _, is_tp) in &marks {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        precisions.push(tp as f64 / (tp + fp) as f64);
        recalls.push(tp as f64 / positives as f64);
    }
    interpolated_ap_101(&recalls, &precisions)
}

/// 101-point interpolated AP: mean over recall levels 0, 0.01, ..., 1 of
/// the highest precision achieved at or beyond each level.
fn interpolated_ap_101(recalls: &[f64], precisions: &[f64]) -> f64 {
    // precision envelope from the right
    let mut envelope = precisions.to_vec();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut sum = 0.0;
    for level in 0..=100 {
        let r = f64::from(level) / 100.0;
        let idx = recalls.partition_point(|&v| v < r);
        if idx < envelope.len() {
            sum += envelope[idx];
        }
    }
    sum / 101.0
}
