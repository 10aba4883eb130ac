//! Detection evaluation: IoU, greedy matching, precision/recall/F1 with
//! macro averages, COCO-style AP/mAP and the confidence x IoU threshold
//! sweep.
//!
//! Matching follows the COCO convention. Detections below the confidence
//! threshold are dropped, the rest are visited per class in descending
//! confidence (input order breaks ties) and each claims the still-unmatched
//! same-class, same-page ground truth with the highest IoU at or above the
//! IoU threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::corpus::{ClassId, Detection, Region};

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.area() + b.area() - inter)).min(1.0)
}

/// COCO IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Confidence thresholds of the sweep: 0.05, 0.15, ..., 0.95.
pub fn sweep_conf_thresholds() -> Vec<f64> {
    (0..10).map(|i| (5 + 10 * i) as f64 / 100.0).collect()
}

/// IoU thresholds of the sweep: 0.50, 0.55, ..., 0.95.
pub fn sweep_iou_thresholds() -> Vec<f64> {
    coco_iou_thresholds()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    /// Index into the detection slice.
    pub det: usize,
    /// Index into the ground-truth slice.
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMatch {
    pub pairs: Vec<MatchedPair>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl ClassMatch {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.false_positives.len()
    }

    pub fn fn_(&self) -> usize {
        self.false_negatives.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Every class with at least one ground truth or kept detection.
    pub classes: BTreeMap<ClassId, ClassMatch>,
    pub conf_thr: f64,
    pub iou_thr: f64,
}

/// Detection indices of one class in visiting order.
fn ranked(dets: &[Detection], class: ClassId, conf_thr: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].class == class && dets[i].confidence >= conf_thr)
        .collect();
    // stable sort keeps input order among equal confidences
    idx.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    idx
}

fn match_class(
    dets: &[Detection],
    gts: &[Region],
    order: &[usize],
    gt_by_page: &HashMap<u64, Vec<usize>>,
    iou_thr: f64,
) -> ClassMatch {
    let mut taken: HashMap<usize, bool> = HashMap::new();
    let mut out = ClassMatch::default();
    for &d in order {
        let det = &dets[d];
        let mut best: Option<(usize, f64)> = None;
        for &g in gt_by_page.get(&det.page_id).map(Vec::as_slice).unwrap_or(&[]) {
            if taken.get(&g).copied().unwrap_or(false) {
                continue;
            }
            let v = iou(&det.bbox, &gts[g].bbox);
            if v >= iou_thr && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, v)) => {
                taken.insert(g, true);
                out.pairs.push(MatchedPair {
                    det: d,
                    gt: g,
                    iou: v,
                });
            }
            None => out.false_positives.push(d),
        }
    }
    let mut missed: Vec<usize> = gt_by_page
        .values()
        .flatten()
        .copied()
        .filter(|g| !taken.contains_key(g))
        .collect();
    missed.sort_unstable();
    out.false_negatives = missed;
    out
}

fn gts_by_class_page(gts: &[Region]) -> BTreeMap<ClassId, HashMap<u64, Vec<usize>>> {
    let mut map: BTreeMap<ClassId, HashMap<u64, Vec<usize>>> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        map.entry(g.class)
            .or_default()
            .entry(g.page_id)
            .or_default()
            .push(i);
    }
    map
}

pub fn match_detections(
    dets: &[Detection],
    gts: &[Region],
    conf_thr: f64,
    iou_thr: f64,
) -> MatchResult {
    let grouped = gts_by_class_page(gts);
    let mut classes: BTreeSet<ClassId> = grouped.keys().copied().collect();
    classes.extend(
        dets.iter()
            .filter(|d| d.confidence >= conf_thr)
            .map(|d| d.class),
    );
    let empty = HashMap::new();
    let classes = classes
        .into_iter()
        .map(|class| {
            let order = ranked(dets, class, conf_thr);
            let by_page = grouped.get(&class).unwrap_or(&empty);
            (class, match_class(dets, gts, &order, by_page, iou_thr))
        })
        .collect();
    MatchResult {
        classes,
        conf_thr,
        iou_thr,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassScores {
    /// Zero denominators give zero, never NaN.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_class: BTreeMap<ClassId, ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Mean of the per-class F1 values.
    pub macro_f1: f64,
}

/// Per-class and macro precision, recall and F1. A class with neither
/// ground truth nor kept detections never reaches the match result, so it
/// does not dilute the macros.
pub fn prf(m: &MatchResult) -> PrfReport {
    let per_class: BTreeMap<ClassId, ClassScores> = m
        .classes
        .iter()
        .map(|(&c, cm)| (c, ClassScores::from_counts(cm.tp(), cm.fp(), cm.fn_())))
        .collect();
    let n = per_class.len() as f64;
    let mean = |f: fn(&ClassScores) -> f64| {
        if per_class.is_empty() {
            0.0
        } else {
            per_class.values().map(f).sum::<f64>() / n
        }
    };
    PrfReport {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        per_class,
    }
}

/// COCO 101-point interpolated average precision of one class at one IoU
/// threshold. `None` when the class has no ground truth.
pub fn average_precision(
    dets: &[Detection],
    gts: &[Region],
    class: ClassId,
    iou_thr: f64,
) -> Option<f64> {
    let grouped = gts_by_class_page(gts);
    let by_page = grouped.get(&class)?;
    let n_gt: usize = by_page.values().map(Vec::len).sum();
    let order = ranked(dets, class, 0.0);
    let m = match_class(dets, gts, &order, by_page, iou_thr);
    let hits: std::collections::HashSet<usize> = m.pairs.iter().map(|p| p.det).collect();

    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (rank, d) in order.iter().enumerate() {
        if hits.contains(d) {
            tp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    // monotone non-increasing envelope
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let total: f64 = (0..=100)
        .map(|k| {
            let r = k as f64 / 100.0;
            let at = recall.partition_point(|&v| v < r);
            precision.get(at).copied().unwrap_or(0.0)
        })
        .sum();
    Some(total / 101.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub iou_thresholds: Vec<f64>,
    /// AP per class, one entry per IoU threshold.
    pub per_class_ap: BTreeMap<ClassId, Vec<f64>>,
    /// Class-mean AP at each IoU threshold.
    pub per_threshold: Vec<f64>,
    pub map: f64,
}

/// AP averaged over the classes present in the ground truth and over the
/// ten COCO IoU thresholds.
pub fn coco_map(dets: &[Detection], gts: &[Region]) -> MapReport {
    let thresholds = coco_iou_thresholds();
    let classes: BTreeSet<ClassId> = gts.iter().map(|g| g.class).collect();
    let per_class_ap: BTreeMap<ClassId, Vec<f64>> = classes
        .iter()
        .map(|&c| {
            let aps = thresholds
                .iter()
                .map(|&t| average_precision(dets, gts, c, t).unwrap_or(0.0))
                .collect();
            (c, aps)
        })
        .collect();
    let per_threshold: Vec<f64> = (0..thresholds.len())
        .map(|t| {
            if per_class_ap.is_empty() {
                0.0
            } else {
                per_class_ap.values().map(|v| v[t]).sum::<f64>() / per_class_ap.len() as f64
            }
        })
        .collect();
    let map = per_threshold.iter().sum::<f64>() / per_threshold.len() as f64;
    MapReport {
        iou_thresholds: thresholds,
        per_class_ap,
        per_threshold,
        map,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub conf_thr: f64,
    pub iou_thr: f64,
    pub mp: f64,
    pub mr: f64,
    pub mf1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best: SweepCell,
    /// Row-major: confidence outer, IoU inner, both ascending.
    pub grid: Vec<SweepCell>,
}

pub fn evaluate_cell(dets: &[Detection], gts: &[Region], conf_thr: f64, iou_thr: f64) -> SweepCell {
    let r = prf(&match_detections(dets, gts, conf_thr, iou_thr));
    SweepCell {
        conf_thr,
        iou_thr,
        mp: r.macro_precision,
        mr: r.macro_recall,
        mf1: r.macro_f1,
    }
}

/// Evaluates macro F1 on every (confidence, IoU) pair of the grid and picks
/// the best. Ties go to the lowest confidence, then the lowest IoU.
pub fn sweep_thresholds(dets: &[Detection], gts: &[Region]) -> SweepResult {
    let confs = sweep_conf_thresholds();
    let ious = sweep_iou_thresholds();
    let grid = crate::par::map_indexed(confs.len() * ious.len(), |i| {
        evaluate_cell(dets, gts, confs[i / ious.len()], ious[i % ious.len()])
    });
    let mut best = grid[0];
    for cell in &grid[1..] {
        if cell.mf1 > best.mf1 {
            best = *cell;
        }
    }
    SweepResult { best, grid }
}

/// CSV with header `conf_thr,iou_thr,mP,mR,mF1`.
pub fn grid_csv(grid: &[SweepCell]) -> String {
    let mut out = String::from("conf_thr,iou_thr,mP,mR,mF1\n");
    for c in grid {
        let _ = writeln!(out, "{},{},{},{},{}", c.conf_thr, c.iou_thr, c.mp, c.mr, c.mf1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub conf_thr: f64,
    pub iou_thr: f64,
    /// True when the thresholds above were picked by the sweep on the same
    /// data instead of being supplied.
    pub thresholds_from_sweep: bool,
    pub per_class: BTreeMap<ClassId, ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub ap: MapReport,
    pub map: f64,
    /// mAP as a percentage with one decimal.
    pub map_display: String,
    pub sweep_best: SweepCell,
}

/// Full metric battery. P/R/F1 use `thresholds` when given, otherwise the
/// sweep winner.
pub fn evaluate(
    dets: &[Detection],
    gts: &[Region],
    thresholds: Option<(f64, f64)>,
) -> (EvalReport, SweepResult) {
    let sweep = sweep_thresholds(dets, gts);
    let (conf_thr, iou_thr) = thresholds.unwrap_or((sweep.best.conf_thr, sweep.best.iou_thr));
    let scores = prf(&match_detections(dets, gts, conf_thr, iou_thr));
    let ap = coco_map(dets, gts);
    let report = EvalReport {
        conf_thr,
        iou_thr,
        thresholds_from_sweep: thresholds.is_none(),
        per_class: scores.per_class,
        macro_precision: scores.macro_precision,
        macro_recall: scores.macro_recall,
        macro_f1: scores.macro_f1,
        map: ap.map,
        map_display: format!("{:.1}", ap.map * 100.0),
        ap,
        sweep_best: sweep.best,
    };
    (report, sweep)
}
