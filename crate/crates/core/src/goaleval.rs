//! Goal-directed evaluation: how much does an imperfect staff detection hurt
//! the downstream transcription?
//!
//! Every detected staff is paired with every ground-truth staff on the same
//! page it overlaps above an IoU bound. For each pair the symbol error rate
//! of the transcription obtained from the detected crop is compared with the
//! one obtained from the ground-truth crop:
//! `ser_delta = SER(hyp_det, ref) - SER(hyp_gt, ref)`. Zero means the layout
//! stage cost nothing; positive values measure the loss.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Detection, Region};
use crate::metrics::iou;

/// IoU a detected staff must exceed to be paired with a ground-truth staff.
pub const DEFAULT_IOU_MIN: f64 = 0.55;

#[derive(Debug, Error)]
pub enum GoalError {
    #[error("reference sequence for region {0} is empty")]
    EmptyReference(u64),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A transcription: the ordered symbol tokens read from one region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSequence {
    pub region_id: u64,
    pub tokens: Vec<String>,
}

impl SymbolSequence {
    pub fn new<S: Into<String>>(region_id: u64, tokens: impl IntoIterator<Item = S>) -> Self {
        Self {
            region_id,
            tokens: tokens.into_iter().map(Into::into).collect(),
        }
    }
}

/// Token-level Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Symbol error rate: edit distance divided by the reference length.
pub fn ser(hyp: &SymbolSequence, reference: &SymbolSequence) -> Result<f64, GoalError> {
    if reference.tokens.is_empty() {
        return Err(GoalError::EmptyReference(reference.region_id));
    }
    Ok(edit_distance(&hyp.tokens, &reference.tokens) as f64 / reference.tokens.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalPair {
    /// Index into the detection slice.
    pub det: usize,
    /// Index into the ground-truth slice.
    pub gt: usize,
    pub iou: f64,
}

/// All same-page (detection, ground truth) pairs with IoU strictly above
/// `iou_min`. A detection may pair with several ground truths and vice
/// versa.
pub fn match_goal(dets: &[Detection], gts: &[Region], iou_min: f64) -> Vec<GoalPair> {
    let mut by_page: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_page.entry(g.page_id).or_default().push(i);
    }
    let mut out = Vec::new();
    for (d, det) in dets.iter().enumerate() {
        for &g in by_page.get(&det.page_id).map(Vec::as_slice).unwrap_or(&[]) {
            let v = iou(&det.bbox, &gts[g].bbox);
            if v > iou_min {
                out.push(GoalPair { det: d, gt: g, iou: v });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalTuple {
    pub ser_delta: f64,
    pub confidence: f64,
    pub iou: f64,
    pub det_region_id: u64,
    pub gt_region_id: u64,
}

/// `SER(hyp_det, ref) - SER(hyp_gt, ref)` for one matched pair.
pub fn ser_delta(
    pair: &GoalPair,
    det: &Detection,
    det_id: u64,
    gt: &Region,
    hyp_det: &SymbolSequence,
    hyp_gt: &SymbolSequence,
    reference: &SymbolSequence,
) -> Result<GoalTuple, GoalError> {
    Ok(GoalTuple {
        ser_delta: ser(hyp_det, reference)? - ser(hyp_gt, reference)?,
        confidence: det.confidence,
        iou: pair.iou,
        det_region_id: det_id,
        gt_region_id: gt.id,
    })
}

/// Transcriptions keyed by region id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcriptions(pub HashMap<u64, SymbolSequence>);

impl Transcriptions {
    /// Parses `<region_id>\t<token> <token> ...` lines. Blank lines are
    /// skipped; a record with no tokens is an empty sequence.
    pub fn parse(text: &str) -> Result<Self, GoalError> {
        let mut map = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (id, rest) = line.split_once('\t').unwrap_or((line, ""));
            let id: u64 = id.trim().parse().map_err(|_| GoalError::Format {
                line: line_no,
                msg: format!("bad region id {id:?}"),
            })?;
            let seq = SymbolSequence::new(id, rest.split_whitespace());
            if map.insert(id, seq).is_some() {
                return Err(GoalError::Format {
                    line: line_no,
                    msg: format!("duplicate region id {id}"),
                });
            }
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, GoalError> {
        let text = std::fs::read_to_string(path).map_err(|source| GoalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut ids: Vec<_> = self.0.keys().copied().collect();
        ids.sort_unstable();
        let mut out = String::new();
        for id in ids {
            let _ = writeln!(out, "{id}\t{}", self.0[&id].tokens.join(" "));
        }
        out
    }

    pub fn get(&self, id: u64) -> Option<&SymbolSequence> {
        self.0.get(&id)
    }
}

/// A matched pair that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub det_region_id: u64,
    pub gt_region_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRun {
    pub tuples: Vec<GoalTuple>,
    pub skipped: Vec<Skipped>,
}

/// Detection id used to look up its transcription: the explicit id, or the
/// position in the detection list.
pub fn detection_key(dets: &[Detection], index: usize) -> u64 {
    dets[index].id.unwrap_or(index as u64)
}

/// Matches detections to ground truth and scores every pair that has all
/// three transcriptions. Pairs with missing or empty transcriptions are
/// reported in `skipped`.
pub fn run_goal_eval(
    dets: &[Detection],
    gts: &[Region],
    iou_min: f64,
    reference: &Transcriptions,
    hyp_gt: &Transcriptions,
    hyp_det: &Transcriptions,
) -> GoalRun {
    let mut tuples = Vec::new();
    let mut skipped = Vec::new();
    for pair in match_goal(dets, gts, iou_min) {
        let det_id = detection_key(dets, pair.det);
        let gt = &gts[pair.gt];
        let skip = |reason: String| Skipped {
            det_region_id: det_id,
            gt_region_id: gt.id,
            reason,
        };
        let (Some(r), Some(hg), Some(hd)) =
            (reference.get(gt.id), hyp_gt.get(gt.id), hyp_det.get(det_id))
        else {
            skipped.push(skip("missing transcription".into()));
            continue;
        };
        match ser_delta(&pair, &dets[pair.det], det_id, gt, hd, hg, r) {
            Ok(t) => tuples.push(t),
            Err(e) => skipped.push(skip(e.to_string())),
        }
    }
    GoalRun { tuples, skipped }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

impl GroupStats {
    fn of(values: &mut [f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        Self {
            count: n,
            mean: Some(values.iter().sum::<f64>() / n as f64),
            median: Some(median),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSummary {
    pub conf_thr: f64,
    /// Tuples with confidence >= `conf_thr`.
    pub above: GroupStats,
    pub below: GroupStats,
}

pub fn summarize(tuples: &[GoalTuple], conf_thr: f64) -> GoalSummary {
    let (mut above, mut below): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for t in tuples {
        if t.confidence >= conf_thr {
            above.push(t.ser_delta);
        } else {
            below.push(t.ser_delta);
        }
    }
    GoalSummary {
        conf_thr,
        above: GroupStats::of(&mut above),
        below: GroupStats::of(&mut below),
    }
}

/// CSV with header `confidence,iou,ser_delta,det_id,gt_id,corpus`.
pub fn scatter_csv(tuples: &[GoalTuple], corpus_label: &str) -> String {
    let mut out = String::from("confidence,iou,ser_delta,det_id,gt_id,corpus\n");
    for t in tuples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            t.confidence, t.iou, t.ser_delta, t.det_region_id, t.gt_region_id, corpus_label
        );
    }
    out
}
