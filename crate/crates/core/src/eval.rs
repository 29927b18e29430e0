//! Average precision with greedy matching, 101-point interpolation and
//! area-bucketed variants.

use crate::geometry::{iou, BBox, Detection, GeometryError};
use crate::io::Annotations;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("ground truth contains no boxes")]
    EmptyGroundTruth,
    #[error("detection references frame {frame_id:?} which has no ground-truth entry")]
    UnknownFrame { frame_id: String },
    #[error("precision-recall curve needs at least one ground-truth box")]
    NoPositives,
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Upper area bounds of the small and medium buckets, in square pixels.
pub const SMALL_AREA: f64 = 32.0 * 32.0;
pub const MEDIUM_AREA: f64 = 96.0 * 96.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Neither counted nor penalized (matched an ignored box, or out of range).
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Per detection, in input order.
    pub outcomes: Vec<MatchOutcome>,
    /// Per ground-truth box: index of the matched detection.
    pub gt_match: Vec<Option<usize>>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy matching of detections to ground truth within one frame and class.
///
/// Detections are visited by descending score (input order breaks ties), each
/// taking the unmatched box of highest IoU at or above `iou_thresh` (lowest
/// index breaks ties).
pub fn match_detections(dets: &[Detection], gts: &[BBox], iou_thresh: f64) -> MatchResult {
    let boxes: Vec<(BBox, f64)> = dets.iter().map(|d| (d.bbox, d.score)).collect();
    match_with_ignore(&boxes, gts, &vec![false; gts.len()], None, iou_thresh)
}

/// Matching with COCO-style ignore regions.
///
/// Ignored boxes are only matched when no regular box qualifies; detections
/// matched to them are `Ignored`, as are unmatched detections whose area lies
/// outside `area_range`.
pub fn match_with_ignore(
    dets: &[(BBox, f64)],
    gts: &[BBox],
    gt_ignore: &[bool],
    area_range: Option<(f64, f64)>,
    iou_thresh: f64,
) -> MatchResult {
    assert_eq!(gts.len(), gt_ignore.len());
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.total_cmp(&dets[a].1));
    let mut gt_match = vec![None; gts.len()];
    let mut outcomes = vec![MatchOutcome::FalsePositive; dets.len()];
    for &di in &order {
        let best = |ignored: bool, gm: &[Option<usize>]| {
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if gt_ignore[gi] != ignored || gm[gi].is_some() {
                    continue;
                }
                let v = iou(&dets[di].0, g);
                if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                    best = Some((gi, v));
                }
            }
            best.map(|(gi, _)| gi)
        };
        if let Some(gi) = best(false, &gt_match) {
            gt_match[gi] = Some(di);
            outcomes[di] = MatchOutcome::TruePositive;
        } else if let Some(gi) = best(true, &gt_match) {
            gt_match[gi] = Some(di);
            outcomes[di] = MatchOutcome::Ignored;
        } else if let Some((lo, hi)) = area_range {
            let a = dets[di].0.area();
            if a < lo || a >= hi {
                outcomes[di] = MatchOutcome::Ignored;
            }
        }
    }
    let tp = outcomes
        .iter()
        .filter(|&&o| o == MatchOutcome::TruePositive)
        .count();
    let fp = outcomes
        .iter()
        .filter(|&&o| o == MatchOutcome::FalsePositive)
        .count();
    let positives = gt_ignore.iter().filter(|&&i| !i).count();
    MatchResult {
        outcomes,
        gt_match,
        tp,
        fp,
        fn_: positives - tp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub score: f64,
    pub tp: usize,
    pub fp: usize,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub total_gt: usize,
    /// One point per detection, by descending score.
    pub points: Vec<PrPoint>,
}

/// Cumulative precision and recall over `(score, is_tp)` pairs swept by
/// descending score; equal scores keep input order.
pub fn pr_curve(scored: &[(f64, bool)], total_gt: usize) -> Result<PrCurve, EvalError> {
    if total_gt == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let points = order
        .into_iter()
        .map(|i| {
            let (score, hit) = scored[i];
            if hit {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                score,
                tp,
                fp,
                recall: tp as f64 / total_gt as f64,
                precision: tp as f64 / (tp + fp) as f64,
            }
        })
        .collect();
    Ok(PrCurve { total_gt, points })
}

/// Mean over recall levels `0, 0.01, ..., 1` of the best precision reached at
/// or beyond each level.
pub fn average_precision(curve: &PrCurve) -> f64 {
    let pts = &curve.points;
    if pts.is_empty() {
        return 0.0;
    }
    // Precision envelope: running maximum from the tail.
    let mut envelope: Vec<f64> = pts.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len() - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let n = curve.total_gt;
    let mut sum = 0.0;
    let mut k = 0;
    for level in 0..=100usize {
        // First point whose recall tp/n reaches level/100, compared exactly.
        while k < pts.len() && pts[k].tp * 100 < level * n {
            k += 1;
        }
        if k == pts.len() {
            break;
        }
        sum += envelope[k];
    }
    sum / 101.0
}

/// Ground-truth boxes keyed by frame; frames without boxes still count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub frames: BTreeMap<String, Vec<(String, BBox)>>,
}

impl GroundTruth {
    pub fn from_annotations(ann: &Annotations) -> Result<Self, GeometryError> {
        let mut gt = Self::default();
        for f in &ann.frames {
            let boxes = f
                .boxes
                .iter()
                .map(|b| Ok((b.class_label.clone(), b.geometry.to_bbox()?)))
                .collect::<Result<Vec<_>, GeometryError>>()?;
            gt.frames.insert(f.frame_id.clone(), boxes);
        }
        Ok(gt)
    }

    pub fn box_count(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub iou: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCurve {
    pub class_label: String,
    pub iou: f64,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap50: f64,
    pub ap75: f64,
    pub ap: f64,
    /// `None` when no ground-truth box falls in the bucket.
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub per_threshold: Vec<ThresholdAp>,
    pub classes: Vec<String>,
    /// Curves at IoU 0.5, one per class.
    pub curves: Vec<ClassCurve>,
    pub detections: usize,
    pub ground_truth: usize,
}

struct Bucketed<'a> {
    dets: &'a [Detection],
    gt: &'a GroundTruth,
}

impl Bucketed<'_> {
    /// Mean over classes of AP at `iou_thresh`, restricted to `area_range`.
    fn ap(
        &self,
        classes: &BTreeSet<String>,
        iou_thresh: f64,
        area_range: Option<(f64, f64)>,
    ) -> (Option<f64>, Vec<ClassCurve>) {
        let mut total = 0.0;
        let mut counted = 0;
        let mut curves = Vec::new();
        for class in classes {
            let mut scored = Vec::new();
            let mut positives = 0;
            for (frame_id, boxes) in &self.gt.frames {
                let gts: Vec<BBox> = boxes
                    .iter()
                    .filter(|(c, _)| c == class)
                    .map(|(_, b)| *b)
                    .collect();
                let ignore: Vec<bool> = gts
                    .iter()
                    .map(|b| area_range.is_some_and(|(lo, hi)| b.area() < lo || b.area() >= hi))
                    .collect();
                positives += ignore.iter().filter(|&&i| !i).count();
                let dets: Vec<(BBox, f64)> = self
                    .dets
                    .iter()
                    .filter(|d| &d.frame_id == frame_id && &d.class_label == class)
                    .map(|d| (d.bbox, d.score))
                    .collect();
                let m = match_with_ignore(&dets, &gts, &ignore, area_range, iou_thresh);
                for (d, o) in dets.iter().zip(&m.outcomes) {
                    match o {
                        MatchOutcome::TruePositive => scored.push((d.1, true)),
                        MatchOutcome::FalsePositive => scored.push((d.1, false)),
                        MatchOutcome::Ignored => {}
                    }
                }
            }
            if positives == 0 {
                continue;
            }
            let curve = pr_curve(&scored, positives).expect("positives checked");
            total += average_precision(&curve);
            counted += 1;
            curves.push(ClassCurve {
                class_label: class.clone(),
                iou: iou_thresh,
                curve,
            });
        }
        ((counted > 0).then(|| total / counted as f64), curves)
    }

    fn mean_over_thresholds(
        &self,
        classes: &BTreeSet<String>,
        area_range: (f64, f64),
    ) -> Option<f64> {
        let aps: Option<Vec<f64>> = iou_thresholds()
            .iter()
            .map(|&t| self.ap(classes, t, Some(area_range)).0)
            .collect();
        aps.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// AP50, AP75, AP over IoU 0.50:0.05:0.95 and per-size AP, averaged over
/// the classes present in the ground truth.
pub fn summarize(dets: &[Detection], gt: &GroundTruth) -> Result<EvalReport, EvalError> {
    if gt.box_count() == 0 {
        return Err(EvalError::EmptyGroundTruth);
    }
    if let Some(d) = dets.iter().find(|d| !gt.frames.contains_key(&d.frame_id)) {
        return Err(EvalError::UnknownFrame {
            frame_id: d.frame_id.clone(),
        });
    }
    let classes: BTreeSet<String> = gt
        .frames
        .values()
        .flatten()
        .map(|(c, _)| c.clone())
        .collect();
    let b = Bucketed { dets, gt };
    let mut per_threshold = Vec::new();
    let mut curves = Vec::new();
    for t in iou_thresholds() {
        let (ap, c) = b.ap(&classes, t, None);
        if t == 0.5 {
            curves = c;
        }
        per_threshold.push(ThresholdAp {
            iou: t,
            ap: ap.expect("ground truth is non-empty"),
        });
    }
    let ap = per_threshold.iter().map(|t| t.ap).sum::<f64>() / per_threshold.len() as f64;
    Ok(EvalReport {
        ap50: per_threshold[0].ap,
        ap75: per_threshold[5].ap,
        ap,
        ap_s: b.mean_over_thresholds(&classes, (0.0, SMALL_AREA)),
        ap_m: b.mean_over_thresholds(&classes, (SMALL_AREA, MEDIUM_AREA)),
        ap_l: b.mean_over_thresholds(&classes, (MEDIUM_AREA, f64::INFINITY)),
        per_threshold,
        classes: classes.into_iter().collect(),
        curves,
        detections: dets.len(),
        ground_truth: gt.box_count(),
    })
}

/// `score,recall,precision` rows for one curve.
pub fn curve_csv(curve: &PrCurve) -> String {
    let mut out = String::from("score,recall,precision\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", p.score, p.recall, p.precision));
    }
    out
}
