//! Recovery of detections missed in the following frame.
//!
//! For each adjacent frame pair, confident detections with no same-class
//! counterpart inside their search area are transferred to the next frame by
//! the median optical-flow offset of corners found on the object, and scored
//! against the scene layout at the new position.

use crate::flow::{track_region_within, CornerParams, FlowError, FlowParams};
use crate::geometry::{
    contains_center, iou, search_area, BBox, Detection, FrameRef, GeometryError, SearchAreaParams,
    Source,
};
use crate::imaging::{GrayImage, ImageError};
use crate::layout::{layout_value, LayoutGrid};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("invalid tracker parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("frame {frame_id}: image unavailable: {reason}")]
    MissingImage { frame_id: String, reason: String },
    #[error("sequence {sequence_id}: frame index {index} does not follow {previous}")]
    FrameOrder {
        sequence_id: String,
        previous: u32,
        index: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    /// Detections scoring above this are tracking sources.
    pub source_score_min: f64,
    pub area_alpha: f64,
    pub area_beta: f64,
    pub area_tau: f64,
    pub flow_lambda: f64,
    pub flow_bias: f64,
    /// Recovered boxes scoring below this are discarded.
    pub recovered_score_min: f64,
    pub min_tracked_corners: usize,
    pub duplicate_iou: f64,
    /// Lower bound on the layout value inside the logarithm.
    pub m_floor: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        let area = SearchAreaParams::default();
        Self {
            source_score_min: 0.3,
            area_alpha: area.alpha,
            area_beta: area.beta,
            area_tau: area.tau,
            flow_lambda: -0.05,
            flow_bias: 0.0,
            recovered_score_min: 0.3,
            min_tracked_corners: 3,
            duplicate_iou: 0.5,
            m_floor: 1e-3,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.source_score_min) {
            return Err(TrackerError::InvalidParams(format!(
                "source_score_min {} must lie in (0, 1)",
                self.source_score_min
            )));
        }
        if !unit(self.recovered_score_min) {
            return Err(TrackerError::InvalidParams(format!(
                "recovered_score_min {} must lie in (0, 1)",
                self.recovered_score_min
            )));
        }
        if !(self.m_floor > 0.0) {
            return Err(TrackerError::InvalidParams(format!(
                "m_floor {} must be positive",
                self.m_floor
            )));
        }
        if self.min_tracked_corners == 0 {
            return Err(TrackerError::InvalidParams(
                "min_tracked_corners must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.duplicate_iou) {
            return Err(TrackerError::InvalidParams(format!(
                "duplicate_iou {} must lie in [0, 1]",
                self.duplicate_iou
            )));
        }
        if !self.flow_lambda.is_finite() || !self.flow_bias.is_finite() {
            return Err(TrackerError::InvalidParams(
                "flow_lambda and flow_bias must be finite".into(),
            ));
        }
        self.search_params().validate()?;
        Ok(())
    }

    pub fn search_params(&self) -> SearchAreaParams {
        SearchAreaParams {
            alpha: self.area_alpha,
            beta: self.area_beta,
            tau: self.area_tau,
        }
    }
}

/// A source detection with no counterpart in the following frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Missed {
    pub source: Detection,
    pub search: BBox,
}

/// Qualifying detections of `prev` without a same-class detection of `next`
/// centered in their search area.
pub fn find_missed(
    prev: &[Detection],
    next: &[Detection],
    params: &TrackerParams,
) -> Result<Vec<Missed>, TrackerError> {
    let area = params.search_params();
    let mut out = Vec::new();
    for d in prev {
        if d.source != Source::Detector || d.score <= params.source_score_min {
            continue;
        }
        let search = search_area(d, &area)?;
        let found = next
            .iter()
            .any(|n| n.class_label == d.class_label && contains_center(&search, n));
        if !found {
            out.push(Missed {
                source: d.clone(),
                search,
            });
        }
    }
    Ok(out)
}

/// A box transferred into the following frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recovery {
    pub bbox: BBox,
    pub offset: (f64, f64),
    pub corners: usize,
    pub converged: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecoveryAbort {
    #[error("search area does not overlap the image")]
    CropFailed,
    #[error("flow failed: {0}")]
    Flow(String),
    #[error("{converged} of {corners} corners converged, {required} required")]
    InsufficientCorners {
        corners: usize,
        converged: usize,
        required: usize,
    },
    #[error("transferred box lies outside the image")]
    LeftImage,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Transfers `source` into `next` by the median offset of corners tracked
/// from inside the source box.
pub fn recover(
    source: &Detection,
    prev: &GrayImage,
    next: &GrayImage,
    search: &BBox,
    corner_params: &CornerParams,
    flow_params: &FlowParams,
    params: &TrackerParams,
) -> Result<Recovery, RecoveryAbort> {
    let flow =
        match track_region_within(prev, next, search, &source.bbox, corner_params, flow_params) {
            Ok(f) => f,
            Err(FlowError::Image(ImageError::RegionOutside { .. })) => {
                return Err(RecoveryAbort::CropFailed)
            }
            Err(FlowError::RegionTooSmall { .. }) => {
                return Err(RecoveryAbort::InsufficientCorners {
                    corners: 0,
                    converged: 0,
                    required: params.min_tracked_corners,
                })
            }
            Err(e) => return Err(RecoveryAbort::Flow(e.to_string())),
        };
    let (mut dx, mut dy): (Vec<f64>, Vec<f64>) = flow
        .tracks
        .iter()
        .filter(|t| t.converged())
        .map(|t| t.offset())
        .unzip();
    if dx.len() < params.min_tracked_corners {
        return Err(RecoveryAbort::InsufficientCorners {
            corners: flow.corners.len(),
            converged: dx.len(),
            required: params.min_tracked_corners,
        });
    }
    let offset = (median(&mut dx), median(&mut dy));
    let bbox = source
        .bbox
        .translated(offset.0, offset.1)
        .clip_to(next.width() as f64, next.height() as f64)
        .ok_or(RecoveryAbort::LeftImage)?;
    Ok(Recovery {
        bbox,
        offset,
        corners: flow.corners.len(),
        converged: dx.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveredScore {
    pub score: f64,
    /// The subtracted term `lambda * ln(max(M, floor)^2) + b`.
    pub penalty: f64,
    pub accepted: bool,
}

/// Score of a transferred box given its source's score and the layout value at
/// its new center.
pub fn score_recovered(source_score: f64, m_next: f64, params: &TrackerParams) -> RecoveredScore {
    let m = m_next.max(params.m_floor);
    let penalty = params.flow_lambda * (m * m).ln() + params.flow_bias;
    let score = (source_score - penalty).clamp(0.0, 1.0);
    RecoveredScore {
        score,
        penalty,
        accepted: score >= params.recovered_score_min,
    }
}

/// Grayscale frames addressed by reference.
pub trait FrameSource: Sync {
    fn load(&self, frame: &FrameRef) -> Result<GrayImage, String>;
}

impl<F> FrameSource for F
where
    F: Fn(&FrameRef) -> Result<GrayImage, String> + Sync,
{
    fn load(&self, frame: &FrameRef) -> Result<GrayImage, String> {
        self(frame)
    }
}

/// One frame of a sequence with its detections.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFrame {
    pub frame_id: String,
    pub frame: FrameRef,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryOutcome {
    Accepted,
    CropFailed,
    FlowFailed,
    InsufficientCorners,
    LeftImage,
    LowScore,
    Duplicate,
}

/// Diagnostics for one recovery attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub source_frame: String,
    pub target_frame: String,
    pub class_label: String,
    pub source_score: f64,
    pub corners: usize,
    pub converged: usize,
    pub offset: Option<(f64, f64)>,
    pub layout_value: Option<f64>,
    pub penalty: Option<f64>,
    pub score: Option<f64>,
    pub outcome: RecoveryOutcome,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub tracker: TrackerParams,
    pub corners: CornerParams,
    pub flow: FlowParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutput {
    /// Input frames with accepted recoveries appended to their detections.
    pub frames: Vec<SequenceFrame>,
    pub records: Vec<RecoveryRecord>,
}

impl SequenceOutput {
    pub fn recovered(&self) -> impl Iterator<Item = &Detection> {
        self.frames
            .iter()
            .flat_map(|f| f.detections.iter())
            .filter(|d| d.source == Source::FlowRecovered)
    }
}

struct ImageCache<'a> {
    source: &'a dyn FrameSource,
    slots: Vec<(usize, Arc<GrayImage>)>,
}

impl ImageCache<'_> {
    fn get(&mut self, k: usize, frame: &SequenceFrame) -> Result<Arc<GrayImage>, TrackerError> {
        if let Some((_, img)) = self.slots.iter().find(|(i, _)| *i == k) {
            return Ok(img.clone());
        }
        let img = self
            .source
            .load(&frame.frame)
            .map(Arc::new)
            .map_err(|reason| TrackerError::MissingImage {
                frame_id: frame.frame_id.clone(),
                reason,
            })?;
        self.slots.retain(|(i, _)| *i + 1 >= k);
        self.slots.push((k, img.clone()));
        Ok(img)
    }
}

/// Runs miss detection and recovery over every adjacent pair of one sequence.
///
/// Frames must be in increasing index order; pairs whose indices are not
/// consecutive are skipped. Images are only loaded for pairs that have a
/// recovery to attempt.
pub fn process_sequence(
    frames: &[SequenceFrame],
    layout: &LayoutGrid,
    images: &dyn FrameSource,
    config: &TrackerConfig,
) -> Result<SequenceOutput, TrackerError> {
    config.tracker.validate()?;
    config.corners.validate()?;
    config.flow.validate()?;
    for pair in frames.windows(2) {
        if pair[1].frame.index <= pair[0].frame.index {
            return Err(TrackerError::FrameOrder {
                sequence_id: pair[1].frame.sequence_id.clone(),
                previous: pair[0].frame.index,
                index: pair[1].frame.index,
            });
        }
    }
    let params = &config.tracker;
    let mut out: Vec<SequenceFrame> = frames.to_vec();
    let mut records = Vec::new();
    let mut cache = ImageCache {
        source: images,
        slots: Vec::new(),
    };

    for t in 0..frames.len().saturating_sub(1) {
        if frames[t + 1].frame.index != frames[t].frame.index + 1 {
            continue;
        }
        let missed = find_missed(&frames[t].detections, &frames[t + 1].detections, params)?;
        if missed.is_empty() {
            continue;
        }
        let prev = cache.get(t, &frames[t])?;
        let next = cache.get(t + 1, &frames[t + 1])?;
        let (w, h) = (next.width() as f64, next.height() as f64);
        for m in missed {
            let mut rec = RecoveryRecord {
                source_frame: frames[t].frame_id.clone(),
                target_frame: frames[t + 1].frame_id.clone(),
                class_label: m.source.class_label.clone(),
                source_score: m.source.score,
                corners: 0,
                converged: 0,
                offset: None,
                layout_value: None,
                penalty: None,
                score: None,
                outcome: RecoveryOutcome::Accepted,
                reason: None,
            };
            match recover(
                &m.source,
                &prev,
                &next,
                &m.search,
                &config.corners,
                &config.flow,
                params,
            ) {
                Err(abort) => {
                    if let RecoveryAbort::InsufficientCorners {
                        corners, converged, ..
                    } = abort
                    {
                        rec.corners = corners;
                        rec.converged = converged;
                    }
                    rec.outcome = match abort {
                        RecoveryAbort::CropFailed => RecoveryOutcome::CropFailed,
                        RecoveryAbort::Flow(_) => RecoveryOutcome::FlowFailed,
                        RecoveryAbort::InsufficientCorners { .. } => {
                            RecoveryOutcome::InsufficientCorners
                        }
                        RecoveryAbort::LeftImage => RecoveryOutcome::LeftImage,
                    };
                    rec.reason = Some(abort.to_string());
                }
                Ok(r) => {
                    rec.corners = r.corners;
                    rec.converged = r.converged;
                    rec.offset = Some(r.offset);
                    let mut candidate = m.source.clone();
                    candidate.frame_id = frames[t + 1].frame_id.clone();
                    candidate.bbox = r.bbox;
                    candidate.source = Source::FlowRecovered;
                    let mv = layout_value(layout, &candidate, w, h);
                    let scored = score_recovered(m.source.score, mv, params);
                    rec.layout_value = Some(mv);
                    rec.penalty = Some(scored.penalty);
                    rec.score = Some(scored.score);
                    candidate.score = scored.score;
                    let target = &mut out[t + 1].detections;
                    if !scored.accepted {
                        rec.outcome = RecoveryOutcome::LowScore;
                    } else if target.iter().any(|d| {
                        d.class_label == candidate.class_label
                            && iou(&d.bbox, &candidate.bbox) > params.duplicate_iou
                    }) {
                        rec.outcome = RecoveryOutcome::Duplicate;
                    } else {
                        target.push(candidate);
                    }
                }
            }
            log::debug!(
                "recovery {} -> {}: {:?} corners={} converged={} offset={:?} penalty={:?} score={:?}",
                rec.source_frame,
                rec.target_frame,
                rec.outcome,
                rec.corners,
                rec.converged,
                rec.offset,
                rec.penalty,
                rec.score
            );
            records.push(rec);
        }
    }
    Ok(SequenceOutput {
        frames: out,
        records,
    })
}
