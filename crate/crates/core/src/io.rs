//! On-disk formats.
//!
//! * Detections: JSON Lines, one record per line with `frame_id`,
//!   `class_label`, `cx`, `cy`, `w`, `h`, `score`, `source`. Unknown fields are
//!   kept and written back unchanged.
//! * Annotations: one JSON document listing frames, their image sizes and
//!   ground-truth boxes. Boxes may use center (`cx, cy, w, h`) or corner
//!   (`x1, y1, x2, y2`) fields; they are always written in center form.
//! * Layout model: one JSON document holding the grid, the parameters it was
//!   built with, and build metadata.

use crate::geometry::{BBox, Detection, FrameRef, GeometryError, Source};
use crate::layout::{LayoutError, LayoutGrid, LayoutParams};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: line {line}: {reason}")]
    Line {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {reason}")]
    Document { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Wire form of one detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame_id: String,
    pub class_label: String,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    #[serde(default = "default_source")]
    pub source: Source,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

fn default_source() -> Source {
    Source::Detector
}

impl DetectionRecord {
    pub fn to_detection(&self) -> Result<Detection, GeometryError> {
        let bbox = BBox::new(self.cx, self.cy, self.w, self.h)?;
        let mut d = Detection::new(
            self.frame_id.clone(),
            bbox,
            self.class_label.clone(),
            self.score,
        )?;
        d.source = self.source;
        Ok(d)
    }

    pub fn from_detection(d: &Detection) -> Self {
        Self {
            frame_id: d.frame_id.clone(),
            class_label: d.class_label.clone(),
            cx: d.bbox.cx,
            cy: d.bbox.cy,
            w: d.bbox.w,
            h: d.bbox.h,
            score: d.score,
            source: d.source,
            extra: Map::new(),
        }
    }
}

/// Parses detection records, reporting the 1-based line of the first bad record.
pub fn parse_detections(
    reader: impl BufRead,
    path: &str,
) -> Result<Vec<DetectionRecord>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| FormatError::Line {
            path: path.to_string(),
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| FormatError::Line {
            path: path.to_string(),
            line: line_no,
            reason,
        };
        let rec: DetectionRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        rec.to_detection().map_err(|e| bad(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>, FormatError> {
    let file = std::fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    parse_detections(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn emit_detections(records: &[DetectionRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

/// Box geometry as accepted in annotation files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxGeometry {
    Center { cx: f64, cy: f64, w: f64, h: f64 },
    Corners { x1: f64, y1: f64, x2: f64, y2: f64 },
}

impl BoxGeometry {
    pub fn to_bbox(&self) -> Result<BBox, GeometryError> {
        match *self {
            BoxGeometry::Center { cx, cy, w, h } => BBox::new(cx, cy, w, h),
            BoxGeometry::Corners { x1, y1, x2, y2 } => BBox::from_corners(x1, y1, x2, y2),
        }
    }
}

impl From<BBox> for BoxGeometry {
    fn from(b: BBox) -> Self {
        BoxGeometry::Center {
            cx: b.cx,
            cy: b.cy,
            w: b.w,
            h: b.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtBoxRecord {
    pub class_label: String,
    #[serde(flatten)]
    pub geometry: BoxGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedFrame {
    pub frame_id: String,
    pub sequence_id: String,
    pub index: u32,
    /// Image path relative to the annotation file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub boxes: Vec<GtBoxRecord>,
}

impl AnnotatedFrame {
    pub fn frame_ref(&self) -> FrameRef {
        FrameRef {
            sequence_id: self.sequence_id.clone(),
            index: self.index,
            image_path: self.image.clone().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Annotations {
    pub frames: Vec<AnnotatedFrame>,
}

impl Annotations {
    pub fn parse(text: &str, path: &str) -> Result<Self, FormatError> {
        let doc: Annotations = serde_json::from_str(text).map_err(|e| FormatError::Document {
            path: path.to_string(),
            reason: e.to_string(),
        })?;
        let mut seen = HashMap::new();
        for (i, f) in doc.frames.iter().enumerate() {
            let fail = |reason: String| FormatError::Document {
                path: path.to_string(),
                reason: format!("frame {:?}: {reason}", f.frame_id),
            };
            if f.width == 0 || f.height == 0 {
                return Err(fail("image dimensions must be positive".into()));
            }
            if seen.insert(f.frame_id.clone(), i).is_some() {
                return Err(fail("duplicate frame_id".into()));
            }
            for b in &f.boxes {
                b.geometry.to_bbox().map_err(|e| fail(e.to_string()))?;
            }
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("annotations serialize");
        out.push(b'\n');
        out
    }

    pub fn index(&self) -> HashMap<&str, &AnnotatedFrame> {
        self.frames
            .iter()
            .map(|f| (f.frame_id.as_str(), f))
            .collect()
    }

    pub fn box_count(&self) -> usize {
        self.frames.iter().map(|f| f.boxes.len()).sum()
    }
}

/// Provenance stored alongside a built layout.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayoutMetadata {
    pub annotation_frames: usize,
    pub annotation_boxes: usize,
    pub masks_used: usize,
    pub masks_skipped: usize,
    /// Build time as Unix seconds, taken from `SOURCE_DATE_EPOCH` when set.
    #[serde(default)]
    pub created_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub grid_w: usize,
    pub grid_h: usize,
    pub values: Vec<f64>,
    pub params: LayoutParams,
    pub metadata: LayoutMetadata,
}

impl LayoutFile {
    pub fn new(grid: &LayoutGrid, params: LayoutParams, metadata: LayoutMetadata) -> Self {
        Self {
            grid_w: grid.grid_w(),
            grid_h: grid.grid_h(),
            values: grid.values().to_vec(),
            params,
            metadata,
        }
    }

    pub fn grid(&self) -> Result<LayoutGrid, LayoutError> {
        LayoutGrid::new(self.grid_w, self.grid_h, self.values.clone())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, FormatError> {
        let file: LayoutFile = serde_json::from_str(text).map_err(|e| FormatError::Document {
            path: path.to_string(),
            reason: e.to_string(),
        })?;
        file.grid().map_err(|e| FormatError::Document {
            path: path.to_string(),
            reason: e.to_string(),
        })?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Shortest round-trip float formatting keeps every value bit-exact on reload.
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("layout serializes");
        out.push(b'\n');
        out
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| FormatError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| FormatError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| FormatError::io(path, e))?;
    tmp.flush().map_err(|e| FormatError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| FormatError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unknown_fields_survive() {
        let line = r#"{"frame_id":"s/1","class_label":"obstacle","cx":1.5,"cy":2.0,"w":3.0,"h":4.0,"score":0.5,"source":"detector","track":7,"note":"x"}"#;
        let recs = parse_detections(line.as_bytes(), "mem").unwrap();
        assert_eq!(recs[0].extra.get("track"), Some(&Value::from(7)));
        let out = emit_detections(&recs);
        let again = parse_detections(&out[..], "mem").unwrap();
        assert_eq!(recs, again);
    }

    #[test]
    fn bad_line_is_named() {
        let mut text = String::new();
        for i in 0..16 {
            text.push_str(&format!(
                "{{\"frame_id\":\"f{i}\",\"class_label\":\"o\",\"cx\":1,\"cy\":1,\"w\":1,\"h\":1,\"score\":0.5}}\n"
            ));
        }
        text.push_str("{\"frame_id\": oops}\n");
        let err = parse_detections(text.as_bytes(), "dets.jsonl").unwrap_err();
        assert!(matches!(err, FormatError::Line { line: 17, .. }), "{err}");
        assert!(err.to_string().contains("line 17"));

        let bad_score =
            r#"{"frame_id":"f","class_label":"o","cx":1,"cy":1,"w":1,"h":1,"score":1.5}"#;
        assert!(matches!(
            parse_detections(bad_score.as_bytes(), "m"),
            Err(FormatError::Line { line: 1, .. })
        ));
    }

    #[test]
    fn corner_boxes_convert_on_ingest() {
        let doc = r#"{"frames":[{"frame_id":"a","sequence_id":"s","index":0,"width":100,"height":50,
            "boxes":[{"class_label":"o","x1":10,"y1":10,"x2":30,"y2":20},{"class_label":"o","cx":5,"cy":5,"w":2,"h":2}]}]}"#;
        let a = Annotations::parse(doc, "m").unwrap();
        assert_eq!(
            a.frames[0].boxes[0].geometry.to_bbox().unwrap(),
            BBox::new(20.0, 15.0, 20.0, 10.0).unwrap()
        );
        assert_eq!(a.box_count(), 2);
    }

    #[test]
    fn annotation_validation() {
        let dup = r#"{"frames":[{"frame_id":"a","sequence_id":"s","index":0,"width":1,"height":1},
                                {"frame_id":"a","sequence_id":"s","index":1,"width":1,"height":1}]}"#;
        assert!(Annotations::parse(dup, "m").is_err());
        let zero =
            r#"{"frames":[{"frame_id":"a","sequence_id":"s","index":0,"width":0,"height":1}]}"#;
        assert!(Annotations::parse(zero, "m").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        let leftovers = std::fs::read_dir(p.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    fn arb_record() -> impl Strategy<Value = DetectionRecord> {
        (
            "[a-z0-9/]{1,12}",
            "[a-z]{1,8}",
            -1e4..1e4f64,
            -1e4..1e4f64,
            1e-3..1e3f64,
            1e-3..1e3f64,
            0.0..=1.0f64,
            any::<bool>(),
            proptest::option::of(any::<i32>()),
        )
            .prop_map(|(frame_id, class_label, cx, cy, w, h, score, rec, tag)| {
                let mut extra = Map::new();
                if let Some(t) = tag {
                    extra.insert("tag".into(), Value::from(t));
                }
                DetectionRecord {
                    frame_id,
                    class_label,
                    cx,
                    cy,
                    w,
                    h,
                    score,
                    source: if rec {
                        Source::FlowRecovered
                    } else {
                        Source::Detector
                    },
                    extra,
                }
            })
    }

    proptest! {
        #[test]
        fn detection_files_round_trip(recs in proptest::collection::vec(arb_record(), 0..8)) {
            let bytes = emit_detections(&recs);
            prop_assert_eq!(parse_detections(&bytes[..], "m").unwrap(), recs);
        }
    }
}
