use obstacle_context::cli::{self, evaluate_files, CliError};
use obstacle_context::io::{
    emit_detections, read_detections, Annotations, DetectionRecord, LayoutFile,
};
use obstacle_context::layout::layout_value;
use obstacle_context::Source;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

fn run(args: &[&str]) -> Result<(), CliError> {
    cli::run(std::iter::once("obstacle-context").chain(args.iter().copied()))
}

struct Corpus {
    dir: tempfile::TempDir,
}

impl Corpus {
    fn new(extra: &[&str]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().display().to_string();
        let mut args = vec![
            "synth",
            "--output",
            &out,
            "--sequences",
            "2",
            "--train-sequences",
            "8",
        ];
        if !extra.contains(&"--frames") {
            args.extend(["--frames", "6"]);
        }
        args.extend_from_slice(extra);
        run(&args).unwrap();
        Self { dir }
    }

    fn p(&self, rel: &str) -> String {
        self.dir.path().join(rel).display().to_string()
    }

    fn layout(&self) -> String {
        let out = self.p("layout.json");
        if !Path::new(&out).exists() {
            run(&[
                "layout",
                "build",
                "--annotations",
                &self.p("train/annotations.json"),
                "--masks",
                &self.p("train/masks"),
                "--output",
                &out,
            ])
            .unwrap();
        }
        out
    }
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn synth_is_deterministic_per_seed() {
    let a = Corpus::new(&["--seed", "7"]);
    let b = Corpus::new(&["--seed", "7"]);
    let c = Corpus::new(&["--seed", "8"]);
    let (ta, tb, tc) = (tree(a.dir.path()), tree(b.dir.path()), tree(c.dir.path()));
    assert!(ta.len() > 10);
    assert_eq!(ta, tb);
    assert_ne!(
        ta[Path::new("test/detections.jsonl")],
        tc[Path::new("test/detections.jsonl")]
    );
}

#[test]
fn layout_rebuild_is_byte_identical() {
    let c = Corpus::new(&[]);
    let first = fs::read(c.layout()).unwrap();
    let again = c.p("again.json");
    run(&[
        "layout",
        "build",
        "--annotations",
        &c.p("train/annotations.json"),
        "--masks",
        &c.p("train/masks"),
        "--output",
        &again,
    ])
    .unwrap();
    assert_eq!(first, fs::read(again).unwrap());
    let grid = LayoutFile::parse(std::str::from_utf8(&first).unwrap(), "layout")
        .unwrap()
        .grid()
        .unwrap();
    assert_eq!(grid.max(), 1.0);
}

#[test]
fn layout_without_masks_is_refused() {
    let c = Corpus::new(&[]);
    let err = run(&[
        "layout",
        "build",
        "--annotations",
        &c.p("train/annotations.json"),
        "--output",
        &c.p("l.json"),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("mask"), "{err}");
    fs::create_dir(c.p("empty")).unwrap();
    let err = run(&[
        "layout",
        "build",
        "--annotations",
        &c.p("train/annotations.json"),
        "--masks",
        &c.p("empty"),
        "--output",
        &c.p("l.json"),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("mask"), "{err}");
    assert!(!Path::new(&c.p("l.json")).exists());
}

#[test]
fn zero_theta_keeps_scores() {
    let c = Corpus::new(&[]);
    let layout = c.layout();
    let out = c.p("r.jsonl");
    run(&[
        "rescore",
        "--detections",
        &c.p("test/detections.jsonl"),
        "--layout",
        &layout,
        "--image-size",
        "640x360",
        "--theta",
        "0",
        "--output",
        &out,
    ])
    .unwrap();
    let before = read_detections(Path::new(&c.p("test/detections.jsonl"))).unwrap();
    let after = read_detections(Path::new(&out)).unwrap();
    assert_eq!(before, after);
}

#[test]
fn rescoring_demotes_offroad_false_positives() {
    let c = Corpus::new(&["--noise", "0"]);
    let file = LayoutFile::read(Path::new(&c.layout())).unwrap();
    let grid = file.grid().unwrap();
    let ann = Annotations::read(Path::new(&c.p("test/annotations.json"))).unwrap();
    let index = ann.index();
    let mut offroad = 0;
    for rec in read_detections(Path::new(&c.p("test/detections.jsonl"))).unwrap() {
        let d = rec.to_detection().unwrap();
        let frame = index[d.frame_id.as_str()];
        let matched = frame
            .boxes
            .iter()
            .any(|b| obstacle_context::iou(&b.geometry.to_bbox().unwrap(), &d.bbox) > 0.5);
        if !matched {
            offroad += 1;
            let m = layout_value(&grid, &d, frame.width as f64, frame.height as f64);
            assert!(
                m < 0.15,
                "{} at ({}, {}) has M = {m}",
                d.frame_id,
                d.bbox.cx,
                d.bbox.cy
            );
        }
    }
    assert!(offroad > 0);
}

#[test]
fn malformed_line_is_reported_by_number() {
    let c = Corpus::new(&[]);
    let text = fs::read_to_string(c.p("test/detections.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() > 20);
    lines[16] = "{\"frame_id\": \"seq000/000003\", \"cx\": 1.0";
    let bad = c.p("bad.jsonl");
    fs::write(&bad, lines.join("\n")).unwrap();
    let err = run(&[
        "rescore",
        "--detections",
        &bad,
        "--layout",
        &c.layout(),
        "--image-size",
        "640x360",
        "--output",
        &c.p("o.jsonl"),
    ])
    .unwrap_err();
    assert!(err.to_string().contains("line 17:"), "{err}");
    assert!(!Path::new(&c.p("o.jsonl")).exists());
}

#[test]
fn perfect_detections_score_one() {
    let c = Corpus::new(&[]);
    let ann = Annotations::read(Path::new(&c.p("test/annotations.json"))).unwrap();
    let mut recs = Vec::new();
    for f in &ann.frames {
        for b in &f.boxes {
            let d = obstacle_context::Detection::new(
                &f.frame_id,
                b.geometry.to_bbox().unwrap(),
                &b.class_label,
                1.0,
            )
            .unwrap();
            recs.push(DetectionRecord::from_detection(&d));
        }
    }
    let path = c.dir.path().join("gt.jsonl");
    fs::write(&path, emit_detections(&recs)).unwrap();
    let r = evaluate_files(&path, Path::new(&c.p("test/annotations.json"))).unwrap();
    assert_eq!((r.ap50, r.ap75, r.ap), (1.0, 1.0, 1.0));
    for v in [r.ap_s, r.ap_m, r.ap_l].into_iter().flatten() {
        assert_eq!(v, 1.0);
    }
}

#[test]
fn eval_rejects_frames_missing_from_ground_truth() {
    let c = Corpus::new(&[]);
    let text = fs::read_to_string(c.p("test/detections.jsonl"))
        .unwrap()
        .replace("seq001/", "seq999/");
    let path = c.dir.path().join("renamed.jsonl");
    fs::write(&path, text).unwrap();
    let err = evaluate_files(&path, Path::new(&c.p("test/annotations.json"))).unwrap_err();
    assert!(err.to_string().contains("seq999"), "{err}");
}

#[test]
fn single_frame_sequence_is_unchanged() {
    let c = Corpus::new(&["--frames", "1", "--drop-rate", "0"]);
    let out = c.p("t.jsonl");
    run(&[
        "track",
        "--detections",
        &c.p("test/detections.jsonl"),
        "--layout",
        &c.layout(),
        "--frames",
        &c.p("test/frames"),
        "--output",
        &out,
    ])
    .unwrap();
    assert_eq!(
        read_detections(Path::new(&c.p("test/detections.jsonl"))).unwrap(),
        read_detections(Path::new(&out)).unwrap()
    );
}

#[test]
fn low_scores_are_never_tracked() {
    let c = Corpus::new(&["--drop-frames", "3"]);
    let mut recs = read_detections(Path::new(&c.p("test/detections.jsonl"))).unwrap();
    for r in &mut recs {
        r.score = r.score.min(0.3);
    }
    let input = c.dir.path().join("low.jsonl");
    fs::write(&input, emit_detections(&recs)).unwrap();
    let out = c.p("t.jsonl");
    run(&[
        "track",
        "--detections",
        &input.display().to_string(),
        "--layout",
        &c.layout(),
        "--frames",
        &c.p("test/frames"),
        "--output",
        &out,
    ])
    .unwrap();
    let tracked = read_detections(Path::new(&out)).unwrap();
    assert_eq!(tracked, recs);
    assert!(tracked.iter().all(|r| r.source == Source::Detector));
}

#[test]
fn tracking_fills_dropped_frame_and_appends_only() {
    let c = Corpus::new(&["--drop-rate", "0", "--drop-frames", "3"]);
    let out = c.p("t.jsonl");
    let diag = c.p("rec.jsonl");
    run(&[
        "track",
        "--detections",
        &c.p("test/detections.jsonl"),
        "--layout",
        &c.layout(),
        "--frames",
        &c.p("test/frames"),
        "--output",
        &out,
        "--recoveries",
        &diag,
    ])
    .unwrap();
    let input = read_detections(Path::new(&c.p("test/detections.jsonl"))).unwrap();
    let tracked = read_detections(Path::new(&out)).unwrap();
    let originals: Vec<_> = tracked
        .iter()
        .filter(|r| r.source == Source::Detector)
        .cloned()
        .collect();
    assert_eq!(originals, input);
    let recovered: Vec<_> = tracked
        .iter()
        .filter(|r| r.source == Source::FlowRecovered)
        .collect();
    assert!(!recovered.is_empty());
    assert!(recovered
        .iter()
        .all(|r| r.frame_id.ends_with("/000003") && r.score >= 0.3));
    assert!(fs::read_to_string(diag).unwrap().lines().count() >= recovered.len());
}

#[test]
fn config_file_supplies_paths_and_flags_override() {
    let c = Corpus::new(&[]);
    let layout = c.layout();
    let cfg = c.dir.path().join("pipeline.toml");
    fs::write(&cfg, "[layout]\ntheta = 0.0\n[paths]\ndetections = \"test/detections.jsonl\"\noutput = \"cfg.jsonl\"\n").unwrap();
    let cfg = cfg.display().to_string();
    run(&[
        "--config",
        &cfg,
        "rescore",
        "--layout",
        &layout,
        "--image-size",
        "640x360",
    ])
    .unwrap();
    let before = read_detections(Path::new(&c.p("test/detections.jsonl"))).unwrap();
    assert_eq!(
        read_detections(Path::new(&c.p("cfg.jsonl"))).unwrap(),
        before
    );
    run(&[
        "--config",
        &cfg,
        "rescore",
        "--layout",
        &layout,
        "--image-size",
        "640x360",
        "--theta",
        "0.5",
    ])
    .unwrap();
    assert_ne!(
        read_detections(Path::new(&c.p("cfg.jsonl"))).unwrap(),
        before
    );
}

#[test]
fn flow_command_runs_on_two_frames() {
    let c = Corpus::new(&[]);
    run(&[
        "flow",
        "--prev",
        &c.p("test/frames/seq000/000000.pgm"),
        "--next",
        &c.p("test/frames/seq000/000001.pgm"),
    ])
    .unwrap();
    assert!(run(&[
        "flow",
        "--prev",
        &c.p("missing.pgm"),
        "--next",
        &c.p("test/frames/seq000/000001.pgm")
    ])
    .is_err());
}
