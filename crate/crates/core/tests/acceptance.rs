//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use obstacle_context::cli;
use obstacle_context::eval::{average_precision, match_detections, pr_curve, MatchOutcome};
use obstacle_context::flow::{lk_track, shi_tomasi, track_region, CornerParams, FlowParams};
use obstacle_context::imaging::{build_pyramid, decode_netpbm, encode_pgm};
use obstacle_context::io::{read_detections, DetectionRecord};
use obstacle_context::layout::{
    build_obstacle_distribution, fused_score, layout_score, GtSample, LayoutParams, RoadMask,
    SceneLayout,
};
use obstacle_context::render::render_pgm;
use obstacle_context::synth::textured_frame;
use obstacle_context::{iou, BBox, Detection, GrayImage, LayoutGrid, Source};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

type Outcome = Result<String, String>;

fn check(cond: bool, what: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what)
    }
}

fn full(img: &GrayImage) -> BBox {
    BBox::from_corners(0.0, 0.0, img.width() as f64, img.height() as f64).unwrap()
}

/// Corners closer to the border than this are not scored: their true
/// destination window would leave the frame at the larger shift.
const FLOW_MARGIN: f64 = 32.0;

/// Fraction of corners tracked to within `tol` px of the true shift.
fn flow_accuracy(dx: f64, dy: f64, levels: usize, tol: f64) -> (f64, usize) {
    let prev = textured_frame(320, 240, 5, 0.0, 0.0);
    let next = textured_frame(320, 240, 5, dx, dy);
    let interior = BBox::from_corners(
        FLOW_MARGIN,
        FLOW_MARGIN,
        320.0 - FLOW_MARGIN,
        240.0 - FLOW_MARGIN,
    )
    .unwrap();
    let corners = shi_tomasi(
        &prev,
        &interior,
        &CornerParams {
            max_corners: 200,
            min_distance: 8.0,
            ..Default::default()
        },
    )
    .unwrap();
    let pts: Vec<(f64, f64)> = corners.iter().map(|c| (c.x, c.y)).collect();
    let params = FlowParams {
        pyramid_levels: levels,
        ..Default::default()
    };
    let tracks = lk_track(
        &build_pyramid(&prev, levels),
        &build_pyramid(&next, levels),
        &pts,
        &params,
    )
    .unwrap();
    let good = tracks
        .iter()
        .filter(|t| {
            t.converged() && (t.end.0 - t.start.0 - dx).hypot(t.end.1 - t.start.1 - dy) <= tol
        })
        .count();
    (good as f64 / tracks.len() as f64, tracks.len())
}

fn flow_accuracy_criterion() -> Outcome {
    let t0 = Instant::now();
    let (small, n1) = flow_accuracy(3.0, 2.0, 3, 0.3);
    let (large, n2) = flow_accuracy(15.0, 10.0, 3, 1.0);
    let (single, _) = flow_accuracy(15.0, 10.0, 1, 1.0);
    let secs = t0.elapsed().as_secs_f64();
    let msg = format!(
        "(3,2): {:.1}% of {n1} within 0.3 px; (15,10): {:.1}% of {n2} within 1.0 px with 3 levels ({:.1}% with 1); {secs:.2} s",
        100.0 * small,
        100.0 * large,
        100.0 * single
    );
    check(small >= 0.9 && large >= 0.9 && secs < 5.0, msg.clone())?;
    Ok(msg)
}

fn speedup_criterion() -> Outcome {
    let prev = textured_frame(1280, 720, 9, 0.0, 0.0);
    let next = textured_frame(1280, 720, 9, 3.0, 2.0);
    let cp = CornerParams::default();
    let fp = FlowParams::default();
    let reps = 50;
    let time = |region: &BBox| {
        let t0 = Instant::now();
        for _ in 0..reps {
            let f = track_region(&prev, &next, region, &cp, &fp).unwrap();
            std::hint::black_box(f);
        }
        t0.elapsed().as_secs_f64()
    };
    let crop = BBox::new(640.0, 360.0, 100.0, 100.0).unwrap();
    let t_crop = time(&crop);
    let t_full = time(&full(&prev));
    let ratio = t_full / t_crop;
    let msg = format!(
        "{reps} reps: crop {:.2} ms/frame, full {:.2} ms/frame, {ratio:.1}x",
        1e3 * t_crop / reps as f64,
        1e3 * t_full / reps as f64
    );
    check(ratio >= 10.0, msg.clone())?;
    Ok(msg)
}

/// Greedy matching written independently of the library.
fn oracle_flags(dets: &[(BBox, f64)], gts: &[BBox], thr: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.partial_cmp(&dets[a].1).unwrap());
    let mut taken = vec![false; gts.len()];
    let mut flags = Vec::new();
    for i in order {
        let mut best: Option<usize> = None;
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(&dets[i].0, gt);
            if !taken[g] && v >= thr && best.is_none_or(|b| v > iou(&dets[i].0, &gts[b])) {
                best = Some(g);
            }
        }
        if let Some(g) = best {
            taken[g] = true;
        }
        flags.push(best.is_some());
    }
    flags
}

/// Interpolated AP by scanning every cutoff of the ranked list per recall level.
fn oracle_ap(ranked: &[bool], total_gt: usize) -> f64 {
    let mut sum = 0.0;
    for level in 0..=100usize {
        let mut best = 0.0f64;
        for cut in 1..=ranked.len() {
            let tp = ranked[..cut].iter().filter(|&&h| h).count();
            if tp * 100 >= level * total_gt {
                best = best.max(tp as f64 / cut as f64);
            }
        }
        sum += best;
    }
    sum / 101.0
}

fn ap_oracle_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let n = 200;
    for _ in 0..n {
        let rbox = |rng: &mut ChaCha8Rng| {
            BBox::new(
                rng.gen_range(0.0..60.0),
                rng.gen_range(0.0..60.0),
                rng.gen_range(5.0..30.0),
                rng.gen_range(5.0..30.0),
            )
            .unwrap()
        };
        let gts: Vec<BBox> = (0..rng.gen_range(1..=5)).map(|_| rbox(&mut rng)).collect();
        let mut dets: Vec<(BBox, f64)> = Vec::new();
        for _ in 0..rng.gen_range(0..=10) {
            // Half the detections are perturbed copies of a ground-truth box.
            let b = if rng.gen_bool(0.5) {
                let g = gts[rng.gen_range(0..gts.len())];
                BBox::new(
                    g.cx + rng.gen_range(-4.0..4.0),
                    g.cy + rng.gen_range(-4.0..4.0),
                    g.w,
                    g.h,
                )
                .unwrap()
            } else {
                rbox(&mut rng)
            };
            dets.push((b, rng.gen_range(0.0..1.0)));
        }
        let thr = [0.5, 0.75][rng.gen_range(0..2)];
        let det_objs: Vec<Detection> = dets
            .iter()
            .map(|(b, s)| Detection::new("f", *b, "o", *s).unwrap())
            .collect();
        let m = match_detections(&det_objs, &gts, thr);
        let scored: Vec<(f64, bool)> = dets
            .iter()
            .zip(&m.outcomes)
            .map(|(d, o)| (d.1, *o == MatchOutcome::TruePositive))
            .collect();
        let ap = average_precision(&pr_curve(&scored, gts.len()).unwrap());
        let expected = oracle_ap(&oracle_flags(&dets, &gts, thr), gts.len());
        worst = worst.max((ap - expected).abs());
    }
    let msg = format!("{n} instances, max |AP - oracle| = {worst:.1e}");
    check(worst <= 1e-12, msg.clone())?;
    Ok(msg)
}

fn layout_score_criterion() -> Outcome {
    let p = LayoutParams::default();
    let mut issues = Vec::new();
    for m in [0.0, 0.05, 0.1, 0.149_999_999_999] {
        if layout_score(m, &p) != -1.0 {
            issues.push(format!("M={m} not -1"));
        }
    }
    for m in [0.15, 0.3, 0.5, 0.599_999_999_999] {
        if layout_score(m, &p) != 0.0 {
            issues.push(format!("M={m} not 0"));
        }
    }
    let mut last = layout_score(0.6, &p);
    for k in 1..=400 {
        let m = 0.6 + 0.4 * k as f64 / 400.0;
        let s = layout_score(m, &p);
        if !(s > last) {
            issues.push(format!("not increasing at M={m}"));
            break;
        }
        last = s;
    }
    let jump = layout_score(0.6, &p)
        .abs()
        .max((layout_score(0.6 + 1e-13, &p) - layout_score(0.6, &p)).abs());
    if jump > 1e-12 {
        issues.push(format!("discontinuity {jump:e} at 0.6"));
    }
    if fused_score(0.7, -1.0, 1.0) != 0.0 {
        issues.push("off-road clamp".into());
    }
    let msg = format!(
        "branches -1/0/positive, |S_L(0.6)| = {:.1e}, S_L(1) = {:.4}",
        layout_score(0.6, &p).abs(),
        layout_score(1.0, &p)
    );
    if issues.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; {}", issues.join(", ")))
    }
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RoadMask {
    let horizon = rng.gen_range(0.3..0.6) * h as f64;
    let c = rng.gen_range(0.4..0.6) * w as f64;
    let top = rng.gen_range(0.02..0.08) * w as f64;
    let bottom = rng.gen_range(0.2..0.45) * w as f64;
    RoadMask::from_fn(w, h, |x, y| {
        let y = y as f64 + 0.5;
        if y < horizon {
            return false;
        }
        let t = (y - horizon) / (h as f64 - horizon);
        ((x as f64 + 0.5) - c).abs() <= top + t * (bottom - top)
    })
}

fn upsample(m: &RoadMask, k: usize) -> RoadMask {
    RoadMask::from_fn(m.width * k, m.height * k, |x, y| {
        m.data[(y / k) * m.width + x / k]
    })
}

fn layout_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let params = LayoutParams {
        grid_w: 64,
        grid_h: 32,
        ..Default::default()
    };
    let trials = 25;
    let mut issues = Vec::new();
    let mut worst_res = 0.0f64;
    for trial in 0..trials {
        let (w, h) = (rng.gen_range(40..120) * 2, rng.gen_range(30..80) * 2);
        let gt: Vec<GtSample> = (0..rng.gen_range(1..40))
            .map(|_| {
                let s = rng.gen_range(4.0..20.0);
                GtSample {
                    bbox: BBox::new(
                        rng.gen_range(0.0..w as f64),
                        rng.gen_range(0.0..h as f64),
                        s,
                        s,
                    )
                    .unwrap(),
                    image_width: w as f64,
                    image_height: h as f64,
                }
            })
            .collect();
        let masks: Vec<RoadMask> = (0..rng.gen_range(1..6))
            .map(|_| random_mask(&mut rng, w, h))
            .collect();
        let built = match SceneLayout::build(&gt, &masks, &params) {
            Ok(b) => b,
            Err(e) => {
                issues.push(format!("trial {trial}: {e}"));
                continue;
            }
        };
        for g in [&built.obstacle, &built.road, &built.combined] {
            if g.max() != 1.0 || g.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
                issues.push(format!("trial {trial}: grid not normalized"));
            }
        }
        let (mut gt2, mut masks2) = (gt.clone(), masks.clone());
        gt2.shuffle(&mut rng);
        masks2.shuffle(&mut rng);
        if SceneLayout::build(&gt2, &masks2, &params).unwrap() != built {
            issues.push(format!("trial {trial}: order dependent"));
        }
        let k = 2;
        let scaled: Vec<GtSample> = gt
            .iter()
            .map(|s| GtSample {
                bbox: BBox::new(
                    s.bbox.cx * k as f64,
                    s.bbox.cy * k as f64,
                    s.bbox.w * k as f64,
                    s.bbox.h * k as f64,
                )
                .unwrap(),
                image_width: s.image_width * k as f64,
                image_height: s.image_height * k as f64,
            })
            .collect();
        let up: Vec<RoadMask> = masks.iter().map(|m| upsample(m, k)).collect();
        let hi = SceneLayout::build(&scaled, &up, &params).unwrap();
        let diff = hi
            .combined
            .values()
            .iter()
            .zip(built.combined.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_res = worst_res.max(diff);
        // Obstacle distributions alone are also resolution independent.
        let o = build_obstacle_distribution(&scaled, &params).unwrap();
        let od = o
            .values()
            .iter()
            .zip(built.obstacle.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_res = worst_res.max(od);
    }
    if worst_res > 1e-9 {
        issues.push(format!("resolution dependence {worst_res:.1e}"));
    }
    let msg = format!("{trials} fuzzed builds: max = 1, cells in [0,1], shuffle-invariant, 2x resolution diff {worst_res:.1e}");
    if issues.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; {}", issues.join(", ")))
    }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let mut full = vec!["obstacle-context"];
    full.extend_from_slice(args);
    cli::run(full).map_err(|e| format!("{}: {e}", args.join(" ")))
}

fn ap50(dir: &Path, dets: &str) -> Result<f64, String> {
    let d = dir.join(dets);
    let a = dir.join("test/annotations.json");
    cli::evaluate_files(&d, &a)
        .map(|r| r.ap50)
        .map_err(|e| e.to_string())
}

fn end_to_end_criterion(dir: &Path) -> Outcome {
    let t0 = Instant::now();
    let p = |s: &str| dir.join(s).display().to_string();
    run_cli(&["synth", "--output", &p("")])?;
    run_cli(&[
        "layout",
        "build",
        "--annotations",
        &p("train/annotations.json"),
        "--masks",
        &p("train/masks"),
        "--output",
        &p("layout.json"),
    ])?;
    run_cli(&[
        "rescore",
        "--detections",
        &p("test/detections.jsonl"),
        "--layout",
        &p("layout.json"),
        "--annotations",
        &p("test/annotations.json"),
        "--output",
        &p("rescored.jsonl"),
    ])?;
    for (input, output) in [
        ("test/detections.jsonl", "tracked.jsonl"),
        ("rescored.jsonl", "combined.jsonl"),
    ] {
        run_cli(&[
            "track",
            "--detections",
            &p(input),
            "--frames",
            &p("test/frames"),
            "--layout",
            &p("layout.json"),
            "--output",
            &p(output),
        ])?;
    }
    let raw = ap50(dir, "test/detections.jsonl")?;
    let rescored = ap50(dir, "rescored.jsonl")?;
    let tracked = ap50(dir, "tracked.jsonl")?;
    let combined = ap50(dir, "combined.jsonl")?;
    let secs = t0.elapsed().as_secs_f64();
    let msg = format!(
        "AP50 raw {:.1}, rescored {:.1}, tracked {:.1}, rescored+tracked {:.1} (+{:.1}); {secs:.1} s",
        100.0 * raw,
        100.0 * rescored,
        100.0 * tracked,
        100.0 * combined,
        100.0 * (combined - raw)
    );
    let ok = combined - raw >= 0.05 && rescored > raw && tracked > raw && secs < 60.0;
    check(ok, msg.clone())?;
    Ok(msg)
}

fn by_frame(records: &[DetectionRecord]) -> BTreeMap<String, Vec<DetectionRecord>> {
    let mut m: BTreeMap<String, Vec<DetectionRecord>> = BTreeMap::new();
    for r in records {
        m.entry(r.frame_id.clone()).or_default().push(r.clone());
    }
    m
}

fn tracker_contracts_criterion(dir: &Path) -> Outcome {
    let p = |s: &str| dir.join(s).display().to_string();
    run_cli(&[
        "synth",
        "--output",
        &p(""),
        "--sequences",
        "4",
        "--frames",
        "8",
        "--train-sequences",
        "10",
        "--drop-rate",
        "0",
        "--drop-frames",
        "4,5",
    ])?;
    run_cli(&[
        "layout",
        "build",
        "--annotations",
        &p("train/annotations.json"),
        "--masks",
        &p("train/masks"),
        "--output",
        &p("layout.json"),
    ])?;
    run_cli(&[
        "rescore",
        "--detections",
        &p("test/detections.jsonl"),
        "--layout",
        &p("layout.json"),
        "--annotations",
        &p("test/annotations.json"),
        "--output",
        &p("rescored.jsonl"),
    ])?;
    for out in ["a.jsonl", "b.jsonl"] {
        run_cli(&[
            "track",
            "--detections",
            &p("rescored.jsonl"),
            "--frames",
            &p("test/frames"),
            "--layout",
            &p("layout.json"),
            "--output",
            &p(out),
        ])?;
    }
    let input = read_detections(&dir.join("rescored.jsonl")).map_err(|e| e.to_string())?;
    let output = read_detections(&dir.join("a.jsonl")).map_err(|e| e.to_string())?;
    let (bi, bo) = (by_frame(&input), by_frame(&output));
    let mut issues = Vec::new();
    for (frame, recs) in &bi {
        let out: Vec<&DetectionRecord> = bo
            .get(frame)
            .map(|v| v.iter().filter(|r| r.source == Source::Detector).collect())
            .unwrap_or_default();
        if out.len() != recs.len() || out.iter().zip(recs).any(|(a, b)| *a != b) {
            issues.push(format!("{frame}: detector records changed"));
        }
    }
    let recovered: Vec<&DetectionRecord> = output
        .iter()
        .filter(|r| r.source == Source::FlowRecovered)
        .collect();
    if let Some(r) = recovered.iter().find(|r| r.score < 0.3) {
        issues.push(format!("recovered score {} < 0.3", r.score));
    }
    let ann = obstacle_context::io::Annotations::read(&dir.join("test/annotations.json"))
        .map_err(|e| e.to_string())?;
    let mut in4 = 0;
    for f in &ann.frames {
        let here = recovered
            .iter()
            .filter(|r| r.frame_id == f.frame_id)
            .count();
        match f.index {
            4 => {
                // One recovery per obstacle, each overlapping its ground truth.
                if here != f.boxes.len() {
                    issues.push(format!(
                        "{}: {here} recoveries for {} obstacles",
                        f.frame_id,
                        f.boxes.len()
                    ));
                }
                in4 += here;
            }
            5 if here > 0 => issues.push(format!("{}: chained recovery", f.frame_id)),
            i if i != 4 && i != 5 && here > 0 => {
                issues.push(format!("{}: unexpected recovery", f.frame_id))
            }
            _ => {}
        }
    }
    let a = std::fs::read(dir.join("a.jsonl")).map_err(|e| e.to_string())?;
    let b = std::fs::read(dir.join("b.jsonl")).map_err(|e| e.to_string())?;
    if a != b {
        issues.push("reruns differ".into());
    }
    let msg = format!(
        "{} detector records kept, {} recovered (all in drop frame 4: {in4}), none in frame 5, min score {:.3}, reruns byte-identical: {}",
        input.len(),
        recovered.len(),
        recovered.iter().map(|r| r.score).fold(1.0, f64::min),
        a == b
    );
    if issues.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; {}", issues.join(", ")))
    }
}

fn imaging_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut issues = Vec::new();
    let trials = 100;
    for _ in 0..trials {
        let (w, h) = (rng.gen_range(1..64), rng.gen_range(1..64));
        let bytes: Vec<u8> = (0..w * h).map(|_| rng.gen()).collect();
        let img = GrayImage::from_fn(w, h, |x, y| bytes[y * w + x] as f32 / 255.0);
        let enc = encode_pgm(&img);
        let dec = decode_netpbm(&enc).map_err(|e| e.to_string())?.into_gray();
        if dec != img || encode_pgm(&dec) != enc {
            issues.push(format!("{w}x{h} round trip differs"));
        }
        let values: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let grid = LayoutGrid::new(w, h, values).unwrap();
        let rendered = decode_netpbm(&render_pgm(&grid))
            .map_err(|e| e.to_string())?
            .into_gray();
        let err = (0..h)
            .flat_map(|j| (0..w).map(move |i| (i, j)))
            .map(|(i, j)| (rendered.get(i, j) as f64 - grid.get(i, j)).abs())
            .fold(0.0, f64::max);
        if err > 1.0 / 255.0 || (rendered.width(), rendered.height()) != (w, h) {
            issues.push(format!("{w}x{h} render error {err}"));
        }
    }
    let msg = format!("{trials} random images: PGM bit-exact, render error within 1/255");
    if issues.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; {}", issues.join(", ")))
    }
}

fn main() {
    let e2e = tempfile::tempdir().expect("temp dir");
    let contracts = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("flow accuracy", Box::new(flow_accuracy_criterion)),
        ("region-selection speedup", Box::new(speedup_criterion)),
        ("AP oracle equivalence", Box::new(ap_oracle_criterion)),
        ("layout score branches", Box::new(layout_score_criterion)),
        ("layout normalization", Box::new(layout_criterion)),
        (
            "end-to-end ablation",
            Box::new(|| end_to_end_criterion(e2e.path())),
        ),
        (
            "tracker contracts",
            Box::new(|| tracker_contracts_criterion(contracts.path())),
        ),
        ("imaging round trips", Box::new(imaging_criterion)),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        match f() {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
