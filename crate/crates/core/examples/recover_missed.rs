//! Recovers obstacles the detector missed in one frame by tracking them in
//! from the previous frame.

use obstacle_context::geometry::{Detection, FrameRef};
use obstacle_context::layout::{GtSample, LayoutParams, SceneLayout};
use obstacle_context::synth::{frame_id, sequence_id, Corpus, SynthConfig};
use obstacle_context::tracker::{process_sequence, RecoveryOutcome, SequenceFrame, TrackerConfig};
use obstacle_context::GrayImage;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SynthConfig {
        sequences: 1,
        frames: 6,
        train_sequences: 10,
        drop_rate: 0.0,
        drop_frames: vec![3],
        ..Default::default()
    };
    let corpus = Corpus::generate(&config);
    let gt: Vec<GtSample> = corpus
        .train
        .frames
        .iter()
        .flat_map(|f| {
            f.boxes.iter().map(move |b| GtSample {
                bbox: b.geometry.to_bbox().unwrap(),
                image_width: f.width as f64,
                image_height: f.height as f64,
            })
        })
        .collect();
    let masks: Vec<_> = corpus.train_scenes.iter().map(|s| s.road_mask()).collect();
    let layout = SceneLayout::build(&gt, &masks, &LayoutParams::default())?;

    let seq = sequence_id(0);
    let frames: Vec<SequenceFrame> = (0..config.frames)
        .map(|t| {
            let id = frame_id(&seq, t);
            let detections: Vec<Detection> = corpus
                .detections
                .iter()
                .filter(|r| r.frame_id == id)
                .map(|r| r.to_detection().unwrap())
                .collect();
            SequenceFrame {
                frame: FrameRef {
                    sequence_id: seq.clone(),
                    index: t,
                    image_path: String::new(),
                },
                frame_id: id,
                detections,
            }
        })
        .collect();

    // Frames are rendered on demand instead of read from disk.
    let scene = &corpus.test_scenes[0];
    let images = |f: &FrameRef| -> Result<GrayImage, String> { Ok(scene.render(f.index)) };
    let out = process_sequence(
        &frames,
        &layout.combined,
        &images,
        &TrackerConfig::default(),
    )?;

    for (before, after) in frames.iter().zip(&out.frames) {
        println!(
            "{}: {} detections -> {}",
            before.frame_id,
            before.detections.len(),
            after.detections.len()
        );
    }
    println!();
    for r in &out.records {
        match r.outcome {
            RecoveryOutcome::Accepted => {
                let (dx, dy) = r.offset.unwrap_or_default();
                println!(
                    "{} -> {}: offset ({dx:+.2}, {dy:+.2}) from {}/{} corners, M = {:.3}, score {:.3} -> {:.3}",
                    r.source_frame,
                    r.target_frame,
                    r.converged,
                    r.corners,
                    r.layout_value.unwrap_or_default(),
                    r.source_score,
                    r.score.unwrap_or_default()
                );
            }
            other => println!("{} -> {}: {other:?}", r.source_frame, r.target_frame),
        }
    }
    for (t, truth) in (0..config.frames).map(|t| (t, scene.boxes(t))) {
        if config.drop_frames.contains(&t) {
            println!("\nground truth in frame {t}:");
            for b in truth {
                println!("  ({:.1}, {:.1}) {:.1}x{:.1}", b.cx, b.cy, b.w, b.h);
            }
        }
    }
    Ok(())
}
