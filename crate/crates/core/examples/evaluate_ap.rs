//! Computes COCO-style average precision for a handful of hand-made
//! detections and for a simulated detector.

use obstacle_context::eval::{iou_thresholds, summarize, GroundTruth};
use obstacle_context::synth::{Corpus, SynthConfig};
use obstacle_context::{BBox, Detection};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut gt = GroundTruth::default();
    gt.frames.insert(
        "a".into(),
        vec![("car".into(), BBox::new(50.0, 50.0, 40.0, 30.0)?)],
    );
    gt.frames.insert(
        "b".into(),
        vec![("car".into(), BBox::new(120.0, 80.0, 60.0, 40.0)?)],
    );
    let dets = vec![
        Detection::new("a", BBox::new(51.0, 50.0, 40.0, 30.0)?, "car", 0.9)?,
        Detection::new("b", BBox::new(200.0, 80.0, 60.0, 40.0)?, "car", 0.8)?,
        Detection::new("b", BBox::new(125.0, 82.0, 60.0, 40.0)?, "car", 0.6)?,
    ];
    let r = summarize(&dets, &gt)?;
    println!(
        "toy: AP50 {:.4}  AP75 {:.4}  AP {:.4}",
        r.ap50, r.ap75, r.ap
    );
    for t in &r.per_threshold {
        print!(" {:.2}:{:.3}", t.iou, t.ap);
    }
    println!("\n");

    let corpus = Corpus::generate(&SynthConfig {
        sequences: 4,
        train_sequences: 0,
        ..Default::default()
    });
    let gt = GroundTruth::from_annotations(&corpus.test)?;
    let dets: Vec<Detection> = corpus
        .detections
        .iter()
        .map(|r| r.to_detection())
        .collect::<Result<_, _>>()?;
    let r = summarize(&dets, &gt)?;
    let opt = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.4}"));
    println!("simulated detector on {} frames:", gt.frames.len());
    println!(
        "  {} detections, {} ground-truth boxes",
        r.detections, r.ground_truth
    );
    println!(
        "  AP50 {:.4}  AP75 {:.4}  AP[{:.2}:{:.2}] {:.4}",
        r.ap50,
        r.ap75,
        iou_thresholds()[0],
        iou_thresholds()[9],
        r.ap
    );
    println!(
        "  AP small {}  medium {}  large {}",
        opt(r.ap_s),
        opt(r.ap_m),
        opt(r.ap_l)
    );
    Ok(())
}
