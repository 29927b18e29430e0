//! Generates a synthetic driving corpus on disk: annotated training frames
//! with road masks, and test sequences with rendered frames and simulated
//! detections.
//!
//! ```text
//! cargo run --example synthetic_corpus -- out/ [seed]
//! ```

use obstacle_context::synth::{Corpus, SynthConfig};
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("synthetic_corpus"));
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let config = SynthConfig {
        seed,
        sequences: 3,
        frames: 10,
        train_sequences: 10,
        ..Default::default()
    };

    let corpus = Corpus::generate(&config);
    corpus.write(&dir)?;
    println!("seed {seed} -> {}", dir.display());
    println!(
        "  train: {} frames, {} boxes, {} masks",
        corpus.train.frames.len(),
        corpus.train.box_count(),
        corpus.train_scenes.len()
    );
    println!(
        "  test:  {} frames, {} boxes, {} detections",
        corpus.test.frames.len(),
        corpus.test.box_count(),
        corpus.detections.len()
    );
    let first = &corpus.test_scenes[0];
    println!("  first test scene: {} obstacles", first.boxes(0).len());
    Ok(())
}
