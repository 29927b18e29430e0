//! Builds a scene layout from a small synthetic training split and writes
//! the three grids as grayscale heatmaps.
//!
//! ```text
//! cargo run --example layout_heatmap -- [out_dir]
//! ```

use obstacle_context::layout::{GtSample, LayoutParams, SceneLayout};
use obstacle_context::render::render_pgm;
use obstacle_context::synth::{Corpus, SynthConfig};
use obstacle_context::LayoutGrid;
use std::path::PathBuf;

fn describe(name: &str, g: &LayoutGrid) {
    let (i, j) = g.argmax();
    let (u, v) = g.cell_center(i, j);
    let nonzero = g.values().iter().filter(|&&x| x > 0.0).count();
    println!(
        "{name:>9}: {}x{}, peak at (u={u:.2}, v={v:.2}), {:.1}% of cells nonzero",
        g.grid_w(),
        g.grid_h(),
        100.0 * nonzero as f64 / g.values().len() as f64
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let corpus = Corpus::generate(&SynthConfig {
        sequences: 0,
        train_sequences: 20,
        ..Default::default()
    });

    let mut gt = Vec::new();
    for f in &corpus.train.frames {
        for b in &f.boxes {
            gt.push(GtSample {
                bbox: b.geometry.to_bbox()?,
                image_width: f.width as f64,
                image_height: f.height as f64,
            });
        }
    }
    let masks: Vec<_> = corpus.train_scenes.iter().map(|s| s.road_mask()).collect();
    let layout = SceneLayout::build(&gt, &masks, &LayoutParams::default())?;

    println!("{} boxes, {} road masks", gt.len(), masks.len());
    for (name, grid) in [
        ("obstacle", &layout.obstacle),
        ("road", &layout.road),
        ("combined", &layout.combined),
    ] {
        describe(name, grid);
        let path = out.join(format!("layout_{name}.pgm"));
        std::fs::write(&path, render_pgm(grid))?;
        println!("{:>9}  -> {}", "", path.display());
    }
    Ok(())
}
