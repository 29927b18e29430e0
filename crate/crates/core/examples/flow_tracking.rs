//! Tracks Shi-Tomasi corners across a known shift with pyramidal
//! Lucas-Kanade, with and without the pyramid.

use obstacle_context::flow::{lk_track, shi_tomasi, track_region, CornerParams, FlowParams};
use obstacle_context::imaging::build_pyramid;
use obstacle_context::synth::textured_frame;
use obstacle_context::BBox;
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (320, 240);
    let prev = textured_frame(w, h, 11, 0.0, 0.0);
    let interior = BBox::from_corners(32.0, 32.0, w as f64 - 32.0, h as f64 - 32.0)?;
    let corners = shi_tomasi(&prev, &interior, &CornerParams::default())?;
    let pts: Vec<_> = corners.iter().map(|c| (c.x, c.y)).collect();
    println!("{} corners", pts.len());

    println!(
        "{:>8} {:>7} {:>10} {:>12}",
        "shift", "levels", "converged", "median err"
    );
    for (dx, dy) in [(1.0, 0.5), (3.0, 2.0), (8.0, -5.0), (15.0, 10.0)] {
        let next = textured_frame(w, h, 11, dx, dy);
        for levels in [1, 3] {
            let params = FlowParams {
                pyramid_levels: levels,
                ..Default::default()
            };
            let tracks = lk_track(
                &build_pyramid(&prev, levels),
                &build_pyramid(&next, levels),
                &pts,
                &params,
            )?;
            let mut errs: Vec<f64> = tracks
                .iter()
                .filter(|t| t.converged())
                .map(|t| (t.offset().0 - dx).hypot(t.offset().1 - dy))
                .collect();
            errs.sort_by(f64::total_cmp);
            let med = errs.get(errs.len() / 2).copied().unwrap_or(f64::NAN);
            println!(
                "{:>8} {levels:>7} {:>10} {med:>12.4}",
                format!("{dx},{dy}"),
                errs.len()
            );
        }
    }

    // Region selection: track only a small window instead of the whole frame.
    let (w, h) = (1280, 720);
    let prev = textured_frame(w, h, 3, 0.0, 0.0);
    let next = textured_frame(w, h, 3, 2.0, 1.0);
    let cp = CornerParams::default();
    let fp = FlowParams::default();
    for region in [
        BBox::new(640.0, 360.0, 100.0, 100.0)?,
        BBox::from_corners(0.0, 0.0, w as f64, h as f64)?,
    ] {
        let t0 = Instant::now();
        let f = track_region(&prev, &next, &region, &cp, &fp)?;
        println!(
            "region {:>4.0}x{:<4.0} {:>4} corners in {:.1} ms",
            region.w,
            region.h,
            f.corners.len(),
            1e3 * t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
