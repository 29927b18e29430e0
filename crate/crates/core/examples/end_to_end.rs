//! Runs the whole command-line pipeline in a scratch directory and prints
//! the AP of each stage.

use obstacle_context::cli::{self, evaluate_files};

fn run(args: &[&str]) -> Result<(), cli::CliError> {
    cli::run(std::iter::once("obstacle-context").chain(args.iter().copied()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let p = |s: &str| dir.path().join(s).display().to_string();

    run(&[
        "synth",
        "--output",
        &p(""),
        "--sequences",
        "4",
        "--frames",
        "12",
        "--train-sequences",
        "20",
    ])?;
    run(&[
        "layout",
        "build",
        "--annotations",
        &p("train/annotations.json"),
        "--masks",
        &p("train/masks"),
        "--output",
        &p("layout.json"),
    ])?;
    run(&[
        "render",
        "--layout",
        &p("layout.json"),
        "--output",
        &p("layout.pgm"),
    ])?;
    run(&[
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
    run(&[
        "track",
        "--detections",
        &p("rescored.jsonl"),
        "--layout",
        &p("layout.json"),
        "--frames",
        &p("test/frames"),
        "--output",
        &p("tracked.jsonl"),
    ])?;

    let ann = dir.path().join("test/annotations.json");
    println!();
    for (name, file) in [
        ("raw", "test/detections.jsonl"),
        ("rescored", "rescored.jsonl"),
        ("rescored+tracked", "tracked.jsonl"),
    ] {
        let r = evaluate_files(&dir.path().join(file), &ann)?;
        println!(
            "{name:>17}: AP50 {:.3}  AP {:.3}  ({} detections)",
            r.ap50, r.ap, r.detections
        );
    }
    Ok(())
}
