//! Command-line front end.

use crate::config::{ConfigError, PipelineConfig};
use crate::eval::{curve_csv, summarize, EvalError, EvalReport, GroundTruth};
use crate::flow::{track_region, FlowError};
use crate::geometry::{BBox, Detection, FrameRef, GeometryError, Source};
use crate::imaging::{decode_netpbm, GrayImage, NetpbmError};
use crate::io::{
    emit_detections, read_detections, write_atomic, Annotations, DetectionRecord, FormatError,
    LayoutFile, LayoutMetadata,
};
use crate::layout::{rescore, GtSample, LayoutError, LayoutGrid, RoadMask, SceneLayout};
use crate::render::render_pgm;
use crate::synth::{Corpus, SynthConfig};
use crate::tracker::{process_sequence, SequenceFrame, TrackerError};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: NetpbmError,
    },
    #[error("{0}")]
    Usage(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "obstacle-context",
    version,
    about = "Layout rescoring, flow recovery and AP evaluation for road obstacle detections"
)]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Seed for the synthetic corpus generator [default: 7].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Debug logging and per-recovery diagnostics on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scene layout model.
    #[command(subcommand)]
    Layout(LayoutCommand),
    /// Replace detection scores with layout-fused scores.
    Rescore(RescoreArgs),
    /// Recover missed detections by optical flow.
    Track(TrackArgs),
    /// Average precision of detections against ground truth.
    Eval(EvalArgs),
    /// Write a layout grid as an 8-bit PGM.
    Render(RenderArgs),
    /// Generate the synthetic corpus.
    Synth(SynthArgs),
    /// Print the corner tracks between two frames.
    Flow(FlowArgs),
}

#[derive(Debug, Subcommand)]
pub enum LayoutCommand {
    /// Build a layout model from annotations and road masks.
    Build(LayoutBuildArgs),
}

#[derive(Debug, Args)]
pub struct LayoutBuildArgs {
    /// Training annotations (JSON).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Directory of road mask images (PGM/PPM, road >= 0.5).
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Layout model to write.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write obstacle.pgm, road.pgm and combined.pgm here.
    #[arg(long)]
    pub render_dir: Option<PathBuf>,
    /// Grid columns [default: 256].
    #[arg(long)]
    pub grid_w: Option<usize>,
    /// Grid rows [default: 128].
    #[arg(long)]
    pub grid_h: Option<usize>,
    /// Kernel bandwidth as a fraction of the image diagonal [default: 0.02].
    #[arg(long)]
    pub kde_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RescoreArgs {
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Annotations supplying each frame's image size.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Image size for every frame, as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    pub image_size: Option<(u32, u32)>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Layout weight [default: 0.5].
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Directory holding `<sequence>/<index>.pgm` frames.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Write one JSON diagnostic record per recovery attempt.
    #[arg(long)]
    pub recoveries: Option<PathBuf>,
    /// Score gate for tracking sources [default: 0.3].
    #[arg(long)]
    pub source_score_min: Option<f64>,
    /// Layout penalty gain [default: -0.05].
    #[arg(long, allow_hyphen_values = true)]
    pub flow_lambda: Option<f64>,
    /// Pyramid levels [default: 3].
    #[arg(long)]
    pub pyramid_levels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Write the report as JSON.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Write the IoU 0.5 precision-recall curve as CSV (one file per class
    /// when there are several, suffixed with the class label).
    #[arg(long)]
    pub pr_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Test sequences [default: 10].
    #[arg(long)]
    pub sequences: Option<usize>,
    /// Frames per sequence [default: 20].
    #[arg(long)]
    pub frames: Option<u32>,
    /// Training sequences [default: 40].
    #[arg(long)]
    pub train_sequences: Option<usize>,
    /// Detector miss probability [default: 0.15].
    #[arg(long)]
    pub drop_rate: Option<f64>,
    /// Score and localization noise [default: 0.5].
    #[arg(long)]
    pub noise: Option<f64>,
    /// Off-road false positives per frame [default: 2].
    #[arg(long)]
    pub offroad_fps: Option<usize>,
    /// Frames in which every obstacle is missed (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub drop_frames: Option<Vec<u32>>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub prev: PathBuf,
    #[arg(long)]
    pub next: PathBuf,
    /// Region as CX,CY,W,H; defaults to the whole frame.
    #[arg(long, value_parser = parse_region)]
    pub region: Option<BBox>,
    /// Corners to track [default: 20].
    #[arg(long)]
    pub max_corners: Option<usize>,
    /// Pyramid levels [default: 3].
    #[arg(long)]
    pub pyramid_levels: Option<usize>,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok((w, h))
}

fn parse_region(s: &str) -> Result<BBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number {p:?}"))
        })
        .collect::<Result<_, _>>()?;
    let [cx, cy, w, h] = v[..] else {
        return Err("expected CX,CY,W,H".into());
    };
    BBox::new(cx, cy, w, h).map_err(|e| e.to_string())
}

fn required(
    flag: Option<PathBuf>,
    file: &Option<PathBuf>,
    name: &str,
) -> Result<PathBuf, CliError> {
    flag.or_else(|| file.clone()).ok_or_else(|| {
        CliError::Usage(format!(
            "missing --{name} (or paths.{name} in the config file)"
        ))
    })
}

pub fn read_gray(path: &Path) -> Result<GrayImage, CliError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode_netpbm(&bytes)
        .map(|d| d.into_gray())
        .map_err(|source| CliError::Image {
            path: path.display().to_string(),
            source,
        })
}

/// `(sequence, index)` ordering key of `"<sequence>/<index>"` frame ids;
/// other ids sort by their full text.
fn frame_key(frame_id: &str) -> (String, u64, String) {
    match frame_id.rsplit_once('/') {
        Some((seq, idx)) => match idx.parse::<u64>() {
            Ok(i) => (seq.to_string(), i, String::new()),
            Err(_) => (seq.to_string(), u64::MAX, idx.to_string()),
        },
        None => (frame_id.to_string(), u64::MAX, String::new()),
    }
}

pub fn sort_records(records: &mut [DetectionRecord]) {
    records.sort_by_cached_key(|r| frame_key(&r.frame_id));
}

fn to_detections(records: &[DetectionRecord]) -> Result<Vec<Detection>, CliError> {
    Ok(records
        .iter()
        .map(|r| r.to_detection())
        .collect::<Result<_, _>>()?)
}

/// Parses arguments and runs the selected command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    execute(cli)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let level = if cli.verbose { "debug" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if cfg.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Pool(e.to_string()))?;
    let verbose = cli.verbose;
    pool.install(|| match cli.command {
        Command::Layout(LayoutCommand::Build(a)) => layout_build(a, cfg),
        Command::Rescore(a) => cmd_rescore(a, cfg),
        Command::Track(a) => cmd_track(a, cfg, verbose),
        Command::Eval(a) => cmd_eval(a, cfg),
        Command::Render(a) => cmd_render(a, cfg),
        Command::Synth(a) => cmd_synth(a, cfg),
        Command::Flow(a) => cmd_flow(a, cfg),
    })
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| FormatError::io(dir, e))? {
        let p = entry.map_err(|e| FormatError::io(dir, e))?.path();
        let ext = p
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if p.is_file() && matches!(ext.as_deref(), Some("pgm" | "ppm" | "pnm")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn layout_build(a: LayoutBuildArgs, mut cfg: PipelineConfig) -> Result<(), CliError> {
    let annotations = required(a.annotations, &cfg.paths.annotations, "annotations")?;
    let masks_dir = a.masks.or(cfg.paths.masks.clone()).ok_or_else(|| {
        CliError::Usage(
            "the road distribution requires road masks: pass --masks <dir> (or paths.masks)".into(),
        )
    })?;
    let output = required(a.output, &cfg.paths.output, "output")?;
    if let Some(v) = a.grid_w {
        cfg.layout.grid_w = v;
    }
    if let Some(v) = a.grid_h {
        cfg.layout.grid_h = v;
    }
    if let Some(v) = a.kde_sigma {
        cfg.layout.kde_sigma = v;
    }
    let ann = Annotations::read(&annotations)?;
    let mut gt = Vec::new();
    for f in &ann.frames {
        for b in &f.boxes {
            gt.push(GtSample {
                bbox: b.geometry.to_bbox()?,
                image_width: f.width as f64,
                image_height: f.height as f64,
            });
        }
    }
    let paths = list_images(&masks_dir)?;
    if paths.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no mask images found; the road distribution requires road masks",
            masks_dir.display()
        )));
    }
    let masks: Vec<RoadMask> = paths
        .par_iter()
        .map(|p| read_gray(p).map(|g| RoadMask::from_gray(&g)))
        .collect::<Result<_, _>>()?;
    let skipped = masks.iter().filter(|m| m.is_empty()).count();
    let layout = SceneLayout::build(&gt, &masks, &cfg.layout)?;
    let metadata = LayoutMetadata {
        annotation_frames: ann.frames.len(),
        annotation_boxes: gt.len(),
        masks_used: masks.len() - skipped,
        masks_skipped: skipped,
        created_unix: std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.parse().ok()),
    };
    let file = LayoutFile::new(&layout.combined, cfg.layout, metadata);
    write_atomic(&output, &file.to_json())?;
    if let Some(dir) = a.render_dir {
        for (name, grid) in [
            ("obstacle", &layout.obstacle),
            ("road", &layout.road),
            ("combined", &layout.combined),
        ] {
            write_atomic(&dir.join(format!("{name}.pgm")), &render_pgm(grid))?;
        }
    }
    eprintln!(
        "layout: {} boxes from {} frames, {} masks ({} empty) -> {}",
        gt.len(),
        ann.frames.len(),
        masks.len(),
        skipped,
        output.display()
    );
    Ok(())
}

fn frame_sizes(annotations: Option<&Path>) -> Result<HashMap<String, (u32, u32)>, CliError> {
    let Some(p) = annotations else {
        return Ok(HashMap::new());
    };
    let ann = Annotations::read(p)?;
    Ok(ann
        .frames
        .into_iter()
        .map(|f| (f.frame_id, (f.width, f.height)))
        .collect())
}

fn cmd_rescore(a: RescoreArgs, mut cfg: PipelineConfig) -> Result<(), CliError> {
    let detections = required(a.detections, &cfg.paths.detections, "detections")?;
    let layout_path = required(a.layout, &cfg.paths.layout, "layout")?;
    let output = required(a.output, &cfg.paths.output, "output")?;
    let annotations = a.annotations.or(cfg.paths.annotations.clone());
    let file = LayoutFile::read(&layout_path)?;
    // Scoring constants come from the config; the grid from the model file.
    if let Some(t) = a.theta {
        cfg.layout.theta = t;
    }
    cfg.layout.validate()?;
    let grid = file.grid()?;
    let sizes = frame_sizes(annotations.as_deref())?;
    let mut records = read_detections(&detections)?;
    let mut suppressed = 0usize;
    for r in records.iter_mut() {
        let (w, h) = match sizes.get(&r.frame_id).copied().or(a.image_size) {
            Some(s) => s,
            None => {
                return Err(CliError::Usage(format!(
                    "frame {:?}: image size unknown; pass --annotations or --image-size",
                    r.frame_id
                )))
            }
        };
        let det = r.to_detection()?;
        let out = rescore(&det, &grid, &cfg.layout, w as f64, h as f64);
        if out.layout_value < cfg.layout.low_cut {
            suppressed += 1;
        }
        r.score = out.detection.score;
    }
    sort_records(&mut records);
    write_atomic(&output, &emit_detections(&records))?;
    eprintln!(
        "rescore: {} records, {} below low_cut {} -> {}",
        records.len(),
        suppressed,
        cfg.layout.low_cut,
        output.display()
    );
    Ok(())
}

/// Frames of each sequence found under `<root>/<sequence>/<index>.<ext>`.
pub fn scan_frames(root: &Path) -> Result<BTreeMap<String, Vec<(String, FrameRef)>>, CliError> {
    let mut out: BTreeMap<String, Vec<(String, FrameRef)>> = BTreeMap::new();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| FormatError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let seq = dir
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let mut frames = Vec::new();
        for p in list_images(&dir)? {
            let stem = p
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            let Ok(index) = stem.parse::<u32>() else {
                log::warn!("{}: file name is not a frame index, skipped", p.display());
                continue;
            };
            frames.push((
                format!("{seq}/{stem}"),
                FrameRef {
                    sequence_id: seq.clone(),
                    index,
                    image_path: p.display().to_string(),
                },
            ));
        }
        frames.sort_by_key(|(_, f)| f.index);
        out.insert(seq, frames);
    }
    Ok(out)
}

fn load_frame(f: &FrameRef) -> Result<GrayImage, String> {
    read_gray(Path::new(&f.image_path)).map_err(|e| e.to_string())
}

fn cmd_track(a: TrackArgs, mut cfg: PipelineConfig, verbose: bool) -> Result<(), CliError> {
    let detections = required(a.detections, &cfg.paths.detections, "detections")?;
    let frames_dir = required(a.frames, &cfg.paths.frames, "frames")?;
    let layout_path = required(a.layout, &cfg.paths.layout, "layout")?;
    let output = required(a.output, &cfg.paths.output, "output")?;
    if let Some(v) = a.source_score_min {
        cfg.tracker.source_score_min = v;
    }
    if let Some(v) = a.flow_lambda {
        cfg.tracker.flow_lambda = v;
    }
    if let Some(v) = a.pyramid_levels {
        cfg.flow.pyramid_levels = v;
    }
    let grid = LayoutFile::read(&layout_path)?.grid()?;
    let records = read_detections(&detections)?;
    let scanned = scan_frames(&frames_dir)?;

    let mut by_frame: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        by_frame.entry(r.frame_id.as_str()).or_default().push(i);
    }
    let known: std::collections::HashSet<&str> = scanned
        .values()
        .flatten()
        .map(|(id, _)| id.as_str())
        .collect();
    if let Some(r) = records
        .iter()
        .find(|r| !known.contains(r.frame_id.as_str()))
    {
        return Err(CliError::Usage(format!(
            "frame {:?} has no image under {}",
            r.frame_id,
            frames_dir.display()
        )));
    }

    let tcfg = cfg.tracker_config();
    let sequences: Vec<Vec<SequenceFrame>> = scanned
        .values()
        .map(|frames| {
            frames
                .iter()
                .map(|(id, fr)| {
                    let dets = by_frame
                        .get(id.as_str())
                        .map(|ix| {
                            ix.iter()
                                .map(|&i| records[i].to_detection())
                                .collect::<Result<Vec<_>, _>>()
                        })
                        .transpose()?
                        .unwrap_or_default();
                    Ok(SequenceFrame {
                        frame_id: id.clone(),
                        frame: fr.clone(),
                        detections: dets,
                    })
                })
                .collect::<Result<Vec<_>, GeometryError>>()
        })
        .collect::<Result<_, _>>()?;
    let results: Vec<_> = sequences
        .par_iter()
        .map(|seq| process_sequence(seq, &grid, &load_frame, &tcfg))
        .collect::<Result<_, _>>()?;

    let mut out = Vec::with_capacity(records.len());
    let mut diag = Vec::new();
    let mut recovered = 0usize;
    for (seq, res) in sequences.iter().zip(&results) {
        for (input, frame) in seq.iter().zip(&res.frames) {
            if let Some(ix) = by_frame.get(input.frame_id.as_str()) {
                out.extend(ix.iter().map(|&i| records[i].clone()));
            }
            for d in &frame.detections[input.detections.len()..] {
                debug_assert_eq!(d.source, Source::FlowRecovered);
                out.push(DetectionRecord::from_detection(d));
                recovered += 1;
            }
        }
        for r in &res.records {
            let line = serde_json::to_string(r).expect("records serialize");
            if verbose {
                eprintln!("{line}");
            }
            diag.extend_from_slice(line.as_bytes());
            diag.push(b'\n');
        }
    }
    if let Some(p) = a.recoveries {
        write_atomic(&p, &diag)?;
    }
    write_atomic(&output, &emit_detections(&out))?;
    let attempts: usize = results.iter().map(|r| r.records.len()).sum();
    eprintln!(
        "track: {} sequences, {attempts} recovery attempts, {recovered} recovered -> {}",
        sequences.len(),
        output.display()
    );
    Ok(())
}

/// Evaluates a detection file against an annotation file.
pub fn evaluate_files(detections: &Path, annotations: &Path) -> Result<EvalReport, CliError> {
    let gt = GroundTruth::from_annotations(&Annotations::read(annotations)?)?;
    let dets = to_detections(&read_detections(detections)?)?;
    Ok(summarize(&dets, &gt)?)
}

pub fn format_report(r: &EvalReport) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.4}", v));
    let mut s = format!(
        "AP50   {:.4}\nAP75   {:.4}\nAP     {:.4}\nAP_S   {}\nAP_M   {}\nAP_L   {}\n",
        r.ap50,
        r.ap75,
        r.ap,
        opt(r.ap_s),
        opt(r.ap_m),
        opt(r.ap_l)
    );
    s.push_str(&format!(
        "detections {}  ground truth {}\n",
        r.detections, r.ground_truth
    ));
    for t in &r.per_threshold {
        s.push_str(&format!("  IoU {:.2}  AP {:.4}\n", t.iou, t.ap));
    }
    s
}

fn cmd_eval(a: EvalArgs, cfg: PipelineConfig) -> Result<(), CliError> {
    let detections = required(a.detections, &cfg.paths.detections, "detections")?;
    let annotations = required(a.annotations, &cfg.paths.annotations, "annotations")?;
    let report = evaluate_files(&detections, &annotations)?;
    print!("{}", format_report(&report));
    if let Some(p) = a.output.or(cfg.paths.output) {
        let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
        bytes.push(b'\n');
        write_atomic(&p, &bytes)?;
    }
    if let Some(p) = a.pr_csv {
        if let [only] = &report.curves[..] {
            write_atomic(&p, curve_csv(&only.curve).as_bytes())?;
        } else {
            let stem = p
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            for c in &report.curves {
                let path = p.with_file_name(format!("{stem}_{}.csv", c.class_label));
                write_atomic(&path, curve_csv(&c.curve).as_bytes())?;
            }
        }
    }
    Ok(())
}

fn cmd_render(a: RenderArgs, cfg: PipelineConfig) -> Result<(), CliError> {
    let layout = required(a.layout, &cfg.paths.layout, "layout")?;
    let output = required(a.output, &cfg.paths.output, "output")?;
    let grid: LayoutGrid = LayoutFile::read(&layout)?.grid()?;
    write_atomic(&output, &render_pgm(&grid))?;
    Ok(())
}

fn cmd_synth(a: SynthArgs, cfg: PipelineConfig) -> Result<(), CliError> {
    let output = required(a.output, &cfg.paths.output, "output")?;
    let mut s: SynthConfig = cfg.synth;
    if let Some(seed) = cfg.seed {
        s.seed = seed;
    }
    if let Some(v) = a.sequences {
        s.sequences = v;
    }
    if let Some(v) = a.frames {
        s.frames = v;
    }
    if let Some(v) = a.train_sequences {
        s.train_sequences = v;
    }
    if let Some(v) = a.drop_rate {
        s.drop_rate = v;
    }
    if let Some(v) = a.noise {
        s.noise = v;
    }
    if let Some(v) = a.offroad_fps {
        s.offroad_fps = v;
    }
    if let Some(v) = a.drop_frames {
        s.drop_frames = v;
    }
    if !(0.0..=1.0).contains(&s.drop_rate) || !(0.0..=1.0).contains(&s.noise) {
        return Err(CliError::Usage(
            "drop_rate and noise must lie in [0, 1]".into(),
        ));
    }
    if s.width < 64 || s.height < 64 {
        return Err(CliError::Usage(
            "synthetic frames must be at least 64x64".into(),
        ));
    }
    let corpus = Corpus::generate(&s);
    corpus.write(&output)?;
    eprintln!(
        "synth: seed {}, {} test sequences x {} frames, {} detections -> {}",
        s.seed,
        s.sequences,
        s.frames,
        corpus.detections.len(),
        output.display()
    );
    Ok(())
}

fn cmd_flow(a: FlowArgs, mut cfg: PipelineConfig) -> Result<(), CliError> {
    let prev = read_gray(&a.prev)?;
    let next = read_gray(&a.next)?;
    if (prev.width(), prev.height()) != (next.width(), next.height()) {
        return Err(CliError::Usage("frames differ in size".into()));
    }
    if let Some(v) = a.max_corners {
        cfg.corners.max_corners = v;
    }
    if let Some(v) = a.pyramid_levels {
        cfg.flow.pyramid_levels = v;
    }
    let region = match a.region {
        Some(r) => r,
        None => BBox::from_corners(0.0, 0.0, prev.width() as f64, prev.height() as f64)?,
    };
    let flow = track_region(&prev, &next, &region, &cfg.corners, &cfg.flow)?;
    println!(
        "{:>4} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8} {:>12} {:>9}",
        "#", "x0", "y0", "x1", "y1", "dx", "dy", "status", "residual"
    );
    for (i, t) in flow.tracks.iter().enumerate() {
        let (dx, dy) = t.offset();
        println!(
            "{i:>4} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {dx:>8.3} {dy:>8.3} {:>12} {:>9.5}",
            t.start.0,
            t.start.1,
            t.end.0,
            t.end.1,
            format!("{:?}", t.status),
            t.residual
        );
    }
    Ok(())
}
