//! Seeded synthetic road scenes and a simulated detector.
//!
//! Each sequence is a static textured background with a trapezoidal road
//! narrowing towards a horizon. Textured square obstacles move down the road
//! at constant velocity in separate lateral lanes. The simulated detector
//! reports every obstacle with localization noise, drops some of them, and
//! adds confident false positives away from the road.

pub mod texture;

use crate::geometry::BBox;
use crate::geometry::Source;
use crate::imaging::{encode_pgm, GrayImage};
use crate::io::{
    emit_detections, write_atomic, AnnotatedFrame, Annotations, BoxGeometry, DetectionRecord,
    FormatError, GtBoxRecord,
};
use crate::layout::RoadMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use texture::Texture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Test sequences with rendered frames and simulated detections.
    pub sequences: usize,
    pub frames: u32,
    /// Training sequences contributing annotations and one road mask each.
    pub train_sequences: usize,
    pub width: usize,
    pub height: usize,
    /// Probability that the detector misses an obstacle in a frame.
    pub drop_rate: f64,
    /// Scales both score spread and center jitter; 0 gives exact boxes at score 0.9.
    pub noise: f64,
    /// False positives per frame placed away from the road.
    pub offroad_fps: usize,
    /// Frame indices in which every obstacle is missed.
    pub drop_frames: Vec<u32>,
    pub min_obstacles: usize,
    pub max_obstacles: usize,
    pub class_label: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            sequences: 10,
            frames: 20,
            train_sequences: 40,
            width: 640,
            height: 360,
            drop_rate: 0.15,
            noise: 0.5,
            offroad_fps: 2,
            drop_frames: Vec::new(),
            min_obstacles: 1,
            max_obstacles: 3,
            class_label: "obstacle".into(),
        }
    }
}

/// Lateral lane positions as fractions of the road half-width.
const LANES: [f64; 3] = [-0.6, 0.0, 0.6];
/// Minimum distance in pixels between a false positive's center and the road.
const OFFROAD_MARGIN: f64 = 60.0;
const DETECTOR_SCORE: f64 = 0.9;

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trapezoid between the horizon row and the bottom image edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Road {
    pub horizon: f64,
    pub bottom: f64,
    pub top_center: f64,
    pub top_half_width: f64,
    pub bottom_center: f64,
    pub bottom_half_width: f64,
}

impl Road {
    fn lerp(&self, y: f64) -> (f64, f64) {
        let t = ((y - self.horizon) / (self.bottom - self.horizon)).clamp(0.0, 1.0);
        (
            self.top_center + t * (self.bottom_center - self.top_center),
            self.top_half_width + t * (self.bottom_half_width - self.top_half_width),
        )
    }

    /// Road extent `(left, right)` at row `y`, if the row is below the horizon.
    pub fn bounds_at(&self, y: f64) -> Option<(f64, f64)> {
        if y < self.horizon {
            return None;
        }
        let (c, hw) = self.lerp(y);
        Some((c - hw, c + hw))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.bounds_at(y).is_some_and(|(l, r)| x >= l && x <= r)
    }

    /// Whether `(x, y)` is at least `margin` pixels from the road, measured
    /// horizontally below the horizon and vertically above it.
    pub fn clear_of(&self, x: f64, y: f64, margin: f64) -> bool {
        if y < self.horizon - margin {
            return true;
        }
        let (c, hw) = self.lerp(y.max(self.horizon));
        (x - c).abs() >= hw + margin
    }

    /// Point at lateral fraction `lane` of the half-width on row `y`.
    pub fn lane_point(&self, lane: f64, y: f64) -> (f64, f64) {
        let (c, hw) = self.lerp(y);
        (c + lane * hw, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub size: f64,
    pub lane: f64,
    pub start_y: f64,
    /// Downward speed in pixels per frame.
    pub speed: f64,
    pub texture: Texture,
}

/// One synthetic sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub road: Road,
    pub obstacles: Vec<Obstacle>,
    background: Texture,
    surface: Texture,
}

impl Scene {
    pub fn generate(config: &SynthConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (config.width as f64, config.height as f64);
        let horizon = h * rng.gen_range(0.40..0.45);
        let road = Road {
            horizon,
            bottom: h,
            top_center: w * (0.5 + rng.gen_range(-0.03..0.03)),
            top_half_width: w * rng.gen_range(0.035..0.045),
            bottom_center: w * (0.5 + rng.gen_range(-0.03..0.03)),
            bottom_half_width: w * rng.gen_range(0.35..0.41),
        };
        let lo = config.min_obstacles.min(LANES.len());
        let hi = config.max_obstacles.clamp(lo, LANES.len());
        let count = rng.gen_range(lo..=hi);
        let mut lanes = LANES.to_vec();
        for i in (1..lanes.len()).rev() {
            lanes.swap(i, rng.gen_range(0..=i));
        }
        let span = h - horizon;
        let obstacles = lanes[..count]
            .iter()
            .map(|&lane| Obstacle {
                size: rng.gen_range(20.0..=36.0f64).round(),
                lane: lane + rng.gen_range(-0.08..0.08),
                start_y: horizon + span * rng.gen_range(0.33..0.45),
                speed: rng.gen_range(2.0..4.0),
                texture: Texture::new(rng.gen()),
            })
            .collect();
        Self {
            width: config.width,
            height: config.height,
            road,
            obstacles,
            background: Texture::scaled(rng.gen(), 3.0),
            surface: Texture::scaled(rng.gen(), 4.0),
        }
    }

    /// Ground-truth box of each obstacle at frame `t`, clipped to the image.
    pub fn boxes(&self, t: u32) -> Vec<BBox> {
        self.obstacles
            .iter()
            .filter_map(|o| {
                let (x, y) = self.road.lane_point(o.lane, o.start_y + o.speed * t as f64);
                BBox::new(x, y, o.size, o.size)
                    .ok()?
                    .clip_to(self.width as f64, self.height as f64)
            })
            .collect()
    }

    fn ground(&self, x: f64, y: f64) -> f32 {
        if self.road.contains(x, y) {
            0.40 + 0.20 * self.surface.sample(x, y)
        } else {
            0.20 + 0.35 * self.background.sample(x, y)
        }
    }

    /// Static background and road, without obstacles.
    pub fn ground_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            self.ground(x as f64 + 0.5, y as f64 + 0.5)
        })
    }

    pub fn render(&self, t: u32) -> GrayImage {
        self.render_over(&self.ground_image(), t)
    }

    /// Frame `t` composited onto a precomputed [`Scene::ground_image`].
    pub fn render_over(&self, ground: &GrayImage, t: u32) -> GrayImage {
        let (w, h) = (self.width as f64, self.height as f64);
        let mut data = ground.data().to_vec();
        for o in &self.obstacles {
            let (cx, cy) = self.road.lane_point(o.lane, o.start_y + o.speed * t as f64);
            let (left, top) = (cx - o.size / 2.0, cy - o.size / 2.0);
            let (right, bottom) = (left + o.size, top + o.size);
            let x0 = left.floor().max(0.0) as usize;
            let y0 = top.floor().max(0.0) as usize;
            let x1 = (right.ceil().min(w)) as usize;
            let y1 = (bottom.ceil().min(h)) as usize;
            for y in y0..y1 {
                let cov_y = ((y + 1) as f64).min(bottom) - (y as f64).max(top);
                for x in x0..x1 {
                    let cov_x = ((x + 1) as f64).min(right) - (x as f64).max(left);
                    let cov = (cov_x * cov_y).clamp(0.0, 1.0) as f32;
                    if cov <= 0.0 {
                        continue;
                    }
                    let (lx, ly) = (x as f64 + 0.5 - left, y as f64 + 0.5 - top);
                    let obj = 0.05 + 0.9 * o.texture.sample(lx, ly);
                    let k = y * self.width + x;
                    data[k] = cov * obj + (1.0 - cov) * data[k];
                }
            }
        }
        GrayImage::new(self.width, self.height, data).expect("values stay in range")
    }

    pub fn road_mask(&self) -> RoadMask {
        RoadMask::from_fn(self.width, self.height, |x, y| {
            self.road.contains(x as f64 + 0.5, y as f64 + 0.5)
        })
    }

    /// Uniformly placed box of side 20 to 36 px whose center is clear of the road.
    fn offroad_box(&self, rng: &mut ChaCha8Rng) -> BBox {
        let (w, h) = (self.width as f64, self.height as f64);
        let size: f64 = rng.gen_range(20.0..=36.0f64).round();
        loop {
            let x = rng.gen_range(size / 2.0..w - size / 2.0);
            let y = rng.gen_range(size / 2.0..h - size / 2.0);
            if self.road.clear_of(x, y, OFFROAD_MARGIN) {
                return BBox::new(x, y, size, size).expect("positive size");
            }
        }
    }
}

/// Cell-size multiplier of the texture used by [`textured_frame`].
pub const FRAME_TEXTURE_SCALE: f64 = 2.5;

/// `width x height` frame of seeded texture whose content is shifted by `(dx, dy)`.
pub fn textured_frame(width: usize, height: usize, seed: u64, dx: f64, dy: f64) -> GrayImage {
    let tex = Texture::scaled(seed, FRAME_TEXTURE_SCALE);
    GrayImage::from_fn(width, height, |x, y| {
        tex.sample(x as f64 - dx, y as f64 - dy)
    })
}

pub fn sequence_id(k: usize) -> String {
    format!("seq{k:03}")
}

pub fn frame_id(seq: &str, t: u32) -> String {
    format!("{seq}/{t:06}")
}

/// In-memory synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: SynthConfig,
    pub train_scenes: Vec<Scene>,
    pub test_scenes: Vec<Scene>,
    pub train: Annotations,
    pub test: Annotations,
    pub detections: Vec<DetectionRecord>,
}

fn annotate(
    config: &SynthConfig,
    scenes: &[Scene],
    prefix: &str,
    with_images: bool,
) -> Annotations {
    let mut frames = Vec::new();
    for (k, scene) in scenes.iter().enumerate() {
        let seq = format!("{prefix}{}", sequence_id(k));
        for t in 0..config.frames {
            let id = frame_id(&seq, t);
            frames.push(AnnotatedFrame {
                image: with_images.then(|| format!("frames/{id}.pgm")),
                frame_id: id,
                sequence_id: seq.clone(),
                index: t,
                width: config.width as u32,
                height: config.height as u32,
                boxes: scene
                    .boxes(t)
                    .into_iter()
                    .map(|b| GtBoxRecord {
                        class_label: config.class_label.clone(),
                        geometry: BoxGeometry::from(b),
                    })
                    .collect(),
            });
        }
    }
    Annotations { frames }
}

impl Corpus {
    pub fn generate(config: &SynthConfig) -> Self {
        let train_scenes: Vec<Scene> = (0..config.train_sequences)
            .map(|k| Scene::generate(config, mix(config.seed, 2 * k as u64 + 1)))
            .collect();
        let test_scenes: Vec<Scene> = (0..config.sequences)
            .map(|k| Scene::generate(config, mix(config.seed, 2 * k as u64)))
            .collect();
        let train = annotate(config, &train_scenes, "train_", false);
        let test = annotate(config, &test_scenes, "", true);
        let detections = simulate_detector(config, &test_scenes);
        Self {
            config: config.clone(),
            train_scenes,
            test_scenes,
            train,
            test,
            detections,
        }
    }

    /// Writes `train/annotations.json`, `train/masks/*.pgm`,
    /// `test/annotations.json`, `test/frames/<seq>/<index>.pgm` and
    /// `test/detections.jsonl` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), FormatError> {
        write_atomic(&dir.join("train/annotations.json"), &self.train.to_json())?;
        write_atomic(&dir.join("test/annotations.json"), &self.test.to_json())?;
        write_atomic(
            &dir.join("test/detections.jsonl"),
            &emit_detections(&self.detections),
        )?;
        self.train_scenes
            .par_iter()
            .enumerate()
            .try_for_each(|(k, s)| {
                let mask = s.road_mask();
                let img = GrayImage::from_fn(mask.width, mask.height, |x, y| {
                    if mask.data[y * mask.width + x] {
                        1.0
                    } else {
                        0.0
                    }
                });
                write_atomic(
                    &dir.join(format!("train/masks/train_{}.pgm", sequence_id(k))),
                    &encode_pgm(&img),
                )
            })?;
        self.test_scenes
            .par_iter()
            .enumerate()
            .try_for_each(|(k, scene)| {
                let ground = scene.ground_image();
                (0..self.config.frames).into_par_iter().try_for_each(|t| {
                    let path =
                        dir.join(format!("test/frames/{}.pgm", frame_id(&sequence_id(k), t)));
                    write_atomic(&path, &encode_pgm(&scene.render_over(&ground, t)))
                })
            })
    }
}

/// Detector output for every test frame, sorted by sequence and frame index.
pub fn simulate_detector(config: &SynthConfig, scenes: &[Scene]) -> Vec<DetectionRecord> {
    let mut out = Vec::new();
    for (k, scene) in scenes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed ^ 0xD37E_C70F, k as u64));
        let seq = sequence_id(k);
        for t in 0..config.frames {
            let id = frame_id(&seq, t);
            let forced = config.drop_frames.contains(&t);
            for b in scene.boxes(t) {
                let dropped = rng.gen_bool(config.drop_rate.clamp(0.0, 1.0));
                let jitter = config.noise * 0.05 * b.w;
                let (jx, jy): (f64, f64) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
                let score = DETECTOR_SCORE - config.noise * rng.gen_range(0.0..=0.5);
                if dropped || forced {
                    continue;
                }
                out.push(record(
                    &id,
                    config,
                    b.translated(jx * jitter, jy * jitter),
                    score,
                ));
            }
            for _ in 0..config.offroad_fps {
                let b = scene.offroad_box(&mut rng);
                let score = rng.gen_range(0.4..0.9);
                out.push(record(&id, config, b, score));
            }
        }
    }
    out
}

fn record(frame: &str, config: &SynthConfig, b: BBox, score: f64) -> DetectionRecord {
    DetectionRecord {
        frame_id: frame.to_string(),
        class_label: config.class_label.clone(),
        cx: b.cx,
        cy: b.cy,
        w: b.w,
        h: b.h,
        score: score.clamp(0.0, 1.0),
        source: Source::Detector,
        extra: Default::default(),
    }
}
