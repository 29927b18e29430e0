//! Spatio-temporal post-processing for road obstacle detections.
//!
//! * [`layout`] builds a scene layout prior from training boxes and road masks
//!   and rescores detections by where they sit in the image.
//! * [`flow`] and [`tracker`] recover detections missed in the next frame by
//!   tracking corners inside a search area around each confident detection.
//! * [`eval`] computes AP50, AP75, AP and per-size AP.
//! * [`synth`] generates a seeded synthetic corpus exercising all of the above.
//!
//! The `obstacle-context` binary exposes each stage as a subcommand, see [`cli`].

pub mod cli;
pub mod config;
pub mod eval;
pub mod flow;
pub mod geometry;
pub mod imaging;
pub mod io;
pub mod layout;
pub mod render;
pub mod synth;
pub mod tracker;

pub use geometry::{iou, search_area, BBox, Detection, FrameRef, SearchAreaParams, Source};
pub use imaging::GrayImage;
pub use layout::{LayoutGrid, LayoutParams, SceneLayout};
