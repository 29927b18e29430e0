//! Scene layout prior.
//!
//! The layout is a scalar field over normalized image coordinates
//! `(u, v) = (x / width, y / height)`. It is assembled from two parts:
//!
//! * an obstacle distribution, a Gaussian kernel density of ground-truth box
//!   centers;
//! * a road distribution, which spreads the obstacle distribution's row and
//!   column marginals across an averaged road region.
//!
//! Their normalized sum is the layout `M`. A detection's layout score is a
//! piecewise function of `M` sampled at its center, and its final score adds
//! that layout score with weight `theta` to the detector score.

use crate::geometry::{BBox, Detection};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("no ground-truth boxes to build the obstacle distribution from")]
    EmptyAnnotations,
    #[error("no road masks given; the road distribution requires at least one mask")]
    EmptyMasks,
    #[error("every road mask is empty")]
    AllMasksEmpty,
    #[error("no sampled road row is covered by enough masks")]
    EmptyRoadSupport,
    #[error("grid is all zero and cannot be normalized")]
    ZeroGrid,
    #[error("grid resolution mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    ResolutionMismatch {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },
    #[error("grid value buffer has {actual} cells, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("grid value {value} at cell {index} is outside [0, 1]")]
    ValueRange { index: usize, value: f64 },
    #[error("invalid layout parameters: {0}")]
    InvalidParams(String),
    #[error("image dimensions must be positive, got {width}x{height}")]
    InvalidImageDims { width: f64, height: f64 },
}

/// Tunables for building and applying the layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    /// Weight of the layout score in the fused detection score.
    pub theta: f64,
    /// Gain of the exponential branch of the layout score.
    pub layout_alpha: f64,
    /// Offset of the exponential branch of the layout score.
    pub layout_bias: f64,
    /// Below this `M` a detection is treated as off-road.
    pub low_cut: f64,
    /// At or above this `M` a detection receives a boost.
    pub high_cut: f64,
    /// Kernel bandwidth as a fraction of the source image diagonal.
    pub kde_sigma: f64,
    pub grid_w: usize,
    pub grid_h: usize,
    /// Number of equally spaced rows sampled from each road mask.
    pub road_rows: usize,
    /// Rows present in fewer than this fraction of masks are dropped.
    pub min_row_coverage: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            theta: 0.5,
            layout_alpha: 0.2,
            layout_bias: -0.2 * 0.6f64.exp(),
            low_cut: 0.15,
            high_cut: 0.6,
            kde_sigma: 0.02,
            grid_w: 256,
            grid_h: 128,
            road_rows: 64,
            min_row_coverage: 0.2,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let fail = |m: &str| Err(LayoutError::InvalidParams(m.to_string()));
        if !(self.low_cut < self.high_cut) {
            return fail("low_cut must be below high_cut");
        }
        if !(self.kde_sigma > 0.0) {
            return fail("kde_sigma must be positive");
        }
        if !(self.theta >= 0.0) {
            return fail("theta must be non-negative");
        }
        if self.grid_w == 0 || self.grid_h == 0 {
            return fail("grid dimensions must be positive");
        }
        if self.road_rows == 0 {
            return fail("road_rows must be positive");
        }
        if !(0.0..=1.0).contains(&self.min_row_coverage) {
            return fail("min_row_coverage must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Row-major scalar field over the unit square. Cell `(i, j)` is centered at
/// `((i + 0.5) / grid_w, (j + 0.5) / grid_h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutGrid {
    grid_w: usize,
    grid_h: usize,
    values: Vec<f64>,
}

impl LayoutGrid {
    pub fn new(grid_w: usize, grid_h: usize, values: Vec<f64>) -> Result<Self, LayoutError> {
        if values.len() != grid_w * grid_h {
            return Err(LayoutError::BufferSize {
                expected: grid_w * grid_h,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(LayoutError::ValueRange { index, value });
        }
        Ok(Self {
            grid_w,
            grid_h,
            values,
        })
    }

    pub fn zeros(grid_w: usize, grid_h: usize) -> Self {
        Self {
            grid_w,
            grid_h,
            values: vec![0.0; grid_w * grid_h],
        }
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid_w + i]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// First cell (row-major) holding the maximum value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        (best % self.grid_w, best / self.grid_w)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            (i as f64 + 0.5) / self.grid_w as f64,
            (j as f64 + 0.5) / self.grid_h as f64,
        )
    }

    /// Bilinear sample at normalized `(u, v)`, clamped to the cell-center lattice.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let gx = (u * self.grid_w as f64 - 0.5).clamp(0.0, (self.grid_w - 1) as f64);
        let gy = (v * self.grid_h as f64 - 0.5).clamp(0.0, (self.grid_h - 1) as f64);
        let x0 = gx.floor() as usize;
        let y0 = gy.floor() as usize;
        let x1 = (x0 + 1).min(self.grid_w - 1);
        let y1 = (y0 + 1).min(self.grid_h - 1);
        let ax = gx - x0 as f64;
        let ay = gy - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - ax) + self.get(x1, y0) * ax;
        let bottom = self.get(x0, y1) * (1.0 - ax) + self.get(x1, y1) * ax;
        (top * (1.0 - ay) + bottom * ay).clamp(0.0, 1.0)
    }

    fn check_same_shape(&self, other: &LayoutGrid) -> Result<(), LayoutError> {
        if self.grid_w != other.grid_w || self.grid_h != other.grid_h {
            return Err(LayoutError::ResolutionMismatch {
                a_w: self.grid_w,
                a_h: self.grid_h,
                b_w: other.grid_w,
                b_h: other.grid_h,
            });
        }
        Ok(())
    }
}

/// Min-max normalization to `[0, 1]`. A constant positive field becomes all ones.
fn min_max_normalize(values: &mut [f64]) -> Result<(), LayoutError> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > 0.0) {
        return Err(LayoutError::ZeroGrid);
    }
    let span = hi - lo;
    if span > 0.0 {
        for v in values.iter_mut() {
            *v = (*v - lo) / span;
        }
    } else {
        values.fill(1.0);
    }
    Ok(())
}

/// A ground-truth box together with the size of the image it was annotated on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtSample {
    pub bbox: BBox,
    pub image_width: f64,
    pub image_height: f64,
}

/// Gaussian kernel density of normalized box centers, min-max normalized.
///
/// The kernel bandwidth is `kde_sigma` times each source image's diagonal,
/// expressed per axis in normalized units.
pub fn build_obstacle_distribution(
    gt: &[GtSample],
    params: &LayoutParams,
) -> Result<LayoutGrid, LayoutError> {
    params.validate()?;
    if gt.is_empty() {
        return Err(LayoutError::EmptyAnnotations);
    }
    let mut kernels = Vec::with_capacity(gt.len());
    for s in gt {
        if !(s.image_width > 0.0 && s.image_height > 0.0) {
            return Err(LayoutError::InvalidImageDims {
                width: s.image_width,
                height: s.image_height,
            });
        }
        let diag = s.image_width.hypot(s.image_height);
        let sigma_px = params.kde_sigma * diag;
        kernels.push([
            s.bbox.cx / s.image_width,
            s.bbox.cy / s.image_height,
            sigma_px / s.image_width,
            sigma_px / s.image_height,
        ]);
    }
    // Canonical order makes the floating-point sum independent of input order.
    kernels.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let (gw, gh) = (params.grid_w, params.grid_h);
    let mut values = vec![0.0f64; gw * gh];
    let mut col = vec![0.0f64; gw];
    let mut row = vec![0.0f64; gh];
    for &[u0, v0, su, sv] in &kernels {
        for (i, c) in col.iter_mut().enumerate() {
            let d = ((i as f64 + 0.5) / gw as f64 - u0) / su;
            *c = (-0.5 * d * d).exp();
        }
        for (j, r) in row.iter_mut().enumerate() {
            let d = ((j as f64 + 0.5) / gh as f64 - v0) / sv;
            *r = (-0.5 * d * d).exp();
        }
        for (j, &r) in row.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let dst = &mut values[j * gw..(j + 1) * gw];
            for (d, &c) in dst.iter_mut().zip(&col) {
                *d += r * c;
            }
        }
    }
    min_max_normalize(&mut values)?;
    LayoutGrid::new(gw, gh, values)
}

/// Binary road segmentation of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl RoadMask {
    /// Pixels with intensity at least 0.5 are road.
    pub fn from_gray(img: &crate::imaging::GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&v| v >= 0.5).collect(),
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Leftmost and one-past-rightmost road column of pixel row `y`.
    fn row_extent(&self, y: usize) -> Option<(usize, usize)> {
        let row = &self.data[y * self.width..(y + 1) * self.width];
        let first = row.iter().position(|&b| b)?;
        let last = row.iter().rposition(|&b| b)?;
        Some((first, last + 1))
    }
}

/// Averaged road boundary, sampled at `rows.len()` equally spaced rows.
///
/// Row `k` covers `v` in `[k / R, (k + 1) / R)` and is sampled at its center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadContour {
    pub rows: Vec<Option<(f64, f64)>>,
}

impl RoadContour {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row_v(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.rows.len() as f64
    }

    /// Road bounds `(u_left, u_right)` governing normalized row `v`.
    pub fn bounds_at(&self, v: f64) -> Option<(f64, f64)> {
        if !(0.0..=1.0).contains(&v) {
            return None;
        }
        let k = ((v * self.rows.len() as f64) as usize).min(self.rows.len() - 1);
        self.rows[k]
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        self.bounds_at(v).is_some_and(|(l, r)| u >= l && u <= r)
    }

    /// Road membership of every cell center of a `grid_w x grid_h` grid, row-major.
    pub fn support(&self, grid_w: usize, grid_h: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity(grid_w * grid_h);
        for j in 0..grid_h {
            let v = (j as f64 + 0.5) / grid_h as f64;
            let bounds = self.bounds_at(v);
            for i in 0..grid_w {
                let u = (i as f64 + 0.5) / grid_w as f64;
                out.push(bounds.is_some_and(|(l, r)| u >= l && u <= r));
            }
        }
        out
    }
}

/// Averages road boundaries over masks, row by row.
///
/// Empty masks are skipped with a warning. Rows covered by fewer than
/// `min_row_coverage` of the usable masks are dropped, and only the longest
/// contiguous run of remaining rows is kept so the road is a single region.
pub fn average_road_contour(
    masks: &[RoadMask],
    params: &LayoutParams,
) -> Result<RoadContour, LayoutError> {
    params.validate()?;
    if masks.is_empty() {
        return Err(LayoutError::EmptyMasks);
    }
    let usable: Vec<&RoadMask> = masks
        .iter()
        .enumerate()
        .filter_map(|(i, m)| {
            if m.is_empty() {
                log::warn!("road mask {i} has no road pixels; skipping");
                None
            } else {
                Some(m)
            }
        })
        .collect();
    if usable.is_empty() {
        return Err(LayoutError::AllMasksEmpty);
    }

    let r = params.road_rows;
    let mut rows = vec![None; r];
    for (k, slot) in rows.iter_mut().enumerate() {
        let v = (k as f64 + 0.5) / r as f64;
        let (mut lefts, mut rights) = (Vec::new(), Vec::new());
        for m in &usable {
            let y = ((v * m.height as f64) as usize).min(m.height - 1);
            if let Some((first, end)) = m.row_extent(y) {
                lefts.push(first as f64 / m.width as f64);
                rights.push(end as f64 / m.width as f64);
            }
        }
        let n = lefts.len();
        if n > 0 && (n as f64) >= params.min_row_coverage * usable.len() as f64 {
            // Sorted summation keeps the mean independent of mask order.
            lefts.sort_by(f64::total_cmp);
            rights.sort_by(f64::total_cmp);
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / n as f64;
            *slot = Some((mean(&lefts), mean(&rights)));
        }
    }

    // Keep the longest contiguous run (first one on ties).
    let (mut best_start, mut best_len) = (0, 0);
    let mut k = 0;
    while k < r {
        if rows[k].is_some() {
            let start = k;
            while k < r && rows[k].is_some() {
                k += 1;
            }
            if k - start > best_len {
                best_start = start;
                best_len = k - start;
            }
        } else {
            k += 1;
        }
    }
    if best_len == 0 {
        return Err(LayoutError::EmptyRoadSupport);
    }
    for (k, slot) in rows.iter_mut().enumerate() {
        if k < best_start || k >= best_start + best_len {
            *slot = None;
        }
    }
    Ok(RoadContour { rows })
}

fn normalize_over(values: &mut [f64], keep: &[bool]) {
    let (lo, hi) = values
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    for v in values.iter_mut() {
        *v = if span > 0.0 {
            ((*v - lo) / span).clamp(0.0, 1.0)
        } else {
            1.0
        };
    }
}

/// Spreads the obstacle distribution over the road region.
///
/// Inside the road, the value is the mean of the obstacle grid's row marginal
/// and column marginal (each min-max normalized over the rows and columns the
/// road touches). Outside the road it is zero.
pub fn build_road_distribution(
    contour: &RoadContour,
    obstacle: &LayoutGrid,
) -> Result<LayoutGrid, LayoutError> {
    let (gw, gh) = (obstacle.grid_w, obstacle.grid_h);
    if !(obstacle.max() > 0.0) {
        return Err(LayoutError::ZeroGrid);
    }
    let support = contour.support(gw, gh);
    if !support.iter().any(|&s| s) {
        return Err(LayoutError::EmptyRoadSupport);
    }

    let mut row_marginal = vec![0.0f64; gh];
    let mut col_marginal = vec![0.0f64; gw];
    let mut row_has_road = vec![false; gh];
    let mut col_has_road = vec![false; gw];
    for j in 0..gh {
        for i in 0..gw {
            let v = obstacle.get(i, j);
            row_marginal[j] += v;
            col_marginal[i] += v;
            if support[j * gw + i] {
                row_has_road[j] = true;
                col_has_road[i] = true;
            }
        }
    }
    normalize_over(&mut row_marginal, &row_has_road);
    normalize_over(&mut col_marginal, &col_has_road);

    let mut values = vec![0.0f64; gw * gh];
    for j in 0..gh {
        for i in 0..gw {
            if support[j * gw + i] {
                values[j * gw + i] = 0.5 * (row_marginal[j] + col_marginal[i]);
            }
        }
    }
    min_max_normalize(&mut values)?;
    LayoutGrid::new(gw, gh, values)
}

/// Cellwise sum of the two distributions, min-max normalized.
pub fn combine_layout(obstacle: &LayoutGrid, road: &LayoutGrid) -> Result<LayoutGrid, LayoutError> {
    obstacle.check_same_shape(road)?;
    let mut values: Vec<f64> = obstacle
        .values
        .iter()
        .zip(&road.values)
        .map(|(a, b)| a + b)
        .collect();
    min_max_normalize(&mut values)?;
    LayoutGrid::new(obstacle.grid_w, obstacle.grid_h, values)
}

/// The three grids produced by a layout build.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneLayout {
    pub obstacle: LayoutGrid,
    pub road: LayoutGrid,
    pub combined: LayoutGrid,
}

impl SceneLayout {
    pub fn build(
        gt: &[GtSample],
        masks: &[RoadMask],
        params: &LayoutParams,
    ) -> Result<Self, LayoutError> {
        let obstacle = build_obstacle_distribution(gt, params)?;
        let contour = average_road_contour(masks, params)?;
        let road = build_road_distribution(&contour, &obstacle)?;
        let combined = combine_layout(&obstacle, &road)?;
        Ok(Self {
            obstacle,
            road,
            combined,
        })
    }
}

/// Layout field `M` at the detection's center.
pub fn layout_value(
    layout: &LayoutGrid,
    d: &Detection,
    image_width: f64,
    image_height: f64,
) -> f64 {
    let u = (d.bbox.cx / image_width).clamp(0.0, 1.0);
    let v = (d.bbox.cy / image_height).clamp(0.0, 1.0);
    layout.sample(u, v)
}

/// Piecewise layout score: `-1` below `low_cut`, `0` up to `high_cut`,
/// `layout_alpha * e^M + layout_bias` from `high_cut` on.
pub fn layout_score(m: f64, params: &LayoutParams) -> f64 {
    if m < params.low_cut {
        -1.0
    } else if m < params.high_cut {
        0.0
    } else {
        params.layout_alpha * m.exp() + params.layout_bias
    }
}

/// Result of rescoring one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescored {
    pub detection: Detection,
    pub layout_value: f64,
    pub layout_score: f64,
}

/// `clamp(S_D + theta * S_L, 0, 1)`; everything but the score is kept.
pub fn rescore(
    d: &Detection,
    layout: &LayoutGrid,
    params: &LayoutParams,
    image_width: f64,
    image_height: f64,
) -> Rescored {
    let m = layout_value(layout, d, image_width, image_height);
    let s_l = layout_score(m, params);
    let mut detection = d.clone();
    detection.score = fused_score(d.score, s_l, params.theta);
    Rescored {
        detection,
        layout_value: m,
        layout_score: s_l,
    }
}

pub fn fused_score(detector_score: f64, layout_score: f64, theta: f64) -> f64 {
    (detector_score + theta * layout_score).clamp(0.0, 1.0)
}
