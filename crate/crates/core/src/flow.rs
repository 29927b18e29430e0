//! Sparse feature tracking: Shi-Tomasi corners and pyramidal Lucas-Kanade flow.

use crate::geometry::BBox;
use crate::imaging::{build_pyramid, scharr_gradients, GrayImage, ImageError, ImagePyramid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("pyramids differ: {prev_levels} levels at {prev_w}x{prev_h} vs {next_levels} levels at {next_w}x{next_h}")]
    PyramidMismatch {
        prev_levels: usize,
        prev_w: usize,
        prev_h: usize,
        next_levels: usize,
        next_w: usize,
        next_h: usize,
    },
    #[error("corner region {w}x{h} px is smaller than the {min}x{min} tensor window")]
    RegionTooSmall { w: usize, h: usize, min: usize },
    #[error("invalid flow parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Corner selection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CornerParams {
    pub max_corners: usize,
    /// Minimum response as a fraction of the strongest response in the region.
    pub quality_level: f64,
    /// Minimum Euclidean spacing between accepted corners, in pixels.
    pub min_distance: f64,
    /// Half-size of the structure-tensor summation block.
    pub block_radius: usize,
}

impl Default for CornerParams {
    fn default() -> Self {
        Self {
            max_corners: 20,
            quality_level: 0.05,
            min_distance: 3.0,
            block_radius: 1,
        }
    }
}

impl CornerParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.max_corners == 0 {
            return Err(FlowError::InvalidParams(
                "max_corners must be at least 1".into(),
            ));
        }
        if !(self.quality_level > 0.0 && self.quality_level < 1.0) {
            return Err(FlowError::InvalidParams(
                "quality_level must lie in (0, 1)".into(),
            ));
        }
        if !(self.min_distance >= 0.0) {
            return Err(FlowError::InvalidParams(
                "min_distance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub x: f64,
    pub y: f64,
    /// Minimum eigenvalue of the structure tensor.
    pub response: f64,
}

/// Shi-Tomasi corners inside `region`, strongest first, in full-image coordinates.
pub fn shi_tomasi(
    img: &GrayImage,
    region: &BBox,
    params: &CornerParams,
) -> Result<Vec<Corner>, FlowError> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let x0 = region.left().floor().max(0.0) as usize;
    let y0 = region.top().floor().max(0.0) as usize;
    let x1 = (region.right().ceil().min(w as f64).max(0.0)) as usize;
    let y1 = (region.bottom().ceil().min(h as f64).max(0.0)) as usize;
    let block = 2 * params.block_radius + 1;
    let (rw, rh) = (x1.saturating_sub(x0), y1.saturating_sub(y0));
    if rw < block.max(3) || rh < block.max(3) {
        return Err(FlowError::RegionTooSmall {
            w: rw,
            h: rh,
            min: block.max(3),
        });
    }

    // Gradients on the region plus a margin so block sums see real neighbours.
    let margin = params.block_radius + 1;
    let (px0, py0) = (x0.saturating_sub(margin), y0.saturating_sub(margin));
    let (px1, py1) = ((x1 + margin).min(w), (y1 + margin).min(h));
    let padded = img.crop(
        &BBox::from_corners(px0 as f64, py0 as f64, px1 as f64, py1 as f64).expect("non-empty"),
    )?;
    let grads = scharr_gradients(&padded.image)?;
    let (gw, gh) = (grads.width, grads.height);

    let n = gw * gh;
    let (mut sxx, mut syy, mut sxy) = (vec![0.0f64; n], vec![0.0f64; n], vec![0.0f64; n]);
    for k in 0..n {
        let (ix, iy) = (grads.ix[k] as f64, grads.iy[k] as f64);
        sxx[k] = ix * ix;
        syy[k] = iy * iy;
        sxy[k] = ix * iy;
    }
    let r = params.block_radius;
    for field in [&mut sxx, &mut syy, &mut sxy] {
        box_sum(field, gw, gh, r);
    }

    let (ox, oy) = (x0 - px0, y0 - py0);
    let mut response = vec![0.0f64; rw * rh];
    for y in 0..rh {
        for x in 0..rw {
            let k = (y + oy) * gw + (x + ox);
            let (a, b, c) = (sxx[k], sxy[k], syy[k]);
            let half_tr = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            response[y * rw + x] = (half_tr - disc).max(0.0);
        }
    }

    let best = response.iter().copied().fold(0.0f64, f64::max);
    if best <= 0.0 {
        return Ok(Vec::new());
    }
    let floor = params.quality_level * best;
    let mut candidates = Vec::new();
    for y in 0..rh {
        for x in 0..rw {
            let v = response[y * rw + x];
            if v <= 0.0 || v < floor {
                continue;
            }
            let mut is_max = true;
            'nbr: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= rw as i64 || ny >= rh as i64
                    {
                        continue;
                    }
                    if response[ny as usize * rw + nx as usize] > v {
                        is_max = false;
                        break 'nbr;
                    }
                }
            }
            if is_max {
                candidates.push((v, x, y));
            }
        }
    }
    // Highest response first; row-major position breaks ties.
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let min_d2 = params.min_distance * params.min_distance;
    let mut out: Vec<Corner> = Vec::new();
    for (v, x, y) in candidates {
        let (cx, cy) = ((x + x0) as f64, (y + y0) as f64);
        if out
            .iter()
            .all(|c| (c.x - cx).powi(2) + (c.y - cy).powi(2) >= min_d2)
        {
            out.push(Corner {
                x: cx,
                y: cy,
                response: v,
            });
            if out.len() == params.max_corners {
                break;
            }
        }
    }
    Ok(out)
}

/// In-place `(2r+1)^2` box sum with clamped borders.
fn box_sum(field: &mut [f64], w: usize, h: usize, r: usize) {
    if r == 0 {
        return;
    }
    let r = r as isize;
    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                let xi = (x as isize + d).clamp(0, w as isize - 1) as usize;
                acc += field[y * w + xi];
            }
            tmp[y * w + x] = acc;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                let yi = (y as isize + d).clamp(0, h as isize - 1) as usize;
                acc += tmp[yi * w + x];
            }
            field[y * w + x] = acc;
        }
    }
}

/// Lucas-Kanade iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub window_radius: usize,
    pub pyramid_levels: usize,
    pub max_iterations: usize,
    /// Stop iterating at a level once the update norm drops below this, in pixels.
    pub epsilon: f64,
    /// Minimum eigenvalue of the window-averaged structure tensor.
    pub min_eigen_threshold: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            window_radius: 10,
            pyramid_levels: 3,
            max_iterations: 30,
            epsilon: 0.01,
            min_eigen_threshold: 1e-4,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.window_radius < 2 {
            return Err(FlowError::InvalidParams(
                "window_radius must be at least 2".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(FlowError::InvalidParams("epsilon must be positive".into()));
        }
        if self.pyramid_levels == 0 || self.max_iterations == 0 {
            return Err(FlowError::InvalidParams(
                "pyramid_levels and max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    Diverged,
    OutOfBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowPoint {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub status: FlowStatus,
    /// Mean absolute intensity difference over the window at the final position.
    pub residual: f64,
}

impl FlowPoint {
    pub fn offset(&self) -> (f64, f64) {
        (self.end.0 - self.start.0, self.end.1 - self.start.1)
    }

    pub fn converged(&self) -> bool {
        self.status == FlowStatus::Converged
    }
}

/// Diagonal regularization added to the structure tensor before inversion.
const TENSOR_RIDGE: f64 = 1e-8;

#[inline]
fn bilinear(data: &[f32], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let xf = x.clamp(0.0, (w - 1) as f64);
    let yf = y.clamp(0.0, (h - 1) as f64);
    let x0 = xf.floor() as usize;
    let y0 = yf.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let ax = xf - x0 as f64;
    let ay = yf - y0 as f64;
    let (r0, r1) = (y0 * w, y1 * w);
    let top = data[r0 + x0] as f64 * (1.0 - ax) + data[r0 + x1] as f64 * ax;
    let bottom = data[r1 + x0] as f64 * (1.0 - ax) + data[r1 + x1] as f64 * ax;
    top * (1.0 - ay) + bottom * ay
}

struct LevelGradients {
    ix: Vec<f32>,
    iy: Vec<f32>,
}

/// Coarse-to-fine Lucas-Kanade tracking of `points` from `prev` to `next`.
pub fn lk_track(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    points: &[(f64, f64)],
    params: &FlowParams,
) -> Result<Vec<FlowPoint>, FlowError> {
    params.validate()?;
    let (p0, n0) = (prev.level(0), next.level(0));
    if prev.len() != next.len() || p0.width() != n0.width() || p0.height() != n0.height() {
        return Err(FlowError::PyramidMismatch {
            prev_levels: prev.len(),
            prev_w: p0.width(),
            prev_h: p0.height(),
            next_levels: next.len(),
            next_w: n0.width(),
            next_h: n0.height(),
        });
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let grads = prev
        .levels()
        .iter()
        .map(|l| scharr_gradients(l).map(|g| LevelGradients { ix: g.ix, iy: g.iy }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(points
        .iter()
        .map(|&pt| track_point(prev, next, &grads, pt, params))
        .collect())
}

fn track_point(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    grads: &[LevelGradients],
    start: (f64, f64),
    params: &FlowParams,
) -> FlowPoint {
    let (w0, h0) = (prev.level(0).width(), prev.level(0).height());
    let outside =
        |x: f64, y: f64| !(x >= 0.0 && y >= 0.0 && x <= (w0 - 1) as f64 && y <= (h0 - 1) as f64);
    if outside(start.0, start.1) {
        return FlowPoint {
            start,
            end: start,
            status: FlowStatus::OutOfBounds,
            residual: f64::INFINITY,
        };
    }

    let r = params.window_radius as isize;
    let win = ((2 * r + 1) * (2 * r + 1)) as usize;
    let mut tmpl = vec![0.0f64; win];
    let mut gx = vec![0.0f64; win];
    let mut gy = vec![0.0f64; win];
    let eps2 = params.epsilon * params.epsilon;

    let mut guess = (0.0f64, 0.0f64);
    let mut flow = (0.0f64, 0.0f64);
    for level in (0..prev.len()).rev() {
        let scale = 0.5f64.powi(level as i32);
        let (px, py) = (start.0 * scale, start.1 * scale);
        let img_i = prev.level(level);
        let img_j = next.level(level);
        let (w, h) = (img_i.width(), img_i.height());
        let g = &grads[level];

        let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
        let mut k = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (px + dx as f64, py + dy as f64);
                tmpl[k] = bilinear(img_i.data(), w, h, x, y);
                gx[k] = bilinear(&g.ix, w, h, x, y);
                gy[k] = bilinear(&g.iy, w, h, x, y);
                a += gx[k] * gx[k];
                b += gx[k] * gy[k];
                c += gy[k] * gy[k];
                k += 1;
            }
        }
        let min_eig = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
        if !(min_eig / win as f64 >= params.min_eigen_threshold) {
            // Too little structure at a coarse level: pass the guess down unrefined.
            if level > 0 {
                guess = (2.0 * guess.0, 2.0 * guess.1);
                continue;
            }
            return FlowPoint {
                start,
                end: start,
                status: FlowStatus::Diverged,
                residual: f64::INFINITY,
            };
        }
        let (a, c) = (a + TENSOR_RIDGE, c + TENSOR_RIDGE);
        let det = a * c - b * b;

        let mut nu = (0.0f64, 0.0f64);
        for _ in 0..params.max_iterations {
            let (ox, oy) = (px + guess.0 + nu.0, py + guess.1 + nu.1);
            let (mut bx, mut by) = (0.0f64, 0.0f64);
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let diff =
                        tmpl[k] - bilinear(img_j.data(), w, h, ox + dx as f64, oy + dy as f64);
                    bx += diff * gx[k];
                    by += diff * gy[k];
                    k += 1;
                }
            }
            let eta = ((c * bx - b * by) / det, (a * by - b * bx) / det);
            if !(eta.0.is_finite() && eta.1.is_finite()) {
                return FlowPoint {
                    start,
                    end: start,
                    status: FlowStatus::Diverged,
                    residual: f64::INFINITY,
                };
            }
            nu.0 += eta.0;
            nu.1 += eta.1;
            if eta.0 * eta.0 + eta.1 * eta.1 < eps2 {
                break;
            }
        }
        if level > 0 {
            guess = (2.0 * (guess.0 + nu.0), 2.0 * (guess.1 + nu.1));
        } else {
            flow = (guess.0 + nu.0, guess.1 + nu.1);
        }
    }

    let end = (start.0 + flow.0, start.1 + flow.1);
    if !(end.0.is_finite() && end.1.is_finite()) {
        return FlowPoint {
            start,
            end: start,
            status: FlowStatus::Diverged,
            residual: f64::INFINITY,
        };
    }
    if outside(end.0, end.1) {
        return FlowPoint {
            start,
            end,
            status: FlowStatus::OutOfBounds,
            residual: f64::INFINITY,
        };
    }

    let (img_i, img_j) = (prev.level(0), next.level(0));
    let mut err = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let i = bilinear(
                img_i.data(),
                w0,
                h0,
                start.0 + dx as f64,
                start.1 + dy as f64,
            );
            let j = bilinear(img_j.data(), w0, h0, end.0 + dx as f64, end.1 + dy as f64);
            err += (i - j).abs();
        }
    }
    FlowPoint {
        start,
        end,
        status: FlowStatus::Converged,
        residual: err / win as f64,
    }
}

/// Corners and their tracks for one region of a frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFlow {
    pub origin: (usize, usize),
    pub corners: Vec<Corner>,
    /// Tracks in full-frame coordinates, one per corner.
    pub tracks: Vec<FlowPoint>,
}

/// Crops `region` from both frames, finds corners in the first crop, and tracks them
/// into the second. Pass the full frame rectangle to track without region selection.
pub fn track_region(
    prev: &GrayImage,
    next: &GrayImage,
    region: &BBox,
    corner_params: &CornerParams,
    flow_params: &FlowParams,
) -> Result<RegionFlow, FlowError> {
    track_region_within(prev, next, region, region, corner_params, flow_params)
}

/// As [`track_region`], but corners are only taken from `corner_region`
/// (full-frame coordinates) within the crop.
pub fn track_region_within(
    prev: &GrayImage,
    next: &GrayImage,
    region: &BBox,
    corner_region: &BBox,
    corner_params: &CornerParams,
    flow_params: &FlowParams,
) -> Result<RegionFlow, FlowError> {
    let prev_crop = prev.crop(region)?;
    let next_crop = next.crop(region)?;
    let (lx, ly) = prev_crop.to_local(corner_region.cx, corner_region.cy);
    let local = BBox {
        cx: lx,
        cy: ly,
        w: corner_region.w,
        h: corner_region.h,
    };
    let corners: Vec<Corner> = shi_tomasi(&prev_crop.image, &local, corner_params)?
        .into_iter()
        .map(|c| {
            let (x, y) = prev_crop.to_frame(c.x, c.y);
            Corner { x, y, ..c }
        })
        .collect();
    let prev_pyr = build_pyramid(&prev_crop.image, flow_params.pyramid_levels);
    let next_pyr = build_pyramid(&next_crop.image, flow_params.pyramid_levels);
    let local_pts: Vec<(f64, f64)> = corners
        .iter()
        .map(|c| prev_crop.to_local(c.x, c.y))
        .collect();
    let tracks = lk_track(&prev_pyr, &next_pyr, &local_pts, flow_params)?
        .into_iter()
        .map(|mut fp| {
            fp.start = prev_crop.to_frame(fp.start.0, fp.start.1);
            fp.end = prev_crop.to_frame(fp.end.0, fp.end.1);
            fp
        })
        .collect();
    Ok(RegionFlow {
        origin: prev_crop.origin,
        corners,
        tracks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::texture::Texture;

    fn full(img: &GrayImage) -> BBox {
        BBox::from_corners(0.0, 0.0, img.width() as f64, img.height() as f64).unwrap()
    }

    #[test]
    fn flat_image_has_no_corners() {
        let img = GrayImage::filled(40, 30, 0.5);
        assert!(shi_tomasi(&img, &full(&img), &CornerParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn square_vertices_are_found() {
        // Black square covering pixels 20..=39 on a white 60x60 ground.
        let img = GrayImage::from_fn(60, 60, |x, y| {
            if (20..40).contains(&x) && (20..40).contains(&y) {
                0.0
            } else {
                1.0
            }
        });
        let params = CornerParams {
            max_corners: 4,
            ..CornerParams::default()
        };
        let corners = shi_tomasi(&img, &full(&img), &params).unwrap();
        assert_eq!(corners.len(), 4);
        // Geometric vertices lie on pixel boundaries.
        for (vx, vy) in [(19.5, 19.5), (39.5, 19.5), (19.5, 39.5), (39.5, 39.5)] {
            assert!(
                corners
                    .iter()
                    .any(|c| (c.x - vx).abs() <= 1.0 && (c.y - vy).abs() <= 1.0),
                "no corner near ({vx}, {vy}): {corners:?}"
            );
        }
    }

    #[test]
    fn single_corner_is_global_argmax() {
        let tex = Texture::new(5);
        let img = GrayImage::from_fn(48, 40, |x, y| tex.sample(x as f64, y as f64));
        let params = CornerParams {
            max_corners: 1,
            ..CornerParams::default()
        };
        let all = shi_tomasi(
            &img,
            &full(&img),
            &CornerParams {
                max_corners: 10_000,
                min_distance: 0.0,
                ..params
            },
        )
        .unwrap();
        let one = shi_tomasi(&img, &full(&img), &params).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], all[0]);
        assert!(all.iter().all(|c| c.response <= one[0].response));
        assert!(all.windows(2).all(|p| p[0].response >= p[1].response));
    }

    #[test]
    fn corner_region_is_respected() {
        let tex = Texture::new(9);
        let img = GrayImage::from_fn(80, 80, |x, y| tex.sample(x as f64, y as f64));
        let region = BBox::from_corners(20.0, 30.0, 50.0, 60.0).unwrap();
        let corners = shi_tomasi(&img, &region, &CornerParams::default()).unwrap();
        assert!(!corners.is_empty());
        assert!(corners.iter().all(|c| region.contains_point(c.x, c.y)));
        let tiny = BBox::from_corners(5.0, 5.0, 7.0, 7.0).unwrap();
        assert!(matches!(
            shi_tomasi(&img, &tiny, &CornerParams::default()),
            Err(FlowError::RegionTooSmall { .. })
        ));
    }

    #[test]
    fn responses_scale_quadratically_and_order_is_affine_invariant() {
        let tex = Texture::new(21);
        let img = GrayImage::from_fn(64, 64, |x, y| 0.5 * tex.sample(x as f64, y as f64));
        let doubled = GrayImage::from_fn(64, 64, |x, y| img.get(x, y) * 2.0);
        let shifted = GrayImage::from_fn(64, 64, |x, y| img.get(x, y) * 0.8 + 0.1);
        let p = CornerParams::default();
        let a = shi_tomasi(&img, &full(&img), &p).unwrap();
        let b = shi_tomasi(&doubled, &full(&img), &p).unwrap();
        let c = shi_tomasi(&shifted, &full(&img), &p).unwrap();
        assert_eq!(a.len(), b.len());
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!((ca.x, ca.y), (cb.x, cb.y));
            assert!((cb.response - 4.0 * ca.response).abs() <= 1e-9 * cb.response.max(1e-12));
        }
        let pos = |v: &[Corner]| v.iter().map(|c| (c.x, c.y)).collect::<Vec<_>>();
        assert_eq!(pos(&a), pos(&c));
    }

    fn textured_pair(w: usize, h: usize, shift: (f64, f64), seed: u64) -> (GrayImage, GrayImage) {
        let tex = Texture::new(seed);
        let prev = GrayImage::from_fn(w, h, |x, y| tex.sample(x as f64, y as f64));
        let next = GrayImage::from_fn(w, h, |x, y| {
            tex.sample(x as f64 - shift.0, y as f64 - shift.1)
        });
        (prev, next)
    }

    #[test]
    fn zero_motion_is_a_fixed_point() {
        let (prev, _) = textured_pair(96, 96, (0.0, 0.0), 3);
        let pyr = build_pyramid(&prev, 3);
        let params = FlowParams::default();
        let pts: Vec<_> = shi_tomasi(&prev, &full(&prev), &CornerParams::default())
            .unwrap()
            .iter()
            .map(|c| (c.x, c.y))
            .collect();
        let out = lk_track(&pyr, &pyr, &pts, &params).unwrap();
        for fp in out {
            assert!(fp.converged());
            let (dx, dy) = fp.offset();
            assert!(dx.hypot(dy) < params.epsilon);
        }
    }

    #[test]
    fn flat_patch_diverges() {
        let img = GrayImage::filled(64, 64, 0.4);
        let pyr = build_pyramid(&img, 2);
        let out = lk_track(&pyr, &pyr, &[(32.0, 32.0)], &FlowParams::default()).unwrap();
        assert_eq!(out[0].status, FlowStatus::Diverged);
        assert!(out[0].end.0.is_finite());
    }

    #[test]
    fn outside_start_is_out_of_bounds() {
        let (prev, next) = textured_pair(64, 64, (1.0, 0.0), 4);
        let (a, b) = (build_pyramid(&prev, 2), build_pyramid(&next, 2));
        let out = lk_track(
            &a,
            &b,
            &[(-3.0, 10.0), (10.0, 70.0)],
            &FlowParams::default(),
        )
        .unwrap();
        assert!(out.iter().all(|p| p.status == FlowStatus::OutOfBounds));
    }

    #[test]
    fn pyramid_mismatch_is_an_error() {
        let a = build_pyramid(&GrayImage::filled(64, 64, 0.1), 3);
        let b = build_pyramid(&GrayImage::filled(64, 64, 0.1), 2);
        assert!(matches!(
            lk_track(&a, &b, &[(1.0, 1.0)], &FlowParams::default()),
            Err(FlowError::PyramidMismatch { .. })
        ));
        assert_eq!(
            lk_track(&a, &a, &[], &FlowParams::default()).unwrap(),
            vec![]
        );
    }

    #[test]
    fn forward_backward_consistency() {
        let (prev, next) = textured_pair(120, 100, (2.5, -1.5), 8);
        let (a, b) = (build_pyramid(&prev, 3), build_pyramid(&next, 3));
        let params = FlowParams::default();
        let pts: Vec<_> = shi_tomasi(
            &prev,
            &BBox::from_corners(20.0, 20.0, 100.0, 80.0).unwrap(),
            &CornerParams::default(),
        )
        .unwrap()
        .iter()
        .map(|c| (c.x, c.y))
        .collect();
        let fwd = lk_track(&a, &b, &pts, &params).unwrap();
        let ends: Vec<_> = fwd.iter().map(|f| f.end).collect();
        let bwd = lk_track(&b, &a, &ends, &params).unwrap();
        for (f, g) in fwd.iter().zip(&bwd) {
            if !(f.converged() && g.converged()) {
                continue;
            }
            let fe = (f.offset().0 - 2.5).hypot(f.offset().1 + 1.5);
            let back = (g.end.0 - f.start.0).hypot(g.end.1 - f.start.1);
            assert!(
                back <= 2.0 * fe.max(0.01) + 0.02,
                "fwd err {fe}, round trip {back}"
            );
        }
    }
}
