//! Minimal raster stack for grayscale processing.
//!
//! Intensities are `f32` in `[0, 1]`, stored row-major. Every sampling
//! operation clamps coordinates to the image (replicate border).

mod filter;
pub mod netpbm;
mod pyramid;

pub use filter::{gaussian_blur, gaussian_kernel, scharr_gradients, Gradients};
pub use netpbm::{decode_netpbm, encode_pgm, encode_ppm, DecodedImage, NetpbmError};
pub use pyramid::{build_pyramid, ImagePyramid, MIN_LEVEL_SIZE};

use crate::geometry::BBox;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("pixel buffer has {actual} values, expected {expected} for {width}x{height}")]
    BufferSize {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("intensity {value} at index {index} is outside [0, 1]")]
    IntensityRange { index: usize, value: f32 },
    #[error("image is {width}x{height}, operation needs at least {min}x{min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("crop region does not intersect the {width}x{height} image")]
    RegionOutside { width: usize, height: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                width,
                height,
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::IntensityRange { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at each pixel; results are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Wraps a buffer produced by an operation that already guarantees the invariants.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Pixel access with coordinates clamped into the image.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn transposed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                data.push(self.get(x, y));
            }
        }
        Self::from_raw(self.height, self.width, data)
    }

    /// Bilinear interpolation at a continuous position.
    ///
    /// Pixel `(i, j)` sits at coordinate `(i, j)`; positions outside the image
    /// are clamped to the nearest valid sample position.
    #[inline]
    pub fn sample_bilinear(&self, x: f32, y: f32) -> f32 {
        let xf = x.clamp(0.0, (self.width - 1) as f32);
        let yf = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = xf.floor() as usize;
        let y0 = yf.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = xf - x0 as f32;
        let ay = yf - y0 as f32;
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        let top = self.data[row0 + x0] * (1.0 - ax) + self.data[row0 + x1] * ax;
        let bottom = self.data[row1 + x0] * (1.0 - ax) + self.data[row1 + x1] * ax;
        top * (1.0 - ay) + bottom * ay
    }

    /// Crops `region` after clipping it to the image and rounding outward to whole pixels.
    ///
    /// Returns the crop and the full-frame coordinates of its top-left pixel.
    pub fn crop(&self, region: &BBox) -> Result<Crop, ImageError> {
        let x0 = region.left().floor().max(0.0);
        let y0 = region.top().floor().max(0.0);
        let x1 = region.right().ceil().min(self.width as f64);
        let y1 = region.bottom().ceil().min(self.height as f64);
        if !(x1 > x0 && y1 > y0) {
            return Err(ImageError::RegionOutside {
                width: self.width,
                height: self.height,
            });
        }
        let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
        let w = x1 - x0;
        let h = y1 - y0;
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y1 {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x1]);
        }
        Ok(Crop {
            image: Self::from_raw(w, h, data),
            origin: (x0, y0),
        })
    }
}

/// A cropped sub-image and where it came from in the full frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub image: GrayImage,
    pub origin: (usize, usize),
}

impl Crop {
    pub fn to_frame(&self, x: f64, y: f64) -> (f64, f64) {
        (x + self.origin.0 as f64, y + self.origin.1 as f64)
    }

    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        (x - self.origin.0 as f64, y - self.origin.1 as f64)
    }
}

/// RGB raster, channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f32; 3]>,
}

impl ColorImage {
    pub fn to_grayscale(&self) -> GrayImage {
        let data = self.data.iter().map(|&p| to_grayscale(p)).collect();
        GrayImage::from_raw(self.width, self.height, data)
    }
}

/// Rec.601 luma.
pub fn to_grayscale([r, g, b]: [f32; 3]) -> f32 {
    (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0)
}
