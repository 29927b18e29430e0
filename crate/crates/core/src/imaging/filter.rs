use super::{GrayImage, ImageError};

/// Normalized 1-D Gaussian with radius `ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let denom = 2.0 * (sigma as f64) * (sigma as f64);
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| (v / sum) as f32).collect()
}

/// Separable Gaussian blur with clamped borders.
///
/// # Panics
///
/// Panics if `sigma` is not strictly positive.
pub fn gaussian_blur(img: &GrayImage, sigma: f32) -> GrayImage {
    assert!(sigma > 0.0, "gaussian_blur requires sigma > 0, got {sigma}");
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());

    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &img.data()[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, &kv) in kernel.iter().enumerate() {
                let xi = (x as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                acc += kv * row[xi];
            }
            tmp[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let yi = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
            let src = &tmp[yi * w..(yi + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    GrayImage::from_raw(w, h, out)
}

/// Horizontal and vertical derivative fields, in intensity per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub width: usize,
    pub height: usize,
    pub ix: Vec<f32>,
    pub iy: Vec<f32>,
}

impl Gradients {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.ix[i], self.iy[i])
    }
}

/// 3x3 Scharr derivatives: central difference smoothed across by `[3, 10, 3] / 16`.
pub fn scharr_gradients(img: &GrayImage) -> Result<Gradients, ImageError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(ImageError::TooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    let mut ix = vec![0.0f32; w * h];
    let mut iy = vec![0.0f32; w * h];
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let p = |xx: usize, yy: usize| img.get(xx, yy);
            let dx = 3.0 * (p(xp, ym) - p(xm, ym))
                + 10.0 * (p(xp, y) - p(xm, y))
                + 3.0 * (p(xp, yp) - p(xm, yp));
            let dy = 3.0 * (p(xm, yp) - p(xm, ym))
                + 10.0 * (p(x, yp) - p(x, ym))
                + 3.0 * (p(xp, yp) - p(xp, ym));
            ix[y * w + x] = dx / 32.0;
            iy[y * w + x] = dy / 32.0;
        }
    }
    Ok(Gradients {
        width: w,
        height: h,
        ix,
        iy,
    })
}
