//! Deterministic procedural texture defined on the continuous plane.
//!
//! Sampling the same texture at shifted coordinates gives an exactly
//! translated image, which is what the flow tests rely on.

/// Multi-octave value noise in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    seed: u64,
    /// `(cell size in px, weight)` per octave.
    octaves: [(f64, f64); 4],
    contrast: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, octave: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix(
        seed ^ splitmix(octave ^ splitmix((ix as u64) ^ splitmix(iy as u64).rotate_left(17))),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl Texture {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            octaves: [(3.0, 0.40), (6.0, 0.30), (12.0, 0.20), (24.0, 0.10)],
            contrast: 1.8,
        }
    }

    /// Same noise with every octave scaled by `factor` (larger means coarser).
    pub fn scaled(seed: u64, factor: f64) -> Self {
        let mut t = Self::new(seed);
        for o in &mut t.octaves {
            o.0 *= factor;
        }
        t
    }

    fn octave(&self, k: usize, x: f64, y: f64) -> f64 {
        let cell = self.octaves[k].0;
        let (gx, gy) = (x / cell, y / cell);
        let (ix, iy) = (gx.floor(), gy.floor());
        let (fx, fy) = (smooth(gx - ix), smooth(gy - iy));
        let (ix, iy) = (ix as i64, iy as i64);
        let o = k as u64;
        let v00 = lattice(self.seed, o, ix, iy);
        let v10 = lattice(self.seed, o, ix + 1, iy);
        let v01 = lattice(self.seed, o, ix, iy + 1);
        let v11 = lattice(self.seed, o, ix + 1, iy + 1);
        let top = v00 + (v10 - v00) * fx;
        let bottom = v01 + (v11 - v01) * fx;
        top + (bottom - top) * fy
    }

    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let mut acc = 0.0;
        for k in 0..self.octaves.len() {
            acc += self.octaves[k].1 * self.octave(k, x, y);
        }
        (0.5 + self.contrast * (acc - 0.5)).clamp(0.0, 1.0) as f32
    }
}
