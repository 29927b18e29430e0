use super::{gaussian_blur, GrayImage};

/// No pyramid level is allowed below this many pixels in either dimension.
pub const MIN_LEVEL_SIZE: usize = 16;

/// Multi-resolution stack; level 0 is full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePyramid {
    levels: Vec<GrayImage>,
    requested: usize,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &GrayImage {
        &self.levels[i]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Number of levels asked for before the size floor was applied.
    pub fn requested_levels(&self) -> usize {
        self.requested
    }

    pub fn truncated(&self) -> bool {
        self.levels.len() < self.requested
    }
}

/// Builds up to `levels` levels: each one is the previous blurred with sigma 1 and
/// decimated by taking every second pixel.
///
/// Levels that would fall below [`MIN_LEVEL_SIZE`] are not built. Level 0 is
/// always present, even for inputs smaller than the floor.
pub fn build_pyramid(img: &GrayImage, levels: usize) -> ImagePyramid {
    let requested = levels.max(1);
    let mut out = vec![img.clone()];
    while out.len() < requested {
        let prev = out.last().expect("non-empty");
        let (w, h) = (prev.width() / 2, prev.height() / 2);
        if w < MIN_LEVEL_SIZE || h < MIN_LEVEL_SIZE {
            break;
        }
        let blurred = gaussian_blur(prev, 1.0);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(blurred.get(2 * x, 2 * y));
            }
        }
        out.push(GrayImage::from_raw(w, h, data));
    }
    ImagePyramid {
        levels: out,
        requested,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn halving_sizes() {
        let p = build_pyramid(&GrayImage::filled(64, 64, 0.3), 3);
        let sizes: Vec<_> = p.levels().iter().map(|l| (l.width(), l.height())).collect();
        assert_eq!(sizes, vec![(64, 64), (32, 32), (16, 16)]);
        assert!(!p.truncated());
    }

    #[test]
    fn floor_truncates() {
        let p = build_pyramid(&GrayImage::filled(20, 20, 0.3), 4);
        assert_eq!(p.len(), 1);
        assert!(p.truncated());
        assert_eq!(p.requested_levels(), 4);
    }

    #[test]
    fn odd_sizes_round_down() {
        let p = build_pyramid(&GrayImage::filled(77, 41, 0.3), 3);
        let sizes: Vec<_> = p.levels().iter().map(|l| (l.width(), l.height())).collect();
        assert_eq!(sizes, vec![(77, 41), (38, 20)]);
    }

    #[test]
    fn constant_stays_constant() {
        let p = build_pyramid(&GrayImage::filled(80, 64, 0.55), 3);
        for l in p.levels() {
            assert!(l.data().iter().all(|&v| (v - 0.55).abs() < 1e-6));
        }
    }

    #[test]
    fn mean_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let img = GrayImage::from_fn(96, 80, |_, _| rng.gen::<f32>());
            let p = build_pyramid(&img, 3);
            for pair in p.levels().windows(2) {
                assert!((pair[0].mean() - pair[1].mean()).abs() < 2e-2);
            }
        }
    }
}
