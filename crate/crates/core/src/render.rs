//! Grayscale heat maps of layout grids.

use crate::imaging::{encode_pgm, GrayImage};
use crate::layout::LayoutGrid;

/// One pixel per cell; value 1 maps to white.
pub fn render_grid(grid: &LayoutGrid) -> GrayImage {
    GrayImage::from_fn(grid.grid_w(), grid.grid_h(), |i, j| grid.get(i, j) as f32)
}

/// 8-bit binary PGM of [`render_grid`].
pub fn render_pgm(grid: &LayoutGrid) -> Vec<u8> {
    encode_pgm(&render_grid(grid))
}
