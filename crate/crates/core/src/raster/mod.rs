//! Trajectory density raster and its reduction to a 1-pixel skeleton.
//!
//! The pipeline is `rasterize` → `morphological_denoise` → `binarize` → `thin` →
//! `prune_spurs`. All images share a [`GridGeometry`] that maps pixel centers to world
//! coordinates; rows grow with world `y`.

mod grid;
mod morphology;
mod pnm;
mod spur;
mod thinning;

pub use grid::{binarize, rasterize, BinaryImage, GridGeometry, RasterGrid, RasterizeStats};
pub use morphology::{morphological_denoise, MorphOp, MorphPass};
pub use pnm::{write_pbm, write_pgm};
pub use spur::prune_spurs;
pub use thinning::{thin, Skeleton};

/// 8-neighborhood offsets in clockwise order starting at the pixel "above" (row - 1):
/// P2, P3, ..., P9 in Zhang-Suen notation.
pub(crate) const RING: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

/// Number of 8-connected foreground components, used by tests and diagnostics.
pub fn count_components(img: &BinaryImage) -> usize {
    let (w, h) = (img.width(), img.height());
    let mut seen = vec![false; w * h];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !img.data()[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for j in img.neighbors8(i) {
                if img.data()[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// True when no 2×2 window is entirely foreground.
pub fn is_thin(img: &BinaryImage) -> bool {
    let (w, h) = (img.width(), img.height());
    let d = img.data();
    for r in 0..h.saturating_sub(1) {
        for c in 0..w.saturating_sub(1) {
            let i = r * w + c;
            if d[i] && d[i + 1] && d[i + w] && d[i + w + 1] {
                return false;
            }
        }
    }
    true
}
