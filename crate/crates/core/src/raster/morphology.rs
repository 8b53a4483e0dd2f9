//! Gray-scale opening and closing with square structuring elements.

use serde::{Deserialize, Serialize};

use super::grid::RasterGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Open,
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphPass {
    pub op: MorphOp,
    pub radius_px: usize,
}

impl MorphPass {
    pub const fn open(radius_px: usize) -> Self {
        Self {
            op: MorphOp::Open,
            radius_px,
        }
    }

    pub const fn close(radius_px: usize) -> Self {
        Self {
            op: MorphOp::Close,
            radius_px,
        }
    }
}

/// Applies the passes in order. Erosion is the minimum and dilation the maximum over a
/// `(2r+1)²` window; pixels outside the grid are ignored.
pub fn morphological_denoise(grid: &RasterGrid, passes: &[MorphPass]) -> Result<RasterGrid> {
    if let Some(p) = passes.iter().find(|p| p.radius_px == 0) {
        return Err(Error::Validation(format!("morphology radius must be >= 1: {p:?}")));
    }
    let (w, h) = (grid.width(), grid.height());
    let mut values = grid.values().to_vec();
    for pass in passes {
        let r = pass.radius_px;
        values = match pass.op {
            MorphOp::Open => dilate(&erode(&values, w, h, r), w, h, r),
            MorphOp::Close => erode(&dilate(&values, w, h, r), w, h, r),
        };
    }
    RasterGrid::from_values(*grid.geometry(), values)
}

fn erode(v: &[u32], w: usize, h: usize, r: usize) -> Vec<u32> {
    separable(v, w, h, r, u32::min)
}

fn dilate(v: &[u32], w: usize, h: usize, r: usize) -> Vec<u32> {
    separable(v, w, h, r, u32::max)
}

// A square window is the product of a row window and a column window.
fn separable(v: &[u32], w: usize, h: usize, r: usize, f: fn(u32, u32) -> u32) -> Vec<u32> {
    let mut rows = vec![0u32; v.len()];
    for y in 0..h {
        let line = &v[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[y * w + x] = line[lo..=hi].iter().copied().reduce(f).unwrap();
        }
    }
    let mut out = vec![0u32; v.len()];
    for x in 0..w {
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            out[y * w + x] = (lo..=hi).map(|yy| rows[yy * w + x]).reduce(f).unwrap();
        }
    }
    out
}
