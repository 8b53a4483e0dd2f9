use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::model::Trajectory;

/// World registration of a pixel grid. `origin` is the world position of the center of
/// pixel (0, 0); column grows with `x`, row grows with `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin: Point2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridGeometry {
    pub fn new(origin: Point2, resolution: f64, width: usize, height: usize) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Validation(format!("resolution must be > 0, got {resolution}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!("empty grid {width}x{height}")));
        }
        if !origin.is_finite() {
            return Err(Error::Validation("grid origin must be finite".into()));
        }
        Ok(Self {
            origin,
            resolution,
            width,
            height,
        })
    }

    /// Smallest grid at `resolution` covering every trajectory point plus `margin_m`.
    pub fn covering(trajs: &[Trajectory], resolution: f64, margin_m: f64) -> Result<Self> {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in trajs.iter().flat_map(|t| t.points()) {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.is_finite() {
            return Err(Error::Validation("no trajectory points to cover".into()));
        }
        let origin = Point2::new(lo.x - margin_m, lo.y - margin_m);
        let width = ((hi.x - lo.x + 2.0 * margin_m) / resolution).ceil() as usize + 1;
        let height = ((hi.y - lo.y + 2.0 * margin_m) / resolution).ceil() as usize + 1;
        Self::new(origin, resolution, width, height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Continuous pixel coordinates; integer values are pixel-cell boundaries.
    pub fn to_pixel_coords(&self, p: Point2) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.resolution + 0.5,
            (p.y - self.origin.y) / self.resolution + 0.5,
        )
    }

    pub fn world_to_pixel(&self, p: Point2) -> Option<(usize, usize)> {
        let (u, v) = self.to_pixel_coords(p);
        let (c, r) = (u.floor(), v.floor());
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some((c as usize, r as usize))
    }

    pub fn pixel_to_world(&self, col: usize, row: usize) -> Point2 {
        Point2::new(
            self.origin.x + col as f64 * self.resolution,
            self.origin.y + row as f64 * self.resolution,
        )
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub(crate) fn neighbors8(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (c, r) = self.coords(index);
        super::RING.iter().filter_map(move |&(dc, dr)| {
            let nc = c as isize + dc;
            let nr = r as isize + dr;
            (nc >= 0 && nr >= 0 && (nc as usize) < self.width && (nr as usize) < self.height)
                .then(|| nr as usize * self.width + nc as usize)
        })
    }
}

/// Gray-scale density image: each pixel counts the trajectories crossing it.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    geometry: GridGeometry,
    values: Vec<u32>,
}

impl RasterGrid {
    pub fn zeros(geometry: GridGeometry) -> Self {
        Self {
            values: vec![0; geometry.len()],
            geometry,
        }
    }

    pub fn from_values(geometry: GridGeometry, values: Vec<u32>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::Validation(format!(
                "grid needs {} values, got {}",
                geometry.len(),
                values.len()
            )));
        }
        Ok(Self { geometry, values })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> u32 {
        self.values[self.geometry.index(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, v: u32) {
        let i = self.geometry.index(col, row);
        self.values[i] = v;
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }
}

/// Foreground mask with the same registration as its source grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    geometry: GridGeometry,
    data: Vec<bool>,
}

// GridGeometry holds only finite floats (checked in `new`).
impl Eq for GridGeometry {}

impl BinaryImage {
    pub fn empty(geometry: GridGeometry) -> Self {
        Self {
            data: vec![false; geometry.len()],
            geometry,
        }
    }

    pub fn from_data(geometry: GridGeometry, data: Vec<bool>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::Validation(format!(
                "image needs {} pixels, got {}",
                geometry.len(),
                data.len()
            )));
        }
        Ok(Self { geometry, data })
    }

    /// Builds an image from rows of `#` (foreground) and `.` (background); row 0 first.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let geometry =
            GridGeometry::new(Point2::default(), 1.0, width.max(1), height.max(1)).expect("non-empty ascii image");
        let mut img = Self::empty(geometry);
        for (r, line) in rows.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                if ch == '#' {
                    img.set(c, r, true);
                }
            }
        }
        img
    }

    pub fn to_ascii(&self) -> Vec<String> {
        (0..self.height())
            .map(|r| {
                (0..self.width())
                    .map(|c| if self.get(c, r) { '#' } else { '.' })
                    .collect()
            })
            .collect()
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.data[self.geometry.index(col, row)]
    }

    /// Out-of-bounds reads are background.
    pub fn get_signed(&self, col: isize, row: isize) -> bool {
        col >= 0
            && row >= 0
            && (col as usize) < self.width()
            && (row as usize) < self.height()
            && self.get(col as usize, row as usize)
    }

    pub fn set(&mut self, col: usize, row: usize, v: bool) {
        let i = self.geometry.index(col, row);
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn neighbors8(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.geometry.neighbors8(index)
    }

    /// Number of foreground pixels among the 8 neighbors.
    pub fn neighbor_count(&self, index: usize) -> usize {
        self.neighbors8(index).filter(|&j| self.data[j]).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterizeStats {
    pub trajectories: usize,
    pub segments: usize,
    /// Points that fall outside the grid (their segments are clipped to the grid).
    pub out_of_bounds_points: usize,
}

/// Counts, for every pixel, how many trajectories cross it. Crossing uses an exact
/// supercover traversal of each consecutive point pair; each trajectory contributes at
/// most 1 to a pixel.
pub fn rasterize(trajs: &[Trajectory], geometry: GridGeometry) -> (RasterGrid, RasterizeStats) {
    let per_traj: Vec<(Vec<usize>, usize)> = trajs.par_iter().map(|t| trajectory_cells(t, &geometry)).collect();

    let mut grid = RasterGrid::zeros(geometry);
    let mut stats = RasterizeStats {
        trajectories: trajs.len(),
        ..Default::default()
    };
    for (t, (cells, oob)) in trajs.iter().zip(per_traj) {
        stats.segments += t.len().saturating_sub(1);
        stats.out_of_bounds_points += oob;
        for c in cells {
            grid.values[c] += 1;
        }
    }
    (grid, stats)
}

fn trajectory_cells(t: &Trajectory, g: &GridGeometry) -> (Vec<usize>, usize) {
    let pts = t.points();
    let oob = pts.iter().filter(|p| g.world_to_pixel(p.pos()).is_none()).count();
    let mut cells = Vec::new();
    let mut push = |c: i64, r: i64| {
        if c >= 0 && r >= 0 && (c as usize) < g.width && (r as usize) < g.height {
            cells.push(r as usize * g.width + c as usize);
        }
    };
    if pts.len() == 1 {
        let (u, v) = g.to_pixel_coords(pts[0].pos());
        push(u.floor() as i64, v.floor() as i64);
    }
    for w in pts.windows(2) {
        let a = g.to_pixel_coords(w[0].pos());
        let b = g.to_pixel_coords(w[1].pos());
        supercover(a, b, &mut push);
    }
    cells.sort_unstable();
    cells.dedup();
    (cells, oob)
}

/// Visits every cell whose interior the segment `a`-`b` passes through (grid traversal in
/// the style of Amanatides & Woo). Passing exactly through a cell corner steps diagonally.
pub(crate) fn supercover(a: (f64, f64), b: (f64, f64), visit: &mut impl FnMut(i64, i64)) {
    let (mut cx, mut cy) = (a.0.floor() as i64, a.1.floor() as i64);
    let (ex, ey) = (b.0.floor() as i64, b.1.floor() as i64);
    visit(cx, cy);
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    let step_x = if dx > 0.0 { 1 } else { -1 };
    let step_y = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
    let mut t_max_x = if dx > 0.0 {
        ((cx + 1) as f64 - a.0) / dx
    } else if dx < 0.0 {
        (a.0 - cx as f64) / -dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy > 0.0 {
        ((cy + 1) as f64 - a.1) / dy
    } else if dy < 0.0 {
        (a.1 - cy as f64) / -dy
    } else {
        f64::INFINITY
    };
    let max_steps = (ex - cx).unsigned_abs() + (ey - cy).unsigned_abs();
    for _ in 0..max_steps {
        if (cx, cy) == (ex, ey) {
            break;
        }
        if t_max_x < t_max_y {
            cx += step_x;
            t_max_x += t_delta_x;
        } else if t_max_y < t_max_x {
            cy += step_y;
            t_max_y += t_delta_y;
        } else {
            cx += step_x;
            cy += step_y;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        }
        visit(cx, cy);
    }
}

/// Foreground where the count reaches `threshold`.
pub fn binarize(grid: &RasterGrid, threshold: u32) -> BinaryImage {
    BinaryImage {
        geometry: grid.geometry,
        data: grid.values.iter().map(|&v| v >= threshold).collect(),
    }
}
