//! Zhang-Suen thinning followed by removal of redundant staircase pixels.

use std::ops::Deref;

use super::{BinaryImage, RING};
use crate::error::{Error, Result};

/// A binary image whose foreground is one pixel wide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton(BinaryImage);

impl Skeleton {
    /// Accepts an image that has no 2×2 foreground block.
    pub fn try_from_image(img: BinaryImage) -> Result<Self> {
        if !super::is_thin(&img) {
            return Err(Error::Validation("image is not 1 pixel wide".into()));
        }
        Ok(Self(img))
    }

    pub(crate) fn from_image_unchecked(img: BinaryImage) -> Self {
        Self(img)
    }

    pub fn image(&self) -> &BinaryImage {
        &self.0
    }

    pub fn into_image(self) -> BinaryImage {
        self.0
    }
}

impl Deref for Skeleton {
    type Target = BinaryImage;
    fn deref(&self) -> &BinaryImage {
        &self.0
    }
}

/// Thins the foreground to 1-pixel-wide lines.
///
/// Runs the two Zhang-Suen sub-iterations until nothing changes, then deletes remaining
/// simple non-endpoint pixels in raster order (the 4-connected "steps" Zhang-Suen leaves
/// behind), and repeats both until a fixed point. A component that a sub-iteration would
/// erase completely keeps one pixel.
pub fn thin(img: &BinaryImage) -> Skeleton {
    let mut out = img.clone();
    loop {
        let mut changed = false;
        while zhang_suen_pass(&mut out) {
            changed = true;
        }
        if remove_redundant(&mut out) {
            changed = true;
        }
        if !changed {
            break;
        }
    }
    Skeleton(out)
}

fn ring_values(img: &BinaryImage, index: usize) -> [bool; 8] {
    let (c, r) = img.geometry().coords(index);
    let mut v = [false; 8];
    for (k, &(dc, dr)) in RING.iter().enumerate() {
        v[k] = img.get_signed(c as isize + dc, r as isize + dr);
    }
    v
}

/// 0→1 transitions around the ring P2, P3, ..., P9, P2.
fn transitions(v: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !v[k] && v[(k + 1) % 8]).count()
}

/// One full Zhang-Suen iteration (both sub-iterations). Returns whether any pixel changed.
fn zhang_suen_pass(img: &mut BinaryImage) -> bool {
    let mut changed = false;
    for step in 0..2 {
        let mut doomed = Vec::new();
        for i in 0..img.data().len() {
            if !img.data()[i] {
                continue;
            }
            let v = ring_values(img, i);
            let b = v.iter().filter(|&&x| x).count();
            if !(2..=6).contains(&b) || transitions(&v) != 1 {
                continue;
            }
            // v[0]=P2 (north), v[2]=P4 (east), v[4]=P6 (south), v[6]=P8 (west)
            let (p2, p4, p6, p8) = (v[0], v[2], v[4], v[6]);
            let ok = if step == 0 {
                !(p2 && p4 && p6) && !(p4 && p6 && p8)
            } else {
                !(p2 && p4 && p8) && !(p2 && p6 && p8)
            };
            if ok {
                doomed.push(i);
            }
        }
        if doomed.is_empty() {
            continue;
        }
        let keep = vanishing_representatives(img, &doomed);
        for &i in &doomed {
            img.data_mut()[i] = false;
        }
        for i in keep {
            img.data_mut()[i] = true;
        }
        changed = true;
    }
    changed
}

/// For each 8-connected group of doomed pixels that touches no surviving foreground, the
/// lowest pixel index, so deleting the group cannot erase a whole component.
fn vanishing_representatives(img: &BinaryImage, doomed: &[usize]) -> Vec<usize> {
    let n = img.data().len();
    // 0 = untouched, 1 = doomed, 2 = doomed and visited
    let mut state = vec![0u8; n];
    for &i in doomed {
        state[i] = 1;
    }
    let mut keep = Vec::new();
    let mut stack = Vec::new();
    for &start in doomed {
        if state[start] != 1 {
            continue;
        }
        state[start] = 2;
        stack.push(start);
        let mut lowest = start;
        let mut touches_survivor = false;
        while let Some(i) = stack.pop() {
            lowest = lowest.min(i);
            for j in img.neighbors8(i) {
                if !img.data()[j] {
                    continue;
                }
                match state[j] {
                    0 => touches_survivor = true,
                    1 => {
                        state[j] = 2;
                        stack.push(j);
                    }
                    _ => {}
                }
            }
        }
        if !touches_survivor {
            keep.push(lowest);
        }
    }
    keep
}

/// Whether deleting the pixel keeps the local topology: its foreground neighbors form one
/// 8-connected group and exactly one 4-connected background group touches it.
pub(crate) fn is_simple(v: &[bool; 8]) -> bool {
    // foreground: union adjacent ring members (consecutive always adjacent; even-indexed
    // edge pixels are also adjacent to the next edge pixel)
    let mut parent = [0usize; 8];
    for (k, p) in parent.iter_mut().enumerate() {
        *p = k;
    }
    fn find(p: &mut [usize; 8], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let union = |a: usize, b: usize, p: &mut [usize; 8]| {
        let (ra, rb) = (find(p, a), find(p, b));
        if ra != rb {
            p[ra] = rb;
        }
    };
    for k in 0..8 {
        let next = (k + 1) % 8;
        if v[k] && v[next] {
            union(k, next, &mut parent);
        }
        if k % 2 == 0 {
            let next_edge = (k + 2) % 8;
            if v[k] && v[next_edge] {
                union(k, next_edge, &mut parent);
            }
        }
    }
    let mut roots: Vec<usize> = (0..8).filter(|&k| v[k]).map(|k| find(&mut parent, k)).collect();
    roots.sort_unstable();
    roots.dedup();
    if roots.len() != 1 {
        return false;
    }

    // background runs around the ring that contain an edge-adjacent (even) pixel
    if v.iter().all(|&x| !x) {
        return false;
    }
    let start = (0..8).find(|&k| v[k]).unwrap();
    let mut runs = 0;
    let mut in_run = false;
    let mut run_has_edge = false;
    for step in 1..=8 {
        let k = (start + step) % 8;
        if !v[k] {
            if !in_run {
                in_run = true;
                run_has_edge = false;
            }
            run_has_edge |= k % 2 == 0;
        } else if in_run {
            in_run = false;
            if run_has_edge {
                runs += 1;
            }
        }
    }
    runs == 1
}

fn remove_redundant(img: &mut BinaryImage) -> bool {
    let mut changed = false;
    for i in 0..img.data().len() {
        if !img.data()[i] {
            continue;
        }
        let v = ring_values(img, i);
        let b = v.iter().filter(|&&x| x).count();
        if b >= 2 && is_simple(&v) {
            img.data_mut()[i] = false;
            changed = true;
        }
    }
    changed
}
