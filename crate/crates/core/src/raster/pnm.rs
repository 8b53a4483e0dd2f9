//! Plain-text PGM/PBM dumps for inspecting intermediate images. Row 0 is written first.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{BinaryImage, RasterGrid};
use crate::error::{Error, Result};

pub fn write_pgm(path: impl AsRef<Path>, grid: &RasterGrid) -> Result<()> {
    let path = path.as_ref();
    let maxval = grid.values().iter().copied().max().unwrap_or(0).clamp(1, 65535);
    write_with(path, |w| {
        writeln!(w, "P2\n{} {}\n{}", grid.width(), grid.height(), maxval)?;
        for row in grid.values().chunks(grid.width()) {
            let line: Vec<String> = row.iter().map(|v| v.min(&maxval).to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    })
}

/// Foreground is written as 1 (black), following the PBM convention.
pub fn write_pbm(path: impl AsRef<Path>, img: &BinaryImage) -> Result<()> {
    let path = path.as_ref();
    write_with(path, |w| {
        writeln!(w, "P1\n{} {}", img.width(), img.height())?;
        for row in img.data().chunks(img.width()) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    })
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
