//! Field files and 16-bit PGM export.
//!
//! A field file is a text header followed by little-endian `f64` node
//! values in grid order, and by the node sound speeds when they are not
//! uniform:
//!
//! ```text
//! CAVITOR-FIELD 1
//! geometry square
//! kind cartesian
//! dims 256 256
//! extents 3.141592653589793 3.141592653589793
//! speed uniform
//! end_header
//! ```

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::field::{Grid2D, GridKind, ScalarField2D};
use crate::geometry::Geometry;
use crate::recording::{read_f64s, read_header, write_f64s};
use crate::{Error, Result};

const MAGIC: &str = "CAVITOR-FIELD 1";

pub fn write_field(field: &ScalarField2D, path: &Path) -> Result<()> {
    let grid = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "geometry {}", grid.geometry())?;
    match grid.kind() {
        GridKind::Cartesian { nx, ny, a, b } => {
            writeln!(w, "kind cartesian")?;
            writeln!(w, "dims {nx} {ny}")?;
            writeln!(w, "extents {a:?} {b:?}")?;
        }
        GridKind::Polar { nr, ntheta } => {
            writeln!(w, "kind polar")?;
            writeln!(w, "dims {nr} {ntheta}")?;
            writeln!(w, "extents 1.0 {:?}", 2.0 * PI)?;
        }
    }
    let uniform = grid.has_unit_speed();
    writeln!(w, "speed {}", if uniform { "uniform" } else { "sampled" })?;
    writeln!(w, "end_header")?;
    write_f64s(&mut w, field.values())?;
    if !uniform {
        write_f64s(&mut w, grid.speed())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField2D> {
    read_field_from(&mut BufReader::new(File::open(path)?))
}

fn read_field_from(r: &mut impl BufRead) -> Result<ScalarField2D> {
    let header = read_header(r, MAGIC)?;
    let geometry: Geometry = header.get("geometry")?.parse()?;
    let dims: Vec<usize> = header
        .get("dims")?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::Format(format!("bad dimension {s:?}"))))
        .collect::<Result<_>>()?;
    let [n1, n2] = dims[..] else {
        return Err(Error::Format("dims needs two values".into()));
    };
    let mut grid = match header.get("kind")? {
        "cartesian" => Grid2D::rectangle(geometry, n1, n2)?,
        "polar" => Grid2D::disk(n1, n2)?,
        other => return Err(Error::Format(format!("unknown grid kind {other:?}"))),
    };
    let values = read_f64s(r, grid.len())?;
    match header.get("speed")? {
        "uniform" => {}
        "sampled" => {
            let speed = read_f64s(r, grid.len())?;
            grid = grid.with_speed_values(speed)?;
        }
        other => return Err(Error::Format(format!("unknown speed mode {other:?}"))),
    }
    ScalarField2D::from_values(Arc::new(grid), values)
}

/// Pixel values of a field: the Cartesian node lattice with `y` increasing
/// upwards, or for the disk a `(2nr + 1)²` raster of `[−1, 1]²` with
/// bilinear interpolation in `(r, θ)` and the minimum outside the disk.
fn raster(field: &ScalarField2D) -> (usize, usize, Vec<f64>) {
    let (lo, _) = field.min_max();
    let u = field.values();
    match field.grid().kind() {
        GridKind::Cartesian { nx, ny, .. } => {
            let w = nx + 1;
            let mut px = Vec::with_capacity(u.len());
            for j in (0..=ny).rev() {
                px.extend_from_slice(&u[j * w..(j + 1) * w]);
            }
            (w, ny + 1, px)
        }
        GridKind::Polar { nr, ntheta } => {
            let size = 2 * nr + 1;
            let at = |i: usize, j: usize| if i == 0 { u[0] } else { u[1 + (i - 1) * ntheta + j % ntheta] };
            let mut px = Vec::with_capacity(size * size);
            for row in 0..size {
                let y = 1.0 - row as f64 / nr as f64;
                for col in 0..size {
                    let x = col as f64 / nr as f64 - 1.0;
                    let r = x.hypot(y);
                    if r > 1.0 + 1e-12 {
                        px.push(lo);
                        continue;
                    }
                    let s = (r * nr as f64).min(nr as f64);
                    let i = (s.floor() as usize).min(nr - 1);
                    let fr = s - i as f64;
                    let t = y.atan2(x).rem_euclid(2.0 * PI) * ntheta as f64 / (2.0 * PI);
                    let j = t.floor() as usize % ntheta;
                    let ft = t - t.floor();
                    let ring = |i: usize| (1.0 - ft) * at(i, j) + ft * at(i, j + 1);
                    px.push((1.0 - fr) * ring(i) + fr * ring(i + 1));
                }
            }
            (size, size, px)
        }
    }
}

/// Writes a binary 16-bit PGM with linear min–max scaling; the scale is
/// recorded in comment lines `# min …` and `# max …`.
pub fn write_pgm(field: &ScalarField2D, path: &Path) -> Result<()> {
    let (width, height, px) = raster(field);
    let (lo, hi) = field.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n# min {lo:?}\n# max {hi:?}\n{width} {height}\n65535\n")?;
    for v in px {
        let level = ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16;
        w.write_all(&level.to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// A decoded 16-bit PGM and the value range from its comments.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
    pub levels: Vec<u16>,
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let mut r = BufReader::new(File::open(path)?);
    let mut tokens: Vec<String> = Vec::new();
    let (mut min, mut max) = (f64::NAN, f64::NAN);
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("PGM header truncated".into()));
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut it = comment.split_whitespace();
            match (it.next(), it.next().and_then(|v| v.parse().ok())) {
                (Some("min"), Some(v)) => min = v,
                (Some("max"), Some(v)) => max = v,
                _ => {}
            }
            continue;
        }
        tokens.extend(line.split_whitespace().map(str::to_string));
    }
    let num = |k: usize| tokens[k].parse::<usize>().map_err(|_| Error::Format(format!("bad PGM header {tokens:?}")));
    if tokens[0] != "P5" || num(3)? != 65535 {
        return Err(Error::Format(format!("not a 16-bit binary PGM: {tokens:?}")));
    }
    let (width, height) = (num(1)?, num(2)?);
    let mut bytes = vec![0u8; 2 * width * height];
    r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("PGM raster truncated: {e}")))?;
    let levels = bytes.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok(Pgm { width, height, min, max, levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let grids = [
            Grid2D::rectangle("rect:pi,3/2".parse().unwrap(), 9, 7).unwrap(),
            Grid2D::rectangle(Geometry::square(), 8, 8).unwrap().with_speed(|x, y| 1.0 + 0.1 * x * y).unwrap(),
            Grid2D::disk(8, 16).unwrap(),
        ];
        for (k, g) in grids.into_iter().enumerate() {
            let f = ScalarField2D::from_fn(Arc::new(g), |x, y| (3.0 * x).sin() * y.exp() / 7.0);
            let path = dir.path().join(format!("f{k}.field"));
            write_field(&f, &path).unwrap();
            let back = read_field(&path).unwrap();
            assert_eq!(back.grid(), f.grid());
            assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.field");
        let f = ScalarField2D::zeros(Arc::new(Grid2D::disk(8, 16).unwrap()));
        write_field(&f, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_field(&path), Err(Error::Format(_))));
    }

    #[test]
    fn pgm_records_scale_and_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let grid = Arc::new(Grid2D::rectangle(Geometry::square(), 4, 4).unwrap());
        let f = ScalarField2D::from_fn(grid, |_, y| 2.0 * y - 1.0);
        write_pgm(&f, &path).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!((img.width, img.height), (5, 5));
        assert_eq!((img.min, img.max), (-1.0, 2.0 * PI - 1.0));
        // Top row holds the largest y.
        assert!(img.levels[..5].iter().all(|&l| l == 65535));
        assert!(img.levels[20..].iter().all(|&l| l == 0));

        let disk = Arc::new(Grid2D::disk(8, 16).unwrap());
        let f = ScalarField2D::from_fn(disk, |x, y| 1.0 - x * x - y * y);
        write_pgm(&f, &path).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!((img.width, img.height), (17, 17));
        assert_eq!(img.levels[8 * 17 + 8], 65535);
        assert_eq!(img.levels[0], 0);
    }
}
