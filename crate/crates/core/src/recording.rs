//! Boundary recordings `U(t, z)` and detector layouts.
//!
//! Binary file layout: a text header of `key value` lines opened by
//! `CAVITOR-RECORDING 1` and closed by `end_header`, followed by little-endian
//! `f64` data: detector coordinates `(x, y)` for every detector, then the
//! samples row-major by detector.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::Geometry;

const MAGIC: &str = "CAVITOR-RECORDING 1";

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRecording {
    geometry: Geometry,
    detectors: Vec<(f64, f64)>,
    dt: f64,
    n_samples: usize,
    samples: Vec<f64>,
}

impl BoundaryRecording {
    /// `samples[i * n_samples + j] = U(j·dt, z_i)`.
    pub fn new(geometry: Geometry, detectors: Vec<(f64, f64)>, dt: f64, n_samples: usize, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("sample interval {dt} must be positive")));
        }
        if n_samples == 0 || detectors.is_empty() {
            return Err(Error::Parameter("recording needs at least one detector and one sample".into()));
        }
        if samples.len() != detectors.len() * n_samples {
            return Err(Error::Mismatch(format!(
                "{} samples for {} detectors × {n_samples} times",
                samples.len(),
                detectors.len()
            )));
        }
        for &(x, y) in &detectors {
            geometry.arclength(x, y)?;
        }
        Ok(Self { geometry, detectors, dt, n_samples, samples })
    }

    pub fn zeros(geometry: Geometry, detectors: Vec<(f64, f64)>, dt: f64, n_samples: usize) -> Result<Self> {
        let n = detectors.len() * n_samples;
        Self::new(geometry, detectors, dt, n_samples, vec![0.0; n])
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn detectors(&self) -> &[(f64, f64)] {
        &self.detectors
    }

    pub fn n_detectors(&self) -> usize {
        self.detectors.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Time of the last sample.
    pub fn duration(&self) -> f64 {
        self.dt * (self.n_samples - 1) as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn trace(&self, detector: usize) -> &[f64] {
        &self.samples[detector * self.n_samples..(detector + 1) * self.n_samples]
    }

    pub fn trace_mut(&mut self, detector: usize) -> &mut [f64] {
        let n = self.n_samples;
        &mut self.samples[detector * n..(detector + 1) * n]
    }

    /// Arclength coordinates of the detectors.
    pub fn arclengths(&self) -> Vec<f64> {
        self.detectors
            .iter()
            .map(|&(x, y)| self.geometry.arclength(x, y).expect("validated on construction"))
            .collect()
    }

    /// The first `n` samples of every trace.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_samples {
            return Err(Error::Parameter(format!("cannot keep {n} of {} samples", self.n_samples)));
        }
        let samples = (0..self.n_detectors()).flat_map(|i| self.trace(i)[..n].iter().copied()).collect();
        Ok(Self { samples, n_samples: n, detectors: self.detectors.clone(), ..*self })
    }

    /// A recording restricted to the listed detectors.
    pub fn select(&self, detectors: &[usize]) -> Result<Self> {
        if let Some(&bad) = detectors.iter().find(|&&i| i >= self.n_detectors()) {
            return Err(Error::Parameter(format!("detector {bad} out of range")));
        }
        let samples = detectors.iter().flat_map(|&i| self.trace(i).iter().copied()).collect();
        let positions = detectors.iter().map(|&i| self.detectors[i]).collect();
        Self::new(self.geometry, positions, self.dt, self.n_samples, samples)
    }

    /// Adds independent `N(0, σ²)` noise from a seeded generator.
    pub fn add_gaussian_noise(&mut self, sigma: f64, seed: u64) -> Result<()> {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(format!("noise level {sigma}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &mut self.samples {
            *s += normal.sample(&mut rng);
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "geometry {}", self.geometry)?;
        writeln!(w, "n_detectors {}", self.n_detectors())?;
        writeln!(w, "dt {:?}", self.dt)?;
        writeln!(w, "T {:?}", self.duration())?;
        writeln!(w, "n_samples {}", self.n_samples)?;
        writeln!(w, "end_header")?;
        for &(x, y) in &self.detectors {
            w.write_all(&x.to_le_bytes())?;
            w.write_all(&y.to_le_bytes())?;
        }
        write_f64s(&mut w, &self.samples)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let header = read_header(&mut r, MAGIC)?;
        let geometry: Geometry = header.get("geometry")?.parse()?;
        let n_det: usize = header.parse("n_detectors")?;
        let dt: f64 = header.parse("dt")?;
        let n_samples: usize = header.parse("n_samples")?;
        let coords = read_f64s(&mut r, 2 * n_det)?;
        let detectors = coords.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let samples = read_f64s(&mut r, n_det * n_samples)?;
        Self::new(geometry, detectors, dt, n_samples, samples)
    }

    /// Long-format CSV: `detector,x,y,t,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(["detector", "x", "y", "t", "value"]).map_err(csv_error)?;
        for (i, &(x, y)) in self.detectors.iter().enumerate() {
            for (j, v) in self.trace(i).iter().enumerate() {
                let t = self.dt * j as f64;
                w.write_record([i.to_string(), format!("{x:?}"), format!("{y:?}"), format!("{t:?}"), format!("{v:?}")])
                    .map_err(csv_error)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads [`BoundaryRecording::write_csv`] output; `geometry` is not stored
    /// in the CSV and must be supplied.
    pub fn read_csv(path: &Path, geometry: Geometry) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
        let mut detectors: Vec<(f64, f64)> = Vec::new();
        let mut samples = Vec::new();
        let mut dt = None;
        for rec in r.records() {
            let rec = rec.map_err(csv_error)?;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad CSV field {k} in {rec:?}")))
            };
            let det = field(0)? as usize;
            if det == detectors.len() {
                detectors.push((field(1)?, field(2)?));
            }
            let t = field(3)?;
            if det == 0 && t > 0.0 && dt.is_none() {
                dt = Some(t);
            }
            samples.push(field(4)?);
        }
        let n_det = detectors.len().max(1);
        let n_samples = samples.len() / n_det;
        Self::new(geometry, detectors, dt.unwrap_or(1.0), n_samples, samples)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub(crate) fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("binary block truncated (wanted {n} values): {e}")))?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

pub(crate) struct Header(Vec<(String, String)>);

impl Header {
    pub(crate) fn get(&self, key: &str) -> Result<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("header lacks {key:?}")))
    }

    pub(crate) fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse().map_err(|_| Error::Format(format!("bad header value {key} = {v:?}")))
    }
}

pub(crate) fn read_header(r: &mut impl BufRead, magic: &str) -> Result<Header> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != magic {
        return Err(Error::Format(format!("expected {magic:?}, found {:?}", line.trim_end())));
    }
    let mut entries = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("header not terminated by end_header".into()));
        }
        let l = line.trim_end();
        if l == "end_header" {
            return Ok(Header(entries));
        }
        let (k, v) = l.split_once(' ').ok_or_else(|| Error::Format(format!("bad header line {l:?}")))?;
        entries.push((k.to_string(), v.trim().to_string()));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    /// Arclength interval `[start, end]` covered by the side.
    fn span(self, a: f64, b: f64) -> (f64, f64) {
        match self {
            Side::Bottom => (0.0, a),
            Side::Right => (a, a + b),
            Side::Top => (a + b, 2.0 * a + b),
            Side::Left => (2.0 * a + b, 2.0 * (a + b)),
        }
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bottom" => Ok(Side::Bottom),
            "right" => Ok(Side::Right),
            "top" => Ok(Side::Top),
            "left" => Ok(Side::Left),
            other => Err(Error::Configuration(format!("unknown side {other:?}"))),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Top => "top",
            Side::Left => "left",
        })
    }
}

/// Where detectors sit on `Σ₁`.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorLayout {
    /// `count` points equispaced by arclength over the whole boundary,
    /// starting at arclength 0.
    Full { count: usize },
    /// `per_side + 1` equispaced points on each listed rectangle side,
    /// corners included once.
    Sides { sides: Vec<Side>, per_side: usize },
    /// Explicit arclength coordinates.
    Arclengths(Vec<f64>),
}

impl DetectorLayout {
    pub fn positions(&self, geometry: Geometry) -> Result<Vec<(f64, f64)>> {
        let perimeter = geometry.perimeter();
        let mut s: Vec<f64> = match self {
            DetectorLayout::Full { count } => {
                if *count < 4 {
                    return Err(Error::Configuration("need at least 4 detectors".into()));
                }
                (0..*count).map(|i| perimeter * i as f64 / *count as f64).collect()
            }
            DetectorLayout::Sides { sides, per_side } => {
                let (a, b) = geometry
                    .sides()
                    .ok_or_else(|| Error::Configuration("side layouts need a rectangle".into()))?;
                if sides.is_empty() || *per_side < 1 {
                    return Err(Error::Configuration("side layout needs a side and at least one interval".into()));
                }
                let mut out = Vec::new();
                for side in sides {
                    let (lo, hi) = side.span(a, b);
                    out.extend((0..=*per_side).map(|i| lo + (hi - lo) * i as f64 / *per_side as f64));
                }
                out
            }
            DetectorLayout::Arclengths(list) => list.iter().map(|t| t.rem_euclid(perimeter)).collect(),
        };
        // Wrap the end of the left side onto the origin corner, then dedupe.
        for v in &mut s {
            if (*v - perimeter).abs() < 1e-12 * perimeter {
                *v = 0.0;
            }
        }
        s.sort_by(f64::total_cmp);
        s.dedup_by(|x, y| (*x - *y).abs() < 1e-12 * perimeter);
        Ok(s.into_iter().map(|t| geometry.boundary_point(t)).collect())
    }
}

impl FromStr for DetectorLayout {
    type Err = Error;

    /// `full:1024`, `sides:right:256`, `sides:right+top:128`, or
    /// `arclength:0.1,0.2,…`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Configuration(format!("cannot parse detector layout {s:?}"));
        let mut parts = s.trim().splitn(3, ':');
        match parts.next() {
            Some("full") => Ok(DetectorLayout::Full { count: parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())? }),
            Some("sides") => {
                let sides = parts.next().ok_or_else(bad)?.split('+').map(str::parse).collect::<Result<Vec<Side>>>()?;
                let per_side = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                Ok(DetectorLayout::Sides { sides, per_side })
            }
            Some("arclength") => Ok(DetectorLayout::Arclengths(
                parts
                    .next()
                    .ok_or_else(bad)?
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_>>()?,
            )),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for DetectorLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorLayout::Full { count } => write!(f, "full:{count}"),
            DetectorLayout::Sides { sides, per_side } => {
                let names: Vec<String> = sides.iter().map(Side::to_string).collect();
                write!(f, "sides:{}:{per_side}", names.join("+"))
            }
            DetectorLayout::Arclengths(list) => {
                let v: Vec<String> = list.iter().map(|t| format!("{t:?}")).collect();
                write!(f, "arclength:{}", v.join(","))
            }
        }
    }
}
