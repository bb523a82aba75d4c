//! ASCII point-cloud files.
//!
//! ```text
//! # optional comment lines
//! POINTS 3
//! 0.01 0.52 0.73
//! 0.02 0.52 0.73
//! 0.03 0.52 0.74
//! ```
//!
//! Coordinates are decimal meters in the camera frame. Lines starting with
//! `#` and blank lines are skipped anywhere in the file.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::{Point3, PointCloud};

#[derive(Debug, Error)]
pub enum CloudIoError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl fmt::Display) -> CloudIoError {
    CloudIoError::Parse {
        line,
        message: message.to_string(),
    }
}

pub fn read_point_cloud<R: BufRead>(reader: R) -> Result<PointCloud, CloudIoError> {
    let mut expected: Option<usize> = None;
    let mut points = Vec::new();
    let mut last_line = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match expected {
            None => {
                let mut parts = trimmed.split_whitespace();
                if parts.next() != Some("POINTS") {
                    return Err(parse_err(
                        lineno,
                        format!("expected `POINTS <N>` header, found `{trimmed}`"),
                    ));
                }
                let n = parts
                    .next()
                    .ok_or_else(|| parse_err(lineno, "missing point count after POINTS"))?;
                let n: usize = n
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("invalid point count `{n}`")))?;
                if parts.next().is_some() {
                    return Err(parse_err(lineno, "trailing data after point count"));
                }
                expected = Some(n);
                points.reserve(n);
            }
            Some(n) => {
                if points.len() == n {
                    return Err(parse_err(
                        lineno,
                        format!("more than the declared {n} points"),
                    ));
                }
                let mut xyz = [0.0f64; 3];
                let mut parts = trimmed.split_whitespace();
                for (k, slot) in xyz.iter_mut().enumerate() {
                    let tok = parts.next().ok_or_else(|| {
                        parse_err(lineno, format!("expected 3 coordinates, found {k}"))
                    })?;
                    *slot = tok
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("invalid coordinate `{tok}`")))?;
                    if !slot.is_finite() {
                        return Err(parse_err(lineno, format!("non-finite coordinate `{tok}`")));
                    }
                }
                if parts.next().is_some() {
                    return Err(parse_err(lineno, "expected exactly 3 coordinates"));
                }
                points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    match expected {
        None => Err(parse_err(last_line.max(1), "missing `POINTS <N>` header")),
        Some(n) if points.len() != n => Err(parse_err(
            last_line,
            format!("declared {n} points but found {}", points.len()),
        )),
        Some(_) => Ok(PointCloud::new(points, 0, 0.0)),
    }
}

pub fn write_point_cloud<W: Write>(mut writer: W, cloud: &PointCloud) -> io::Result<()> {
    writeln!(writer, "POINTS {}", cloud.len())?;
    for p in &cloud.points {
        // `{}` on f64 is the shortest exact round-trip representation.
        writeln!(writer, "{} {} {}", p.x, p.y, p.z)?;
    }
    writer.flush()
}

pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud, CloudIoError> {
    read_point_cloud(BufReader::new(File::open(path)?))
}

pub fn save_point_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<(), CloudIoError> {
    write_point_cloud(BufWriter::new(File::create(path)?), cloud)?;
    Ok(())
}
