//! Voxel-set input representation and file formats.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// Occupancy samples of a shape on a regular 3-D integer grid.
///
/// `points` are voxel-grid coordinates (unit = one voxel edge); no
/// duplicate triples, never empty. `resolution` is world units per voxel
/// and is carried as metadata only.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    pub points: Vec<[i32; 3]>,
    pub resolution: f64,
}

/// Supported on-disk encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxelFormat {
    /// One `x y z` integer triple per line, whitespace separated.
    PlainText,
    /// CSV with a `x,y,z` header row.
    Csv,
}

impl VoxelFormat {
    /// Guess the format from a file extension (`.csv` → CSV, else text).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => VoxelFormat::Csv,
            _ => VoxelFormat::PlainText,
        }
    }
}

impl VoxelSet {
    /// Build a deduplicated set, returning the number of duplicates dropped.
    pub fn new(points: Vec<[i32; 3]>, resolution: f64) -> Result<(Self, usize)> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut seen = HashSet::with_capacity(points.len());
        let mut unique = Vec::with_capacity(points.len());
        let mut dups = 0usize;
        for p in points {
            if seen.insert(p) {
                unique.push(p);
            } else {
                dups += 1;
            }
        }
        Ok((
            VoxelSet {
                points: unique,
                resolution,
            },
            dups,
        ))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Parse a voxel file. Returns the set plus the duplicate count (the caller
/// decides whether to surface the warning).
pub fn load_voxels(path: &Path, format: VoxelFormat) -> Result<(VoxelSet, usize)> {
    let file = std::fs::File::open(path)?;
    read_voxels(BufReader::new(file), format)
}

/// Parse voxels from any reader; see [`load_voxels`].
pub fn read_voxels<R: Read>(reader: BufReader<R>, format: VoxelFormat) -> Result<(VoxelSet, usize)> {
    let mut points = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match format {
            VoxelFormat::PlainText => {
                points.push(parse_triple(trimmed.split_whitespace(), lineno)?);
            }
            VoxelFormat::Csv => {
                if idx == 0 {
                    let header: Vec<&str> = trimmed.split(',').map(|s| s.trim()).collect();
                    if header != ["x", "y", "z"] {
                        return Err(Error::Parse {
                            line: 1,
                            message: format!("expected header 'x,y,z', got '{trimmed}'"),
                        });
                    }
                    continue;
                }
                points.push(parse_triple(trimmed.split(','), lineno)?);
            }
        }
    }
    VoxelSet::new(points, 1.0)
}

fn parse_triple<'a, I: Iterator<Item = &'a str>>(mut it: I, line: usize) -> Result<[i32; 3]> {
    let mut out = [0i32; 3];
    for slot in out.iter_mut() {
        let tok = it.next().ok_or_else(|| Error::Parse {
            line,
            message: "expected three integer coordinates".into(),
        })?;
        *slot = tok.trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("not an integer: '{}'", tok.trim()),
        })?;
    }
    if it.next().is_some() {
        return Err(Error::Parse {
            line,
            message: "more than three fields".into(),
        });
    }
    Ok(out)
}

/// Write a voxel set in the given format.
pub fn save_voxels(path: &Path, voxels: &VoxelSet, format: VoxelFormat) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        VoxelFormat::PlainText => {
            for p in &voxels.points {
                writeln!(file, "{} {} {}", p[0], p[1], p[2])?;
            }
        }
        VoxelFormat::Csv => {
            writeln!(file, "x,y,z")?;
            for p in &voxels.points {
                writeln!(file, "{},{},{}", p[0], p[1], p[2])?;
            }
        }
    }
    Ok(())
}
