//! Point-cloud loading, filtering and synthetic yaw rotation.
//!
//! Every downstream stage assumes a canonical, bounded cloud: finite
//! coordinates, planar range within `max_range_m`, height inside the
//! configured window above the ground plane. [`filter_points`] enforces
//! those bounds; ground removal is a plain z-threshold.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A raw 3D scan: `(x, y, z)` coordinates in meters, sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Planar pose of a scan: position in meters, heading in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x_m: f64,
    pub y_m: f64,
    pub yaw_deg: f64,
}

impl Pose {
    pub fn new(x_m: f64, y_m: f64, yaw_deg: f64) -> Self {
        Self { x_m, y_m, yaw_deg }
    }

    pub fn planar_distance(&self, other: &Pose) -> f64 {
        ((self.x_m - other.x_m).powi(2) + (self.y_m - other.y_m).powi(2)).sqrt()
    }
}

/// On-disk scan encodings understood by [`load_point_cloud`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// Little-endian float32 triples, no header, length a multiple of 12 bytes.
    XyzBinary,
    /// One `x,y,z` line per point, decimal ASCII, optional trailing newline.
    XyzCsv,
}

/// Bounds applied by [`filter_points`]. Heights are measured relative to
/// `ground_z_m`; anything at or below the ground threshold is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub max_range_m: f64,
    pub min_z_m: f64,
    pub max_z_m: f64,
    pub ground_z_m: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_range_m: 80.0,
            min_z_m: 0.0,
            max_z_m: 20.0,
            ground_z_m: 0.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_range_m.is_nan() || self.max_range_m <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "max_range_m must be positive, got {}",
                self.max_range_m
            )));
        }
        if self.min_z_m.is_nan() || self.max_z_m.is_nan() || self.min_z_m >= self.max_z_m {
            return Err(Error::InvalidConfig(format!(
                "min_z_m ({}) must be below max_z_m ({})",
                self.min_z_m, self.max_z_m
            )));
        }
        Ok(())
    }
}

/// Load a scan from disk. File order is preserved.
pub fn load_point_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.display().to_string(),
        });
    }
    match format {
        CloudFormat::XyzBinary => load_binary(path),
        CloudFormat::XyzCsv => load_csv(path),
    }
}

fn load_binary(path: &Path) -> Result<PointCloud> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 12 != 0 {
        return Err(Error::MalformedRecord {
            path: path.display().to_string(),
            row: bytes.len() / 12,
            reason: format!("file length {} is not a multiple of 12", bytes.len()),
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / 12);
    for (row, chunk) in bytes.chunks_exact(12).enumerate() {
        let x = f32::from_le_bytes(chunk[0..4].try_into().unwrap()) as f64;
        let y = f32::from_le_bytes(chunk[4..8].try_into().unwrap()) as f64;
        let z = f32::from_le_bytes(chunk[8..12].try_into().unwrap()) as f64;
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::NonFiniteCoordinate { row });
        }
        points.push([x, y, z]);
    }
    Ok(PointCloud::new(points))
}

fn load_csv(path: &Path) -> Result<PointCloud> {
    let reader = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    for (row, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let mut coords = [0.0f64; 3];
        let mut fields = line.split(',');
        for coord in coords.iter_mut() {
            let field = fields.next().ok_or_else(|| Error::MalformedRecord {
                path: path.display().to_string(),
                row,
                reason: "expected three comma-separated values".into(),
            })?;
            *coord = field.trim().parse::<f64>().map_err(|e| Error::MalformedRecord {
                path: path.display().to_string(),
                row,
                reason: format!("bad number {field:?}: {e}"),
            })?;
        }
        if fields.next().is_some() {
            return Err(Error::MalformedRecord {
                path: path.display().to_string(),
                row,
                reason: "trailing fields after z".into(),
            });
        }
        if !coords.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFiniteCoordinate { row });
        }
        points.push(coords);
    }
    Ok(PointCloud::new(points))
}

/// Write a cloud as little-endian float32 triples (the `xyz-binary` format).
pub fn save_point_cloud_binary(pc: &PointCloud, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(pc.len() * 12);
    for p in &pc.points {
        for c in p {
            bytes.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    File::create(path)?.write_all(&bytes)?;
    Ok(())
}

/// Keep exactly the points with planar range at most `max_range_m` and
/// height strictly above the ground threshold inside the `[min_z, max_z]`
/// window. Relative order is preserved; boundary points are retained.
pub fn filter_points(pc: &PointCloud, cfg: &FilterConfig) -> PointCloud {
    let kept = pc
        .points
        .iter()
        .filter(|&&[x, y, z]| {
            let range = (x * x + y * y).sqrt();
            let rel_z = z - cfg.ground_z_m;
            range <= cfg.max_range_m
                && z > cfg.ground_z_m
                && rel_z >= cfg.min_z_m
                && rel_z <= cfg.max_z_m
        })
        .copied()
        .collect();
    PointCloud::new(kept)
}

/// Rotate every point about the z-axis by `yaw_deg`. Heights are untouched.
pub fn rotate_point_cloud(pc: &PointCloud, yaw_deg: f64) -> PointCloud {
    let (sin, cos) = yaw_deg.to_radians().sin_cos();
    let rotated = pc
        .points
        .iter()
        .map(|&[x, y, z]| [x * cos - y * sin, x * sin + y * cos, z])
        .collect();
    PointCloud::new(rotated)
}
