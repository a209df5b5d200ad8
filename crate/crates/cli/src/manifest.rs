//! Benchmark manifest CSV: one row per scan with role, file path, pose
//! and ground-truth association.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use polarloc_core::cloud::Pose;

pub const MANIFEST_HEADER: &str = "role,path,x,y,yaw_deg,associated_db_id";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Db,
    Query,
}

#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub role: Role,
    /// Path as written in the file (usually relative to the manifest).
    pub path: String,
    pub pose: Pose,
    /// Index of the associated db row, or `None` (-1 in the file).
    pub associated_db_id: Option<i64>,
}

impl ManifestRow {
    /// Resolve the scan path against the manifest location.
    pub fn resolve(&self, manifest_path: &Path) -> PathBuf {
        let p = Path::new(&self.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(p)
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))?;
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == MANIFEST_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            bail!(
                "manifest line {}: expected 6 fields, got {}",
                lineno + 1,
                fields.len()
            );
        }
        let role = match fields[0] {
            "db" => Role::Db,
            "query" => Role::Query,
            other => bail!("manifest line {}: unknown role {other:?}", lineno + 1),
        };
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .with_context(|| format!("manifest line {}: bad {what} {s:?}", lineno + 1))
        };
        let assoc: i64 = fields[5]
            .parse()
            .with_context(|| format!("manifest line {}: bad association", lineno + 1))?;
        rows.push(ManifestRow {
            role,
            path: fields[1].to_string(),
            pose: Pose::new(
                parse(fields[2], "x")?,
                parse(fields[3], "y")?,
                parse(fields[4], "yaw")?,
            ),
            associated_db_id: if assoc < 0 { None } else { Some(assoc) },
        });
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, provenance: &str, rows: &[ManifestRow]) -> Result<()> {
    let mut out = String::new();
    out.push_str(provenance);
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for r in rows {
        let role = match r.role {
            Role::Db => "db",
            Role::Query => "query",
        };
        let assoc = r.associated_db_id.unwrap_or(-1);
        out.push_str(&format!(
            "{role},{path},{x},{y},{yaw},{assoc}\n",
            path = r.path,
            x = r.pose.x_m,
            y = r.pose.y_m,
            yaw = r.pose.yaw_deg,
        ));
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}
