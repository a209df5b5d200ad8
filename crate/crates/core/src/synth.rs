//! Synthetic worlds and simulated LiDAR scans with ground-truth poses.
//!
//! Landmarks are axis-aligned boxes and vertical cylinders, so every ray
//! intersection is exact. Rays are cast on a fixed world-frame direction
//! grid and only the reporting frame depends on sensor yaw; a scan taken
//! at yaw `t` therefore equals the yaw-0 scan rotated by `-t`, exactly,
//! which is what ties the simulator to the rotation-invariance tests.
//! Range noise acts along the ray, so it never moves a point across an
//! azimuth bin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{PointCloud, Pose};
use crate::error::{Error, Result};

/// Sensor height above the ground plane, meters.
pub const SENSOR_HEIGHT_M: f64 = 1.5;
/// Rays longer than this return nothing.
pub const MAX_RAY_RANGE_M: f64 = 120.0;
/// World-frame azimuth of beam 0; half a default sector width keeps beam
/// azimuths centered inside 3-degree bins.
pub const BEAM_AZIMUTH_OFFSET_DEG: f64 = 1.5;
const ELEVATION_MIN_DEG: f64 = -24.0;
const ELEVATION_MAX_DEG: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Landmark {
    Box {
        center: [f64; 2],
        half_extents: [f64; 2],
        height: f64,
    },
    Cylinder {
        center: [f64; 2],
        radius: f64,
        height: f64,
    },
}

/// A deterministic arrangement of landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub seed: u64,
    pub extent_m: f64,
    pub landmarks: Vec<Landmark>,
}

/// One scan request.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub pose: Pose,
    /// Azimuth steps.
    pub beams: usize,
    /// Elevation steps.
    pub rings: usize,
    pub range_noise_sigma_m: f64,
    pub dropout_prob: f64,
}

impl ScanSpec {
    pub fn noise_free(pose: Pose, beams: usize, rings: usize) -> Self {
        Self {
            pose,
            beams,
            rings,
            range_noise_sigma_m: 0.0,
            dropout_prob: 0.0,
        }
    }
}

/// Uniformly placed landmarks with non-degenerate footprints.
pub fn generate_world(seed: u64, n_landmarks: usize, extent_m: f64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = extent_m / 2.0;
    let mut landmarks = Vec::with_capacity(n_landmarks);
    for _ in 0..n_landmarks {
        let center = [rng.random_range(-half..half), rng.random_range(-half..half)];
        let height = rng.random_range(1.5..14.0);
        if rng.random_bool(0.5) {
            landmarks.push(Landmark::Box {
                center,
                half_extents: [rng.random_range(0.4..2.5), rng.random_range(0.4..2.5)],
                height,
            });
        } else {
            landmarks.push(Landmark::Cylinder {
                center,
                radius: rng.random_range(0.3..2.0),
                height,
            });
        }
    }
    World {
        seed,
        extent_m,
        landmarks,
    }
}

impl World {
    /// True when `(x, y)` keeps at least `clearance` from every footprint.
    pub fn is_clear(&self, x: f64, y: f64, clearance: f64) -> bool {
        self.landmarks.iter().all(|lm| match lm {
            Landmark::Box {
                center,
                half_extents,
                ..
            } => {
                let dx = ((x - center[0]).abs() - half_extents[0]).max(0.0);
                let dy = ((y - center[1]).abs() - half_extents[1]).max(0.0);
                (dx * dx + dy * dy).sqrt() > clearance
            }
            Landmark::Cylinder { center, radius, .. } => {
                let d = ((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt();
                d - radius > clearance
            }
        })
    }
}

fn ray_box(
    origin: [f64; 3],
    dir: [f64; 3],
    center: &[f64; 2],
    half: &[f64; 2],
    height: f64,
) -> Option<f64> {
    let lo = [center[0] - half[0], center[1] - half[1], 0.0];
    let hi = [center[0] + half[0], center[1] + half[1], height];
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max: f64 = MAX_RAY_RANGE_M;
    for k in 0..3 {
        if dir[k].abs() < 1e-15 {
            if origin[k] < lo[k] || origin[k] > hi[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[k];
        let mut t0 = (lo[k] - origin[k]) * inv;
        let mut t1 = (hi[k] - origin[k]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_min = t_min.max(t0);
        t_max = t_max.min(t1);
        if t_min > t_max {
            return None;
        }
    }
    // Entry behind or at the origin means the sensor sits inside the
    // volume; such rays return nothing.
    if t_min > 1e-6 {
        Some(t_min)
    } else {
        None
    }
}

fn ray_cylinder(
    origin: [f64; 3],
    dir: [f64; 3],
    center: &[f64; 2],
    radius: f64,
    height: f64,
) -> Option<f64> {
    let ox = origin[0] - center[0];
    let oy = origin[1] - center[1];
    // No return when the sensor sits inside the cylinder.
    if ox * ox + oy * oy <= radius * radius && (0.0..=height).contains(&origin[2]) {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > 1e-6 && t <= MAX_RAY_RANGE_M && best.map(|b| t < b).unwrap_or(true) {
            best = Some(t);
        }
    };
    let a = dir[0] * dir[0] + dir[1] * dir[1];
    if a > 1e-15 {
        let b = 2.0 * (ox * dir[0] + oy * dir[1]);
        let c = ox * ox + oy * oy - radius * radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let z = origin[2] + t * dir[2];
                if (0.0..=height).contains(&z) {
                    consider(t);
                }
            }
        }
    }
    // Top cap.
    if dir[2].abs() > 1e-15 {
        let t = (height - origin[2]) / dir[2];
        let px = ox + t * dir[0];
        let py = oy + t * dir[1];
        if px * px + py * py <= radius * radius {
            consider(t);
        }
    }
    best
}

fn mix64(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn scan_rng_seed(world: &World, spec: &ScanSpec) -> u64 {
    let mut h = mix64(world.seed);
    for bits in [
        spec.pose.x_m.to_bits(),
        spec.pose.y_m.to_bits(),
        spec.pose.yaw_deg.to_bits(),
        spec.beams as u64,
        spec.rings as u64,
        spec.range_noise_sigma_m.to_bits(),
        spec.dropout_prob.to_bits(),
    ] {
        h = mix64(h ^ bits);
    }
    h
}

/// Cast `beams x rings` rays against the landmark surfaces, apply range
/// noise and dropout, and return the hits in the sensor frame (planar
/// offsets derotated by the pose yaw; z stays height above ground).
/// Deterministic for identical world plus spec.
pub fn simulate_scan(world: &World, spec: &ScanSpec) -> PointCloud {
    let origin = [spec.pose.x_m, spec.pose.y_m, SENSOR_HEIGHT_M];
    let mut rng = ChaCha8Rng::seed_from_u64(scan_rng_seed(world, spec));
    let noise = if spec.range_noise_sigma_m > 0.0 {
        Some(Normal::new(0.0, spec.range_noise_sigma_m).expect("sigma >= 0"))
    } else {
        None
    };
    let (yaw_sin, yaw_cos) = (-spec.pose.yaw_deg).to_radians().sin_cos();
    let mut points = Vec::new();

    for beam in 0..spec.beams {
        let azimuth =
            (BEAM_AZIMUTH_OFFSET_DEG + beam as f64 * 360.0 / spec.beams as f64).to_radians();
        let (az_sin, az_cos) = azimuth.sin_cos();
        for ring in 0..spec.rings {
            let elevation = if spec.rings == 1 {
                0.0
            } else {
                ELEVATION_MIN_DEG
                    + ring as f64 * (ELEVATION_MAX_DEG - ELEVATION_MIN_DEG)
                        / (spec.rings - 1) as f64
            };
            let (el_sin, el_cos) = elevation.to_radians().sin_cos();
            let dir = [el_cos * az_cos, el_cos * az_sin, el_sin];

            let mut nearest: Option<f64> = None;
            for lm in &world.landmarks {
                let hit = match lm {
                    Landmark::Box {
                        center,
                        half_extents,
                        height,
                    } => ray_box(origin, dir, center, half_extents, *height),
                    Landmark::Cylinder {
                        center,
                        radius,
                        height,
                    } => ray_cylinder(origin, dir, center, *radius, *height),
                };
                if let Some(t) = hit {
                    if nearest.map(|n| t < n).unwrap_or(true) {
                        nearest = Some(t);
                    }
                }
            }
            let Some(mut t) = nearest else { continue };
            // Noise and dropout draws happen for every hit, in ray order,
            // so the stream stays aligned regardless of outcomes.
            if let Some(n) = &noise {
                t = (t + n.sample(&mut rng)).max(0.05);
            }
            if spec.dropout_prob > 0.0 && rng.random_bool(spec.dropout_prob) {
                continue;
            }
            let wx = origin[0] + t * dir[0] - spec.pose.x_m;
            let wy = origin[1] + t * dir[1] - spec.pose.y_m;
            let wz = origin[2] + t * dir[2];
            points.push([
                wx * yaw_cos - wy * yaw_sin,
                wx * yaw_sin + wy * yaw_cos,
                wz,
            ]);
        }
    }
    PointCloud::new(points)
}

/// How revisit yaws are drawn relative to the database scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YawDistribution {
    /// Same heading as the database scan.
    Zero,
    /// Uniform in `[0, 360)`.
    Uniform,
    /// Half uniform, half exact 180-degree flips of the database heading.
    UniformWithFlips,
}

impl YawDistribution {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(YawDistribution::Zero),
            "uniform" => Ok(YawDistribution::Uniform),
            "uniform-flips" => Ok(YawDistribution::UniformWithFlips),
            other => Err(Error::InvalidConfig(format!(
                "unknown yaw distribution {other:?}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            YawDistribution::Zero => "zero",
            YawDistribution::Uniform => "uniform",
            YawDistribution::UniformWithFlips => "uniform-flips",
        }
    }
}

/// Benchmark generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub seed: u64,
    pub n_db_places: usize,
    pub n_queries: usize,
    /// Fraction of queries that revisit a database place.
    pub revisit_fraction: f64,
    pub yaw_distribution: YawDistribution,
    pub beams: usize,
    pub rings: usize,
    pub range_noise_sigma_m: f64,
    pub dropout_prob: f64,
    /// Maximum planar offset of a revisit from its database place.
    pub position_perturbation_m: f64,
    /// Minimum spacing between database places.
    pub min_place_spacing_m: f64,
    /// Novel queries keep at least this distance from every database place.
    pub novel_margin_m: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_db_places: 50,
            n_queries: 25,
            revisit_fraction: 0.5,
            yaw_distribution: YawDistribution::Uniform,
            beams: 120,
            rings: 32,
            range_noise_sigma_m: 0.05,
            dropout_prob: 0.1,
            position_perturbation_m: 0.5,
            min_place_spacing_m: 6.0,
            novel_margin_m: 6.0,
        }
    }
}

/// One generated query with its ground-truth association.
#[derive(Debug, Clone)]
pub struct BenchmarkQuery {
    pub pose: Pose,
    pub cloud: PointCloud,
    /// Index into the database list, or `None` for a novel place.
    pub association: Option<usize>,
}

/// A generated database/query split with exact associations.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub db: Vec<(Pose, PointCloud)>,
    pub queries: Vec<BenchmarkQuery>,
}

fn sample_position(
    rng: &mut ChaCha8Rng,
    world: &World,
    taken: &[(f64, f64)],
    min_spacing: f64,
) -> Result<(f64, f64)> {
    let half = world.extent_m / 2.0 * 0.9;
    for _ in 0..10_000 {
        let x = rng.random_range(-half..half);
        let y = rng.random_range(-half..half);
        if !world.is_clear(x, y, 1.0) {
            continue;
        }
        if taken
            .iter()
            .all(|&(tx, ty)| ((x - tx).powi(2) + (y - ty).powi(2)).sqrt() >= min_spacing)
        {
            return Ok((x, y));
        }
    }
    Err(Error::InvalidConfig(
        "could not place a pose; extent too small for the requested spacing".into(),
    ))
}

/// Simulate a full retrieval benchmark: database scans at spaced poses,
/// revisit queries perturbed within the positive radius, novel queries
/// far from everything. Deterministic per seed.
pub fn generate_benchmark(world: &World, spec: &BenchmarkSpec) -> Result<Benchmark> {
    if !(spec.revisit_fraction >= 0.0 && spec.revisit_fraction <= 1.0) {
        return Err(Error::InvalidConfig(
            "revisit_fraction must lie in [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(spec.seed ^ world.seed));
    let scan = |pose: Pose| -> PointCloud {
        simulate_scan(
            world,
            &ScanSpec {
                pose,
                beams: spec.beams,
                rings: spec.rings,
                range_noise_sigma_m: spec.range_noise_sigma_m,
                dropout_prob: spec.dropout_prob,
            },
        )
    };

    let mut positions: Vec<(f64, f64)> = Vec::with_capacity(spec.n_db_places);
    let mut db = Vec::with_capacity(spec.n_db_places);
    for _ in 0..spec.n_db_places {
        let (x, y) = sample_position(&mut rng, world, &positions, spec.min_place_spacing_m)?;
        positions.push((x, y));
        let pose = Pose::new(x, y, rng.random_range(0.0..360.0));
        db.push((pose, scan(pose)));
    }

    let n_revisits = (spec.n_queries as f64 * spec.revisit_fraction).round() as usize;
    let mut queries = Vec::with_capacity(spec.n_queries);
    for q in 0..spec.n_queries {
        if q < n_revisits {
            let target = rng.random_range(0..db.len());
            let base = db[target].0;
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let radius = spec.position_perturbation_m * rng.random_range(0.0f64..1.0).sqrt();
            let yaw = match spec.yaw_distribution {
                YawDistribution::Zero => base.yaw_deg,
                YawDistribution::Uniform => rng.random_range(0.0..360.0),
                YawDistribution::UniformWithFlips => {
                    if rng.random_bool(0.5) {
                        (base.yaw_deg + 180.0).rem_euclid(360.0)
                    } else {
                        rng.random_range(0.0..360.0)
                    }
                }
            };
            let pose = Pose::new(
                base.x_m + radius * angle.cos(),
                base.y_m + radius * angle.sin(),
                yaw,
            );
            queries.push(BenchmarkQuery {
                pose,
                cloud: scan(pose),
                association: Some(target),
            });
        } else {
            let (x, y) = sample_position(&mut rng, world, &positions, spec.novel_margin_m)?;
            positions.push((x, y)); // keep later novels apart from this one too
            let pose = Pose::new(x, y, rng.random_range(0.0..360.0));
            queries.push(BenchmarkQuery {
                pose,
                cloud: scan(pose),
                association: None,
            });
        }
    }
    Ok(Benchmark { db, queries })
}
