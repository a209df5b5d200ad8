//! Polar multi-layer bird's-eye-view grids.
//!
//! Points are binned directly into (range ring, azimuth sector, height
//! layer) cells in a single pass, so a yaw rotation of the cloud by a
//! whole number of sector widths becomes an exact circular shift of the
//! sector axis. That shift/rotation equivalence is what the frequency-
//! domain signature and the correlation solver build on.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// How a cell summarizes the points that fall into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BevVariant {
    /// 1 if any point maps to the voxel, else 0.
    Occupied,
    /// Number of points in the voxel.
    Density,
    /// Single layer holding the maximum point height of the pillar.
    Height,
}

impl BevVariant {
    pub fn code(self) -> u32 {
        match self {
            BevVariant::Occupied => 0,
            BevVariant::Density => 1,
            BevVariant::Height => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(BevVariant::Occupied),
            1 => Ok(BevVariant::Density),
            2 => Ok(BevVariant::Height),
            other => Err(Error::Format(format!("unknown BEV variant code {other}"))),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "occupied" => Ok(BevVariant::Occupied),
            "density" => Ok(BevVariant::Density),
            "height" => Ok(BevVariant::Height),
            other => Err(Error::InvalidConfig(format!("unknown BEV variant {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BevVariant::Occupied => "occupied",
            BevVariant::Density => "density",
            BevVariant::Height => "height",
        }
    }
}

/// Grid geometry. Angular resolution is `360 / sectors` degrees per column.
#[derive(Debug, Clone, PartialEq)]
pub struct BevConfig {
    pub rings: usize,
    pub sectors: usize,
    pub layers: usize,
    pub max_range_m: f64,
    pub height_span_m: f64,
    pub variant: BevVariant,
}

impl Default for BevConfig {
    fn default() -> Self {
        Self {
            rings: 40,
            sectors: 120,
            layers: 20,
            max_range_m: 80.0,
            height_span_m: 20.0,
            variant: BevVariant::Occupied,
        }
    }
}

impl BevConfig {
    /// The height variant collapses pillars, so it always has one layer.
    pub fn effective_layers(&self) -> usize {
        match self.variant {
            BevVariant::Height => 1,
            _ => self.layers,
        }
    }

    /// Degrees covered by one sector column.
    pub fn sector_width_deg(&self) -> f64 {
        360.0 / self.sectors as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.rings == 0 || self.layers == 0 {
            return Err(Error::InvalidConfig("rings and layers must be positive".into()));
        }
        if self.sectors < 2 {
            return Err(Error::InvalidConfig(format!(
                "sectors must be at least 2, got {}",
                self.sectors
            )));
        }
        let bad = |v: f64| v.is_nan() || v <= 0.0;
        if bad(self.max_range_m) || bad(self.height_span_m) {
            return Err(Error::InvalidConfig(
                "max_range_m and height_span_m must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The binned grid: `rings x sectors x layers`, layer index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarBev {
    pub cells: Array3<f64>,
    pub config: BevConfig,
}

impl PolarBev {
    pub fn zeros(config: BevConfig) -> Self {
        let cells = Array3::zeros((config.rings, config.sectors, config.effective_layers()));
        Self { cells, config }
    }
}

/// Bin a filtered cloud into the polar grid.
///
/// A point with planar range `r`, azimuth `phi` in `[0, 360)` and height
/// `h` lands in ring `floor(r / ring_width)` (clamped to the outermost
/// ring), sector `floor(phi / sector_width)` and layer
/// `floor(h / layer_height)` (clamped to the top layer). Points exactly
/// on a sector boundary go to the lower-index sector.
pub fn build_polar_bev(pc: &PointCloud, cfg: &BevConfig) -> Result<PolarBev> {
    cfg.validate()?;
    let mut bev = PolarBev::zeros(cfg.clone());
    let ring_width = cfg.max_range_m / cfg.rings as f64;
    let sector_width = cfg.sector_width_deg();
    let layer_height = cfg.height_span_m / cfg.layers as f64;

    for &[x, y, z] in &pc.points {
        let range = (x * x + y * y).sqrt();
        if range > cfg.max_range_m || z < 0.0 || z > cfg.height_span_m {
            return Err(Error::PointOutOfBounds {
                range_m: range,
                height_m: z,
                max_range_m: cfg.max_range_m,
                height_span_m: cfg.height_span_m,
            });
        }
        let ring = ((range / ring_width) as usize).min(cfg.rings - 1);
        let mut azimuth = y.atan2(x).to_degrees();
        if azimuth < 0.0 {
            azimuth += 360.0;
        }
        let sector = ((azimuth / sector_width) as usize) % cfg.sectors;

        match cfg.variant {
            BevVariant::Occupied => {
                let layer = ((z / layer_height) as usize).min(cfg.layers - 1);
                bev.cells[[ring, sector, layer]] = 1.0;
            }
            BevVariant::Density => {
                let layer = ((z / layer_height) as usize).min(cfg.layers - 1);
                bev.cells[[ring, sector, layer]] += 1.0;
            }
            BevVariant::Height => {
                let cell = &mut bev.cells[[ring, sector, 0]];
                if z > *cell {
                    *cell = z;
                }
            }
        }
    }
    Ok(bev)
}

/// Circularly shift the sector axis by `shift_cols` columns (modulo the
/// sector count). Content moves to higher column indices, matching a yaw
/// rotation of the source cloud by `shift_cols` sector widths.
pub fn rotate_polar_bev(bev: &PolarBev, shift_cols: i64) -> PolarBev {
    let sectors = bev.config.sectors as i64;
    let shift = shift_cols.rem_euclid(sectors) as usize;
    if shift == 0 {
        return bev.clone();
    }
    let mut out = PolarBev::zeros(bev.config.clone());
    let (rings, sectors, layers) = bev.cells.dim();
    for r in 0..rings {
        for c in 0..sectors {
            let src = (c + sectors - shift) % sectors;
            for l in 0..layers {
                out.cells[[r, c, l]] = bev.cells[[r, src, l]];
            }
        }
    }
    out
}

/// Per-cell reduction over the layer axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Sum,
}

impl PoolMode {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "max" => Ok(PoolMode::Max),
            "sum" => Ok(PoolMode::Sum),
            other => Err(Error::InvalidConfig(format!("unknown pool mode {other:?}"))),
        }
    }
}

/// Collapse the layer axis with the given reduction, yielding a
/// single-layer grid. Pooling commutes with [`rotate_polar_bev`].
pub fn channel_pool(bev: &PolarBev, mode: PoolMode) -> PolarBev {
    let (rings, sectors, layers) = bev.cells.dim();
    let mut config = bev.config.clone();
    config.layers = 1;
    let mut out = PolarBev {
        cells: Array3::zeros((rings, sectors, 1)),
        config,
    };
    for r in 0..rings {
        for c in 0..sectors {
            let pillar = bev.cells.slice(ndarray::s![r, c, ..]);
            out.cells[[r, c, 0]] = match mode {
                PoolMode::Max => pillar.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                PoolMode::Sum => pillar.iter().sum(),
            };
        }
    }
    let _ = layers;
    out
}

/// Serialize as `PBEV` header plus row-major float32 cells.
pub fn save_polar_bev(bev: &PolarBev, path: &Path) -> Result<()> {
    let cfg = &bev.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(b"PBEV");
    buf.extend_from_slice(&(cfg.rings as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.sectors as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.effective_layers() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg.variant.code().to_le_bytes());
    buf.extend_from_slice(&cfg.max_range_m.to_le_bytes());
    buf.extend_from_slice(&cfg.height_span_m.to_le_bytes());
    for v in bev.cells.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_polar_bev(path: &Path) -> Result<PolarBev> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 36 || &bytes[0..4] != b"PBEV" {
        return Err(Error::Format("missing PBEV header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let rings = u32_at(4) as usize;
    let sectors = u32_at(8) as usize;
    let layers = u32_at(12) as usize;
    let variant = BevVariant::from_code(u32_at(16))?;
    let max_range_m = f64_at(20);
    let height_span_m = f64_at(28);
    let n_cells = rings * sectors * layers;
    if bytes.len() != 36 + 4 * n_cells {
        return Err(Error::Format(format!(
            "cell payload size {} does not match {}x{}x{} grid",
            bytes.len() - 36,
            rings,
            sectors,
            layers
        )));
    }
    let mut cells = Array3::zeros((rings, sectors, layers));
    for (i, v) in cells.iter_mut().enumerate() {
        let o = 36 + 4 * i;
        *v = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
    }
    Ok(PolarBev {
        cells,
        config: BevConfig {
            rings,
            sectors,
            layers,
            max_range_m,
            height_span_m,
            variant,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::rotate_point_cloud;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(seed: u64, n: usize, cfg: &BevConfig) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    let r = rng.random_range(0.5..cfg.max_range_m * 0.99);
                    let phi: f64 = rng.random_range(0.0..360.0);
                    let h = rng.random_range(0.0..cfg.height_span_m * 0.99);
                    [
                        r * phi.to_radians().cos(),
                        r * phi.to_radians().sin(),
                        h,
                    ]
                })
                .collect(),
        )
    }

    #[test]
    fn empty_cloud_gives_zero_grid() {
        let bev = build_polar_bev(&PointCloud::new(vec![]), &BevConfig::default()).unwrap();
        assert!(bev.cells.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_point_lands_in_expected_cell() {
        // Defaults: 2 m rings, 3 deg sectors, 1 m layers.
        let pc = PointCloud::new(vec![[1.0, 0.0, 0.5]]);
        let bev = build_polar_bev(&pc, &BevConfig::default()).unwrap();
        let nonzero: Vec<_> = bev
            .cells
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].0, (0, 0, 0));
        assert_eq!(*nonzero[0].1, 1.0);
    }

    #[test]
    fn out_of_bounds_point_is_an_error() {
        let cfg = BevConfig::default();
        let far = PointCloud::new(vec![[90.0, 0.0, 1.0]]);
        assert!(matches!(
            build_polar_bev(&far, &cfg),
            Err(Error::PointOutOfBounds { .. })
        ));
        let low = PointCloud::new(vec![[1.0, 0.0, -0.1]]);
        assert!(build_polar_bev(&low, &cfg).is_err());
    }

    #[test]
    fn density_matches_histogram_oracle() {
        let cfg = BevConfig {
            variant: BevVariant::Density,
            ..BevConfig::default()
        };
        let pc = random_cloud(42, 500, &cfg);
        let bev = build_polar_bev(&pc, &cfg).unwrap();

        // Brute-force 3D histogram, written independently of the binning pass.
        let mut hist = vec![0.0; cfg.rings * cfg.sectors * cfg.layers];
        for &[x, y, z] in &pc.points {
            let r = (x * x + y * y).sqrt();
            let mut phi = y.atan2(x).to_degrees();
            if phi < 0.0 {
                phi += 360.0;
            }
            let ri = ((r / 2.0).floor() as usize).min(39);
            let si = ((phi / 3.0).floor() as usize) % 120;
            let li = ((z / 1.0).floor() as usize).min(19);
            hist[(ri * cfg.sectors + si) * cfg.layers + li] += 1.0;
        }
        for ((r, s, l), &v) in bev.cells.indexed_iter() {
            assert_eq!(v, hist[(r * cfg.sectors + s) * cfg.layers + l]);
        }
        let total: f64 = bev.cells.iter().sum();
        assert_eq!(total, 500.0);
    }

    #[test]
    fn occupied_is_indicator_of_density() {
        let base = random_cloud(17, 800, &BevConfig::default());
        let occ = build_polar_bev(&base, &BevConfig::default()).unwrap();
        let den = build_polar_bev(
            &base,
            &BevConfig {
                variant: BevVariant::Density,
                ..BevConfig::default()
            },
        )
        .unwrap();
        for (o, d) in occ.cells.iter().zip(den.cells.iter()) {
            assert_eq!(*o, if *d > 0.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn height_variant_takes_pillar_maximum() {
        let cfg = BevConfig {
            variant: BevVariant::Height,
            ..BevConfig::default()
        };
        let pc = PointCloud::new(vec![[1.0, 0.0, 0.5], [1.1, 0.0, 7.25], [1.05, 0.0, 3.0]]);
        let bev = build_polar_bev(&pc, &cfg).unwrap();
        assert_eq!(bev.cells.dim(), (40, 120, 1));
        assert_eq!(bev.cells[[0, 0, 0]], 7.25);
    }

    #[test]
    fn shift_identity_and_full_cycle() {
        let bev = build_polar_bev(&random_cloud(1, 300, &BevConfig::default()), &BevConfig::default())
            .unwrap();
        assert_eq!(rotate_polar_bev(&bev, 0), bev);
        assert_eq!(rotate_polar_bev(&bev, 120), bev);
        assert_eq!(rotate_polar_bev(&bev, -120), bev);
        let a = rotate_polar_bev(&bev, 7);
        let b = rotate_polar_bev(&bev, 7 - 120);
        assert_eq!(a, b);
    }

    /// Rotating the cloud by k sector widths must equal shifting the grid by
    /// k columns, as long as no point sits on a bin boundary.
    #[test]
    fn rotation_commutes_with_column_shift() {
        let cfg = BevConfig::default();
        // Keep azimuths well inside their sectors so rotation cannot push a
        // point across a boundary.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pc = PointCloud::new(
            (0..400)
                .map(|_| {
                    let r = rng.random_range(1.0..78.0);
                    let sector = rng.random_range(0..120) as f64;
                    let phi = (sector * 3.0 + rng.random_range(0.5..2.5)).to_radians();
                    [r * phi.cos(), r * phi.sin(), rng.random_range(0.1..19.0)]
                })
                .collect(),
        );
        for &k in &[1i64, 10, 59, 119] {
            let rotated_cloud = rotate_point_cloud(&pc, k as f64 * 3.0);
            let from_cloud = build_polar_bev(&rotated_cloud, &cfg).unwrap();
            let from_shift = rotate_polar_bev(&build_polar_bev(&pc, &cfg).unwrap(), k);
            assert_eq!(from_cloud.cells, from_shift.cells, "shift {k}");
        }
    }

    #[test]
    fn pool_modes() {
        let cfg = BevConfig {
            variant: BevVariant::Density,
            ..BevConfig::default()
        };
        let bev = build_polar_bev(&random_cloud(5, 600, &cfg), &cfg).unwrap();

        let pooled = channel_pool(&bev, PoolMode::Sum);
        for ((r, s, _), &v) in pooled.cells.indexed_iter() {
            let expect: f64 = (0..20).map(|l| bev.cells[[r, s, l]]).sum();
            assert_eq!(v, expect);
        }

        let occ = build_polar_bev(&random_cloud(5, 600, &cfg), &BevConfig::default()).unwrap();
        let pooled_max = channel_pool(&occ, PoolMode::Max);
        for ((r, s, _), &v) in pooled_max.cells.indexed_iter() {
            let any = (0..20).any(|l| occ.cells[[r, s, l]] > 0.0);
            assert_eq!(v > 0.0, any);
        }

        // Single-layer input is unchanged by pooling.
        let single = channel_pool(&occ, PoolMode::Max);
        assert_eq!(channel_pool(&single, PoolMode::Max).cells, single.cells);
        assert_eq!(channel_pool(&single, PoolMode::Sum).cells, single.cells);
    }

    #[test]
    fn pool_commutes_with_shift() {
        let bev = build_polar_bev(&random_cloud(2, 500, &BevConfig::default()), &BevConfig::default())
            .unwrap();
        let a = channel_pool(&rotate_polar_bev(&bev, 33), PoolMode::Max);
        let b = rotate_polar_bev(&channel_pool(&bev, PoolMode::Max), 33);
        assert_eq!(a.cells, b.cells);
    }

    #[test]
    fn pbev_round_trip() {
        let cfg = BevConfig {
            variant: BevVariant::Density,
            ..BevConfig::default()
        };
        let bev = build_polar_bev(&random_cloud(8, 300, &cfg), &cfg).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        save_polar_bev(&bev, file.path()).unwrap();
        let loaded = load_polar_bev(file.path()).unwrap();
        assert_eq!(loaded.config, bev.config);
        // Counts are small integers, exactly representable in f32.
        assert_eq!(loaded.cells, bev.cells);
    }
}
