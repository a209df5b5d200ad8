//! End-to-end composition: raw cloud to signature and yaw.
//!
//! Wires the stages together with one config object so the CLI, the
//! tests and the training tools all run the identical path:
//! filter -> polar BEV -> features -> spectrum -> signature.

use crate::bev::{build_polar_bev, channel_pool, BevConfig, PolarBev, PoolMode};
use crate::cloud::{filter_points, FilterConfig, PointCloud};
use crate::correlate::{estimate_yaw, YawSolution, YawSolverConfig};
use crate::error::Result;
use crate::features::{feature_forward, FeatureMap, FeatureParams};
use crate::spectrum::{fft2_per_channel, magnitude_signature, CropConfig, Signature, Spectrum};

/// How the feature stage maps the grid.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMode {
    /// Pass the BEV layers through unchanged.
    Identity,
    /// Collapse layers first, then pass through (the handcrafted path).
    PooledIdentity(PoolMode),
    /// Run a convolution stack.
    Conv(FeatureParams),
}

impl FeatureMode {
    pub fn output_channels(&self, bev_layers: usize) -> usize {
        match self {
            FeatureMode::Identity => bev_layers,
            FeatureMode::PooledIdentity(_) => 1,
            FeatureMode::Conv(params) => params.output_channels(bev_layers),
        }
    }
}

/// The full scan-to-signature configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SignaturePipeline {
    pub filter: FilterConfig,
    pub bev: BevConfig,
    pub features: FeatureMode,
    pub crop: CropConfig,
    pub solver: YawSolverConfig,
}

impl Default for SignaturePipeline {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            bev: BevConfig::default(),
            features: FeatureMode::PooledIdentity(PoolMode::Max),
            crop: CropConfig::default(),
            solver: YawSolverConfig::default(),
        }
    }
}

impl SignaturePipeline {
    pub fn signature_len(&self) -> usize {
        self.crop
            .signature_len(self.features.output_channels(self.bev.effective_layers()))
    }

    /// Filter and re-reference heights to the ground threshold.
    pub fn preprocess(&self, pc: &PointCloud) -> PointCloud {
        let mut kept = filter_points(pc, &self.filter);
        if self.filter.ground_z_m != 0.0 {
            for p in kept.points.iter_mut() {
                p[2] -= self.filter.ground_z_m;
            }
        }
        kept
    }

    pub fn polar_bev(&self, pc: &PointCloud) -> Result<PolarBev> {
        build_polar_bev(&self.preprocess(pc), &self.bev)
    }

    pub fn feature_map_of_bev(&self, bev: &PolarBev) -> Result<FeatureMap> {
        match &self.features {
            FeatureMode::Identity => Ok(FeatureMap {
                values: bev.cells.clone(),
            }),
            FeatureMode::PooledIdentity(mode) => Ok(FeatureMap {
                values: channel_pool(bev, *mode).cells,
            }),
            FeatureMode::Conv(params) => feature_forward(bev, params),
        }
    }

    pub fn feature_map(&self, pc: &PointCloud) -> Result<FeatureMap> {
        let bev = self.polar_bev(pc)?;
        self.feature_map_of_bev(&bev)
    }

    pub fn spectrum(&self, pc: &PointCloud) -> Result<Spectrum> {
        Ok(fft2_per_channel(&self.feature_map(pc)?))
    }

    pub fn signature(&self, pc: &PointCloud) -> Result<Signature> {
        magnitude_signature(&self.spectrum(pc)?, &self.crop)
    }

    /// Relative yaw from `query` to `scan` through the configured solver.
    pub fn yaw_between(&self, query: &PointCloud, scan: &PointCloud) -> Result<YawSolution> {
        let gq = self.feature_map(query)?;
        let gs = self.feature_map(scan)?;
        estimate_yaw(&gq, &gs, &self.solver)
    }
}
