//! Flat `key=value` run configuration.
//!
//! One text file carries every stage's parameters. Unknown keys are
//! rejected, every key has a default, and the parsed configuration is
//! echoed into run outputs so results stay attributable to an exact
//! parameterization.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use polarloc_core::bev::{BevConfig, BevVariant, PoolMode};
use polarloc_core::cloud::FilterConfig;
use polarloc_core::correlate::{Reduction, YawSolverConfig};
use polarloc_core::features::FeatureParams;
use polarloc_core::learn::LossConfig;
use polarloc_core::pipeline::{FeatureMode, SignaturePipeline};
use polarloc_core::spectrum::{CropConfig, CropMode};
use polarloc_core::synth::{BenchmarkSpec, YawDistribution};

/// Every tunable of the pipeline, training and synthesis, with the
/// defaults used when a key is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // filtering
    pub max_range_m: f64,
    pub min_z_m: f64,
    pub max_z_m: f64,
    pub ground_z_m: f64,
    // polar grid
    pub rings: usize,
    pub sectors: usize,
    pub layers: usize,
    pub height_span_m: f64,
    pub bev_variant: BevVariant,
    // features
    pub feature_mode: String,
    pub pool_mode: PoolMode,
    pub feature_seed: u64,
    // signature crop
    pub crop_h: usize,
    pub crop_w: usize,
    pub crop_mode: CropMode,
    pub signature_dim: usize,
    // yaw solver
    pub normalized_spectrum: bool,
    pub reduction: Reduction,
    pub softmax_scale: f64,
    pub softmax_bias: f64,
    pub degeneracy_threshold: f64,
    // losses / training
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub train_softmax: bool,
    pub mine_after: i64,
    // retrieval
    pub success_radius_m: f64,
    // synthetic worlds and benchmarks
    pub seed: u64,
    pub world_extent_m: f64,
    pub world_landmarks: usize,
    pub synth_db_places: usize,
    pub synth_queries: usize,
    pub synth_revisit_fraction: f64,
    pub yaw_distribution: YawDistribution,
    pub scan_beams: usize,
    pub scan_rings: usize,
    pub range_noise_sigma_m: f64,
    pub dropout_prob: f64,
    pub position_perturbation_m: f64,
    pub min_place_spacing_m: f64,
    pub novel_margin_m: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_range_m: 80.0,
            min_z_m: 0.0,
            max_z_m: 20.0,
            ground_z_m: 0.0,
            rings: 40,
            sectors: 120,
            layers: 20,
            height_span_m: 20.0,
            bev_variant: BevVariant::Occupied,
            feature_mode: "pool".into(),
            pool_mode: PoolMode::Max,
            feature_seed: 0,
            crop_h: 32,
            crop_w: 32,
            crop_mode: CropMode::LowPass,
            signature_dim: 1024,
            normalized_spectrum: false,
            reduction: Reduction::RingZero,
            softmax_scale: 0.0,
            softmax_bias: 0.0,
            degeneracy_threshold: 1.05,
            alpha1: 0.5,
            alpha2: 0.2,
            lambda: 1.0,
            learning_rate: 1e-5,
            momentum: 0.0,
            train_softmax: true,
            mine_after: -1,
            success_radius_m: 1.5,
            seed: 0,
            world_extent_m: 220.0,
            world_landmarks: 240,
            synth_db_places: 200,
            synth_queries: 100,
            synth_revisit_fraction: 0.5,
            yaw_distribution: YawDistribution::UniformWithFlips,
            scan_beams: 120,
            scan_rings: 32,
            range_noise_sigma_m: 0.05,
            dropout_prob: 0.1,
            position_perturbation_m: 0.5,
            min_place_spacing_m: 6.0,
            novel_margin_m: 6.0,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => bail!("config key {key}: expected a boolean, got {other:?}"),
    }
}

impl RunConfig {
    /// Parse a `key=value` file over the defaults. Blank lines and
    /// `#` comments are skipped; unknown keys are an error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected key=value, got {line:?}", lineno + 1);
            };
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("config line {}", lineno + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! num {
            () => {
                value
                    .parse()
                    .with_context(|| format!("config key {key}: bad value {value:?}"))?
            };
        }
        match key {
            "max_range_m" => self.max_range_m = num!(),
            "min_z_m" => self.min_z_m = num!(),
            "max_z_m" => self.max_z_m = num!(),
            "ground_z_m" => self.ground_z_m = num!(),
            "rings" => self.rings = num!(),
            "sectors" => self.sectors = num!(),
            "layers" => self.layers = num!(),
            "height_span_m" => self.height_span_m = num!(),
            "bev_variant" => self.bev_variant = BevVariant::parse(value)?,
            "feature_mode" => match value {
                "identity" | "pool" | "conv" => self.feature_mode = value.into(),
                other => bail!("config key feature_mode: unknown mode {other:?}"),
            },
            "pool_mode" => self.pool_mode = PoolMode::parse(value)?,
            "feature_seed" => self.feature_seed = num!(),
            "crop_h" => self.crop_h = num!(),
            "crop_w" => self.crop_w = num!(),
            "crop_mode" => self.crop_mode = CropMode::parse(value)?,
            "signature_dim" => self.signature_dim = num!(),
            "normalized_spectrum" => self.normalized_spectrum = parse_bool(key, value)?,
            "reduction" => self.reduction = Reduction::parse(value)?,
            "softmax_scale" => self.softmax_scale = num!(),
            "softmax_bias" => self.softmax_bias = num!(),
            "degeneracy_threshold" => self.degeneracy_threshold = num!(),
            "alpha1" => self.alpha1 = num!(),
            "alpha2" => self.alpha2 = num!(),
            "lambda" => self.lambda = num!(),
            "learning_rate" => self.learning_rate = num!(),
            "momentum" => self.momentum = num!(),
            "train_softmax" => self.train_softmax = parse_bool(key, value)?,
            "mine_after" => self.mine_after = num!(),
            "success_radius_m" => self.success_radius_m = num!(),
            "seed" => self.seed = num!(),
            "world_extent_m" => self.world_extent_m = num!(),
            "world_landmarks" => self.world_landmarks = num!(),
            "synth_db_places" => self.synth_db_places = num!(),
            "synth_queries" => self.synth_queries = num!(),
            "synth_revisit_fraction" => self.synth_revisit_fraction = num!(),
            "yaw_distribution" => self.yaw_distribution = YawDistribution::parse(value)?,
            "scan_beams" => self.scan_beams = num!(),
            "scan_rings" => self.scan_rings = num!(),
            "range_noise_sigma_m" => self.range_noise_sigma_m = num!(),
            "dropout_prob" => self.dropout_prob = num!(),
            "position_perturbation_m" => self.position_perturbation_m = num!(),
            "min_place_spacing_m" => self.min_place_spacing_m = num!(),
            "novel_margin_m" => self.novel_margin_m = num!(),
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.filter_config().validate()?;
        self.bev_config().validate()?;
        let channels = self.feature_mode_instance()?.output_channels(
            self.bev_config().effective_layers(),
        );
        let dim = self.crop_config().signature_len(channels);
        if dim != self.signature_dim {
            bail!(
                "signature_dim {} does not match crop {}x{} over {channels} channels (= {dim})",
                self.signature_dim,
                self.crop_h,
                self.crop_w
            );
        }
        Ok(())
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            max_range_m: self.max_range_m,
            min_z_m: self.min_z_m,
            max_z_m: self.max_z_m,
            ground_z_m: self.ground_z_m,
        }
    }

    pub fn bev_config(&self) -> BevConfig {
        BevConfig {
            rings: self.rings,
            sectors: self.sectors,
            layers: self.layers,
            max_range_m: self.max_range_m,
            height_span_m: self.height_span_m,
            variant: self.bev_variant,
        }
    }

    pub fn crop_config(&self) -> CropConfig {
        CropConfig {
            crop_h: self.crop_h,
            crop_w: self.crop_w,
            mode: self.crop_mode,
        }
    }

    pub fn solver_config(&self) -> YawSolverConfig {
        YawSolverConfig {
            normalized: self.normalized_spectrum,
            reduction: self.reduction,
            scale: if self.softmax_scale > 0.0 {
                Some(self.softmax_scale)
            } else {
                None
            },
            bias: self.softmax_bias,
            degeneracy_threshold: self.degeneracy_threshold,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            train_softmax: self.train_softmax,
            mine_after: if self.mine_after < 0 {
                None
            } else {
                Some(self.mine_after as usize)
            },
        }
    }

    fn feature_mode_instance(&self) -> Result<FeatureMode> {
        Ok(match self.feature_mode.as_str() {
            "identity" => FeatureMode::Identity,
            "pool" => FeatureMode::PooledIdentity(self.pool_mode),
            "conv" => FeatureMode::Conv(FeatureParams::default_stack(
                self.bev_config().effective_layers(),
                self.feature_seed,
            )),
            other => bail!("unknown feature_mode {other:?}"),
        })
    }

    pub fn pipeline(&self) -> Result<SignaturePipeline> {
        Ok(SignaturePipeline {
            filter: self.filter_config(),
            bev: self.bev_config(),
            features: self.feature_mode_instance()?,
            crop: self.crop_config(),
            solver: self.solver_config(),
        })
    }

    pub fn benchmark_spec(&self, seed: u64) -> BenchmarkSpec {
        BenchmarkSpec {
            seed,
            n_db_places: self.synth_db_places,
            n_queries: self.synth_queries,
            revisit_fraction: self.synth_revisit_fraction,
            yaw_distribution: self.yaw_distribution,
            beams: self.scan_beams,
            rings: self.scan_rings,
            range_noise_sigma_m: self.range_noise_sigma_m,
            dropout_prob: self.dropout_prob,
            position_perturbation_m: self.position_perturbation_m,
            min_place_spacing_m: self.min_place_spacing_m,
            novel_margin_m: self.novel_margin_m,
        }
    }

    /// The full effective configuration as sorted `key=value` lines, for
    /// provenance echoing into outputs.
    pub fn echo_map(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("max_range_m", self.max_range_m.to_string());
        m.insert("min_z_m", self.min_z_m.to_string());
        m.insert("max_z_m", self.max_z_m.to_string());
        m.insert("ground_z_m", self.ground_z_m.to_string());
        m.insert("rings", self.rings.to_string());
        m.insert("sectors", self.sectors.to_string());
        m.insert("layers", self.layers.to_string());
        m.insert("height_span_m", self.height_span_m.to_string());
        m.insert("bev_variant", self.bev_variant.name().to_string());
        m.insert("feature_mode", self.feature_mode.clone());
        m.insert(
            "pool_mode",
            match self.pool_mode {
                PoolMode::Max => "max".into(),
                PoolMode::Sum => "sum".into(),
            },
        );
        m.insert("feature_seed", self.feature_seed.to_string());
        m.insert("crop_h", self.crop_h.to_string());
        m.insert("crop_w", self.crop_w.to_string());
        m.insert(
            "crop_mode",
            match self.crop_mode {
                CropMode::LowPass => "low-pass".into(),
                CropMode::HighPass => "high-pass".into(),
            },
        );
        m.insert("signature_dim", self.signature_dim.to_string());
        m.insert("normalized_spectrum", self.normalized_spectrum.to_string());
        m.insert(
            "reduction",
            match self.reduction {
                Reduction::RingZero => "ring0".into(),
                Reduction::MaxOverRings => "max".into(),
            },
        );
        m.insert("softmax_scale", self.softmax_scale.to_string());
        m.insert("softmax_bias", self.softmax_bias.to_string());
        m.insert(
            "degeneracy_threshold",
            self.degeneracy_threshold.to_string(),
        );
        m.insert("alpha1", self.alpha1.to_string());
        m.insert("alpha2", self.alpha2.to_string());
        m.insert("lambda", self.lambda.to_string());
        m.insert("learning_rate", self.learning_rate.to_string());
        m.insert("momentum", self.momentum.to_string());
        m.insert("train_softmax", self.train_softmax.to_string());
        m.insert("mine_after", self.mine_after.to_string());
        m.insert("success_radius_m", self.success_radius_m.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("world_extent_m", self.world_extent_m.to_string());
        m.insert("world_landmarks", self.world_landmarks.to_string());
        m.insert("synth_db_places", self.synth_db_places.to_string());
        m.insert("synth_queries", self.synth_queries.to_string());
        m.insert(
            "synth_revisit_fraction",
            self.synth_revisit_fraction.to_string(),
        );
        m.insert("yaw_distribution", self.yaw_distribution.name().to_string());
        m.insert("scan_beams", self.scan_beams.to_string());
        m.insert("scan_rings", self.scan_rings.to_string());
        m.insert("range_noise_sigma_m", self.range_noise_sigma_m.to_string());
        m.insert("dropout_prob", self.dropout_prob.to_string());
        m.insert(
            "position_perturbation_m",
            self.position_perturbation_m.to_string(),
        );
        m.insert("min_place_spacing_m", self.min_place_spacing_m.to_string());
        m.insert("novel_margin_m", self.novel_margin_m.to_string());
        m
    }

    pub fn echo_lines(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.echo_map() {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out
    }
}
