//! Relative yaw estimation between two feature maps.
//!
//! Three equivalent routes, each exposed on its own:
//!
//! 1. [`brute_force_yaw`] sweeps every integer column shift (the oracle).
//! 2. [`cross_power`] + [`correlation_1d`] computes the same sweep through
//!    the frequency domain: the inverse transform of the cross-power
//!    spectrum is the circular cross-correlation.
//! 3. [`softmax_expectation_yaw`] turns the correlation into a probability
//!    distribution and reads off a differentiable sub-bin expectation.
//!
//! Conventions: `correlation[k]` scores the hypothesis "the scan map
//! equals the query map shifted by `k` columns", so its argmax is the
//! query-to-scan yaw in sector units. In cross-power terms that means
//! conjugating the *query* spectrum: `cross_power(scan, query)`.

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::spectrum::{fft2_per_channel, ifft2_real, Spectrum};

/// Sweep metric for the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Argmin of the L2 alignment residual.
    L2,
    /// Argmax of the elementwise-product sum.
    Inner,
}

/// How the 2D correlation surface collapses to an angular vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Row at ring shift 0; revisit translation is assumed slight.
    RingZero,
    /// Maximum over ring shifts, for robustness to radial offsets.
    MaxOverRings,
}

impl Reduction {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ring0" => Ok(Reduction::RingZero),
            "max" => Ok(Reduction::MaxOverRings),
            other => Err(Error::InvalidConfig(format!("unknown reduction {other:?}"))),
        }
    }
}

/// An estimated relative orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct YawEstimate {
    /// Degrees in `[0, 360)`; fractional in expectation mode.
    pub yaw_deg: f64,
    /// Argmax bin of the angular correlation.
    pub bin_index: usize,
    /// Peak value divided by mean value of the 1D correlation.
    pub peak_sharpness: f64,
}

/// Softmax probabilities over angular shift bins.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationDistribution {
    pub probs: Vec<f64>,
    pub scale: f64,
    pub bias: f64,
}

/// Parameters of the composed yaw solver.
#[derive(Debug, Clone, PartialEq)]
pub struct YawSolverConfig {
    /// Whiten the cross-power bins to unit magnitude (true phase
    /// correlation). Off by default: raw cross-correlation.
    pub normalized: bool,
    pub reduction: Reduction,
    /// Softmax scale; `None` picks `10 / std(correlation)` adaptively.
    pub scale: Option<f64>,
    pub bias: f64,
    /// Peak sharpness below this raises `DegenerateDistribution`.
    pub degeneracy_threshold: f64,
}

impl Default for YawSolverConfig {
    fn default() -> Self {
        Self {
            normalized: false,
            reduction: Reduction::RingZero,
            scale: None,
            bias: 0.0,
            degeneracy_threshold: 1.05,
        }
    }
}

/// Everything the composed solver produces for one scan pair.
#[derive(Debug, Clone)]
pub struct YawSolution {
    pub argmax: YawEstimate,
    pub expectation: YawEstimate,
    pub distribution: CorrelationDistribution,
    pub correlation: Vec<f64>,
}

fn check_same_shape(a: &FeatureMap, b: &FeatureMap) -> Result<()> {
    if a.values.dim() != b.values.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.values.dim()),
            got: format!("{:?}", b.values.dim()),
        });
    }
    Ok(())
}

/// Exhaustive search over all integer column shifts of the query map
/// against the scan map. Ties break to the smallest bin index.
pub fn brute_force_yaw(gq: &FeatureMap, gs: &FeatureMap, metric: Metric) -> Result<YawEstimate> {
    let sweep = brute_force_sweep(gq, gs, metric)?;
    let scores = match metric {
        Metric::Inner => sweep.clone(),
        Metric::L2 => {
            // E(k) = |gq|^2 + |gs|^2 - 2*inner(k); recover the inner sweep
            // so sharpness has one definition across metrics.
            let qq: f64 = gq.values.iter().map(|v| v * v).sum();
            let ss: f64 = gs.values.iter().map(|v| v * v).sum();
            sweep.iter().map(|e| (qq + ss - e) / 2.0).collect()
        }
    };
    let bin = match metric {
        Metric::Inner => argmax(&sweep),
        Metric::L2 => argmin(&sweep),
    };
    let w = scores.len();
    Ok(YawEstimate {
        yaw_deg: bin as f64 * 360.0 / w as f64,
        bin_index: bin,
        peak_sharpness: sharpness(&scores),
    })
}

/// The raw sweep values: inner products or L2 residuals per shift.
pub fn brute_force_sweep(gq: &FeatureMap, gs: &FeatureMap, metric: Metric) -> Result<Vec<f64>> {
    check_same_shape(gq, gs)?;
    let (h, w, c) = gq.values.dim();
    let mut sweep = vec![0.0f64; w];
    for (delta, out) in sweep.iter_mut().enumerate() {
        let mut acc = 0.0;
        for y in 0..h {
            for x in 0..w {
                let xs = (x + delta) % w;
                for ch in 0..c {
                    let q = gq.values[[y, x, ch]];
                    let s = gs.values[[y, xs, ch]];
                    acc += match metric {
                        Metric::Inner => q * s,
                        Metric::L2 => (q - s) * (q - s),
                    };
                }
            }
        }
        *out = acc;
    }
    Ok(sweep)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

fn sharpness(scores: &[f64]) -> f64 {
    let peak = scores[argmax(scores)];
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    peak / mean
}

/// Per-bin product of `a` with the conjugate of `b`, summed over channels.
/// The inverse transform of the result peaks at the column shift that
/// takes `b`'s source map to `a`'s. With `normalized`, each bin is scaled
/// to unit magnitude (bins below 1e-12 are zeroed).
pub fn cross_power(a: &Spectrum, b: &Spectrum, normalized: bool) -> Result<Array2<Complex64>> {
    if a.bins.dim() != b.bins.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.bins.dim()),
            got: format!("{:?}", b.bins.dim()),
        });
    }
    let (h, w, c) = a.bins.dim();
    let mut cp = Array2::default((h, w));
    for r in 0..h {
        for cc in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for ch in 0..c {
                acc += a.bins[[r, cc, ch]] * b.bins[[r, cc, ch]].conj();
            }
            cp[[r, cc]] = acc;
        }
    }
    if normalized {
        cp.mapv_inplace(|v| {
            let mag = v.norm();
            if mag < 1e-12 {
                Complex64::new(0.0, 0.0)
            } else {
                v / mag
            }
        });
    }
    Ok(cp)
}

/// Real part of the inverse 2D transform of the cross-power: the
/// circular cross-correlation surface over (ring shift, column shift).
pub fn correlation_surface(cp: &Array2<Complex64>) -> Array2<f64> {
    ifft2_real(cp)
}

/// The angular correlation vector: the surface reduced over ring shifts.
pub fn correlation_1d(cp: &Array2<Complex64>, reduction: Reduction) -> Vec<f64> {
    let surface = correlation_surface(cp);
    let (h, w) = surface.dim();
    match reduction {
        Reduction::RingZero => (0..w).map(|x| surface[[0, x]]).collect(),
        Reduction::MaxOverRings => (0..w)
            .map(|x| (0..h).map(|y| surface[[y, x]]).fold(f64::NEG_INFINITY, f64::max))
            .collect(),
    }
}

fn softmax(corr: &[f64], scale: f64, bias: f64) -> Vec<f64> {
    let max_logit = corr
        .iter()
        .map(|c| scale * c + bias)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = corr
        .iter()
        .map(|c| (scale * c + bias - max_logit).exp())
        .collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    probs
}

/// Compute the softmax distribution over shift bins.
pub fn correlation_distribution(corr: &[f64], scale: f64, bias: f64) -> CorrelationDistribution {
    CorrelationDistribution {
        probs: softmax(corr, scale, bias),
        scale,
        bias,
    }
}

/// Differentiable yaw: softmax over the correlation, then the circular
/// expectation of the shift angle around the argmax bin (the first
/// trigonometric moment, so a distribution symmetric about some bin
/// yields that bin's angle exactly).
pub fn softmax_expectation_yaw(
    corr: &[f64],
    scale: f64,
    bias: f64,
    degeneracy_threshold: f64,
) -> Result<(YawEstimate, CorrelationDistribution)> {
    let w = corr.len();
    let sharp = sharpness(corr);
    if sharp.is_nan() || sharp < degeneracy_threshold {
        return Err(Error::DegenerateDistribution {
            sharpness: sharp,
            threshold: degeneracy_threshold,
        });
    }
    let peak = argmax(corr);
    let dist = correlation_distribution(corr, scale, bias);
    let step = std::f64::consts::TAU / w as f64;
    let mut s = 0.0;
    let mut c = 0.0;
    for (m, &p) in dist.probs.iter().enumerate() {
        let alpha = (m as f64 - peak as f64) * step;
        s += p * alpha.sin();
        c += p * alpha.cos();
    }
    if s * s + c * c < 1e-24 {
        return Err(Error::DegenerateDistribution {
            sharpness: sharp,
            threshold: degeneracy_threshold,
        });
    }
    let offset_bins = s.atan2(c) / step;
    let yaw = (peak as f64 + offset_bins) * 360.0 / w as f64;
    Ok((
        YawEstimate {
            yaw_deg: yaw.rem_euclid(360.0),
            bin_index: peak,
            peak_sharpness: sharp,
        },
        dist,
    ))
}

/// Gradients of the expectation yaw: `(d_corr, d_scale, d_bias)` times
/// the scalar `upstream`. The bias shifts all logits equally, so its
/// gradient is identically zero.
pub fn softmax_expectation_backward(
    corr: &[f64],
    scale: f64,
    bias: f64,
    degeneracy_threshold: f64,
    upstream: f64,
) -> Result<(Vec<f64>, f64, f64)> {
    let w = corr.len();
    let sharp = sharpness(corr);
    if sharp.is_nan() || sharp < degeneracy_threshold {
        return Err(Error::DegenerateDistribution {
            sharpness: sharp,
            threshold: degeneracy_threshold,
        });
    }
    let peak = argmax(corr);
    let probs = softmax(corr, scale, bias);
    let step = std::f64::consts::TAU / w as f64;
    let (mut s, mut c) = (0.0, 0.0);
    let mut mean_logit_input = 0.0;
    for (m, &p) in probs.iter().enumerate() {
        let alpha = (m as f64 - peak as f64) * step;
        s += p * alpha.sin();
        c += p * alpha.cos();
        mean_logit_input += p * corr[m];
    }
    let r2 = s * s + c * c;
    if r2 < 1e-24 {
        return Err(Error::DegenerateDistribution {
            sharpness: sharp,
            threshold: degeneracy_threshold,
        });
    }
    // theta_deg = peak*step_deg + (180/pi) * atan2(S, C).
    let rad_to_deg = 180.0 / std::f64::consts::PI;
    let mut d_corr = vec![0.0f64; w];
    let mut s_scale = 0.0;
    let mut c_scale = 0.0;
    for (m, &p) in probs.iter().enumerate() {
        let alpha = (m as f64 - peak as f64) * step;
        let (sin_a, cos_a) = alpha.sin_cos();
        d_corr[m] = upstream * rad_to_deg * scale * p * (c * sin_a - s * cos_a) / r2;
        let centered = corr[m] - mean_logit_input;
        s_scale += sin_a * p * centered;
        c_scale += cos_a * p * centered;
    }
    let d_scale = upstream * rad_to_deg * (c * s_scale - s * c_scale) / r2;
    Ok((d_corr, d_scale, 0.0))
}

/// The composed pipeline: spectra, cross-power, angular correlation, and
/// both the argmax and expectation estimates.
pub fn estimate_yaw(
    gq: &FeatureMap,
    gs: &FeatureMap,
    cfg: &YawSolverConfig,
) -> Result<YawSolution> {
    check_same_shape(gq, gs)?;
    let sq = fft2_per_channel(gq);
    let ss = fft2_per_channel(gs);
    // Conjugate the query side so the correlation index is query-to-scan.
    let cp = cross_power(&ss, &sq, cfg.normalized)?;
    let corr = correlation_1d(&cp, cfg.reduction);
    let w = corr.len();

    let bin = argmax(&corr);
    let sharp = sharpness(&corr);
    let argmax_est = YawEstimate {
        yaw_deg: bin as f64 * 360.0 / w as f64,
        bin_index: bin,
        peak_sharpness: sharp,
    };

    let scale = match cfg.scale {
        Some(s) => s,
        None => {
            let mean = corr.iter().sum::<f64>() / w as f64;
            let var = corr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
            let sd = var.sqrt();
            if sd < 1e-300 {
                return Err(Error::DegenerateDistribution {
                    sharpness: sharp,
                    threshold: cfg.degeneracy_threshold,
                });
            }
            10.0 / sd
        }
    };
    let (expectation, distribution) =
        softmax_expectation_yaw(&corr, scale, cfg.bias, cfg.degeneracy_threshold)?;
    Ok(YawSolution {
        argmax: argmax_est,
        expectation,
        distribution,
        correlation: corr,
    })
}
