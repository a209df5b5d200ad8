//! Training objectives and the descent loop.
//!
//! Two heads share one feature backbone: the quadruplet loss pulls
//! signatures of revisited places together and pushes two kinds of
//! negative pairs apart, while the rotation loss supervises the softmax
//! correlation distribution with a cross-entropy peak at the true yaw
//! bin. Both are combined as `total = quad + lambda * rot` and
//! backpropagated analytically into the convolution stack and the
//! softmax scale/bias.

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex64;

use crate::bev::PolarBev;
use crate::correlate::CorrelationDistribution;
use crate::error::{Error, Result};
use crate::features::{feature_backward, feature_forward, FeatureGrads, FeatureParams};
use crate::spectrum::{
    fft2_adjoint, fft2_per_channel, fft2_real_grid, ifft2_real, signature_bin_map,
    magnitude_signature, CropConfig, Signature, Spectrum,
};

/// One supervision sample: a query grid, a positive revisit grid, at
/// least two negatives, and the query-to-positive yaw.
#[derive(Debug, Clone)]
pub struct TrainingTuple {
    pub query: PolarBev,
    pub positive: PolarBev,
    pub negatives: Vec<PolarBev>,
    pub true_yaw_deg: f64,
}

/// Margins, loss balance and descent hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Train the softmax scale/bias alongside the features.
    pub train_softmax: bool,
    /// Re-draw negatives as the nearest non-positive pool signatures
    /// starting from this epoch index, if set.
    pub mine_after: Option<usize>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha1: 0.5,
            alpha2: 0.2,
            lambda: 1.0,
            learning_rate: 1e-5,
            momentum: 0.0,
            train_softmax: true,
            mine_after: None,
        }
    }
}

/// Gradients of [`quadruplet_loss`] with respect to every signature.
#[derive(Debug, Clone)]
pub struct QuadrupletGrads {
    pub d_query: Vec<f64>,
    pub d_positive: Vec<f64>,
    pub d_negs_i: Vec<Vec<f64>>,
    pub d_negs_j: Vec<Vec<f64>>,
}

fn check_len(expected: usize, sig: &Signature) -> Result<()> {
    if sig.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: sig.len(),
        });
    }
    Ok(())
}

fn sq_dist(a: &Signature, b: &Signature) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Hinge quadruplet loss over one query/positive pair, with the first
/// term summed over `negs_i` and the second over all `(i, j)` pairs of
/// `negs_i x negs_j`. Subgradient 0 exactly at the hinge.
pub fn quadruplet_loss(
    dq: &Signature,
    ds: &Signature,
    negs_i: &[Signature],
    negs_j: &[Signature],
    cfg: &LossConfig,
) -> Result<(f64, QuadrupletGrads)> {
    if negs_i.is_empty() || negs_j.is_empty() {
        return Err(Error::InvalidConfig(
            "quadruplet loss needs non-empty negative lists".into(),
        ));
    }
    let len = dq.len();
    check_len(len, ds)?;
    for n in negs_i.iter().chain(negs_j) {
        check_len(len, n)?;
    }

    let d_qs = sq_dist(dq, ds);
    let mut loss = 0.0;
    let mut g = QuadrupletGrads {
        d_query: vec![0.0; len],
        d_positive: vec![0.0; len],
        d_negs_i: vec![vec![0.0; len]; negs_i.len()],
        d_negs_j: vec![vec![0.0; len]; negs_j.len()],
    };
    // Accumulated multiplier on the d(q,s)^2 term across active hinges.
    let mut qs_coeff = 0.0;

    for (i, ni) in negs_i.iter().enumerate() {
        let margin = d_qs - sq_dist(dq, ni) + cfg.alpha1;
        if margin > 0.0 {
            loss += margin;
            qs_coeff += 1.0;
            for k in 0..len {
                let diff = dq.values[k] - ni.values[k];
                g.d_query[k] -= 2.0 * diff;
                g.d_negs_i[i][k] += 2.0 * diff;
            }
        }
    }
    for (i, ni) in negs_i.iter().enumerate() {
        for (j, nj) in negs_j.iter().enumerate() {
            let margin = d_qs - sq_dist(ni, nj) + cfg.alpha2;
            if margin > 0.0 {
                loss += margin;
                qs_coeff += 1.0;
                for k in 0..len {
                    let diff = ni.values[k] - nj.values[k];
                    g.d_negs_i[i][k] -= 2.0 * diff;
                    g.d_negs_j[j][k] += 2.0 * diff;
                }
            }
        }
    }
    for k in 0..len {
        let diff = dq.values[k] - ds.values[k];
        g.d_query[k] += qs_coeff * 2.0 * diff;
        g.d_positive[k] -= qs_coeff * 2.0 * diff;
    }
    Ok((loss, g))
}

/// Snap a yaw angle to its correlation bin.
pub fn yaw_to_bin(yaw_deg: f64, sectors: usize) -> usize {
    let width = 360.0 / sectors as f64;
    ((yaw_deg / width).round() as i64).rem_euclid(sectors as i64) as usize
}

/// Cross-entropy against the one-hot bin of the true yaw:
/// `-log p(bin*)`. Returns the loss and its gradient w.r.t. `p`.
pub fn rotation_loss(
    dist: &CorrelationDistribution,
    true_yaw_deg: f64,
) -> Result<(f64, Vec<f64>)> {
    let sectors = dist.probs.len();
    let bin = yaw_to_bin(true_yaw_deg, sectors);
    let p = dist.probs[bin];
    if p < 1e-300 {
        return Err(Error::ZeroProbabilityAtTarget { bin });
    }
    let mut grad = vec![0.0; sectors];
    grad[bin] = -1.0 / p;
    Ok((-p.ln(), grad))
}

/// Joint loss value breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLosses {
    pub quadruplet: f64,
    pub rotation: f64,
    pub total: f64,
}

/// Gradients of the joint loss for one tuple.
#[derive(Debug, Clone)]
pub struct JointGrads {
    pub features: FeatureGrads,
    pub scale: f64,
    pub bias: f64,
}

struct Head {
    map_dim: (usize, usize, usize),
    spectrum: Spectrum,
    signature: Signature,
}

fn forward_head(bev: &PolarBev, params: &FeatureParams, crop: &CropConfig) -> Result<Head> {
    let map = feature_forward(bev, params)?;
    let spectrum = fft2_per_channel(&map);
    let signature = magnitude_signature(&spectrum, crop)?;
    Ok(Head {
        map_dim: map.values.dim(),
        spectrum,
        signature,
    })
}

/// Route a signature-space gradient back to the feature grid through the
/// magnitude and the DFT.
fn signature_grad_to_map(
    head: &Head,
    bin_map: &[(usize, usize, usize)],
    d_sig: &[f64],
) -> Array3<f64> {
    let mut gbar: Array3<Complex64> = Array3::default(head.spectrum.bins.dim());
    for (slot, &(r, c, ch)) in bin_map.iter().enumerate() {
        let x = head.spectrum.bins[[r, c, ch]];
        let mag = x.norm();
        if mag > 1e-300 {
            let s = d_sig[slot] / mag;
            gbar[[r, c, ch]] += Complex64::new(s * x.re, s * x.im);
        }
    }
    fft2_adjoint(&gbar)
}

/// Full forward/backward through both heads for one tuple.
///
/// The rotation head correlates query against positive at ring shift 0;
/// its cross-entropy gradients and the quadruplet's signature gradients
/// accumulate into the shared feature parameters.
pub fn joint_loss(
    tuple: &TrainingTuple,
    params: &FeatureParams,
    scale: f64,
    bias: f64,
    crop: &CropConfig,
    cfg: &LossConfig,
) -> Result<(JointLosses, JointGrads)> {
    if tuple.negatives.len() < 2 {
        return Err(Error::InvalidConfig(
            "a training tuple needs at least two negatives".into(),
        ));
    }
    let q_head = forward_head(&tuple.query, params, crop)?;
    let s_head = forward_head(&tuple.positive, params, crop)?;
    let neg_heads: Vec<Head> = tuple
        .negatives
        .iter()
        .map(|b| forward_head(b, params, crop))
        .collect::<Result<_>>()?;

    // Quadruplet term: the last negative plays the extra-negative role.
    let split = neg_heads.len() - 1;
    let negs_i: Vec<Signature> = neg_heads[..split]
        .iter()
        .map(|h| h.signature.clone())
        .collect();
    let negs_j = vec![neg_heads[split].signature.clone()];
    let (quad, quad_grads) =
        quadruplet_loss(&q_head.signature, &s_head.signature, &negs_i, &negs_j, cfg)?;

    let (h, w, _c) = q_head.map_dim;
    let bin_map = signature_bin_map(h, w, q_head.map_dim.2, crop)?;

    let mut d_map_q = signature_grad_to_map(&q_head, &bin_map, &quad_grads.d_query);
    let mut d_map_s = signature_grad_to_map(&s_head, &bin_map, &quad_grads.d_positive);
    let mut d_map_negs: Vec<Array3<f64>> = Vec::with_capacity(neg_heads.len());
    for (i, head) in neg_heads.iter().enumerate() {
        let d_sig = if i < split {
            &quad_grads.d_negs_i[i]
        } else {
            &quad_grads.d_negs_j[0]
        };
        d_map_negs.push(signature_grad_to_map(head, &bin_map, d_sig));
    }

    // Rotation head: softmax cross-entropy on the angular correlation.
    let mut rot = 0.0;
    let mut d_scale = 0.0;
    let mut d_bias = 0.0;
    if cfg.lambda != 0.0 {
        let cp = cross_power_grid(&s_head.spectrum, &q_head.spectrum);
        let surface = ifft2_real(&cp);
        let corr: Vec<f64> = (0..w).map(|x| surface[[0, x]]).collect();
        let bin = yaw_to_bin(tuple.true_yaw_deg, w);

        // Log-space cross-entropy of softmax(scale*corr + bias) at `bin`.
        let max_logit = corr
            .iter()
            .map(|c| scale * c + bias)
            .fold(f64::NEG_INFINITY, f64::max);
        let exp_sum: f64 = corr.iter().map(|c| (scale * c + bias - max_logit).exp()).sum();
        let log_norm = max_logit + exp_sum.ln();
        rot = log_norm - (scale * corr[bin] + bias);

        let probs: Vec<f64> = corr
            .iter()
            .map(|c| (scale * c + bias - log_norm).exp())
            .collect();
        let mean_corr: f64 = probs.iter().zip(&corr).map(|(p, c)| p * c).sum();
        // d rot / d corr_m = scale * (p_m - one_hot_m); chain lambda here.
        let mut u = Array2::zeros((h, w));
        for x in 0..w {
            let delta = if x == bin { 1.0 } else { 0.0 };
            u[[0, x]] = cfg.lambda * scale * (probs[x] - delta);
        }
        d_scale = cfg.lambda * (mean_corr - corr[bin]);
        d_bias = 0.0;

        // Back through the normalized inverse transform and the
        // channel-summed conjugate product into both spectra.
        let n = (h * w) as f64;
        let gbar_cp = fft2_real_grid(&u).mapv(|v| v / n);
        let (_, _, c) = q_head.map_dim;
        let mut gbar_s: Array3<Complex64> = Array3::default((h, w, c));
        let mut gbar_q: Array3<Complex64> = Array3::default((h, w, c));
        for r in 0..h {
            for cc in 0..w {
                let g = gbar_cp[[r, cc]];
                for ch in 0..c {
                    gbar_s[[r, cc, ch]] = g * q_head.spectrum.bins[[r, cc, ch]];
                    gbar_q[[r, cc, ch]] = g.conj() * s_head.spectrum.bins[[r, cc, ch]];
                }
            }
        }
        let d_map_s_rot = fft2_adjoint(&gbar_s);
        let d_map_q_rot = fft2_adjoint(&gbar_q);
        d_map_q.zip_mut_with(&d_map_q_rot, |a, b| *a += b);
        d_map_s.zip_mut_with(&d_map_s_rot, |a, b| *a += b);
    }

    // Accumulate into the shared backbone.
    let mut grads = FeatureGrads::zeros_like(params);
    let (gq, _) = feature_backward(&tuple.query, params, &d_map_q)?;
    grads.add_assign(&gq);
    let (gs, _) = feature_backward(&tuple.positive, params, &d_map_s)?;
    grads.add_assign(&gs);
    for (bev, d_map) in tuple.negatives.iter().zip(&d_map_negs) {
        let (gn, _) = feature_backward(bev, params, d_map)?;
        grads.add_assign(&gn);
    }

    Ok((
        JointLosses {
            quadruplet: quad,
            rotation: rot,
            total: quad + cfg.lambda * rot,
        },
        JointGrads {
            features: grads,
            scale: d_scale,
            bias: d_bias,
        },
    ))
}

/// Channel-summed `scan * conj(query)` cross-power over raw spectra.
fn cross_power_grid(scan: &Spectrum, query: &Spectrum) -> Array2<Complex64> {
    let (h, w, c) = scan.bins.dim();
    let mut cp = Array2::default((h, w));
    for r in 0..h {
        for cc in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for ch in 0..c {
                acc += scan.bins[[r, cc, ch]] * query.bins[[r, cc, ch]].conj();
            }
            cp[[r, cc]] = acc;
        }
    }
    cp
}

/// `n` distinct column shifts of a grid (always including 0) with their
/// yaw labels, drawn without replacement from a seeded RNG.
pub fn n_way_augment(
    bev: &PolarBev,
    n: usize,
    seed: u64,
) -> Result<Vec<(PolarBev, f64)>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let sectors = bev.config.sectors;
    if n == 0 || n > sectors {
        return Err(Error::NTooLarge { n, sectors });
    }
    let width = bev.config.sector_width_deg();
    let mut shifts: Vec<usize> = (1..sectors).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    shifts.shuffle(&mut rng);
    let mut out = Vec::with_capacity(n);
    out.push((bev.clone(), 0.0));
    for &k in shifts.iter().take(n - 1) {
        out.push((crate::bev::rotate_polar_bev(bev, k as i64), k as f64 * width));
    }
    Ok(out)
}

/// Per-epoch telemetry (means over the tuple set).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub quad_loss: f64,
    pub rot_loss: f64,
    pub total: f64,
    pub grad_norm: f64,
}

pub const TELEMETRY_HEADER: &str = "epoch,quad_loss,rot_loss,total,grad_norm";

/// Render the per-epoch telemetry as CSV, one row per epoch.
pub fn telemetry_csv(stats: &[EpochStats]) -> String {
    let mut out = String::from(TELEMETRY_HEADER);
    out.push('\n');
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.epoch, s.quad_loss, s.rot_loss, s.total, s.grad_norm
        ));
    }
    out
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: FeatureParams,
    pub scale: f64,
    pub bias: f64,
    pub telemetry: Vec<EpochStats>,
}

/// Plain (optionally momentum) gradient descent over the tuple set,
/// one update per tuple per epoch, in order. Deterministic given the
/// inputs; aborts with diagnostics if the loss leaves the reals.
pub fn train(
    tuples: &[TrainingTuple],
    params: FeatureParams,
    softmax_init: (f64, f64),
    crop: &CropConfig,
    cfg: &LossConfig,
    epochs: usize,
) -> Result<TrainResult> {
    if tuples.is_empty() {
        return Err(Error::InvalidConfig("empty training stream".into()));
    }
    let mut params = params;
    let (mut scale, mut bias) = softmax_init;
    let mut velocity = FeatureGrads::zeros_like(&params);
    let mut v_scale = 0.0;
    let mut v_bias = 0.0;
    let mut telemetry = Vec::with_capacity(epochs);
    let mut tuples: Vec<TrainingTuple> = tuples.to_vec();

    for epoch in 0..epochs {
        if let Some(after) = cfg.mine_after {
            if epoch >= after {
                remine_negatives(&mut tuples, &params, crop)?;
            }
        }
        let mut quad_sum = 0.0;
        let mut rot_sum = 0.0;
        let mut total_sum = 0.0;
        let mut norm_sum = 0.0;
        for (step, tuple) in tuples.iter().enumerate() {
            let (losses, grads) = joint_loss(tuple, &params, scale, bias, crop, cfg)?;
            if !losses.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    quad: losses.quadruplet,
                    rot: losses.rotation,
                });
            }
            quad_sum += losses.quadruplet;
            rot_sum += losses.rotation;
            total_sum += losses.total;
            norm_sum += grads.features.l2_norm();

            if cfg.momentum != 0.0 {
                velocity.scale(cfg.momentum);
                velocity.add_assign(&grads.features);
                params.apply_step(&velocity, cfg.learning_rate);
            } else {
                params.apply_step(&grads.features, cfg.learning_rate);
            }
            if cfg.train_softmax {
                if cfg.momentum != 0.0 {
                    v_scale = cfg.momentum * v_scale + grads.scale;
                    v_bias = cfg.momentum * v_bias + grads.bias;
                    scale -= cfg.learning_rate * v_scale;
                    bias -= cfg.learning_rate * v_bias;
                } else {
                    scale -= cfg.learning_rate * grads.scale;
                    bias -= cfg.learning_rate * grads.bias;
                }
            }
        }
        let n = tuples.len() as f64;
        telemetry.push(EpochStats {
            epoch,
            quad_loss: quad_sum / n,
            rot_loss: rot_sum / n,
            total: total_sum / n,
            grad_norm: norm_sum / n,
        });
    }
    Ok(TrainResult {
        params,
        scale,
        bias,
        telemetry,
    })
}

/// Batch-local hard-negative mining: each tuple's negatives become the
/// pool grids whose current signatures are nearest to the tuple's query,
/// excluding its own query and positive. Ties break by pool index.
fn remine_negatives(
    tuples: &mut [TrainingTuple],
    params: &FeatureParams,
    crop: &CropConfig,
) -> Result<()> {
    #[derive(Clone, Copy, PartialEq)]
    enum Role {
        Query(usize),
        Positive(usize),
        Negative,
    }
    let mut pool: Vec<(PolarBev, Role)> = Vec::new();
    for (t, tuple) in tuples.iter().enumerate() {
        pool.push((tuple.query.clone(), Role::Query(t)));
        pool.push((tuple.positive.clone(), Role::Positive(t)));
        for n in &tuple.negatives {
            pool.push((n.clone(), Role::Negative));
        }
    }
    let sigs: Vec<Signature> = pool
        .iter()
        .map(|(b, _)| Ok(forward_head(b, params, crop)?.signature))
        .collect::<Result<_>>()?;

    for (t, tuple) in tuples.iter_mut().enumerate() {
        let q_sig = forward_head(&tuple.query, params, crop)?.signature;
        let mut ranked: Vec<(f64, usize)> = pool
            .iter()
            .enumerate()
            .filter(|(_, (_, role))| !matches!(role, Role::Query(i) | Role::Positive(i) if *i == t))
            .map(|(idx, _)| (sq_dist(&q_sig, &sigs[idx]), idx))
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let k = tuple.negatives.len();
        tuple.negatives = ranked
            .iter()
            .take(k)
            .map(|&(_, idx)| pool[idx].0.clone())
            .collect();
    }
    Ok(())
}
