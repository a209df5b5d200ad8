//! Central-difference verification of every analytic gradient path,
//! runnable as `polarloc gradcheck`. Instances are seeded and built to
//! stay away from relu/hinge kinks so the finite differences are valid.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polarloc_core::bev::{BevConfig, PolarBev};
use polarloc_core::correlate::{
    softmax_expectation_backward, softmax_expectation_yaw, CorrelationDistribution,
};
use polarloc_core::features::{
    feature_backward, feature_forward, Activation, FeatureParams, LayerSpec,
};
use polarloc_core::learn::{joint_loss, quadruplet_loss, rotation_loss, LossConfig, TrainingTuple};
use polarloc_core::spectrum::{CropConfig, CropMode, Signature};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub worst_rel_err: f64,
    pub threshold: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst_rel_err < self.threshold
    }
}

fn rel_err(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / (fd.abs() + analytic.abs()).max(1e-6)
}

fn dense_bev(h: usize, w: usize, c: usize, seed: u64) -> PolarBev {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bev = PolarBev::zeros(BevConfig {
        rings: h,
        sectors: w,
        layers: c,
        ..BevConfig::default()
    });
    for v in bev.cells.iter_mut() {
        *v = rng.random_range(0.1..1.0);
    }
    bev
}

/// The layer configurations every build must pass: the default
/// two-layer architecture plus degenerate and asymmetric kernels.
fn feature_config_set() -> Vec<Vec<LayerSpec>> {
    vec![
        vec![
            LayerSpec {
                kernel_h: 3,
                kernel_w: 3,
                c_out: 8,
                activation: Activation::Relu,
            },
            LayerSpec {
                kernel_h: 3,
                kernel_w: 3,
                c_out: 4,
                activation: Activation::Identity,
            },
        ],
        vec![LayerSpec {
            kernel_h: 1,
            kernel_w: 1,
            c_out: 2,
            activation: Activation::Identity,
        }],
        vec![
            LayerSpec {
                kernel_h: 1,
                kernel_w: 3,
                c_out: 3,
                activation: Activation::Relu,
            },
            LayerSpec {
                kernel_h: 3,
                kernel_w: 1,
                c_out: 2,
                activation: Activation::Identity,
            },
        ],
    ]
}

/// Seeded parameter draw, re-rolled until every relu pre-activation sits
/// well clear of zero so the central differences stay valid.
fn kink_free_params(
    input_channels: usize,
    specs: &[LayerSpec],
    bevs: &[&PolarBev],
    seed: u64,
) -> FeatureParams {
    for attempt in 0..200u64 {
        let mut params =
            FeatureParams::glorot(input_channels, specs, seed + 1000 * attempt).unwrap();
        for layer in params.layers.iter_mut() {
            layer.bias.fill(0.05);
        }
        let margin = bevs
            .iter()
            .map(|b| polarloc_core::features::relu_kink_margin(b, &params).unwrap())
            .fold(f64::INFINITY, f64::min);
        if margin > 1e-3 {
            return params;
        }
    }
    panic!("no kink-free parameter draw after 200 attempts");
}

fn check_feature_layers(seed: u64) -> CheckResult {
    let input_channels = 3;
    let bev = dense_bev(10, 18, input_channels, seed);
    let mut worst: f64 = 0.0;
    for (ci, specs) in feature_config_set().iter().enumerate() {
        let params = kink_free_params(input_channels, specs, &[&bev], seed + ci as u64);
        let out0 = feature_forward(&bev, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100 + ci as u64);
        let mut upstream = Array3::zeros(out0.values.dim());
        for v in upstream.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let loss = |p: &FeatureParams| -> f64 {
            feature_forward(&bev, p)
                .unwrap()
                .values
                .iter()
                .zip(upstream.iter())
                .map(|(a, b)| a * b)
                .sum()
        };
        let (grads, _) = feature_backward(&bev, &params, &upstream).unwrap();
        let h = 1e-4;
        for li in 0..params.layers.len() {
            let n = params.layers[li].weights.len();
            for flat in (0..n).step_by(3) {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.layers[li].weights.as_slice_mut().unwrap()[flat] += h;
                minus.layers[li].weights.as_slice_mut().unwrap()[flat] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = grads.layers[li].weights.as_slice().unwrap()[flat];
                worst = worst.max(rel_err(fd, an));
            }
            for b in 0..params.layers[li].bias.len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.layers[li].bias[b] += h;
                minus.layers[li].bias[b] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                worst = worst.max(rel_err(fd, grads.layers[li].bias[b]));
            }
        }
    }
    CheckResult {
        name: "feature_layers",
        worst_rel_err: worst,
        threshold: 1e-4,
    }
}

fn check_softmax_expectation(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 40usize;
    let mut corr: Vec<f64> = (0..w).map(|_| rng.random_range(0.0..0.4)).collect();
    corr[13] += 2.0;
    let scale = 2.5;
    let bias = 0.2;
    let (d_corr, d_scale, d_bias) =
        softmax_expectation_backward(&corr, scale, bias, 1.05, 1.0).unwrap();
    let f = |c: &[f64], sc: f64| {
        softmax_expectation_yaw(c, sc, bias, 1.05)
            .unwrap()
            .0
            .yaw_deg
    };
    let h = 1e-5;
    let mut worst = d_bias.abs(); // must be exactly zero
    for i in 0..w {
        let mut plus = corr.clone();
        let mut minus = corr.clone();
        plus[i] += h;
        minus[i] -= h;
        let fd = (f(&plus, scale) - f(&minus, scale)) / (2.0 * h);
        worst = worst.max(rel_err(fd, d_corr[i]));
    }
    let fd = (f(&corr, scale + h) - f(&corr, scale - h)) / (2.0 * h);
    worst = worst.max(rel_err(fd, d_scale));
    CheckResult {
        name: "softmax_expectation",
        worst_rel_err: worst,
        threshold: 1e-4,
    }
}

fn check_quadruplet(seed: u64, cfg: &LossConfig) -> CheckResult {
    let dim = 6;
    let mut instance = None;
    for attempt in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000 * attempt);
        let mut mk = |offset: f64| Signature {
            values: (0..dim)
                .map(|_| rng.random_range(-0.8..0.8) + offset)
                .collect(),
        };
        let dq = mk(0.0);
        let ds = mk(0.15);
        let negs_i = vec![mk(0.5), mk(-0.7)];
        let negs_j = vec![mk(1.0)];
        let sq = |a: &Signature, b: &Signature| -> f64 {
            a.values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        };
        let d_qs = sq(&dq, &ds);
        let mut margin = f64::INFINITY;
        for ni in &negs_i {
            margin = margin.min((d_qs - sq(&dq, ni) + cfg.alpha1).abs());
            margin = margin.min((d_qs - sq(ni, &negs_j[0]) + cfg.alpha2).abs());
        }
        if margin > 1e-3 {
            instance = Some((dq, ds, negs_i, negs_j));
            break;
        }
    }
    let (dq, ds, negs_i, negs_j) = instance.expect("no hinge-free quadruplet after 200 attempts");
    let (_, grads) = quadruplet_loss(&dq, &ds, &negs_i, &negs_j, cfg).unwrap();
    let eval = |q: &Signature, s: &Signature, ni: &[Signature], nj: &[Signature]| {
        quadruplet_loss(q, s, ni, nj, cfg).unwrap().0
    };
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for k in 0..dim {
        let mut plus = dq.clone();
        let mut minus = dq.clone();
        plus.values[k] += h;
        minus.values[k] -= h;
        let fd = (eval(&plus, &ds, &negs_i, &negs_j) - eval(&minus, &ds, &negs_i, &negs_j))
            / (2.0 * h);
        worst = worst.max(rel_err(fd, grads.d_query[k]));

        let mut plus = ds.clone();
        let mut minus = ds.clone();
        plus.values[k] += h;
        minus.values[k] -= h;
        let fd = (eval(&dq, &plus, &negs_i, &negs_j) - eval(&dq, &minus, &negs_i, &negs_j))
            / (2.0 * h);
        worst = worst.max(rel_err(fd, grads.d_positive[k]));

        let mut plus = negs_j[0].clone();
        let mut minus = negs_j[0].clone();
        plus.values[k] += h;
        minus.values[k] -= h;
        let fd = (eval(&dq, &ds, &negs_i, &[plus]) - eval(&dq, &ds, &negs_i, &[minus]))
            / (2.0 * h);
        worst = worst.max(rel_err(fd, grads.d_negs_j[0][k]));
    }
    CheckResult {
        name: "quadruplet_loss",
        worst_rel_err: worst,
        threshold: 1e-4,
    }
}

fn check_rotation_loss(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 24usize;
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let dist = CorrelationDistribution {
        probs: raw.iter().map(|v| v / total).collect(),
        scale: 1.0,
        bias: 0.0,
    };
    let yaw = 7.0 * 360.0 / n as f64;
    let (_, grad) = rotation_loss(&dist, yaw).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, g) in grad.iter().enumerate() {
        let mut plus = dist.clone();
        let mut minus = dist.clone();
        plus.probs[k] += h;
        minus.probs[k] -= h;
        let fd =
            (rotation_loss(&plus, yaw).unwrap().0 - rotation_loss(&minus, yaw).unwrap().0)
                / (2.0 * h);
        worst = worst.max(rel_err(fd, *g));
    }
    CheckResult {
        name: "rotation_loss",
        worst_rel_err: worst,
        threshold: 1e-4,
    }
}

/// Hinge arguments of the quadruplet term for this tuple under these
/// params; all must sit away from zero for central differences.
fn hinge_margin(
    tuple: &TrainingTuple,
    params: &FeatureParams,
    crop: &CropConfig,
    cfg: &LossConfig,
) -> f64 {
    let sig = |bev: &PolarBev| {
        let map = feature_forward(bev, params).unwrap();
        polarloc_core::spectrum::magnitude_signature(
            &polarloc_core::spectrum::fft2_per_channel(&map),
            crop,
        )
        .unwrap()
    };
    let sq = |a: &Signature, b: &Signature| -> f64 {
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let dq = sig(&tuple.query);
    let ds = sig(&tuple.positive);
    let negs: Vec<Signature> = tuple.negatives.iter().map(&sig).collect();
    let d_qs = sq(&dq, &ds);
    let mut margin = f64::INFINITY;
    let split = negs.len() - 1;
    for ni in &negs[..split] {
        margin = margin.min((d_qs - sq(&dq, ni) + cfg.alpha1).abs());
        margin = margin.min((d_qs - sq(ni, &negs[split]) + cfg.alpha2).abs());
    }
    margin
}

fn check_joint(seed: u64, cfg: &LossConfig) -> CheckResult {
    let specs = [
        LayerSpec {
            kernel_h: 3,
            kernel_w: 3,
            c_out: 3,
            activation: Activation::Relu,
        },
        LayerSpec {
            kernel_h: 3,
            kernel_w: 3,
            c_out: 2,
            activation: Activation::Identity,
        },
    ];
    let crop = CropConfig {
        crop_h: 4,
        crop_w: 4,
        mode: CropMode::LowPass,
    };
    let mut chosen = None;
    for attempt in 0..200u64 {
        let base = seed + 10_000 * attempt;
        let query = dense_bev(8, 16, 1, base);
        let tuple = TrainingTuple {
            positive: polarloc_core::bev::rotate_polar_bev(&query, 3),
            query,
            negatives: vec![dense_bev(8, 16, 1, base + 7), dense_bev(8, 16, 1, base + 8)],
            true_yaw_deg: 3.0 * 360.0 / 16.0,
        };
        let bevs = [
            &tuple.query,
            &tuple.positive,
            &tuple.negatives[0],
            &tuple.negatives[1],
        ];
        let params = kink_free_params(1, &specs, &bevs, base + 1);
        if hinge_margin(&tuple, &params, &crop, cfg) > 1e-3 {
            chosen = Some((tuple, params));
            break;
        }
    }
    let (tuple, params) = chosen.expect("no kink-free joint instance after 200 attempts");
    let scale = 0.8;
    let bias = 0.1;
    let (_, grads) = joint_loss(&tuple, &params, scale, bias, &crop, cfg).unwrap();
    let eval = |p: &FeatureParams, sc: f64| {
        joint_loss(&tuple, p, sc, bias, &crop, cfg).unwrap().0.total
    };
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for li in 0..params.layers.len() {
        let n = params.layers[li].weights.len();
        for flat in (0..n).step_by(4) {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus.layers[li].weights.as_slice_mut().unwrap()[flat] += h;
            minus.layers[li].weights.as_slice_mut().unwrap()[flat] -= h;
            let fd = (eval(&plus, scale) - eval(&minus, scale)) / (2.0 * h);
            let an = grads.features.layers[li].weights.as_slice().unwrap()[flat];
            worst = worst.max(rel_err(fd, an));
        }
    }
    let fd = (eval(&params, scale + h) - eval(&params, scale - h)) / (2.0 * h);
    worst = worst.max(rel_err(fd, grads.scale));
    CheckResult {
        name: "joint_loss_end_to_end",
        worst_rel_err: worst,
        threshold: 1e-3,
    }
}

/// Run the whole suite with one base seed.
pub fn run_all(cfg: &LossConfig, seed: u64) -> Vec<CheckResult> {
    vec![
        check_feature_layers(seed),
        check_softmax_expectation(seed + 1),
        check_quadruplet(seed + 2, cfg),
        check_rotation_loss(seed + 3),
        check_joint(seed + 4, cfg),
    ]
}
