//! Learnable feature extraction over polar grids.
//!
//! A small stack of 2D convolutions maps a [`PolarBev`] to a
//! [`FeatureMap`] of the same spatial shape. Padding is circular along
//! the sector axis and zero along the ring axis: the sector axis is
//! topologically a circle, and circular padding is what makes the stack
//! commute exactly with column shifts. An empty stack is the identity.
//!
//! Gradients are exact reverse-mode; `relu` uses subgradient 0 at 0.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bev::PolarBev;
use crate::error::{Error, Result};

/// Dense per-cell features, `rings x sectors x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub values: Array3<f64>,
}

impl FeatureMap {
    pub fn shape(&self) -> (usize, usize, usize) {
        self.values.dim()
    }

    /// Circular shift along the sector axis, mirroring `rotate_polar_bev`.
    pub fn shift_columns(&self, shift_cols: i64) -> FeatureMap {
        let (h, w, c) = self.values.dim();
        let shift = shift_cols.rem_euclid(w as i64) as usize;
        let mut out = Array3::zeros((h, w, c));
        for y in 0..h {
            for x in 0..w {
                let src = (x + w - shift) % w;
                for ch in 0..c {
                    out[[y, x, ch]] = self.values[[y, src, ch]];
                }
            }
        }
        FeatureMap { values: out }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Identity),
            other => Err(Error::Format(format!("unknown activation code {other}"))),
        }
    }
}

/// One convolution layer: weights `kh x kw x c_in x c_out`, bias `c_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weights: Array4<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl ConvLayer {
    pub fn kernel(&self) -> (usize, usize) {
        let (kh, kw, _, _) = self.weights.dim();
        (kh, kw)
    }

    pub fn channels(&self) -> (usize, usize) {
        let (_, _, c_in, c_out) = self.weights.dim();
        (c_in, c_out)
    }
}

/// The full stack. An empty layer list is the identity mapping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureParams {
    pub layers: Vec<ConvLayer>,
}

/// Shape recipe for one layer of a seeded stack.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub c_out: usize,
    pub activation: Activation,
}

impl FeatureParams {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Seeded Glorot-uniform weights (bounds `±sqrt(6/(fan_in+fan_out))`),
    /// zero bias.
    pub fn glorot(input_channels: usize, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut c_in = input_channels;
        for spec in specs {
            if spec.kernel_h % 2 == 0 || spec.kernel_w % 2 == 0 {
                return Err(Error::InvalidConfig(format!(
                    "kernel dims must be odd, got {}x{}",
                    spec.kernel_h, spec.kernel_w
                )));
            }
            let fan_in = (spec.kernel_h * spec.kernel_w * c_in) as f64;
            let fan_out = (spec.kernel_h * spec.kernel_w * spec.c_out) as f64;
            let bound = (6.0 / (fan_in + fan_out)).sqrt();
            let mut weights = Array4::zeros((spec.kernel_h, spec.kernel_w, c_in, spec.c_out));
            for w in weights.iter_mut() {
                *w = rng.random_range(-bound..bound);
            }
            layers.push(ConvLayer {
                weights,
                bias: Array1::zeros(spec.c_out),
                activation: spec.activation,
            });
            c_in = spec.c_out;
        }
        Ok(Self { layers })
    }

    /// Two 3x3 layers, `input -> 8 -> 4`, relu then identity.
    pub fn default_stack(input_channels: usize, seed: u64) -> Self {
        Self::glorot(
            input_channels,
            &[
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
            seed,
        )
        .expect("default stack is valid")
    }

    pub fn output_channels(&self, input_channels: usize) -> usize {
        self.layers
            .last()
            .map(|l| l.channels().1)
            .unwrap_or(input_channels)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Gradient-descent step: `p -= lr * g`.
    pub fn apply_step(&mut self, grads: &FeatureGrads, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.zip_mut_with(&g.weights, |w, gw| *w -= lr * gw);
            layer.bias.zip_mut_with(&g.bias, |b, gb| *b -= lr * gb);
        }
    }
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Array4<f64>,
    pub bias: Array1<f64>,
}

impl FeatureGrads {
    pub fn zeros_like(params: &FeatureParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: Array4::zeros(l.weights.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &FeatureGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.zip_mut_with(&b.weights, |x, y| *x += y);
            a.bias.zip_mut_with(&b.bias, |x, y| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in self.layers.iter_mut() {
            l.weights.mapv_inplace(|v| v * factor);
            l.bias.mapv_inplace(|v| v * factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weights.iter().map(|v| v * v).sum::<f64>()
                    + l.bias.iter().map(|v| v * v).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn conv_layer_forward(input: &Array3<f64>, layer: &ConvLayer) -> Result<Array3<f64>> {
    let (h, w, c_in) = input.dim();
    let (kh, kw, lc_in, c_out) = layer.weights.dim();
    if lc_in != c_in {
        return Err(Error::ShapeMismatch {
            expected: format!("{lc_in} input channels"),
            got: format!("{c_in}"),
        });
    }
    let (ph, pw) = (kh / 2, kw / 2);
    let mut pre = Array3::zeros((h, w, c_out));
    for y in 0..h {
        for x in 0..w {
            for o in 0..c_out {
                let mut acc = layer.bias[o];
                for dy in 0..kh {
                    let yy = y as isize + dy as isize - ph as isize;
                    if yy < 0 || yy >= h as isize {
                        continue; // zero padding on the ring axis
                    }
                    for dx in 0..kw {
                        let xx = (x + dx + w - pw) % w; // circular sector axis
                        for i in 0..c_in {
                            acc += layer.weights[[dy, dx, i, o]] * input[[yy as usize, xx, i]];
                        }
                    }
                }
                pre[[y, x, o]] = acc;
            }
        }
    }
    Ok(pre)
}

struct ForwardTrace {
    /// Input of each layer, in order.
    layer_inputs: Vec<Array3<f64>>,
    /// Pre-activation of each layer.
    pre_activations: Vec<Array3<f64>>,
    output: Array3<f64>,
}

fn forward_trace(input: &Array3<f64>, params: &FeatureParams) -> Result<ForwardTrace> {
    let mut layer_inputs = Vec::with_capacity(params.layers.len());
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut current = input.clone();
    for layer in &params.layers {
        let pre = conv_layer_forward(&current, layer)?;
        let act = pre.mapv(|z| layer.activation.apply(z));
        layer_inputs.push(current);
        pre_activations.push(pre);
        current = act;
    }
    Ok(ForwardTrace {
        layer_inputs,
        pre_activations,
        output: current,
    })
}

/// Smallest |pre-activation| across relu layers for this input: the
/// distance to the nearest gradient kink. Infinite when nothing clips.
/// Finite-difference checks need this to exceed their step size.
pub fn relu_kink_margin(bev: &PolarBev, params: &FeatureParams) -> Result<f64> {
    let trace = forward_trace(&bev.cells, params)?;
    let mut margin = f64::INFINITY;
    for (layer, pre) in params.layers.iter().zip(&trace.pre_activations) {
        if layer.activation == Activation::Relu {
            for z in pre.iter() {
                margin = margin.min(z.abs());
            }
        }
    }
    Ok(margin)
}

/// Run the stack over a grid. Spatial shape is preserved.
pub fn feature_forward(bev: &PolarBev, params: &FeatureParams) -> Result<FeatureMap> {
    let trace = forward_trace(&bev.cells, params)?;
    Ok(FeatureMap {
        values: trace.output,
    })
}

/// Reverse-mode gradients of [`feature_forward`] for a scalar loss with
/// the given upstream gradient. Returns parameter gradients and the
/// gradient with respect to the input grid.
pub fn feature_backward(
    bev: &PolarBev,
    params: &FeatureParams,
    upstream: &Array3<f64>,
) -> Result<(FeatureGrads, Array3<f64>)> {
    let trace = forward_trace(&bev.cells, params)?;
    if upstream.dim() != trace.output.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", trace.output.dim()),
            got: format!("{:?}", upstream.dim()),
        });
    }
    let mut grads = FeatureGrads::zeros_like(params);
    let mut g = upstream.clone();

    for (idx, layer) in params.layers.iter().enumerate().rev() {
        let input = &trace.layer_inputs[idx];
        let pre = &trace.pre_activations[idx];
        let (h, w, c_in) = input.dim();
        let (kh, kw, _, c_out) = layer.weights.dim();
        let (ph, pw) = (kh / 2, kw / 2);

        // Chain through the activation.
        let mut gz = g;
        gz.zip_mut_with(pre, |gv, &z| *gv *= layer.activation.derivative(z));

        let lg = &mut grads.layers[idx];
        for o in 0..c_out {
            let mut bsum = 0.0;
            for y in 0..h {
                for x in 0..w {
                    bsum += gz[[y, x, o]];
                }
            }
            lg.bias[o] = bsum;
        }
        for dy in 0..kh {
            for dx in 0..kw {
                for i in 0..c_in {
                    for o in 0..c_out {
                        let mut acc = 0.0;
                        for y in 0..h {
                            let yy = y as isize + dy as isize - ph as isize;
                            if yy < 0 || yy >= h as isize {
                                continue;
                            }
                            for x in 0..w {
                                let xx = (x + dx + w - pw) % w;
                                acc += gz[[y, x, o]] * input[[yy as usize, xx, i]];
                            }
                        }
                        lg.weights[[dy, dx, i, o]] = acc;
                    }
                }
            }
        }

        // Gradient w.r.t. this layer's input.
        let mut gin = Array3::zeros((h, w, c_in));
        for y in 0..h {
            for x in 0..w {
                for i in 0..c_in {
                    let mut acc = 0.0;
                    for dy in 0..kh {
                        let ys = y as isize - dy as isize + ph as isize;
                        if ys < 0 || ys >= h as isize {
                            continue;
                        }
                        for dx in 0..kw {
                            let xs = (x + w + pw - dx) % w;
                            for o in 0..c_out {
                                acc += gz[[ys as usize, xs, o]] * layer.weights[[dy, dx, i, o]];
                            }
                        }
                    }
                    gin[[y, x, i]] = acc;
                }
            }
        }
        g = gin;
    }
    Ok((grads, g))
}

/// Versioned binary encoding: `FPRM`, version, layer count, then per layer
/// a shape header followed by float32 weights and bias.
pub fn save_feature_params(params: &FeatureParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(b"FPRM");
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for layer in &params.layers {
        let (kh, kw, c_in, c_out) = layer.weights.dim();
        for dim in [kh, kw, c_in, c_out] {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        buf.extend_from_slice(&layer.activation.code().to_le_bytes());
        for w in layer.weights.iter() {
            buf.extend_from_slice(&(*w as f32).to_le_bytes());
        }
        for b in layer.bias.iter() {
            buf.extend_from_slice(&(*b as f32).to_le_bytes());
        }
    }
    File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_feature_params(path: &Path) -> Result<FeatureParams> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if pos + n > bytes.len() {
            return Err(Error::Format("truncated FPRM payload".into()));
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };
    if take(4)? != b"FPRM" {
        return Err(Error::Format("missing FPRM header".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != 1 {
        return Err(Error::Format(format!("unsupported FPRM version {version}")));
    }
    let n_layers = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            *d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        }
        let activation = Activation::from_code(u32::from_le_bytes(take(4)?.try_into().unwrap()))?;
        let [kh, kw, c_in, c_out] = dims;
        let mut weights = Array4::zeros((kh, kw, c_in, c_out));
        for w in weights.iter_mut() {
            *w = f32::from_le_bytes(take(4)?.try_into().unwrap()) as f64;
        }
        let mut bias = Array1::zeros(c_out);
        for b in bias.iter_mut() {
            *b = f32::from_le_bytes(take(4)?.try_into().unwrap()) as f64;
        }
        layers.push(ConvLayer {
            weights,
            bias,
            activation,
        });
    }
    Ok(FeatureParams { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bev::{rotate_polar_bev, BevConfig, PolarBev};

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

    #[test]
    fn identity_stack_copies_input() {
        let bev = dense_bev(8, 12, 3, 1);
        let out = feature_forward(&bev, &FeatureParams::identity()).unwrap();
        assert_eq!(out.values, bev.cells);
    }

    #[test]
    fn one_by_one_kernel_scales() {
        let bev = dense_bev(6, 10, 1, 2);
        let mut weights = Array4::zeros((1, 1, 1, 1));
        weights[[0, 0, 0, 0]] = 2.0;
        let params = FeatureParams {
            layers: vec![ConvLayer {
                weights,
                bias: Array1::zeros(1),
                activation: Activation::Identity,
            }],
        };
        let out = feature_forward(&bev, &params).unwrap();
        for (o, i) in out.values.iter().zip(bev.cells.iter()) {
            assert!((o - 2.0 * i).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let bev = dense_bev(6, 10, 2, 3);
        let params = FeatureParams::glorot(
            3,
            &[LayerSpec {
                kernel_h: 3,
                kernel_w: 3,
                c_out: 2,
                activation: Activation::Identity,
            }],
            0,
        )
        .unwrap();
        assert!(matches!(
            feature_forward(&bev, &params),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    /// Direct nested-loop convolution, written independently of the
    /// production path (explicit padding instead of index arithmetic).
    fn naive_conv(
        input: &Array3<f64>,
        weights: &Array4<f64>,
        bias: &Array1<f64>,
    ) -> Array3<f64> {
        let (h, w, c_in) = input.dim();
        let (kh, kw, _, c_out) = weights.dim();
        let (ph, pw) = (kh / 2, kw / 2);
        let mut out = Array3::zeros((h, w, c_out));
        for y in 0..h {
            for x in 0..w {
                for o in 0..c_out {
                    let mut acc = bias[o];
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let sy = y as isize + dy as isize - ph as isize;
                            let sx = x as isize + dx as isize - pw as isize;
                            let val = if sy < 0 || sy >= h as isize {
                                0.0
                            } else {
                                let sx = sx.rem_euclid(w as isize) as usize;
                                let mut v = 0.0;
                                for i in 0..c_in {
                                    v += input[[sy as usize, sx, i]] * weights[[dy, dx, i, o]];
                                }
                                v
                            };
                            acc += val;
                        }
                    }
                    out[[y, x, o]] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_naive_convolution() {
        let bev = dense_bev(8, 16, 1, 4);
        let params = FeatureParams::glorot(
            1,
            &[LayerSpec {
                kernel_h: 3,
                kernel_w: 3,
                c_out: 2,
                activation: Activation::Identity,
            }],
            9,
        )
        .unwrap();
        let got = feature_forward(&bev, &params).unwrap();
        let expect = naive_conv(
            &bev.cells,
            &params.layers[0].weights,
            &params.layers[0].bias,
        );
        for (a, b) in got.values.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn shift_equivariance_is_exact() {
        let bev = dense_bev(10, 24, 2, 5);
        let params = FeatureParams::glorot(
            2,
            &[
                LayerSpec {
                    kernel_h: 3,
                    kernel_w: 3,
                    c_out: 4,
                    activation: Activation::Relu,
                },
                LayerSpec {
                    kernel_h: 3,
                    kernel_w: 3,
                    c_out: 3,
                    activation: Activation::Identity,
                },
            ],
            6,
        )
        .unwrap();
        for &k in &[1i64, 5, 11, 23] {
            let a = feature_forward(&rotate_polar_bev(&bev, k), &params).unwrap();
            let b = feature_forward(&bev, &params).unwrap().shift_columns(k);
            assert_eq!(a.values, b.values, "shift {k}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_param_grads() {
        let bev = dense_bev(6, 12, 2, 7);
        let params = FeatureParams::default_stack(2, 3);
        let out = feature_forward(&bev, &params).unwrap();
        let upstream = Array3::zeros(out.values.dim());
        let (grads, gin) = feature_backward(&bev, &params, &upstream).unwrap();
        assert_eq!(grads.l2_norm(), 0.0);
        assert!(gin.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_one_weight_gradient_is_input_sum() {
        // d(sum of outputs)/d(weight) = sum of inputs for a single 1x1 layer.
        let bev = dense_bev(5, 9, 1, 8);
        let mut weights = Array4::zeros((1, 1, 1, 1));
        weights[[0, 0, 0, 0]] = 1.3;
        let params = FeatureParams {
            layers: vec![ConvLayer {
                weights,
                bias: Array1::zeros(1),
                activation: Activation::Identity,
            }],
        };
        let out = feature_forward(&bev, &params).unwrap();
        let upstream = Array3::ones(out.values.dim());
        let (grads, _) = feature_backward(&bev, &params, &upstream).unwrap();
        let input_sum: f64 = bev.cells.iter().sum();
        assert!((grads.layers[0].weights[[0, 0, 0, 0]] - input_sum).abs() < 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let bev = dense_bev(6, 12, 2, 10);
        let mut params = FeatureParams::glorot(
            2,
            &[
                LayerSpec {
                    kernel_h: 3,
                    kernel_w: 3,
                    c_out: 3,
                    activation: Activation::Relu,
                },
                LayerSpec {
                    kernel_h: 1,
                    kernel_w: 3,
                    c_out: 2,
                    activation: Activation::Identity,
                },
            ],
            11,
        )
        .unwrap();
        // Nonzero bias keeps relu pre-activations away from the kink.
        for layer in params.layers.iter_mut() {
            layer.bias.fill(0.05);
        }

        // Loss: weighted sum of outputs (fixed random weights).
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let out0 = feature_forward(&bev, &params).unwrap();
        let mut loss_weights = Array3::zeros(out0.values.dim());
        for v in loss_weights.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let loss = |p: &FeatureParams| -> f64 {
            let out = feature_forward(&bev, p).unwrap();
            out.values
                .iter()
                .zip(loss_weights.iter())
                .map(|(a, b)| a * b)
                .sum()
        };

        let (grads, _) = feature_backward(&bev, &params, &loss_weights).unwrap();

        let h = 1e-4;
        let mut checked = 0usize;
        for li in 0..params.layers.len() {
            let n = params.layers[li].weights.len();
            for flat in (0..n).step_by(4) {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.layers[li].weights.as_slice_mut().unwrap()[flat] += h;
                minus.layers[li].weights.as_slice_mut().unwrap()[flat] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = grads.layers[li].weights.as_slice().unwrap()[flat];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    (fd - an).abs() / denom < 1e-4,
                    "layer {li} w[{flat}]: fd {fd} vs analytic {an}"
                );
                checked += 1;
            }
            for b in 0..params.layers[li].bias.len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.layers[li].bias[b] += h;
                minus.layers[li].bias[b] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = grads.layers[li].bias[b];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!((fd - an).abs() / denom < 1e-4, "layer {li} bias {b}");
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let bev = dense_bev(5, 8, 2, 13);
        let params = FeatureParams::glorot(
            2,
            &[LayerSpec {
                kernel_h: 3,
                kernel_w: 3,
                c_out: 2,
                activation: Activation::Identity,
            }],
            14,
        )
        .unwrap();
        let out0 = feature_forward(&bev, &params).unwrap();
        let upstream = Array3::ones(out0.values.dim());
        let (_, gin) = feature_backward(&bev, &params, &upstream).unwrap();

        let h = 1e-5;
        for flat in (0..bev.cells.len()).step_by(11) {
            let mut plus = bev.clone();
            let mut minus = bev.clone();
            plus.cells.as_slice_mut().unwrap()[flat] += h;
            minus.cells.as_slice_mut().unwrap()[flat] -= h;
            let lp: f64 = feature_forward(&plus, &params).unwrap().values.iter().sum();
            let lm: f64 = feature_forward(&minus, &params).unwrap().values.iter().sum();
            let fd = (lp - lm) / (2.0 * h);
            let an = gin.as_slice().unwrap()[flat];
            let denom = fd.abs().max(an.abs()).max(1e-6);
            assert!((fd - an).abs() / denom < 1e-4, "input[{flat}]");
        }
    }

    #[test]
    fn params_round_trip_through_file() {
        let params = FeatureParams::default_stack(20, 77);
        let file = tempfile::NamedTempFile::new().unwrap();
        save_feature_params(&params, file.path()).unwrap();
        let loaded = load_feature_params(file.path()).unwrap();
        assert_eq!(loaded.layers.len(), 2);
        assert_eq!(loaded.layers[0].weights.dim(), (3, 3, 20, 8));
        assert_eq!(loaded.layers[1].weights.dim(), (3, 3, 8, 4));
        assert_eq!(loaded.layers[0].activation, Activation::Relu);
        // Values survive at f32 precision.
        for (a, b) in loaded.layers[0]
            .weights
            .iter()
            .zip(params.layers[0].weights.iter())
        {
            assert_eq!(*a as f32, *b as f32);
        }
        assert_eq!(params.parameter_count(), 3 * 3 * 20 * 8 + 8 + 3 * 3 * 8 * 4 + 4);
    }
}
