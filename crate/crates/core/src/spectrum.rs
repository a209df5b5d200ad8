//! Frequency-domain signatures.
//!
//! A yaw rotation of the scan is a circular shift of the feature map's
//! sector axis, and a circular shift only changes the phase of the 2D
//! DFT. The per-bin magnitude is therefore rotation-invariant, and a
//! centered low-frequency crop of it is the place signature compared
//! with plain Euclidean distance.
//!
//! DFT convention: unnormalized forward, `1/(H*W)` on the inverse.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::features::FeatureMap;

/// Per-channel 2D DFT of a feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `rings x sectors x channels` complex bins.
    pub bins: Array3<Complex64>,
}

impl Spectrum {
    pub fn shape(&self) -> (usize, usize, usize) {
        self.bins.dim()
    }
}

/// Fixed-length rotation-invariant descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub values: Vec<f64>,
}

impl Signature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which part of the centered magnitude spectrum the signature keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropMode {
    /// Centered `crop_h x crop_w` block (low frequencies).
    LowPass,
    /// Four corner blocks of the centered grid, concatenated.
    HighPass,
}

impl CropMode {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "low-pass" | "lpf" => Ok(CropMode::LowPass),
            "high-pass" | "hpf" => Ok(CropMode::HighPass),
            other => Err(Error::InvalidConfig(format!("unknown crop mode {other:?}"))),
        }
    }
}

/// Signature crop shape. The signature dimension is
/// `crop_h * crop_w * channels`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropConfig {
    pub crop_h: usize,
    pub crop_w: usize,
    pub mode: CropMode,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            crop_h: 32,
            crop_w: 32,
            mode: CropMode::LowPass,
        }
    }
}

impl CropConfig {
    pub fn signature_len(&self, channels: usize) -> usize {
        self.crop_h * self.crop_w * channels
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        }
    })
}

/// In-place unnormalized 2D transform (rows then columns).
fn fft2_inplace(grid: &mut Array2<Complex64>, inverse: bool) {
    let (h, w) = grid.dim();
    let row_fft = plan(w, inverse);
    for mut row in grid.rows_mut() {
        row_fft.process(row.as_slice_mut().expect("rows are contiguous"));
    }
    let col_fft = plan(h, inverse);
    let mut scratch = vec![Complex64::default(); h];
    for c in 0..w {
        for r in 0..h {
            scratch[r] = grid[[r, c]];
        }
        col_fft.process(&mut scratch);
        for r in 0..h {
            grid[[r, c]] = scratch[r];
        }
    }
}

/// Unnormalized forward 2D DFT of each channel.
pub fn fft2_per_channel(map: &FeatureMap) -> Spectrum {
    let (h, w, c) = map.values.dim();
    let mut bins = Array3::default((h, w, c));
    for ch in 0..c {
        let mut grid = Array2::from_shape_fn((h, w), |(r, cc)| {
            Complex64::new(map.values[[r, cc, ch]], 0.0)
        });
        fft2_inplace(&mut grid, false);
        for r in 0..h {
            for cc in 0..w {
                bins[[r, cc, ch]] = grid[[r, cc]];
            }
        }
    }
    Spectrum { bins }
}

/// Normalized inverse of [`fft2_per_channel`]; recovers the feature map.
pub fn inverse_fft2_per_channel(spectrum: &Spectrum) -> FeatureMap {
    let (h, w, c) = spectrum.bins.dim();
    let scale = 1.0 / (h * w) as f64;
    let mut values = Array3::zeros((h, w, c));
    for ch in 0..c {
        let mut grid = Array2::from_shape_fn((h, w), |(r, cc)| spectrum.bins[[r, cc, ch]]);
        fft2_inplace(&mut grid, true);
        for r in 0..h {
            for cc in 0..w {
                values[[r, cc, ch]] = grid[[r, cc]].re * scale;
            }
        }
    }
    FeatureMap { values }
}

/// Normalized inverse 2D DFT of a single complex grid, real part.
pub fn ifft2_real(grid: &Array2<Complex64>) -> Array2<f64> {
    let (h, w) = grid.dim();
    let mut work = grid.clone();
    fft2_inplace(&mut work, true);
    let scale = 1.0 / (h * w) as f64;
    work.mapv(|v| v.re * scale)
}

/// Unnormalized forward 2D DFT of a single real grid.
pub fn fft2_real_grid(grid: &Array2<f64>) -> Array2<Complex64> {
    let mut work = grid.mapv(|v| Complex64::new(v, 0.0));
    fft2_inplace(&mut work, false);
    work
}

/// Adjoint of the unnormalized forward DFT for real inputs: the real part
/// of the unnormalized inverse transform of the bin-space gradient.
pub fn fft2_adjoint(bin_grads: &Array3<Complex64>) -> Array3<f64> {
    let (h, w, c) = bin_grads.dim();
    let mut out = Array3::zeros((h, w, c));
    for ch in 0..c {
        let mut grid = Array2::from_shape_fn((h, w), |(r, cc)| bin_grads[[r, cc, ch]]);
        fft2_inplace(&mut grid, true);
        for r in 0..h {
            for cc in 0..w {
                out[[r, cc, ch]] = grid[[r, cc]].re;
            }
        }
    }
    out
}

/// For shifted-grid position `s`, the unshifted bin index.
fn unshift_index(s: usize, n: usize) -> usize {
    (s + n - n / 2) % n
}

/// Map each signature slot to its `(row, col, channel)` bin in the
/// unshifted spectrum. Single source of truth for both the signature
/// construction and its gradient.
pub fn signature_bin_map(
    h: usize,
    w: usize,
    channels: usize,
    crop: &CropConfig,
) -> Result<Vec<(usize, usize, usize)>> {
    if crop.crop_h > h || crop.crop_w > w {
        return Err(Error::CropTooLarge {
            crop_h: crop.crop_h,
            crop_w: crop.crop_w,
            rows: h,
            cols: w,
        });
    }
    let mut map = Vec::with_capacity(crop.signature_len(channels));
    match crop.mode {
        CropMode::LowPass => {
            let r0 = h / 2 - crop.crop_h / 2;
            let c0 = w / 2 - crop.crop_w / 2;
            for ch in 0..channels {
                for rr in 0..crop.crop_h {
                    for cc in 0..crop.crop_w {
                        map.push((
                            unshift_index(r0 + rr, h),
                            unshift_index(c0 + cc, w),
                            ch,
                        ));
                    }
                }
            }
        }
        CropMode::HighPass => {
            if !crop.crop_h.is_multiple_of(2) || !crop.crop_w.is_multiple_of(2) {
                return Err(Error::InvalidConfig(
                    "high-pass crop requires even crop_h and crop_w".into(),
                ));
            }
            let (bh, bw) = (crop.crop_h / 2, crop.crop_w / 2);
            // Corner blocks of the shifted grid: TL, TR, BL, BR.
            let corners = [(0, 0), (0, w - bw), (h - bh, 0), (h - bh, w - bw)];
            for ch in 0..channels {
                for &(r0, c0) in &corners {
                    for rr in 0..bh {
                        for cc in 0..bw {
                            map.push((
                                unshift_index(r0 + rr, h),
                                unshift_index(c0 + cc, w),
                                ch,
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(map)
}

/// Per-bin magnitudes of the centered spectrum crop, channels
/// concatenated, flattened row-major.
pub fn magnitude_signature(spectrum: &Spectrum, crop: &CropConfig) -> Result<Signature> {
    let (h, w, c) = spectrum.bins.dim();
    let map = signature_bin_map(h, w, c, crop)?;
    let values = map
        .iter()
        .map(|&(r, cc, ch)| spectrum.bins[[r, cc, ch]].norm())
        .collect();
    Ok(Signature { values })
}

/// Euclidean distance between equal-length signatures.
pub fn signature_distance(a: &Signature, b: &Signature) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}
