//! Place recognition and relative-orientation estimation for 3D LiDAR
//! scans.
//!
//! A scan is binned into a polar bird's-eye-view grid, where yaw
//! rotation becomes circular translation along the azimuth axis. The
//! magnitude of the grid's 2D spectrum is then a rotation-invariant
//! place signature usable for metric retrieval, while the cross-power
//! of two spectra yields the relative yaw through phase correlation —
//! both from one shared representation. A small trainable convolution
//! stack with exact gradients, quadruplet/rotation losses and a descent
//! loop support learning the feature layer end to end.
//!
//! Modules follow the data path:
//!
//! - [`cloud`]: loading, bounds filtering, synthetic rotation
//! - [`bev`]: polar multi-layer grids
//! - [`features`]: identity/pooled/convolutional feature maps
//! - [`spectrum`]: FFTs, signatures, the Euclidean metric
//! - [`correlate`]: exhaustive, FFT and softmax-expectation yaw solvers
//! - [`learn`]: losses, gradients, augmentation, training
//! - [`retrieve`]: the place database, kd-tree retrieval, metrics
//! - [`synth`]: simulated worlds, scans and benchmarks
//! - [`pipeline`]: the composed scan-to-signature path

pub mod bev;
pub mod cloud;
pub mod correlate;
pub mod error;
pub mod features;
pub mod learn;
pub mod pipeline;
pub mod retrieve;
pub mod spectrum;
pub mod synth;

pub use error::{Error, Result};
