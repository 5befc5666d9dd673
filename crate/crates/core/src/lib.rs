//! Weakly-paired SIM(2) registration and pose-randomized style translation.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: SIM(2) poses and bilinear warping.
//! - [`spectral`], [`logpolar`], [`phasecorr`]: Fourier-Mellin building blocks.
//! - [`estimator`]: the two-stage rotation/scale then translation estimator.
//! - [`randomization`]: random pose injection.
//! - [`losses`]: translation, cycle, realness and self-supervised KL terms.
//! - [`synth`]: synthetic weakly-paired corpora.
//! - [`trainer`]: finite-difference training of a small parametric translator.

pub mod error;
pub mod estimator;
pub mod filter;
pub mod geometry;
pub mod image;
pub mod io;
pub mod logpolar;
pub mod losses;
pub mod phasecorr;
pub mod randomization;
pub mod spectral;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use estimator::{estimate_sim2, EstimatorConfig, PoseEstimate, ReadoutMode};
pub use geometry::{warp, Sim2Pose};
pub use image::{Image, Mask};
pub use randomization::PoseRange;
