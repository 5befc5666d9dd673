//! Two-stage SIM(2) estimator.
//!
//! Stage one correlates log-polar resampled magnitude spectra to recover
//! rotation and scale. The moving image is then rotated and rescaled, and
//! stage two recovers the translation by phase correlation on the images
//! themselves. The returned pose maps `moving` onto `fixed`:
//! `warp(moving, pose) ≈ fixed`.

use std::f64::consts::PI;

use crate::error::{ensure_same_dims, Result};
use crate::geometry::{warp, Sim2Pose};
use crate::image::Image;
use crate::logpolar::{to_logpolar, LogPolarGeometry, LogPolarGrid};
use crate::phasecorr::{
    argmax_refined, correlate_spectra, expectation, to_distribution, AxisKind, BinCoord,
    PoseDistribution,
};
use crate::spectral::{dft2, highpass, magnitude_centered, window_hann, Spectrum};

/// Stage-one peaks below this are flagged as low confidence.
pub const LOW_CONFIDENCE_PEAK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadoutMode {
    /// Expectation of the softmax distribution (differentiable).
    #[default]
    Soft,
    /// Refined argmax of the correlation surface.
    Hard,
}

impl std::str::FromStr for ReadoutMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "soft" => Ok(ReadoutMode::Soft),
            "hard" => Ok(ReadoutMode::Hard),
            other => Err(format!("unknown mode {other:?}, expected soft|hard")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub mode: ReadoutMode,
    /// Softmax inverse temperature on correlation values.
    pub beta: f64,
    /// Angle bins; `None` uses the image height.
    pub n_theta: Option<usize>,
    /// Log-radius bins; `None` uses the image width.
    pub n_rho: Option<usize>,
    pub window: bool,
    pub highpass: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            mode: ReadoutMode::Soft,
            beta: 200.0,
            n_theta: None,
            n_rho: None,
            window: true,
            highpass: true,
        }
    }
}

impl EstimatorConfig {
    pub fn with_mode(self, mode: ReadoutMode) -> Self {
        Self { mode, ..self }
    }

    pub fn geometry(&self, width: usize, height: usize) -> Result<LogPolarGeometry> {
        LogPolarGeometry::new(
            width,
            height,
            self.n_theta.unwrap_or(height),
            self.n_rho.unwrap_or(width),
        )
    }
}

/// Bin coordinates on the stage-one surface for a rotation/scale pair.
/// The angle is taken modulo π.
pub fn rot_scale_bins(geometry: &LogPolarGeometry, theta: f64, scale: f64) -> BinCoord {
    let n_theta = geometry.n_theta as f64;
    let row = ((geometry.n_theta / 2) as f64 + theta.rem_euclid(PI) / geometry.theta_step())
        .rem_euclid(n_theta);
    let col = (geometry.n_rho / 2) as f64 - scale.ln() / geometry.rho_base.ln();
    BinCoord::new(row, col)
}

/// Inverse of [`rot_scale_bins`]: `theta` in `[0, π)`.
pub fn rot_scale_from_bins(geometry: &LogPolarGeometry, bins: BinCoord) -> (f64, f64) {
    let dr = bins.row - (geometry.n_theta / 2) as f64;
    let theta = (dr * geometry.theta_step()).rem_euclid(PI);
    let dc = bins.col - (geometry.n_rho / 2) as f64;
    (theta, geometry.rho_base.powf(-dc))
}

#[derive(Debug, Clone)]
pub struct RotScaleEstimate {
    /// Radians in `[0, π)`.
    pub theta: f64,
    pub scale: f64,
    pub bins: BinCoord,
    pub dist: PoseDistribution,
    pub peak: f64,
    pub geometry: LogPolarGeometry,
}

#[derive(Debug, Clone)]
pub struct TranslationEstimate {
    pub tx: f64,
    pub ty: f64,
    pub dist: PoseDistribution,
    pub peak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confidence {
    pub rot_scale_peak: f64,
    pub translation_peak: f64,
    pub low: bool,
}

#[derive(Debug, Clone)]
pub struct PoseEstimate {
    /// Maps `moving` onto `fixed`; `theta` in `[0, 2π)` after the `θ`/`θ+π`
    /// hypothesis test.
    pub pose: Sim2Pose,
    pub rot_scale_dist: PoseDistribution,
    pub trans_dist: PoseDistribution,
    pub confidence: Confidence,
    /// `moving` after rotation and rescaling only.
    pub rotated: Image,
}

fn logpolar_magnitude(
    img: &Image,
    cfg: &EstimatorConfig,
    geometry: &LogPolarGeometry,
) -> Result<LogPolarGrid> {
    let src = if cfg.window {
        window_hann(img)
    } else {
        img.clone()
    };
    let mut mag = magnitude_centered(&dft2(&src));
    if cfg.highpass {
        mag = highpass(&mag);
    }
    to_logpolar(&mag, geometry.n_theta, geometry.n_rho)
}

fn readout(
    corr: &Image,
    cfg: &EstimatorConfig,
    axes: AxisKind,
) -> Result<(BinCoord, PoseDistribution, f64)> {
    let dist = to_distribution(corr, cfg.beta, axes)?;
    let peak = argmax_refined(corr);
    let bins = match cfg.mode {
        ReadoutMode::Soft => expectation(&dist),
        ReadoutMode::Hard => BinCoord::new(peak.row, peak.col),
    };
    Ok((bins, dist, peak.value))
}

/// DFT of the log-polar magnitude grid of one image. Computing it once and
/// reusing it avoids repeated spectra when the same image is compared
/// against several others.
#[derive(Debug, Clone)]
pub struct RotScaleSignature {
    pub geometry: LogPolarGeometry,
    dims: (usize, usize),
    spectrum: Spectrum,
}

impl RotScaleSignature {
    pub fn new(img: &Image, cfg: &EstimatorConfig) -> Result<Self> {
        let geometry = cfg.geometry(img.width(), img.height())?;
        let lp = logpolar_magnitude(img, cfg, &geometry)?;
        Ok(Self {
            geometry,
            dims: img.dims(),
            spectrum: dft2(&lp.values),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }
}

/// Stage one: rotation (mod π) and scale such that rotating/scaling `moving`
/// matches `fixed` up to translation.
pub fn estimate_rot_scale(
    moving: &Image,
    fixed: &Image,
    cfg: &EstimatorConfig,
) -> Result<RotScaleEstimate> {
    ensure_same_dims(moving.dims(), fixed.dims())?;
    let m = RotScaleSignature::new(moving, cfg)?;
    let f = RotScaleSignature::new(fixed, cfg)?;
    rot_scale_between(&m, &f, cfg)
}

/// [`estimate_rot_scale`] on precomputed signatures.
pub fn rot_scale_between(
    moving: &RotScaleSignature,
    fixed: &RotScaleSignature,
    cfg: &EstimatorConfig,
) -> Result<RotScaleEstimate> {
    ensure_same_dims(moving.dims, fixed.dims)?;
    let geometry = moving.geometry;
    let corr = correlate_spectra(&fixed.spectrum, &moving.spectrum)?;
    let (bins, dist, peak) = readout(&corr, cfg, AxisKind::LogPolar)?;
    let (theta, scale) = rot_scale_from_bins(&geometry, bins);
    Ok(RotScaleEstimate {
        theta,
        scale,
        bins,
        dist,
        peak,
        geometry,
    })
}

/// Stage two: shift `(tx, ty)` such that `fixed(p) ≈ moving(p - t)`.
pub fn estimate_translation(
    moving: &Image,
    fixed: &Image,
    cfg: &EstimatorConfig,
) -> Result<TranslationEstimate> {
    ensure_same_dims(moving.dims(), fixed.dims())?;
    translation_against(moving, &translation_spectrum(fixed, cfg), cfg)
}

fn translation_spectrum(img: &Image, cfg: &EstimatorConfig) -> Spectrum {
    if cfg.window {
        dft2(&window_hann(img))
    } else {
        dft2(img)
    }
}

fn translation_against(
    moving: &Image,
    fixed: &Spectrum,
    cfg: &EstimatorConfig,
) -> Result<TranslationEstimate> {
    let corr = correlate_spectra(fixed, &translation_spectrum(moving, cfg))?;
    let (bins, dist, peak) = readout(&corr, cfg, AxisKind::Translation)?;
    let (w, h) = moving.dims();
    Ok(TranslationEstimate {
        tx: bins.col - (w / 2) as f64,
        ty: bins.row - (h / 2) as f64,
        dist,
        peak,
    })
}

/// Everything the estimator needs from the fixed image, computed once.
#[derive(Debug, Clone)]
pub struct Reference {
    pub signature: RotScaleSignature,
    translation: Spectrum,
}

impl Reference {
    pub fn new(fixed: &Image, cfg: &EstimatorConfig) -> Result<Self> {
        Ok(Self {
            signature: RotScaleSignature::new(fixed, cfg)?,
            translation: translation_spectrum(fixed, cfg),
        })
    }
}

/// Full SIM(2) estimate. The `θ`/`θ+π` ambiguity left by stage one is
/// resolved by keeping the hypothesis with the higher translation peak.
pub fn estimate_sim2(moving: &Image, fixed: &Image, cfg: &EstimatorConfig) -> Result<PoseEstimate> {
    ensure_same_dims(moving.dims(), fixed.dims())?;
    let sig = RotScaleSignature::new(moving, cfg)?;
    estimate_sim2_against(moving, &sig, &Reference::new(fixed, cfg)?, cfg)
}

/// [`estimate_sim2`] with `moving`'s signature and the fixed side precomputed.
pub fn estimate_sim2_against(
    moving: &Image,
    signature: &RotScaleSignature,
    reference: &Reference,
    cfg: &EstimatorConfig,
) -> Result<PoseEstimate> {
    ensure_same_dims(moving.dims(), signature.dims)?;
    let rs = rot_scale_between(signature, &reference.signature, cfg)?;
    let mut best: Option<(Sim2Pose, TranslationEstimate, Image)> = None;
    for theta in [rs.theta, rs.theta + PI] {
        let rot = Sim2Pose::rotation_scale(theta, rs.scale);
        let rotated = warp(moving, &rot)?;
        let tr = translation_against(&rotated, &reference.translation, cfg)?;
        if best.as_ref().is_none_or(|(_, b, _)| tr.peak > b.peak) {
            best = Some((rot, tr, rotated));
        }
    }
    let (rot, tr, rotated) = best.expect("two hypotheses evaluated");
    let pose = Sim2Pose::translation(tr.tx, tr.ty).compose(&rot).wrapped();
    Ok(PoseEstimate {
        pose,
        rot_scale_dist: rs.dist,
        confidence: Confidence {
            rot_scale_peak: rs.peak,
            translation_peak: tr.peak,
            low: rs.peak < LOW_CONFIDENCE_PEAK,
        },
        trans_dist: tr.dist,
        rotated,
    })
}

/// `warp(moving, est.pose)`.
pub fn apply_estimate(moving: &Image, est: &PoseEstimate) -> Result<Image> {
    warp(moving, &est.pose)
}
