//! Loss terms of the translation objective and their weighted aggregates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dims, Error, Result};
use crate::estimator::{
    estimate_rot_scale, rot_scale_between, rot_scale_bins, EstimatorConfig, RotScaleSignature,
};
use crate::geometry::{angle_diff, Sim2Pose};
use crate::image::{Image, Mask};
use crate::phasecorr::{AxisKind, BinCoord, PoseDistribution};

/// Floor applied to both arguments of [`kld`].
pub const KLD_EPS: f64 = 1e-12;
/// Clamp applied to realness scores before taking logs.
pub const BCE_EPS: f64 = 1e-12;
/// Width of the one-peak target, in bins.
pub const ONEPEAK_SIGMA: f64 = 1.5;

/// Mean `|a - b|` over the pixels set in `mask`.
pub fn l1_masked(a: &Image, b: &Image, mask: &Mask) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    ensure_same_dims(a.dims(), mask.dims())?;
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| (x - y).abs())
        .sum();
    Ok(sum / n as f64)
}

/// `Σ p ln(p / q)` with both sides floored at [`KLD_EPS`].
pub fn kld(p: &PoseDistribution, q: &PoseDistribution) -> Result<f64> {
    ensure_same_dims(p.dims(), q.dims())?;
    let sum: f64 = p
        .probs()
        .data()
        .iter()
        .zip(q.probs().data())
        .map(|(&a, &b)| {
            let a = a.max(KLD_EPS);
            a * (a / b.max(KLD_EPS)).ln()
        })
        .sum();
    Ok(sum.max(0.0))
}

/// Normalized isotropic Gaussian centered at `center` on a `rows × cols`
/// grid. For [`AxisKind::LogPolar`] the row axis wraps. `sigma` close to
/// zero yields a delta at the nearest bin.
pub fn onepeak_target(
    rows: usize,
    cols: usize,
    center: BinCoord,
    sigma: f64,
    axes: AxisKind,
) -> Result<PoseDistribution> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("one-peak target needs a non-empty grid"));
    }
    if !(sigma >= 0.0) || !center.row.is_finite() || !center.col.is_finite() {
        return Err(Error::invalid(format!(
            "bad one-peak parameters {center:?} sigma {sigma}"
        )));
    }
    let circular = axes == AxisKind::LogPolar;
    let row = if circular {
        center.row.rem_euclid(rows as f64)
    } else {
        center.row
    };
    let in_range = |v: f64, n: usize| v >= -0.5 && v <= n as f64 - 0.5;
    if !(in_range(center.col, cols) && (circular || in_range(row, rows))) {
        return Err(Error::invalid(format!(
            "one-peak center {center:?} outside {rows}x{cols} grid"
        )));
    }
    let row_dist = |r: usize| {
        if circular {
            angle_diff(r as f64, row, rows as f64)
        } else {
            r as f64 - row
        }
    };

    let mut weights = Image::new(cols, rows);
    if sigma < 1e-6 {
        let r = (row.round() as usize) % rows;
        let c = (center.col.round().max(0.0) as usize).min(cols - 1);
        weights.set(c, r, 1.0);
    } else {
        let denom = 2.0 * sigma * sigma;
        for r in 0..rows {
            let dr = row_dist(r);
            for c in 0..cols {
                let dc = c as f64 - center.col;
                weights.set(c, r, (-(dr * dr + dc * dc) / denom).exp());
            }
        }
    }
    PoseDistribution::from_weights(weights, axes)
}

/// Rotation/scale self-supervision: the stage-one distribution between
/// `fake_t` and `fake_t_rand` should peak at the injected pose.
pub fn loss_xi_r(
    fake_t: &Image,
    fake_t_rand: &Image,
    xi_r: &Sim2Pose,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let a = RotScaleSignature::new(fake_t, cfg)?;
    let b = RotScaleSignature::new(fake_t_rand, cfg)?;
    loss_xi_r_signatures(&a, &b, xi_r, cfg)
}

/// [`loss_xi_r`] on precomputed signatures.
pub fn loss_xi_r_signatures(
    fake_t: &RotScaleSignature,
    fake_t_rand: &RotScaleSignature,
    xi_r: &Sim2Pose,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let est = rot_scale_between(fake_t, fake_t_rand, cfg)?;
    let center = rot_scale_bins(&est.geometry, xi_r.theta.rem_euclid(PI), xi_r.scale);
    let target = onepeak_target(
        est.dist.rows(),
        est.dist.cols(),
        center,
        ONEPEAK_SIGMA,
        AxisKind::LogPolar,
    )?;
    kld(&est.dist, &target)
}

/// Stage-one distributions of the original pair and of the jointly
/// re-posed pair should coincide.
pub fn loss_theta_s(
    fake_t: &Image,
    target: &Image,
    fake_t_rand: &Image,
    target_rand: &Image,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let a = estimate_rot_scale(fake_t, target, cfg)?;
    let b = estimate_rot_scale(fake_t_rand, target_rand, cfg)?;
    kld(&a.dist, &b.dist)
}

/// [`loss_theta_s`] on precomputed signatures.
pub fn loss_theta_s_signatures(
    fake_t: &RotScaleSignature,
    target: &RotScaleSignature,
    fake_t_rand: &RotScaleSignature,
    target_rand: &RotScaleSignature,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let a = rot_scale_between(fake_t, target, cfg)?;
    let b = rot_scale_between(fake_t_rand, target_rand, cfg)?;
    kld(&a.dist, &b.dist)
}

/// Image → probability that the image belongs to the target domain.
pub trait RealnessScorer {
    fn score(&self, img: &Image) -> f64;
}

/// Scores every image the same.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantScorer(pub f64);

impl Default for ConstantScorer {
    fn default() -> Self {
        Self(0.5)
    }
}

impl RealnessScorer for ConstantScorer {
    fn score(&self, _img: &Image) -> f64 {
        self.0
    }
}

/// Binary cross-entropy of a realness score against its label.
pub fn realness_bce(score: f64, label: bool) -> f64 {
    let s = score.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if label {
        -s.ln()
    } else {
        -(1.0 - s).ln()
    }
}

/// Which aggregate drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Basic,
    #[default]
    Full,
}

impl std::str::FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "basic" => Ok(LossMode::Basic),
            "full" => Ok(LossMode::Full),
            other => Err(format!("unknown loss mode {other:?}, expected basic|full")),
        }
    }
}

/// Raw, unweighted loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub trans: f64,
    pub cycle: f64,
    pub realness_g: f64,
    pub realness_d: f64,
    pub xi_r: f64,
    pub theta_s: f64,
}

impl LossTerms {
    fn fields(&self) -> [f64; 6] {
        [
            self.trans,
            self.cycle,
            self.realness_g,
            self.realness_d,
            self.xi_r,
            self.theta_s,
        ]
    }

    fn from_fields(f: [f64; 6]) -> Self {
        Self {
            trans: f[0],
            cycle: f[1],
            realness_g: f[2],
            realness_d: f[3],
            xi_r: f[4],
            theta_s: f[5],
        }
    }

    /// Element-wise mean; `None` for an empty slice.
    pub fn mean(items: &[LossTerms]) -> Option<LossTerms> {
        if items.is_empty() {
            return None;
        }
        let mut acc = [0.0; 6];
        for t in items {
            for (a, v) in acc.iter_mut().zip(t.fields()) {
                *a += v;
            }
        }
        Some(Self::from_fields(acc.map(|v| v / items.len() as f64)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub trans: f64,
    pub cycle: f64,
    pub realness_g: f64,
    pub realness_d: f64,
    pub xi_r: f64,
    pub theta_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            trans: 1.0,
            cycle: 1.0,
            realness_g: 1.0,
            realness_d: 1.0,
            xi_r: 1.0,
            theta_s: 1.0,
        }
    }
}

impl LossWeights {
    fn fields(&self) -> [f64; 6] {
        [
            self.trans,
            self.cycle,
            self.realness_g,
            self.realness_d,
            self.xi_r,
            self.theta_s,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.fields().iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!(
                "loss weights must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Switches that remove one ingredient from training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablations {
    /// No pose randomization and no pose recovery; the translated image is
    /// compared with the target directly.
    pub no_pr: bool,
    pub no_cycle: bool,
    pub no_l_xi_r: bool,
    pub no_l_theta_s: bool,
}

impl Ablations {
    /// Parses a comma-separated list of `pr`, `cycle`, `xi_r`, `theta_s`.
    pub fn parse_list(list: &str) -> Result<Self> {
        let mut out = Self::default();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "pr" => out.no_pr = true,
                "cycle" => out.no_cycle = true,
                "xi_r" => out.no_l_xi_r = true,
                "theta_s" => out.no_l_theta_s = true,
                other => {
                    return Err(Error::invalid(format!(
                        "unknown ablation {other:?}, expected pr, cycle, xi_r or theta_s"
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Zeroes the terms this set disables.
    pub fn apply(&self, mut terms: LossTerms) -> LossTerms {
        if self.no_cycle {
            terms.cycle = 0.0;
        }
        if self.no_l_xi_r {
            terms.xi_r = 0.0;
        }
        if self.no_l_theta_s {
            terms.theta_s = 0.0;
        }
        terms
    }
}

/// Every term with its weight, plus both aggregates. Serializes flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_trans: f64,
    pub l_cycle: f64,
    pub l_realness_g: f64,
    pub l_realness_d: f64,
    pub l_xi_r: f64,
    pub l_theta_s: f64,
    pub total_basic: f64,
    pub total_full: f64,
    pub w_trans: f64,
    pub w_cycle: f64,
    pub w_realness_g: f64,
    pub w_realness_d: f64,
    pub w_xi_r: f64,
    pub w_theta_s: f64,
}

impl LossReport {
    /// The aggregate selected by `mode`.
    pub fn total(&self, mode: LossMode) -> f64 {
        match mode {
            LossMode::Basic => self.total_basic,
            LossMode::Full => self.total_full,
        }
    }

    pub fn terms(&self) -> LossTerms {
        LossTerms {
            trans: self.l_trans,
            cycle: self.l_cycle,
            realness_g: self.l_realness_g,
            realness_d: self.l_realness_d,
            xi_r: self.l_xi_r,
            theta_s: self.l_theta_s,
        }
    }
}

/// Weighted sums. In basic mode the self-supervision terms are dropped, so
/// both totals coincide.
pub fn aggregate(terms: &LossTerms, weights: &LossWeights, mode: LossMode) -> Result<LossReport> {
    weights.validate()?;
    let terms = match mode {
        LossMode::Basic => LossTerms {
            xi_r: 0.0,
            theta_s: 0.0,
            ..*terms
        },
        LossMode::Full => *terms,
    };
    if terms.fields().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("loss terms {terms:?}")));
    }
    let w = weights;
    let total_basic = w.trans * terms.trans
        + w.cycle * terms.cycle
        + w.realness_g * terms.realness_g
        + w.realness_d * terms.realness_d;
    let total_full = total_basic + w.xi_r * terms.xi_r + w.theta_s * terms.theta_s;
    Ok(LossReport {
        l_trans: terms.trans,
        l_cycle: terms.cycle,
        l_realness_g: terms.realness_g,
        l_realness_d: terms.realness_d,
        l_xi_r: terms.xi_r,
        l_theta_s: terms.theta_s,
        total_basic,
        total_full,
        w_trans: w.trans,
        w_cycle: w.cycle,
        w_realness_g: w.realness_g,
        w_realness_d: w.realness_d,
        w_xi_r: w.xi_r,
        w_theta_s: w.theta_s,
    })
}
