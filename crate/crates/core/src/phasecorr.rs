//! Phase correlation with soft (expectation) and hard (argmax) readout.
//!
//! Correlation surfaces are centered: a zero shift lands on bin
//! `(H/2, W/2)` in `(row, col)` order.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{ensure_same_dims, Error, Result};
use crate::image::Image;
use crate::spectral::{dft2, fftshift, idft2_real, Spectrum};

/// Regularizer in the cross-power normalization.
pub const CROSS_POWER_EPS: f64 = 1e-8;

/// How the two axes of a distribution are interpreted by [`expectation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    /// Both axes are linear pixel shifts.
    Translation,
    /// Rows are angle bins over `[0, π)` (circular), columns log-radius bins.
    LogPolar,
}

/// Bin coordinates, `(row, col)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinCoord {
    pub row: f64,
    pub col: f64,
}

impl BinCoord {
    pub fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }
}

/// Non-negative grid summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseDistribution {
    probs: Image,
    axes: AxisKind,
}

impl PoseDistribution {
    /// Normalizes `weights`; rejects negative, non-finite, or all-zero input.
    pub fn from_weights(weights: Image, axes: AxisKind) -> Result<Self> {
        if weights.data().iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::invalid(
                "distribution weights must be finite and non-negative",
            ));
        }
        let total = weights.sum();
        if total <= 0.0 {
            return Err(Error::invalid("distribution weights sum to zero"));
        }
        Ok(Self {
            probs: weights.map(|v| v / total),
            axes,
        })
    }

    pub fn probs(&self) -> &Image {
        &self.probs
    }

    pub fn axes(&self) -> AxisKind {
        self.axes
    }

    /// `(width, height)` = `(cols, rows)`.
    pub fn dims(&self) -> (usize, usize) {
        self.probs.dims()
    }

    pub fn rows(&self) -> usize {
        self.probs.height()
    }

    pub fn cols(&self) -> usize {
        self.probs.width()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.probs.get(col, row)
    }

    pub fn max_mass(&self) -> f64 {
        self.probs.data().iter().copied().fold(0.0, f64::max)
    }
}

fn cross_power(fa: &Spectrum, fb: &Spectrum) -> Spectrum {
    let data = fa
        .data()
        .iter()
        .zip(fb.data())
        .map(|(a, b)| {
            let c: Complex64 = a * b.conj();
            c * (1.0 / (c.norm_sqr().sqrt() + CROSS_POWER_EPS))
        })
        .collect();
    Spectrum::from_vec(fa.width(), fa.height(), data)
}

/// Phase correlation surface of `a` against `b`, centered.
///
/// If `a(p) = b(p - d)` the peak sits at `center + d`.
pub fn correlate(a: &Image, b: &Image) -> Result<Image> {
    ensure_same_dims(a.dims(), b.dims())?;
    correlate_spectra(&dft2(a), &dft2(b))
}

pub fn correlate_spectra(fa: &Spectrum, fb: &Spectrum) -> Result<Image> {
    ensure_same_dims(fa.dims(), fb.dims())?;
    Ok(fftshift(&idft2_real(&cross_power(fa, fb))))
}

/// Softmax with inverse temperature `beta` over every bin.
pub fn to_distribution(corr: &Image, beta: f64, axes: AxisKind) -> Result<PoseDistribution> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if !corr.is_finite() {
        return Err(Error::NonFinite("correlation surface".into()));
    }
    let max = corr
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    PoseDistribution::from_weights(corr.map(|c| (beta * (c - max)).exp()), axes)
}

fn circular_row(sin_sum: f64, cos_sum: f64, rows: usize) -> f64 {
    let phi = sin_sum.atan2(cos_sum);
    (phi * rows as f64 / (2.0 * PI)).rem_euclid(rows as f64)
}

/// Expected bin per axis of the marginal distributions.
///
/// For [`AxisKind::LogPolar`] the row axis is circular: rows map to unit
/// vectors at angle `2π·row/n` (twice the physical angle), are averaged, and
/// the mean direction is mapped back to a row coordinate in `[0, n)`.
pub fn expectation(dist: &PoseDistribution) -> BinCoord {
    let (cols, rows) = dist.dims();
    let mut col = 0.0;
    let mut row = 0.0;
    let (mut s, mut c) = (0.0, 0.0);
    for r in 0..rows {
        let phi = 2.0 * PI * r as f64 / rows as f64;
        let (sn, cs) = phi.sin_cos();
        let mut row_mass = 0.0;
        for k in 0..cols {
            let p = dist.get(r, k);
            row_mass += p;
            col += p * k as f64;
        }
        row += row_mass * r as f64;
        s += row_mass * sn;
        c += row_mass * cs;
    }
    let row = match dist.axes() {
        AxisKind::Translation => row,
        AxisKind::LogPolar => circular_row(s, c, rows),
    };
    BinCoord { row, col }
}

/// Analytic derivative of `expectation(to_distribution(corr, beta))` with
/// respect to the single correlation bin `(row, col)`.
///
/// Uses `∂p_i/∂c_k = β p_i (δ_ik − p_k)`.
pub fn expectation_gradient(
    corr: &Image,
    beta: f64,
    axes: AxisKind,
    row: usize,
    col: usize,
) -> Result<BinCoord> {
    let dist = to_distribution(corr, beta, axes)?;
    let e = expectation(&dist);
    let pk = dist.get(row, col);
    let d_col = beta * pk * (col as f64 - e.col);
    let d_row = match axes {
        AxisKind::Translation => beta * pk * (row as f64 - e.row),
        AxisKind::LogPolar => {
            let rows = dist.rows();
            let (mut s, mut c) = (0.0, 0.0);
            for r in 0..rows {
                let phi = 2.0 * PI * r as f64 / rows as f64;
                let mass: f64 = (0..dist.cols()).map(|k| dist.get(r, k)).sum();
                s += mass * phi.sin();
                c += mass * phi.cos();
            }
            let phi_k = 2.0 * PI * row as f64 / rows as f64;
            let ds = beta * pk * (phi_k.sin() - s);
            let dc = beta * pk * (phi_k.cos() - c);
            let dphi = (c * ds - s * dc) / (c * c + s * s);
            dphi * rows as f64 / (2.0 * PI)
        }
    };
    Ok(BinCoord::new(d_row, d_col))
}

/// Integer peak with parabolic sub-bin refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub row: f64,
    pub col: f64,
    pub value: f64,
    /// Set when the maximum is not unique (e.g. a flat surface).
    pub low_confidence: bool,
}

fn parabolic_offset(prev: f64, cur: f64, next: f64) -> f64 {
    let denom = prev - 2.0 * cur + next;
    if denom.abs() < 1e-15 {
        return 0.0;
    }
    (0.5 * (prev - next) / denom).clamp(-0.5, 0.5)
}

/// Argmax (lowest row, then lowest column on ties) refined per axis with a
/// three-point parabola through circular neighbors, clamped to ±0.5 bin.
pub fn argmax_refined(corr: &Image) -> Peak {
    let (w, h) = corr.dims();
    let mut best = (0usize, 0usize);
    let mut best_val = f64::NEG_INFINITY;
    let mut ties = 0usize;
    for y in 0..h {
        for x in 0..w {
            let v = corr.get(x, y);
            if v > best_val {
                best_val = v;
                best = (y, x);
                ties = 0;
            } else if v == best_val {
                ties += 1;
            }
        }
    }
    let (r, c) = best;
    let row_off = if h >= 3 {
        parabolic_offset(
            corr.get(c, (r + h - 1) % h),
            best_val,
            corr.get(c, (r + 1) % h),
        )
    } else {
        0.0
    };
    let col_off = if w >= 3 {
        parabolic_offset(
            corr.get((c + w - 1) % w, r),
            best_val,
            corr.get((c + 1) % w, r),
        )
    } else {
        0.0
    };
    Peak {
        row: r as f64 + row_off,
        col: c as f64 + col_off,
        value: best_val,
        low_confidence: ties > 0,
    }
}
