//! SIM(2) pose algebra and image warping.
//!
//! A pose acts on pixel coordinates relative to the image center
//! `c = ((W-1)/2, (H-1)/2)`: a source point `q` maps to
//! `p = s * R(theta) * (q - c) + c + t`, with the standard rotation matrix
//! `[[cos, -sin], [sin, cos]]` applied to `(x, y)`. Positive `theta` is
//! counter-clockwise in that frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};

/// Similarity transform `(s R_theta, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sim2Pose {
    pub scale: f64,
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Sim2Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Sim2Pose {
    pub const fn new(scale: f64, theta: f64, tx: f64, ty: f64) -> Self {
        Self {
            scale,
            theta,
            tx,
            ty,
        }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self::new(1.0, 0.0, tx, ty)
    }

    pub const fn rotation_scale(theta: f64, scale: f64) -> Self {
        Self::new(scale, theta, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.scale.is_finite()
            && self.theta.is_finite()
            && self.tx.is_finite()
            && self.ty.is_finite()
    }

    /// Homogeneous 3x3 matrix in center-relative coordinates.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let (sn, cs) = self.theta.sin_cos();
        let s = self.scale;
        [
            [s * cs, -s * sn, self.tx],
            [s * sn, s * cs, self.ty],
            [0.0, 0.0, 1.0],
        ]
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Sim2Pose) -> Sim2Pose {
        let (sn, cs) = self.theta.sin_cos();
        let s = self.scale;
        Sim2Pose {
            scale: s * other.scale,
            theta: self.theta + other.theta,
            tx: s * (cs * other.tx - sn * other.ty) + self.tx,
            ty: s * (sn * other.tx + cs * other.ty) + self.ty,
        }
    }

    pub fn inverse(&self) -> Sim2Pose {
        let (sn, cs) = self.theta.sin_cos();
        let inv_s = 1.0 / self.scale;
        Sim2Pose {
            scale: inv_s,
            theta: -self.theta,
            tx: -inv_s * (cs * self.tx + sn * self.ty),
            ty: -inv_s * (-sn * self.tx + cs * self.ty),
        }
    }

    /// Same pose with `theta` wrapped into `[0, 2π)`.
    pub fn wrapped(&self) -> Sim2Pose {
        Sim2Pose {
            theta: self.theta.rem_euclid(2.0 * PI),
            ..*self
        }
    }

    /// Maps a center-relative point.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (sn, cs) = self.theta.sin_cos();
        (
            self.scale * (cs * x - sn * y) + self.tx,
            self.scale * (sn * x + cs * y) + self.ty,
        )
    }
}

/// Signed smallest difference `a - b` modulo `period`, in `(-period/2, period/2]`.
pub fn angle_diff(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    if d > period / 2.0 {
        d - period
    } else {
        d
    }
}

fn center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Resamples `img` under `pose`: `out(p) = img(pose⁻¹(p))`, bilinear, zero fill.
pub fn warp(img: &Image, pose: &Sim2Pose) -> Result<Image> {
    if img.is_empty() {
        return Err(Error::invalid("cannot warp an empty image"));
    }
    if !pose.is_finite() || pose.scale <= 0.0 {
        return Err(Error::NonFinite(format!("warp pose {pose:?}")));
    }
    if *pose == Sim2Pose::identity() {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let (cx, cy) = center(w, h);
    let inv = pose.inverse();
    let (sn, cs) = inv.theta.sin_cos();
    let (a, b) = (inv.scale * cs, inv.scale * sn);
    let mut out = Image::new(w, h);
    let data = out.data_mut();
    for y in 0..h {
        let ry = y as f64 - cy;
        for x in 0..w {
            let rx = x as f64 - cx;
            let qx = a * rx - b * ry + inv.tx + cx;
            let qy = b * rx + a * ry + inv.ty + cy;
            data[y * w + x] = img.sample_bilinear(qx, qy);
        }
    }
    Ok(out)
}

fn inside(qx: f64, qy: f64, w: usize, h: usize) -> bool {
    const TOL: f64 = 1e-9;
    qx >= -TOL && qx <= (w - 1) as f64 + TOL && qy >= -TOL && qy <= (h - 1) as f64 + TOL
}

/// Pixels where both `warp(_, pose_a)` and `warp(_, pose_b)` sample inside the source.
pub fn overlap_mask(width: usize, height: usize, pose_a: &Sim2Pose, pose_b: &Sim2Pose) -> Mask {
    let (cx, cy) = center(width, height);
    let ia = pose_a.inverse();
    let ib = pose_b.inverse();
    Mask::from_fn(width, height, |x, y| {
        let (rx, ry) = (x as f64 - cx, y as f64 - cy);
        let (ax, ay) = ia.apply(rx, ry);
        let (bx, by) = ib.apply(rx, ry);
        inside(ax + cx, ay + cy, width, height) && inside(bx + cx, by + cy, width, height)
    })
}
