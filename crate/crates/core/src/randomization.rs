//! Random pose injection.
//!
//! Two injection types exist: the pose applied to the original image alone
//! (pose randomization) and the same pose applied to both images of a pair
//! (self-supervision).

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dims, Error, Result};
use crate::geometry::{warp, Sim2Pose};
use crate::image::Image;

/// Sampling bounds for injected poses. Angles are radians, translation
/// bounds are symmetric `[-t_max, t_max]` pixels per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRange {
    pub scale_min: f64,
    pub scale_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub t_max: f64,
    /// Sample `ln s` uniformly instead of `s`.
    #[serde(default)]
    pub log_scale: bool,
}

impl Default for PoseRange {
    /// `t ∈ [-50, 50]²` px, `θ ∈ [0, π)`, `s ∈ [0.8, 1.2]` for 256x256 images.
    fn default() -> Self {
        Self {
            scale_min: 0.8,
            scale_max: 1.2,
            theta_min: 0.0,
            theta_max: PI,
            t_max: 50.0,
            log_scale: false,
        }
    }
}

impl PoseRange {
    pub fn identity() -> Self {
        Self {
            scale_min: 1.0,
            scale_max: 1.0,
            theta_min: 0.0,
            theta_max: 0.0,
            t_max: 0.0,
            log_scale: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.scale_min,
            self.scale_max,
            self.theta_min,
            self.theta_max,
            self.t_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("pose range has non-finite bounds"));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return Err(Error::invalid(format!(
                "scale range [{}, {}] must satisfy 0 < min <= max",
                self.scale_min, self.scale_max
            )));
        }
        if !(self.theta_min >= 0.0 && self.theta_min <= self.theta_max && self.theta_max <= PI) {
            return Err(Error::invalid(format!(
                "theta range [{}, {}] must lie within [0, π)",
                self.theta_min, self.theta_max
            )));
        }
        if self.t_max < 0.0 {
            return Err(Error::invalid("t_max must be non-negative"));
        }
        Ok(())
    }

    pub fn contains(&self, pose: &Sim2Pose) -> bool {
        pose.scale >= self.scale_min
            && pose.scale <= self.scale_max
            && pose.theta >= self.theta_min
            && (pose.theta < self.theta_max
                || self.theta_min == self.theta_max && pose.theta == self.theta_min)
            && pose.tx.abs() <= self.t_max
            && pose.ty.abs() <= self.t_max
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draws one pose, each component uniform over its interval.
pub fn sample_pose_with(range: &PoseRange, rng: &mut impl Rng) -> Result<Sim2Pose> {
    range.validate()?;
    let scale = if range.log_scale {
        uniform(rng, range.scale_min.ln(), range.scale_max.ln()).exp()
    } else {
        uniform(rng, range.scale_min, range.scale_max)
    };
    let theta = uniform(rng, range.theta_min, range.theta_max);
    let tx = uniform(rng, -range.t_max, range.t_max);
    let ty = uniform(rng, -range.t_max, range.t_max);
    Ok(Sim2Pose::new(scale, theta, tx, ty))
}

pub fn sample_pose(range: &PoseRange, seed: u64) -> Result<Sim2Pose> {
    sample_pose_with(range, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Original image and its pose-injected copy.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedPair {
    pub original: Image,
    pub randomized: Image,
    pub xi_r: Sim2Pose,
    pub seed: u64,
}

/// Injection into the original image alone.
pub fn inject_original_only(
    original: &Image,
    range: &PoseRange,
    seed: u64,
) -> Result<RandomizedPair> {
    let xi_r = sample_pose(range, seed)?;
    Ok(RandomizedPair {
        original: original.clone(),
        randomized: warp(original, &xi_r)?,
        xi_r,
        seed,
    })
}

/// Both images of a pair after the same injected pose.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectedPair {
    pub original: Image,
    pub target: Image,
    pub xi_r: Sim2Pose,
}

/// Injection of one pose into both images.
pub fn inject_both(
    original: &Image,
    target: &Image,
    range: &PoseRange,
    seed: u64,
) -> Result<InjectedPair> {
    ensure_same_dims(original.dims(), target.dims())?;
    let xi_r = sample_pose(range, seed)?;
    Ok(InjectedPair {
        original: warp(original, &xi_r)?,
        target: warp(target, &xi_r)?,
        xi_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = (x - lo) / (hi - lo);
                (cdf - i as f64 / n)
                    .abs()
                    .max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn default_range_bounds() {
        let r = PoseRange::default();
        assert_eq!((r.scale_min, r.scale_max, r.t_max), (0.8, 1.2, 50.0));
        assert_eq!((r.theta_min, r.theta_max), (0.0, PI));
    }

    #[test]
    fn degenerate_range_is_exact() {
        let r = PoseRange {
            scale_min: 1.1,
            scale_max: 1.1,
            theta_min: 0.3,
            theta_max: 0.3,
            t_max: 0.0,
            log_scale: false,
        };
        assert_eq!(
            sample_pose(&r, 9).unwrap(),
            Sim2Pose::new(1.1, 0.3, 0.0, 0.0)
        );
    }

    #[test]
    fn invalid_ranges() {
        let mut r = PoseRange::default();
        r.scale_min = 0.0;
        assert!(sample_pose(&r, 0).is_err());
        let mut r = PoseRange::default();
        r.theta_max = 4.0;
        assert!(sample_pose(&r, 0).is_err());
        let mut r = PoseRange::default();
        r.t_max = -1.0;
        assert!(sample_pose(&r, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let r = PoseRange::default();
        assert_eq!(sample_pose(&r, 42).unwrap(), sample_pose(&r, 42).unwrap());
        assert_ne!(sample_pose(&r, 42).unwrap(), sample_pose(&r, 43).unwrap());
    }

    #[test]
    fn theta_mean_and_coverage() {
        let r = PoseRange::default();
        let poses: Vec<Sim2Pose> = (0..10_000).map(|s| sample_pose(&r, s).unwrap()).collect();
        let mean = poses.iter().map(|p| p.theta).sum::<f64>() / poses.len() as f64;
        assert!((mean - PI / 2.0).abs() < 0.03, "mean {mean}");
        assert!(poses.iter().all(|p| r.contains(p)));
        let first: Vec<Sim2Pose> = poses[..1000].to_vec();
        assert!(ks_uniform(first.iter().map(|p| p.theta).collect(), 0.0, PI) <= 0.05);
        assert!(ks_uniform(first.iter().map(|p| p.scale).collect(), 0.8, 1.2) <= 0.05);
        assert!(ks_uniform(first.iter().map(|p| p.tx).collect(), -50.0, 50.0) <= 0.05);
        assert!(ks_uniform(first.iter().map(|p| p.ty).collect(), -50.0, 50.0) <= 0.05);
    }

    #[test]
    fn log_scale_stays_in_bounds() {
        let r = PoseRange {
            log_scale: true,
            ..PoseRange::default()
        };
        for s in 0..500 {
            let p = sample_pose(&r, s).unwrap();
            assert!(p.scale >= 0.8 && p.scale <= 1.2);
        }
    }

    fn texture(n: usize) -> Image {
        Image::from_fn(n, n, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.3 * (0.3 * x + 0.1 * y).sin() * (0.23 * y).cos()
        })
    }

    #[test]
    fn original_only_injection() {
        let img = texture(32);
        let id = inject_original_only(&img, &PoseRange::identity(), 3).unwrap();
        assert_eq!(id.randomized, img);
        let r = PoseRange {
            t_max: 6.0,
            ..PoseRange::default()
        };
        let pair = inject_original_only(&img, &r, 11).unwrap();
        assert_eq!(pair.randomized, warp(&img, &pair.xi_r).unwrap());
        assert_eq!(pair.original, img);
        for seed in 0..1000 {
            assert!(r.contains(&sample_pose(&r, seed).unwrap()));
        }
    }

    #[test]
    fn both_injection() {
        let o = texture(32);
        let t = o.map(|v| 0.8 * v + 0.1);
        let id = inject_both(&o, &t, &PoseRange::identity(), 0).unwrap();
        assert_eq!((id.original, id.target), (o.clone(), t.clone()));
        let p = inject_both(&o, &t, &PoseRange::default(), 5).unwrap();
        assert_eq!(p.original, warp(&o, &p.xi_r).unwrap());
        assert_eq!(p.target, warp(&t, &p.xi_r).unwrap());
        assert!(inject_both(&o, &Image::new(31, 32), &PoseRange::default(), 0).is_err());
    }
}
