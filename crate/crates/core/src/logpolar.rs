//! Log-polar resampling of centered magnitude spectra.
//!
//! Rows index angle over `[0, π)`, columns index log-radius from `r_min = 1`
//! to `r_max = min(W, H) / 2`. A rotation of the source by `δ` becomes a
//! circular shift of `δ · n_theta / π` rows; a scaling by `k` becomes a shift
//! of `ln k / ln rho_base` columns.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::Image;

pub const MIN_BINS: usize = 8;

/// Sampling layout of a log-polar grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPolarGeometry {
    pub n_theta: usize,
    pub n_rho: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub rho_base: f64,
}

impl LogPolarGeometry {
    pub fn new(width: usize, height: usize, n_theta: usize, n_rho: usize) -> Result<Self> {
        if n_theta < MIN_BINS || n_rho < MIN_BINS {
            return Err(Error::invalid(format!(
                "log-polar grid needs at least {MIN_BINS} bins per axis, got {n_theta}x{n_rho}"
            )));
        }
        let r_min = 1.0;
        let r_max = width.min(height) as f64 / 2.0;
        if r_max <= r_min {
            return Err(Error::invalid("image too small for log-polar sampling"));
        }
        let rho_base = ((r_max / r_min).ln() / (n_rho - 1) as f64).exp();
        Ok(Self {
            n_theta,
            n_rho,
            r_min,
            r_max,
            rho_base,
        })
    }

    /// Angular width of one row, radians.
    pub fn theta_step(&self) -> f64 {
        PI / self.n_theta as f64
    }

    pub fn theta_of_row(&self, row: usize) -> f64 {
        row as f64 * self.theta_step()
    }

    pub fn radius_of_col(&self, col: usize) -> f64 {
        self.r_min * self.rho_base.powi(col as i32)
    }

    /// Ratio between the outermost and innermost sampled radius.
    pub fn radial_span(&self) -> f64 {
        self.rho_base.powi((self.n_rho - 1) as i32)
    }
}

/// Log-polar resampled magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPolarGrid {
    pub geometry: LogPolarGeometry,
    /// `n_theta` rows by `n_rho` columns.
    pub values: Image,
}

impl LogPolarGrid {
    pub fn n_theta(&self) -> usize {
        self.geometry.n_theta
    }

    pub fn n_rho(&self) -> usize {
        self.geometry.n_rho
    }

    pub fn rho_base(&self) -> f64 {
        self.geometry.rho_base
    }
}

/// Samples a centered magnitude image on the log-polar grid around `(W/2, H/2)`.
pub fn to_logpolar(img: &Image, n_theta: usize, n_rho: usize) -> Result<LogPolarGrid> {
    let (w, h) = img.dims();
    let geometry = LogPolarGeometry::new(w, h, n_theta, n_rho)?;
    let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
    let radii: Vec<f64> = (0..n_rho).map(|j| geometry.radius_of_col(j)).collect();
    let mut values = Image::new(n_rho, n_theta);
    for i in 0..n_theta {
        let (sn, cs) = geometry.theta_of_row(i).sin_cos();
        for (j, &r) in radii.iter().enumerate() {
            values.set(j, i, img.sample_bilinear(cx + r * cs, cy + r * sn));
        }
    }
    Ok(LogPolarGrid { geometry, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Anisotropic pattern evaluated around `(W/2, H/2)`, rotated by `rot` and
    /// scaled by `k` analytically.
    fn pattern(n: usize, rot: f64, k: f64) -> Image {
        let c = (n / 2) as f64;
        Image::from_fn(n, n, |x, y| {
            let (dx, dy) = ((x as f64 - c) / k, (y as f64 - c) / k);
            let (sn, cs) = (-rot).sin_cos();
            let (u, v) = (cs * dx - sn * dy, sn * dx + cs * dy);
            let r = u.hypot(v);
            let ang = v.atan2(u);
            (-(r - 18.0).powi(2) / 60.0).exp() * (1.0 + (2.0 * ang).cos() + 0.5 * (6.0 * ang).sin())
                + (-(u - 9.0).powi(2) / 8.0 - (v - 4.0).powi(2) / 30.0).exp()
                + (-(u + 9.0).powi(2) / 8.0 - (v + 4.0).powi(2) / 30.0).exp()
        })
    }

    /// Best circular row shift `k` such that `b[row] ≈ a[row - k]`.
    fn best_row_shift(a: &Image, b: &Image) -> isize {
        let (cols, rows) = a.dims();
        (0..rows as isize)
            .map(|k| {
                let score: f64 = (0..rows)
                    .flat_map(|r| (0..cols).map(move |c| (r, c)))
                    .map(|(r, c)| {
                        let src = (r as isize - k).rem_euclid(rows as isize) as usize;
                        a.get(c, src) * b.get(c, r)
                    })
                    .sum();
                (k, score)
            })
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .map(|(k, _)| {
                if k > rows as isize / 2 {
                    k - rows as isize
                } else {
                    k
                }
            })
            .unwrap()
    }

    /// Column shift `k` minimizing the mean squared difference between
    /// `b[col]` and `a[col - k]` over the overlap, non-circular.
    fn best_col_shift(a: &Image, b: &Image, max: isize) -> isize {
        let (cols, rows) = a.dims();
        (-max..=max)
            .map(|k| {
                let mut ssd = 0.0;
                let mut n = 0;
                for r in 0..rows {
                    for c in 0..cols {
                        let src = c as isize - k;
                        if src >= 0 && (src as usize) < cols {
                            ssd += (a.get(src as usize, r) - b.get(c, r)).powi(2);
                            n += 1;
                        }
                    }
                }
                (k, ssd / n as f64)
            })
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn geometry_identities() {
        let g = LogPolarGeometry::new(256, 256, 256, 256).unwrap();
        assert!((g.radial_span() - 128.0).abs() < 1e-9);
        assert!((g.theta_step() - PI / 256.0).abs() < 1e-15);
        assert!((g.rho_base - 1.019_214).abs() < 1e-5);
    }

    #[test]
    fn too_few_bins_rejected() {
        let img = Image::filled(32, 32, 1.0);
        assert!(to_logpolar(&img, 7, 16).is_err());
        assert!(to_logpolar(&img, 16, 4).is_err());
    }

    #[test]
    fn radial_input_gives_identical_rows() {
        let n = 64;
        let c = (n / 2) as f64;
        let img = Image::from_fn(n, n, |x, y| {
            let r2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
            (-r2 / 2.0e6).exp()
        });
        let lp = to_logpolar(&img, 32, 32).unwrap();
        // keep radii inside the image so every row is fully sampled
        for col in 0..31 {
            let first = lp.values.get(col, 0);
            for row in 1..32 {
                assert!(
                    (lp.values.get(col, row) - first).abs() < 1e-6,
                    "col {col} row {row}"
                );
            }
        }
    }

    #[test]
    fn rotation_becomes_row_shift() {
        let n = 96;
        let delta = 20.0_f64.to_radians();
        let a = to_logpolar(&pattern(n, 0.0, 1.0), 90, 64).unwrap();
        let b = to_logpolar(&pattern(n, delta, 1.0), 90, 64).unwrap();
        let expected = delta / a.geometry.theta_step();
        let got = best_row_shift(&a.values, &b.values) as f64;
        assert!(
            (got - expected).abs() <= 0.5,
            "got {got}, expected {expected}"
        );
    }

    #[test]
    fn scaling_becomes_column_shift() {
        let n = 96;
        let k = 1.25;
        let a = to_logpolar(&pattern(n, 0.0, 1.0), 64, 96).unwrap();
        let b = to_logpolar(&pattern(n, 0.0, k), 64, 96).unwrap();
        let expected = k.ln() / a.rho_base().ln();
        let got = best_col_shift(&a.values, &b.values, 20) as f64;
        assert!(
            (got - expected).abs() <= 0.5,
            "got {got}, expected {expected}"
        );
    }
}
