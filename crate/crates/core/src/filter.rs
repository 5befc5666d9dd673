//! Small convolution helpers shared by the style model and the translator.

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Out-of-range reads are zero.
    Zero,
    /// Out-of-range reads clamp to the nearest edge pixel.
    Replicate,
    /// Out-of-range reads wrap around.
    Wrap,
}

#[inline]
fn read(img: &Image, x: isize, y: isize, border: Border) -> f64 {
    let (w, h) = (img.width() as isize, img.height() as isize);
    match border {
        Border::Zero => {
            if x < 0 || y < 0 || x >= w || y >= h {
                0.0
            } else {
                img.get(x as usize, y as usize)
            }
        }
        Border::Replicate => img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize),
        Border::Wrap => img.get(x.rem_euclid(w) as usize, y.rem_euclid(h) as usize),
    }
}

/// Correlates `img` with a square `size x size` kernel (row-major), anchored
/// at the kernel center.
pub fn convolve2d(img: &Image, kernel: &[f64], size: usize, border: Border) -> Result<Image> {
    if size % 2 == 0 {
        return Err(Error::invalid(format!(
            "kernel size must be odd, got {size}"
        )));
    }
    if kernel.len() != size * size {
        return Err(Error::invalid(format!(
            "kernel has {} taps, expected {}",
            kernel.len(),
            size * size
        )));
    }
    let r = (size / 2) as isize;
    let (w, h) = img.dims();
    let mut out = Image::new(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for ky in -r..=r {
                for kx in -r..=r {
                    let k = kernel[((ky + r) as usize) * size + (kx + r) as usize];
                    if k != 0.0 {
                        acc += k * read(img, x + kx, y + ky, border);
                    }
                }
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    Ok(out)
}

/// Normalized 1D Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur; `sigma <= 0` returns the input.
pub fn gaussian_blur(img: &Image, sigma: f64, border: Border) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as isize;
    let (w, h) = img.dims();
    let horizontal = Image::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| t * read(img, x as isize + i as isize - r, y as isize, border))
            .sum()
    });
    Image::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(i, t)| t * read(&horizontal, x as isize, y as isize + i as isize - r, border))
            .sum()
    })
}
