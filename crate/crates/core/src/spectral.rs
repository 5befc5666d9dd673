//! 2D discrete Fourier transform and spectrum conditioning.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::image::Image;

/// Complex coefficients of a 2D DFT, row-major like [`Image`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_vec(width: usize, height: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.data[v * self.width + u]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
}

thread_local! {
    // the planner memoizes plans per length
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_2d(data: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    let (row_fft, col_fft): (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) = PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        if inverse {
            (
                planner.plan_fft_inverse(width),
                planner.plan_fft_inverse(height),
            )
        } else {
            (
                planner.plan_fft_forward(width),
                planner.plan_fft_forward(height),
            )
        }
    });

    let mut scratch = vec![Complex64::default(); row_fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(width) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    let mut column = vec![Complex64::default(); height];
    let mut scratch = vec![Complex64::default(); col_fft.get_inplace_scratch_len()];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        col_fft.process_with_scratch(&mut column, &mut scratch);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
}

/// Unnormalized forward 2D DFT.
pub fn dft2(img: &Image) -> Spectrum {
    let (w, h) = img.dims();
    let mut data: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_2d(&mut data, w, h, false);
    Spectrum::from_vec(w, h, data)
}

/// Inverse 2D DFT with `1/(W·H)` normalization.
pub fn idft2(spec: &Spectrum) -> Vec<Complex64> {
    let (w, h) = spec.dims();
    let mut data = spec.data.clone();
    fft_2d(&mut data, w, h, true);
    let norm = 1.0 / (w * h) as f64;
    for c in &mut data {
        *c *= norm;
    }
    data
}

/// Real part of the inverse DFT.
pub fn idft2_real(spec: &Spectrum) -> Image {
    let (w, h) = spec.dims();
    let data = idft2(spec).into_iter().map(|c| c.re).collect();
    Image::from_vec(w, h, data).expect("spectrum dims are valid")
}

/// Moves index 0 to `n / 2` along both axes.
pub fn fftshift(img: &Image) -> Image {
    let (w, h) = img.dims();
    let mut out = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set((x + w / 2) % w, (y + h / 2) % h, img.get(x, y));
        }
    }
    out
}

/// Per-bin modulus with DC moved to `(W/2, H/2)`.
pub fn magnitude_centered(spec: &Spectrum) -> Image {
    let (w, h) = spec.dims();
    let mut out = Image::new(w, h);
    for v in 0..h {
        for u in 0..w {
            out.set(
                (u + w / 2) % w,
                (v + h / 2) % h,
                spec.get(u, v).norm_sqr().sqrt(),
            );
        }
    }
    out
}

/// Hann window `sin²(π n / (N-1))`; a single sample gets weight 1.
pub fn hann(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0; n];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let s = (PI * i as f64 / denom).sin();
            s * s
        })
        .collect()
}

/// Separable Hann window applied pointwise.
pub fn window_hann(img: &Image) -> Image {
    let (w, h) = img.dims();
    let wx = hann(w);
    let wy = hann(h);
    Image::from_fn(w, h, |x, y| img.get(x, y) * wx[x] * wy[y])
}

/// Radial raised-cosine emphasis `H(r) = X (2 - X)` with `X = 1 - cos(π r̂)`
/// and `r̂ = min(r / r_max, 1) / 2`. Rises monotonically from 0 at DC to 1 at
/// `r_max`; bins beyond keep weight 1.
pub fn highpass_weight(r: f64, r_max: f64) -> f64 {
    if r >= r_max {
        return 1.0;
    }
    let rhat = 0.5 * (r / r_max).clamp(0.0, 1.0);
    let x = 1.0 - (PI * rhat).cos();
    x * (2.0 - x)
}

/// Multiplies a centered magnitude image by [`highpass_weight`] around
/// `(W/2, H/2)` with `r_max = min(W, H) / 2`.
pub fn highpass(img: &Image) -> Image {
    let (w, h) = img.dims();
    thread_local! {
        static WEIGHTS: RefCell<Option<Image>> = const { RefCell::new(None) };
    }
    WEIGHTS.with(|cache| {
        let mut cache = cache.borrow_mut();
        if cache.as_ref().is_none_or(|c| c.dims() != (w, h)) {
            *cache = Some(highpass_weights(w, h));
        }
        let weights = cache.as_ref().expect("filled above");
        let data = img
            .data()
            .iter()
            .zip(weights.data())
            .map(|(v, k)| v * k)
            .collect();
        Image::from_vec(w, h, data).expect("same dims")
    })
}

fn highpass_weights(w: usize, h: usize) -> Image {
    let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
    let r_max = w.min(h) as f64 / 2.0;
    Image::from_fn(w, h, |x, y| {
        highpass_weight((x as f64 - cx).hypot(y as f64 - cy), r_max)
    })
}
