//! 8-bit grayscale image files. PGM (P5) is the canonical format; PNG is
//! accepted on read and optional on write.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Maps `[0, 1]` to `0..=255` with clamping and rounding.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Round-trips every pixel through 8-bit storage.
pub fn quantized(img: &Image) -> Image {
    img.map(|v| quantize(v) as f64 / 255.0)
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn write_png(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    buf.save(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes PNG for a `.png` extension and PGM otherwise.
pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => write_png(path, img),
        _ => write_pgm(path, img),
    }
}

/// Reads any PGM/PNG (or other format the `image` crate knows) as grayscale.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gray = decoded.to_luma8();
    let (w, h) = gray.dimensions();
    let data = gray
        .into_raw()
        .into_iter()
        .map(|b| b as f64 / 255.0)
        .collect();
    Image::from_vec(w as usize, h as usize, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_is_exact_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = quantized(&Image::from_fn(9, 4, |x, y| (x + 3 * y) as f64 / 20.0));
        let path = dir.path().join("a.pgm");
        write_pgm(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n9 4\n255\n"));
        assert_eq!(bytes.len(), 11 + 36);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = quantized(&Image::from_fn(5, 6, |x, y| (x * y) as f64 / 20.0));
        let path = dir.path().join("a.png");
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn missing_and_garbage_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_image(dir.path().join("nope.pgm")).unwrap_err().is_io());
        let bad = dir.path().join("bad.pgm");
        std::fs::write(&bad, b"not an image").unwrap();
        assert!(read_image(&bad).unwrap_err().is_io());
    }

    #[test]
    fn quantize_clamps() {
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(0.5), 128);
    }
}
