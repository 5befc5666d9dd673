//! Synthetic weakly-paired data: a style corruption followed by a SIM(2)
//! pose, `target = warp(style(original), xi)`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{convolve2d, gaussian_blur, Border};
use crate::geometry::{warp, Sim2Pose};
use crate::image::Image;
use crate::io::{quantized, read_image, write_pgm};
use crate::randomization::{sample_pose, PoseRange};

/// Style corruption: kernel disruption, Gaussian blur, then `gain·x + bias`,
/// clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSpec {
    pub blur_sigma: f64,
    pub kernel_size: usize,
    /// `kernel_size²` taps, row-major.
    pub kernel: Vec<f64>,
    pub gain: f64,
    pub bias: f64,
    pub seed: u64,
}

impl StyleSpec {
    pub fn identity() -> Self {
        Self::pointwise(1.0, 0.0)
    }

    /// Gain/bias only; no spatial filtering.
    pub fn pointwise(gain: f64, bias: f64) -> Self {
        Self {
            blur_sigma: 0.0,
            kernel_size: 1,
            kernel: vec![1.0],
            gain,
            bias,
            seed: 0,
        }
    }

    /// Random 3x3 disruption kernel normalized to sum 1, drawn once from `seed`.
    pub fn seeded(seed: u64, blur_sigma: f64, gain: f64, bias: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kernel: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..0.5)).collect();
        kernel[4] += rng.random_range(1.0..2.0);
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        Self {
            blur_sigma,
            kernel_size: 3,
            kernel,
            gain,
            bias,
            seed,
        }
    }

    /// Defaults used by the corrupt style: blur σ = 1, gain 0.9, bias 0.05.
    pub fn default_corruption(seed: u64) -> Self {
        Self::seeded(seed, 1.0, 0.9, 0.05)
    }

    pub fn is_pointwise(&self) -> bool {
        self.blur_sigma <= 0.0 && self.kernel_size == 1 && self.kernel == [1.0]
    }
}

pub fn apply_style(img: &Image, spec: &StyleSpec) -> Result<Image> {
    let mut out = if spec.kernel_size == 1 && spec.kernel.len() == 1 {
        img.map(|v| v * spec.kernel[0])
    } else {
        convolve2d(img, &spec.kernel, spec.kernel_size, Border::Replicate)?
    };
    out = gaussian_blur(&out, spec.blur_sigma, Border::Replicate);
    Ok(out.map(|v| (spec.gain * v + spec.bias).clamp(0.0, 1.0)))
}

/// Seeded smooth texture in `[0.05, 0.95]`: band-limited noise at two scales
/// plus a few oriented bars.
pub fn texture(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fine = Image::from_fn(width, height, |_, _| rng.random::<f64>() - 0.5);
    let coarse = Image::from_fn(width, height, |_, _| rng.random::<f64>() - 0.5);
    let fine = gaussian_blur(&fine, 1.5, Border::Wrap);
    let coarse = gaussian_blur(&coarse, 5.0, Border::Wrap);
    let scale = width.min(height) as f64;
    let bars: Vec<(f64, f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
                rng.random_range(0.0..std::f64::consts::PI),
                rng.random_range(0.1..0.35) * scale,
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let raw = Image::from_fn(width, height, |x, y| {
        let mut v = 4.0 * fine.get(x, y) + 6.0 * coarse.get(x, y);
        for &(cx, cy, ang, len, amp) in &bars {
            let (sn, cs) = ang.sin_cos();
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let along = dx * cs + dy * sn;
            let across = -dx * sn + dy * cs;
            let w = (-(across * across) / 4.0).exp() * (-(along * along) / (2.0 * len * len)).exp();
            v += 0.25 * amp * w;
        }
        v
    });
    let lo = raw.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    raw.map(|v| 0.05 + 0.9 * (v - lo) / span)
}

/// One generated pair with its ground-truth pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub original: Image,
    pub target: Image,
    pub xi: Sim2Pose,
    pub seed: u64,
}

/// `target = warp(apply_style(img), xi)` with `xi = sample_pose(range, seed)`.
pub fn make_pair(img: &Image, spec: &StyleSpec, range: &PoseRange, seed: u64) -> Result<SynthPair> {
    let xi = sample_pose(range, seed)?;
    let target = warp(&apply_style(img, spec)?, &xi)?;
    Ok(SynthPair {
        original: img.clone(),
        target,
        xi,
        seed,
    })
}

/// Ground-truth pose as stored in the eval manifest. `theta` is radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiRecord {
    pub s: f64,
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl From<Sim2Pose> for XiRecord {
    fn from(p: Sim2Pose) -> Self {
        Self {
            s: p.scale,
            theta: p.theta,
            tx: p.tx,
            ty: p.ty,
        }
    }
}

impl From<XiRecord> for Sim2Pose {
    fn from(x: XiRecord) -> Self {
        Sim2Pose::new(x.s, x.theta, x.tx, x.ty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakPairRecord {
    pub id: String,
    /// Paths relative to the manifest directory.
    pub original: String,
    pub target: String,
    pub style_id: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    #[serde(flatten)]
    pub pair: WeakPairRecord,
    pub xi: XiRecord,
}

/// Training manifest. Carries no ground-truth poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub pairs: Vec<WeakPairRecord>,
    pub style_specs: BTreeMap<String, StyleSpec>,
    pub pose_range: PoseRange,
}

/// Evaluation manifest: the training records plus `xi` per pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifest {
    pub pairs: Vec<EvalRecord>,
    pub style_specs: BTreeMap<String, StyleSpec>,
    pub pose_range: PoseRange,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVAL_MANIFEST_FILE: &str = "eval_manifest.json";
const STYLE_ID: &str = "style0";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

impl EvalManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

/// Where corpus originals come from.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    /// Every `.pgm`/`.png` in the directory, sorted by file name, reused cyclically.
    Directory(PathBuf),
    /// Seeded [`texture`] images of the given size, one per pair.
    Textures { width: usize, height: usize },
}

/// SplitMix64 step; used to derive decorrelated per-pair seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn list_sources(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("pgm" | "png")) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            message: "no .pgm or .png source images".into(),
        });
    }
    Ok(paths)
}

/// Writes `n` pairs, `manifest.json` and `eval_manifest.json` into `out_dir`.
///
/// Originals are quantized to 8 bits before the target is synthesized, so
/// the stored target is reproducible bit-exactly from the stored original.
pub fn generate_corpus(
    source: &CorpusSource,
    out_dir: impl AsRef<Path>,
    spec: &StyleSpec,
    range: &PoseRange,
    n: usize,
    seed: u64,
) -> Result<(Manifest, EvalManifest)> {
    let out_dir = out_dir.as_ref();
    range.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let sources = match source {
        CorpusSource::Directory(dir) if n > 0 => list_sources(dir)?,
        _ => Vec::new(),
    };

    let mut pairs = Vec::with_capacity(n);
    let mut eval_pairs = Vec::with_capacity(n);
    for i in 0..n {
        let pair_seed = mix_seed(seed, i as u64);
        let original = match source {
            CorpusSource::Directory(_) => read_image(&sources[i % sources.len()])?,
            CorpusSource::Textures { width, height } => texture(*width, *height, pair_seed),
        };
        let original = quantized(&original);
        let pair = make_pair(&original, spec, range, pair_seed)?;
        let record = WeakPairRecord {
            id: format!("pair_{i:04}"),
            original: format!("original_{i:04}.pgm"),
            target: format!("target_{i:04}.pgm"),
            style_id: STYLE_ID.to_string(),
            seed: pair_seed,
        };
        write_pgm(out_dir.join(&record.original), &pair.original)?;
        write_pgm(out_dir.join(&record.target), &pair.target)?;
        eval_pairs.push(EvalRecord {
            pair: record.clone(),
            xi: pair.xi.into(),
        });
        pairs.push(record);
    }

    let style_specs: BTreeMap<String, StyleSpec> = [(STYLE_ID.to_string(), spec.clone())].into();
    let manifest = Manifest {
        pairs,
        style_specs: style_specs.clone(),
        pose_range: *range,
    };
    let eval = EvalManifest {
        pairs: eval_pairs,
        style_specs,
        pose_range: *range,
    };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    eval.save(out_dir.join(EVAL_MANIFEST_FILE))?;
    Ok((manifest, eval))
}

/// Re-synthesizes the target of `record` from its stored original.
pub fn regenerate_target(
    dir: impl AsRef<Path>,
    record: &EvalRecord,
    spec: &StyleSpec,
) -> Result<Image> {
    let original = read_image(dir.as_ref().join(&record.pair.original))?;
    warp(&apply_style(&original, spec)?, &record.xi.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::overlap_mask;
    use crate::io::encode_pgm;

    #[test]
    fn identity_style_is_noop() {
        let img = texture(24, 20, 1);
        assert_eq!(apply_style(&img, &StyleSpec::identity()).unwrap(), img);
    }

    #[test]
    fn constant_image_survives_normalized_kernel() {
        let spec = StyleSpec {
            gain: 1.0,
            bias: 0.0,
            blur_sigma: 0.8,
            ..StyleSpec::seeded(4, 0.0, 1.0, 0.0)
        };
        let img = Image::filled(16, 16, 0.37);
        for v in apply_style(&img, &spec).unwrap().data() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_imprints_kernel() {
        let spec = StyleSpec::seeded(8, 0.0, 1.0, 0.0);
        let mut img = Image::new(9, 9);
        img.set(4, 4, 1.0);
        let out = apply_style(&img, &spec).unwrap();
        // correlation with a delta reproduces the kernel flipped about its center
        for ky in 0..3 {
            for kx in 0..3 {
                let expected = spec.kernel[(2 - ky) * 3 + (2 - kx)];
                assert!((out.get(3 + kx, 3 + ky) - expected).abs() < 1e-12);
            }
        }
        assert!((out.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn even_kernel_is_an_error() {
        let spec = StyleSpec {
            kernel_size: 2,
            kernel: vec![0.25; 4],
            ..StyleSpec::identity()
        };
        assert!(apply_style(&Image::new(4, 4), &spec).is_err());
    }

    #[test]
    fn seeded_kernel_sums_to_one() {
        let spec = StyleSpec::default_corruption(12);
        assert!((spec.kernel.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(spec, StyleSpec::default_corruption(12));
        assert_ne!(spec.kernel, StyleSpec::default_corruption(13).kernel);
    }

    #[test]
    fn make_pair_identity_and_determinism() {
        let img = texture(32, 32, 2);
        let p = make_pair(&img, &StyleSpec::identity(), &PoseRange::identity(), 5).unwrap();
        assert_eq!(p.target, img);
        let range = PoseRange {
            t_max: 5.0,
            ..PoseRange::default()
        };
        let spec = StyleSpec::default_corruption(3);
        let a = make_pair(&img, &spec, &range, 77).unwrap();
        let b = make_pair(&img, &spec, &range, 77).unwrap();
        assert_eq!(encode_pgm(&a.target), encode_pgm(&b.target));
        assert_eq!(a, b);
    }

    #[test]
    fn pointwise_style_commutes_with_warp() {
        let spec = StyleSpec::pointwise(0.7, 0.2);
        let range = PoseRange {
            t_max: 8.0,
            ..PoseRange::default()
        };
        for seed in 0..5 {
            let img = texture(48, 48, seed);
            let xi = sample_pose(&range, seed).unwrap();
            let a = apply_style(&warp(&img, &xi).unwrap(), &spec).unwrap();
            let b = warp(&apply_style(&img, &spec).unwrap(), &xi).unwrap();
            let mask = overlap_mask(48, 48, &xi, &xi);
            let err: f64 = (0..48 * 48)
                .filter(|&i| mask.data()[i])
                .map(|i| (a.data()[i] - b.data()[i]).abs())
                .sum::<f64>()
                / mask.count() as f64;
            assert!(err <= 2e-2, "seed {seed}: {err}");
        }
    }

    #[test]
    fn texture_is_seeded_and_bounded() {
        let a = texture(40, 30, 9);
        assert_eq!(a, texture(40, 30, 9));
        assert_ne!(a, texture(40, 30, 10));
        assert!(a
            .data()
            .iter()
            .all(|&v| (0.05 - 1e-12..=0.95 + 1e-12).contains(&v)));
    }

    #[test]
    fn corpus_sizes_and_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let src = CorpusSource::Textures {
            width: 32,
            height: 32,
        };
        let spec = StyleSpec::default_corruption(1);
        let range = PoseRange {
            t_max: 4.0,
            ..PoseRange::default()
        };
        let (m, e) = generate_corpus(&src, dir.path().join("empty"), &spec, &range, 0, 1).unwrap();
        assert!(m.pairs.is_empty() && e.pairs.is_empty());

        let out = dir.path().join("five");
        let (m, e) = generate_corpus(&src, &out, &spec, &range, 5, 1).unwrap();
        assert_eq!(m.pairs.len(), 5);
        let mut seeds: Vec<u64> = m.pairs.iter().map(|p| p.seed).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 5);
        assert_eq!(Manifest::load(out.join(MANIFEST_FILE)).unwrap(), m);
        for rec in &e.pairs {
            let regenerated = regenerate_target(&out, rec, &spec).unwrap();
            let stored = std::fs::read(out.join(&rec.pair.target)).unwrap();
            assert_eq!(encode_pgm(&regenerated), stored);
        }
        let text = std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap();
        assert!(!text.contains("\"xi\""));
    }

    #[test]
    fn corpus_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src");
        std::fs::create_dir(&src).unwrap();
        write_pgm(src.join("b.pgm"), &texture(16, 16, 1)).unwrap();
        write_pgm(src.join("a.pgm"), &texture(16, 16, 2)).unwrap();
        let (m, _) = generate_corpus(
            &CorpusSource::Directory(src.clone()),
            dir.path().join("out"),
            &StyleSpec::identity(),
            &PoseRange::identity(),
            3,
            0,
        )
        .unwrap();
        assert_eq!(m.pairs.len(), 3);
        let first = read_image(dir.path().join("out").join(&m.pairs[0].original)).unwrap();
        assert_eq!(first, read_image(src.join("a.pgm")).unwrap());

        let empty = dir.path().join("nothing");
        std::fs::create_dir(&empty).unwrap();
        let err = generate_corpus(
            &CorpusSource::Directory(empty),
            dir.path().join("out2"),
            &StyleSpec::identity(),
            &PoseRange::identity(),
            1,
            0,
        )
        .unwrap_err();
        assert!(err.is_io());
    }
}
