//! Finite-difference training of a small parametric style translator.
//!
//! The translator is a `K×K` zero-padded convolution followed by a gain and
//! a bias. Two instances are trained: one maps the original domain to the
//! target domain, the other maps back and only enters the cycle term.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dims, Error, Result};
use crate::estimator::{
    estimate_sim2, estimate_sim2_against, EstimatorConfig, Reference, RotScaleSignature,
};
use crate::filter::{convolve2d, Border};
use crate::geometry::{angle_diff, overlap_mask, warp, Sim2Pose};
use crate::image::{Image, Mask};
use crate::io::read_image;
use crate::losses::{
    aggregate, l1_masked, loss_theta_s_signatures, loss_xi_r_signatures, realness_bce, Ablations,
    ConstantScorer, LossMode, LossReport, LossTerms, LossWeights, RealnessScorer,
};
use crate::randomization::{sample_pose_with, PoseRange};
use crate::synth::{EvalManifest, Manifest, EVAL_MANIFEST_FILE, MANIFEST_FILE};

pub const DEFAULT_KERNEL_SIZE: usize = 3;
pub const DEFAULT_LEARNING_RATE: f64 = 3e-3;
/// Wide enough to straddle the small loss jumps caused by pose estimates
/// moving between bins.
pub const DEFAULT_FD_STEP: f64 = 1e-2;
/// Weight of each self-supervision term in the default config. Their
/// gradients are two orders of magnitude larger than the image terms.
pub const DEFAULT_SELF_SUPERVISION_WEIGHT: f64 = 0.01;
/// Training aborts once the batch objective exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Pose tolerances counted as a successful estimate during evaluation.
pub const SUCCESS_THETA_DEG: f64 = 2.0;
pub const SUCCESS_SCALE_PCT: f64 = 2.0;
pub const SUCCESS_TRANS_PX: f64 = 2.0;

/// `K×K` kernel (row-major), gain and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatorParams {
    pub kernel_size: usize,
    pub kernel: Vec<f64>,
    pub gain: f64,
    pub bias: f64,
}

impl TranslatorParams {
    /// Center tap 1, gain 1, bias 0.
    pub fn identity(kernel_size: usize) -> Result<Self> {
        if kernel_size % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel size must be odd, got {kernel_size}"
            )));
        }
        let mut kernel = vec![0.0; kernel_size * kernel_size];
        kernel[kernel_size * kernel_size / 2] = 1.0;
        Ok(Self {
            kernel_size,
            kernel,
            gain: 1.0,
            bias: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.kernel.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Kernel taps, then gain, then bias.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.kernel.clone();
        v.push(self.gain);
        v.push(self.bias);
        v
    }

    pub fn from_vec(kernel_size: usize, v: &[f64]) -> Result<Self> {
        let taps = kernel_size * kernel_size;
        if kernel_size % 2 == 0 || v.len() != taps + 2 {
            return Err(Error::invalid(format!(
                "parameter vector of length {} does not fit a {kernel_size}x{kernel_size} kernel",
                v.len()
            )));
        }
        Ok(Self {
            kernel_size,
            kernel: v[..taps].to_vec(),
            gain: v[taps],
            bias: v[taps + 1],
        })
    }

    pub fn validate(&self) -> Result<()> {
        Self::from_vec(self.kernel_size, &self.to_vec())?;
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("translator parameters".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: Self = serde_json::from_str(&text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Zero-padded convolution, then `gain · x + bias`. No clamping.
pub fn translate(img: &Image, params: &TranslatorParams) -> Result<Image> {
    let conv = convolve2d(img, &params.kernel, params.kernel_size, Border::Zero)?;
    Ok(conv.map(|v| params.gain * v + params.bias))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub mode: LossMode,
    pub ablations: Ablations,
    pub learning_rate: f64,
    pub momentum: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub weights: LossWeights,
    pub seed: u64,
    pub estimator: EstimatorConfig,
    /// Range for injected poses; `None` uses the corpus range.
    pub pose_range: Option<PoseRange>,
    /// Central-difference step.
    pub fd_step: f64,
    pub kernel_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: LossMode::Full,
            ablations: Ablations::default(),
            learning_rate: DEFAULT_LEARNING_RATE,
            momentum: 0.9,
            steps: 200,
            batch_size: 4,
            weights: LossWeights {
                xi_r: DEFAULT_SELF_SUPERVISION_WEIGHT,
                theta_s: DEFAULT_SELF_SUPERVISION_WEIGHT,
                ..LossWeights::default()
            },
            seed: 0,
            estimator: EstimatorConfig::default(),
            pose_range: None,
            fd_step: DEFAULT_FD_STEP,
            kernel_size: DEFAULT_KERNEL_SIZE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::invalid("steps and batch size must be at least 1"));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::invalid("finite-difference step must be positive"));
        }
        self.weights.validate()?;
        if let Some(r) = &self.pose_range {
            r.validate()?;
        }
        Ok(())
    }
}

/// One weakly-paired example as the trainer sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    pub original: Image,
    pub target: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub pairs: Vec<TrainingPair>,
    pub pose_range: PoseRange,
}

impl Corpus {
    /// Loads `manifest.json` and its images from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = Manifest::load(dir.join(MANIFEST_FILE))?;
        let pairs = manifest
            .pairs
            .iter()
            .map(|r| load_pair(dir, &r.id, &r.original, &r.target))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            pairs,
            pose_range: manifest.pose_range,
        })
    }
}

fn load_pair(dir: &Path, id: &str, original: &str, target: &str) -> Result<TrainingPair> {
    let original = read_image(dir.join(original))?;
    let target = read_image(dir.join(target))?;
    ensure_same_dims(original.dims(), target.dims())?;
    Ok(TrainingPair {
        id: id.to_string(),
        original,
        target,
    })
}

/// Injected poses for one pair: the randomization pose applied to the
/// original alone and the self-supervision pose applied to both images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPoses {
    pub xi_r: Sim2Pose,
    pub xi_self: Sim2Pose,
}

impl PairPoses {
    pub fn sample(range: &PoseRange, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            xi_r: sample_pose_with(range, rng)?,
            xi_self: sample_pose_with(range, rng)?,
        })
    }
}

/// Parameter-independent inputs of one pair under fixed injected poses,
/// computed once and reused across finite-difference evaluations.
struct PreparedPair<'a> {
    pair: &'a TrainingPair,
    poses: PairPoses,
    /// `None` when the estimator cannot handle the target.
    reference: Option<Reference>,
    original_rand: Option<Image>,
    original_s: Option<Image>,
    target_s: Option<RotScaleSignature>,
}

impl<'a> PreparedPair<'a> {
    fn new(pair: &'a TrainingPair, poses: PairPoses, cfg: &TrainConfig) -> Result<Self> {
        ensure_same_dims(pair.original.dims(), pair.target.dims())?;
        let est = &cfg.estimator;
        let ab = &cfg.ablations;
        let (reference, original_rand) = if ab.no_pr {
            (None, None)
        } else {
            (
                Reference::new(&pair.target, est).ok(),
                Some(warp(&pair.original, &poses.xi_r)?),
            )
        };
        let self_sup = cfg.mode == LossMode::Full && !(ab.no_l_xi_r && ab.no_l_theta_s);
        let (original_s, target_s) = if self_sup {
            let target_s = if ab.no_l_theta_s {
                None
            } else {
                Some(RotScaleSignature::new(
                    &warp(&pair.target, &poses.xi_self)?,
                    est,
                )?)
            };
            (Some(warp(&pair.original, &poses.xi_self)?), target_s)
        } else {
            (None, None)
        };
        Ok(Self {
            pair,
            poses,
            reference,
            original_rand,
            original_s,
            target_s,
        })
    }
}

/// Estimated alignment of `moving` to the prepared target; estimator
/// failures fall back to the identity pose and count as low confidence.
fn align(
    moving: &Image,
    signature: Option<&RotScaleSignature>,
    reference: Option<&Reference>,
    cfg: &EstimatorConfig,
) -> (Sim2Pose, bool) {
    let (Some(sig), Some(reference)) = (signature, reference) else {
        return (Sim2Pose::identity(), true);
    };
    match estimate_sim2_against(moving, sig, reference, cfg) {
        Ok(est) => (est.pose, est.confidence.low),
        Err(_) => (Sim2Pose::identity(), true),
    }
}

/// Masked L1 after clamping `a`; an empty mask falls back to the full frame.
fn l1_valid(a: &Image, b: &Image, mask: &Mask) -> Result<f64> {
    let a = a.clamped();
    if mask.count() == 0 {
        return l1_masked(&a, b, &Mask::full(a.width(), a.height()));
    }
    l1_masked(&a, b, mask)
}

fn cycle_term(fake: &Image, original: &Image, params_o: &TranslatorParams) -> Result<f64> {
    let back = translate(fake, params_o)?;
    l1_valid(
        &back,
        original,
        &Mask::full(original.width(), original.height()),
    )
}

/// Raw terms for one pair plus whether any pose estimate was low-confidence.
fn pair_terms(
    prep: &PreparedPair,
    params_t: &TranslatorParams,
    params_o: &TranslatorParams,
    cfg: &TrainConfig,
    scorer: &dyn RealnessScorer,
) -> Result<(LossTerms, bool)> {
    let pair = prep.pair;
    let (w, h) = pair.target.dims();
    let est_cfg = &cfg.estimator;
    let ab = &cfg.ablations;
    let mut low = false;

    let fake = translate(&pair.original, params_t)?;
    let needs_signature = prep.reference.is_some() || prep.original_s.is_some();
    let fake_sig = if needs_signature {
        RotScaleSignature::new(&fake, est_cfg).ok()
    } else {
        None
    };
    let mut terms = LossTerms::default();

    let (aligned, aligned_rand) = match &prep.original_rand {
        None => {
            terms.trans = l1_valid(&fake, &pair.target, &Mask::full(w, h))?;
            (fake.clone(), fake.clone())
        }
        Some(original_rand) => {
            let fake_rand = translate(original_rand, params_t)?;
            let rand_sig = RotScaleSignature::new(&fake_rand, est_cfg).ok();
            let reference = prep.reference.as_ref();
            let (p1, low1) = align(&fake, fake_sig.as_ref(), reference, est_cfg);
            let (p2, low2) = align(&fake_rand, rand_sig.as_ref(), reference, est_cfg);
            low |= low1 || low2;
            let aligned = warp(&fake, &p1)?;
            let aligned_rand = warp(&fake_rand, &p2)?;
            let xi_r = &prep.poses.xi_r;
            terms.trans = l1_valid(&aligned, &pair.target, &overlap_mask(w, h, &p1, &p1))?
                + l1_valid(
                    &aligned_rand,
                    &pair.target,
                    &overlap_mask(w, h, &p2, &p2.compose(xi_r)),
                )?;
            (aligned, aligned_rand)
        }
    };

    if !ab.no_cycle {
        terms.cycle = cycle_term(&fake, &pair.original, params_o)?;
    }

    let score = |img: &Image| scorer.score(&img.clamped());
    // generator side: both translated images should look real
    terms.realness_g = realness_bce(score(&fake), true) + realness_bce(score(&aligned), true);
    terms.realness_d = realness_bce(score(&fake), false)
        + realness_bce(score(&aligned), false)
        + realness_bce(score(&aligned_rand), false)
        + realness_bce(scorer.score(&pair.target), true);

    if let Some(original_s) = &prep.original_s {
        let fake_sig = match fake_sig {
            Some(sig) => sig,
            None => RotScaleSignature::new(&fake, est_cfg)?,
        };
        let xi = &prep.poses.xi_self;
        let fake_s = RotScaleSignature::new(&translate(original_s, params_t)?, est_cfg)?;
        if !ab.no_l_xi_r {
            terms.xi_r = loss_xi_r_signatures(&fake_sig, &fake_s, xi, est_cfg)?;
        }
        if let (Some(target_s), Some(reference)) = (&prep.target_s, &prep.reference) {
            terms.theta_s = loss_theta_s_signatures(
                &fake_sig,
                &reference.signature,
                &fake_s,
                target_s,
                est_cfg,
            )?;
        } else if let Some(target_s) = &prep.target_s {
            let target_sig = RotScaleSignature::new(&pair.target, est_cfg)?;
            terms.theta_s =
                loss_theta_s_signatures(&fake_sig, &target_sig, &fake_s, target_s, est_cfg)?;
        }
    }
    Ok((ab.apply(terms), low))
}

/// Loss report for one pair under fixed injected poses.
pub fn forward_losses(
    pair: &TrainingPair,
    params_t: &TranslatorParams,
    params_o: &TranslatorParams,
    poses: &PairPoses,
    cfg: &TrainConfig,
) -> Result<LossReport> {
    forward_losses_with(
        pair,
        params_t,
        params_o,
        poses,
        cfg,
        &ConstantScorer::default(),
    )
}

pub fn forward_losses_with(
    pair: &TrainingPair,
    params_t: &TranslatorParams,
    params_o: &TranslatorParams,
    poses: &PairPoses,
    cfg: &TrainConfig,
    scorer: &dyn RealnessScorer,
) -> Result<LossReport> {
    let prep = PreparedPair::new(pair, *poses, cfg)?;
    let (terms, _) = pair_terms(&prep, params_t, params_o, cfg, scorer)?;
    aggregate(&terms, &cfg.weights, cfg.mode)
}

/// Mean report over a batch plus the number of low-confidence estimates.
fn batch_report(
    batch: &[PreparedPair],
    params_t: &TranslatorParams,
    params_o: &TranslatorParams,
    cfg: &TrainConfig,
) -> Result<(LossReport, usize)> {
    let scorer = ConstantScorer::default();
    let mut all = Vec::with_capacity(batch.len());
    let mut low = 0;
    for prep in batch {
        let (terms, l) = pair_terms(prep, params_t, params_o, cfg, &scorer)?;
        all.push(terms);
        low += l as usize;
    }
    let mean = LossTerms::mean(&all).ok_or_else(|| Error::invalid("empty batch"))?;
    Ok((aggregate(&mean, &cfg.weights, cfg.mode)?, low))
}

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h` per coordinate.
pub fn grad_fd(
    mut objective: impl FnMut(&[f64]) -> Result<f64>,
    params: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let plus = objective(&p)?;
        p[i] = orig - h;
        let minus = objective(&p)?;
        p[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Per-step record: the batch report at the parameters before the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub report: LossReport,
    pub total: f64,
    pub low_confidence: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params_t: TranslatorParams,
    pub params_o: TranslatorParams,
    pub history: Vec<HistoryRow>,
}

/// Gradient descent with momentum on the configured aggregate.
///
/// Each step draws a batch of pairs and their injected poses from a
/// generator seeded with `cfg.seed`; the poses stay fixed while the
/// finite-difference gradient is taken.
pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.pairs.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    let range = cfg.pose_range.unwrap_or(corpus.pose_range);
    range.validate()?;
    let k = cfg.kernel_size;
    let mut params_t = TranslatorParams::identity(k)?;
    let mut params_o = TranslatorParams::identity(k)?;
    let mut vel_t = vec![0.0; params_t.len()];
    let mut vel_o = vec![0.0; params_o.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let pair = &corpus.pairs[rng.random_range(0..corpus.pairs.len())];
            let poses = PairPoses::sample(&range, &mut rng)?;
            batch.push(PreparedPair::new(pair, poses, cfg)?);
        }

        let (report, low) = batch_report(&batch, &params_t, &params_o, cfg)?;
        let total = report.total(cfg.mode);
        if !total.is_finite() || total > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { step, loss: total });
        }
        history.push(HistoryRow {
            step,
            report,
            total,
            low_confidence: low,
        });

        let grad_t = grad_fd(
            |v| {
                let p = TranslatorParams::from_vec(k, v)?;
                Ok(batch_report(&batch, &p, &params_o, cfg)?.0.total(cfg.mode))
            },
            &params_t.to_vec(),
            cfg.fd_step,
        )?;
        // the reverse translator only enters the cycle term
        let grad_o = if cfg.ablations.no_cycle {
            vec![0.0; params_o.len()]
        } else {
            let fakes = batch
                .iter()
                .map(|prep| translate(&prep.pair.original, &params_t))
                .collect::<Result<Vec<_>>>()?;
            grad_fd(
                |v| {
                    let p = TranslatorParams::from_vec(k, v)?;
                    let mut sum = 0.0;
                    for (fake, prep) in fakes.iter().zip(&batch) {
                        sum += cycle_term(fake, &prep.pair.original, &p)?;
                    }
                    Ok(cfg.weights.cycle * sum / batch.len() as f64)
                },
                &params_o.to_vec(),
                cfg.fd_step,
            )?
        };

        params_t = momentum_step(&params_t, &mut vel_t, &grad_t, cfg)?;
        params_o = momentum_step(&params_o, &mut vel_o, &grad_o, cfg)?;
        if params_t.validate().is_err() || params_o.validate().is_err() {
            return Err(Error::Diverged {
                step: step + 1,
                loss: f64::NAN,
            });
        }
    }
    Ok(TrainOutcome {
        params_t,
        params_o,
        history,
    })
}

fn momentum_step(
    params: &TranslatorParams,
    velocity: &mut [f64],
    grad: &[f64],
    cfg: &TrainConfig,
) -> Result<TranslatorParams> {
    let mut v = params.to_vec();
    for ((p, vel), g) in v.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *vel = cfg.momentum * *vel - cfg.learning_rate * g;
        *p += *vel;
    }
    TranslatorParams::from_vec(params.kernel_size, &v)
}

/// Mean report over every pair of the corpus, with injected poses drawn
/// from a generator seeded with `seed`.
pub fn corpus_report(
    corpus: &Corpus,
    params_t: &TranslatorParams,
    params_o: &TranslatorParams,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LossReport> {
    let range = cfg.pose_range.unwrap_or(corpus.pose_range);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = corpus
        .pairs
        .iter()
        .map(|p| PreparedPair::new(p, PairPoses::sample(&range, &mut rng)?, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(batch_report(&batch, params_t, params_o, cfg)?.0)
}

pub const HISTORY_HEADER: [&str; 11] = [
    "step",
    "l_trans",
    "l_cycle",
    "l_realness_g",
    "l_realness_d",
    "l_xi_r",
    "l_theta_s",
    "total_basic",
    "total_full",
    "total",
    "low_confidence",
];

/// One row per step with every loss term and the optimized total.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[HistoryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for row in history {
        let r = &row.report;
        let values = [
            r.l_trans,
            r.l_cycle,
            r.l_realness_g,
            r.l_realness_d,
            r.l_xi_r,
            r.l_theta_s,
            r.total_basic,
            r.total_full,
            row.total,
        ];
        let mut record = vec![row.step.to_string()];
        record.extend(values.iter().map(|v| v.to_string()));
        record.push(row.low_confidence.to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Evaluation pair with its ground-truth pose.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub pair: TrainingPair,
    pub xi: Sim2Pose,
}

pub fn load_eval_pairs(dir: impl AsRef<Path>) -> Result<Vec<EvalPair>> {
    let dir = dir.as_ref();
    let manifest = EvalManifest::load(dir.join(EVAL_MANIFEST_FILE))?;
    manifest
        .pairs
        .iter()
        .map(|r| {
            Ok(EvalPair {
                pair: load_pair(dir, &r.pair.id, &r.pair.original, &r.pair.target)?,
                xi: r.xi.into(),
            })
        })
        .collect()
}

/// Per-pair evaluation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    /// Masked L1 between the estimate-aligned translation and the target.
    pub l1_aligned: f64,
    /// Masked L1 between the ground-truth-aligned translation and the target.
    pub l1_gt: f64,
    pub theta_err_deg: f64,
    pub scale_err_pct: f64,
    pub trans_err_px: f64,
    pub success: f64,
    pub low_confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean: EvalRow,
    pub median: EvalRow,
}

fn summarize(rows: &[EvalRow], id: &str, f: impl Fn(&mut Vec<f64>) -> f64) -> EvalRow {
    let col = |g: fn(&EvalRow) -> f64| {
        let mut v: Vec<f64> = rows.iter().map(g).collect();
        f(&mut v)
    };
    EvalRow {
        id: id.to_string(),
        l1_aligned: col(|r| r.l1_aligned),
        l1_gt: col(|r| r.l1_gt),
        theta_err_deg: col(|r| r.theta_err_deg),
        scale_err_pct: col(|r| r.scale_err_pct),
        trans_err_px: col(|r| r.trans_err_px),
        success: col(|r| r.success),
        low_confidence: col(|r| r.low_confidence),
    }
}

fn mean(v: &mut Vec<f64>) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &mut Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Translates every original, aligns it to its target with the estimator,
/// and scores image and pose errors against the ground truth.
pub fn evaluate(
    params_t: &TranslatorParams,
    pairs: &[EvalPair],
    cfg: &EstimatorConfig,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    params_t.validate()?;
    let mut rows = Vec::with_capacity(pairs.len());
    for ep in pairs {
        let p = &ep.pair;
        ensure_same_dims(p.original.dims(), p.target.dims())?;
        let (w, h) = p.target.dims();
        let fake = translate(&p.original, params_t)?;
        let (pose, low) = match estimate_sim2(&fake, &p.target, cfg) {
            Ok(est) => (est.pose, est.confidence.low),
            Err(_) => (Sim2Pose::identity(), true),
        };
        let l1_aligned = l1_valid(
            &warp(&fake, &pose)?,
            &p.target,
            &overlap_mask(w, h, &pose, &ep.xi),
        )?;
        let l1_gt = l1_valid(
            &warp(&fake, &ep.xi)?,
            &p.target,
            &overlap_mask(w, h, &ep.xi, &ep.xi),
        )?;
        let theta_err = angle_diff(pose.theta, ep.xi.theta, 2.0 * std::f64::consts::PI)
            .abs()
            .to_degrees();
        let scale_err = (pose.scale / ep.xi.scale - 1.0).abs() * 100.0;
        let trans_err = (pose.tx - ep.xi.tx).hypot(pose.ty - ep.xi.ty);
        let success = theta_err <= SUCCESS_THETA_DEG
            && scale_err <= SUCCESS_SCALE_PCT
            && (pose.tx - ep.xi.tx).abs() <= SUCCESS_TRANS_PX
            && (pose.ty - ep.xi.ty).abs() <= SUCCESS_TRANS_PX;
        rows.push(EvalRow {
            id: p.id.clone(),
            l1_aligned,
            l1_gt,
            theta_err_deg: theta_err,
            scale_err_pct: scale_err,
            trans_err_px: trans_err,
            success: success as u8 as f64,
            low_confidence: low as u8 as f64,
        });
    }
    let mean_row = summarize(&rows, "mean", mean);
    let median_row = summarize(&rows, "median", median);
    Ok(EvalReport {
        rows,
        mean: mean_row,
        median: median_row,
    })
}

/// Per-pair rows followed by `mean` and `median` rows.
pub fn write_metrics_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for row in report.rows.iter().chain([&report.mean, &report.median]) {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
