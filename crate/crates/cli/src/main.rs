//! `weakpair` command-line front end.

mod selftest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use weakpair::estimator::{estimate_sim2, EstimatorConfig, ReadoutMode};
use weakpair::io::{read_image, write_image};
use weakpair::losses::{Ablations, LossMode, LossWeights};
use weakpair::randomization::PoseRange;
use weakpair::synth::{generate_corpus, CorpusSource, StyleSpec};
use weakpair::trainer::{
    evaluate, load_eval_pairs, train, write_history_csv, write_metrics_csv, Corpus, TrainConfig,
    TranslatorParams,
};
use weakpair::{warp, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_SELFTEST: u8 = 4;

/// SIM(2) registration by phase correlation and pose-randomized style
/// translation training.
#[derive(Debug, Parser)]
#[command(name = "weakpair", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct GlobalArgs {
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = "WEAKPAIR_SEED", default_value_t = 0)]
    seed: u64,
    /// Softmax inverse temperature of the pose readout.
    #[arg(long, global = true, env = "WEAKPAIR_BETA")]
    beta: Option<f64>,
    /// Pose readout: softmax expectation or refined argmax.
    #[arg(long, global = true, env = "WEAKPAIR_MODE", value_enum, default_value_t = Readout::Soft)]
    mode: Readout,
    /// Angle bins of the log-polar grid (default: image height).
    #[arg(long, global = true, env = "WEAKPAIR_N_THETA")]
    n_theta: Option<usize>,
    /// Log-radius bins of the log-polar grid (default: image width).
    #[arg(long, global = true, env = "WEAKPAIR_N_RHO")]
    n_rho: Option<usize>,
    /// Skip the Hann window before each DFT.
    #[arg(long, global = true, env = "WEAKPAIR_NO_WINDOW")]
    no_window: bool,
    /// Skip the high-pass emphasis of magnitude spectra.
    #[arg(long, global = true, env = "WEAKPAIR_NO_HIGHPASS")]
    no_highpass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Readout {
    Soft,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Style {
    /// Seeded 3x3 disruption kernel, blur, gain and bias.
    Corrupt,
    /// Gain and bias only.
    Pointwise,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the pose that maps MOVING onto FIXED.
    Register(RegisterArgs),
    /// Generate a synthetic weakly-paired corpus.
    Synth(SynthArgs),
    /// Train the style translator on a corpus.
    Train(TrainArgs),
    /// Score a trained translator against ground-truth poses.
    Eval(EvalArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    moving: PathBuf,
    fixed: PathBuf,
    /// Write the aligned moving image here (.pgm or .png).
    #[arg(long)]
    apply: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct PoseRangeArgs {
    /// Maximum |tx|, |ty| in pixels (default: 50 px scaled from 256 to the image size).
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    scale_min: f64,
    #[arg(long, default_value_t = 1.2)]
    scale_max: f64,
    #[arg(long, default_value_t = 0.0)]
    theta_min_deg: f64,
    #[arg(long, default_value_t = 180.0)]
    theta_max_deg: f64,
}

impl PoseRangeArgs {
    fn range(&self, size: usize) -> PoseRange {
        PoseRange {
            scale_min: self.scale_min,
            scale_max: self.scale_max,
            theta_min: self.theta_min_deg.to_radians(),
            theta_max: self.theta_max_deg.to_radians(),
            t_max: self.t_max.unwrap_or(50.0 * size as f64 / 256.0),
            log_scale: false,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory for images and manifests.
    #[arg(long)]
    out: PathBuf,
    /// Directory of source images; seeded textures are used when absent.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Texture side length when no source directory is given.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Style::Corrupt)]
    style: Style,
    #[arg(long)]
    gain: Option<f64>,
    #[arg(long)]
    bias: Option<f64>,
    /// Blur σ of the corrupt style.
    #[arg(long)]
    blur: Option<f64>,
    #[command(flatten)]
    range: PoseRangeArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus directory containing manifest.json.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for params and history.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = LossArg::Full)]
    loss: LossArg,
    /// Comma-separated subset of pr,cycle,xi_r,theta_s.
    #[arg(long, env = "WEAKPAIR_ABLATE", default_value = "")]
    ablate: String,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Odd translator kernel size.
    #[arg(long)]
    kernel: Option<usize>,
    /// Central-difference step.
    #[arg(long)]
    fd_step: Option<f64>,
    #[arg(long)]
    w_trans: Option<f64>,
    #[arg(long)]
    w_cycle: Option<f64>,
    #[arg(long)]
    w_realness: Option<f64>,
    #[arg(long)]
    w_xi_r: Option<f64>,
    #[arg(long)]
    w_theta_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Basic,
    Full,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Corpus directory containing eval_manifest.json.
    #[arg(long)]
    corpus: PathBuf,
    /// Trained translator parameters (JSON).
    #[arg(long)]
    params: PathBuf,
    /// Metrics CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        // unreadable or mismatched inputs are data problems, not bad settings
        let code = if e.is_io()
            || matches!(
                e,
                Error::DimensionMismatch { .. } | Error::Json(_) | Error::Csv(_)
            ) {
            EXIT_IO
        } else {
            EXIT_VALIDATION
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let est = estimator_config(&cli.global)?;
    match cli.command {
        Command::Register(args) => cmd_register(&args, &est).map(|_| 0),
        Command::Synth(args) => cmd_synth(&args, cli.global.seed).map(|_| 0),
        Command::Train(args) => cmd_train(&args, &est, cli.global.seed).map(|_| 0),
        Command::Eval(args) => cmd_eval(&args, &est).map(|_| 0),
        Command::Selftest => Ok(if selftest::run(cli.global.seed) {
            0
        } else {
            EXIT_SELFTEST
        }),
    }
}

fn estimator_config(g: &GlobalArgs) -> Result<EstimatorConfig, Failure> {
    let defaults = EstimatorConfig::default();
    let beta = g.beta.unwrap_or(defaults.beta);
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(usage(format!("--beta must be positive, got {beta}")));
    }
    Ok(EstimatorConfig {
        mode: match g.mode {
            Readout::Soft => ReadoutMode::Soft,
            Readout::Hard => ReadoutMode::Hard,
        },
        beta,
        n_theta: g.n_theta,
        n_rho: g.n_rho,
        window: !g.no_window,
        highpass: !g.no_highpass,
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct ConfidenceOut {
    rot_scale_peak: f64,
    translation_peak: f64,
    low: bool,
}

#[derive(Serialize)]
struct PoseOut {
    s: f64,
    theta_deg: f64,
    tx: f64,
    ty: f64,
    confidence: ConfidenceOut,
}

fn cmd_register(args: &RegisterArgs, est: &EstimatorConfig) -> Result<(), Failure> {
    let moving = read_image(&args.moving)?;
    let fixed = read_image(&args.fixed)?;
    let result = estimate_sim2(&moving, &fixed, est)?;
    let p = result.pose;
    let out = PoseOut {
        s: p.scale,
        theta_deg: p.theta.to_degrees(),
        tx: p.tx,
        ty: p.ty,
        confidence: ConfidenceOut {
            rot_scale_peak: result.confidence.rot_scale_peak,
            translation_peak: result.confidence.translation_peak,
            low: result.confidence.low,
        },
    };
    match args.format {
        Format::Json => print_json(&out)?,
        Format::Csv => {
            println!("s,theta_deg,tx,ty,rot_scale_peak,translation_peak,low_confidence");
            let c = &out.confidence;
            println!(
                "{},{},{},{},{},{},{}",
                out.s, out.theta_deg, out.tx, out.ty, c.rot_scale_peak, c.translation_peak, c.low
            );
        }
    }
    if let Some(path) = &args.apply {
        write_image(path, &warp(&moving, &p)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SynthOut<'a> {
    seed: u64,
    pairs: usize,
    out: &'a Path,
}

fn cmd_synth(args: &SynthArgs, seed: u64) -> Result<(), Failure> {
    let (source, size) = match &args.source {
        Some(dir) => (CorpusSource::Directory(dir.clone()), source_size(dir)?),
        None => {
            if args.size < 8 {
                return Err(usage("--size must be at least 8"));
            }
            (
                CorpusSource::Textures {
                    width: args.size,
                    height: args.size,
                },
                args.size,
            )
        }
    };
    let spec = match args.style {
        Style::Corrupt => {
            let d = StyleSpec::default_corruption(seed);
            StyleSpec::seeded(
                seed,
                args.blur.unwrap_or(d.blur_sigma),
                args.gain.unwrap_or(d.gain),
                args.bias.unwrap_or(d.bias),
            )
        }
        Style::Pointwise => {
            if args.blur.is_some() {
                return Err(usage("--blur applies to the corrupt style only"));
            }
            StyleSpec::pointwise(args.gain.unwrap_or(0.6), args.bias.unwrap_or(0.3))
        }
    };
    let range = args.range.range(size);
    generate_corpus(&source, &args.out, &spec, &range, args.n, seed)?;
    print_json(&SynthOut {
        seed,
        pairs: args.n,
        out: &args.out,
    })
}

/// Smallest side of the first source image, used to scale the default range.
fn source_size(dir: &Path) -> Result<usize, Failure> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_failure(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
        })
        .collect();
    entries.sort();
    match entries.first() {
        Some(p) => {
            let img = read_image(p)?;
            Ok(img.width().min(img.height()))
        }
        None => Err(Failure {
            code: EXIT_IO,
            message: format!("{}: no .pgm or .png source images", dir.display()),
        }),
    }
}

#[derive(Serialize)]
struct TrainOut {
    seed: u64,
    steps: usize,
    initial_total: f64,
    final_total: f64,
    initial_l_trans: f64,
    final_l_trans: f64,
    params_t: PathBuf,
    params_o: PathBuf,
    history: PathBuf,
}

fn train_config(
    args: &TrainArgs,
    est: &EstimatorConfig,
    seed: u64,
) -> Result<TrainConfig, Failure> {
    let d = TrainConfig::default();
    let w = d.weights;
    let ablations = Ablations::parse_list(&args.ablate).map_err(|e| usage(e.to_string()))?;
    Ok(TrainConfig {
        mode: match args.loss {
            LossArg::Basic => LossMode::Basic,
            LossArg::Full => LossMode::Full,
        },
        ablations,
        learning_rate: args.lr.unwrap_or(d.learning_rate),
        momentum: args.momentum.unwrap_or(d.momentum),
        steps: args.steps.unwrap_or(d.steps),
        batch_size: args.batch.unwrap_or(d.batch_size),
        weights: LossWeights {
            trans: args.w_trans.unwrap_or(w.trans),
            cycle: args.w_cycle.unwrap_or(w.cycle),
            realness_g: args.w_realness.unwrap_or(w.realness_g),
            realness_d: args.w_realness.unwrap_or(w.realness_d),
            xi_r: args.w_xi_r.unwrap_or(w.xi_r),
            theta_s: args.w_theta_s.unwrap_or(w.theta_s),
        },
        seed,
        estimator: *est,
        pose_range: None,
        fd_step: args.fd_step.unwrap_or(d.fd_step),
        kernel_size: args.kernel.unwrap_or(d.kernel_size),
    })
}

fn cmd_train(args: &TrainArgs, est: &EstimatorConfig, seed: u64) -> Result<(), Failure> {
    let cfg = train_config(args, est, seed)?;
    cfg.validate()?;
    let corpus = Corpus::load(&args.corpus)?;
    let outcome = train(&corpus, &cfg)?;
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let params_t = args.out.join("params_t.json");
    let params_o = args.out.join("params_o.json");
    let history = args.out.join("history.csv");
    outcome.params_t.save(&params_t)?;
    outcome.params_o.save(&params_o)?;
    write_history_csv(&history, &outcome.history)?;
    let first = outcome.history.first().expect("at least one step");
    let last = outcome.history.last().expect("at least one step");
    print_json(&TrainOut {
        seed,
        steps: cfg.steps,
        initial_total: first.total,
        final_total: last.total,
        initial_l_trans: first.report.l_trans,
        final_l_trans: last.report.l_trans,
        params_t,
        params_o,
        history,
    })
}

#[derive(Serialize)]
struct EvalOut<'a> {
    pairs: usize,
    mean: &'a weakpair::trainer::EvalRow,
    median: &'a weakpair::trainer::EvalRow,
    metrics: &'a Path,
}

fn cmd_eval(args: &EvalArgs, est: &EstimatorConfig) -> Result<(), Failure> {
    let params = TranslatorParams::load(&args.params)?;
    let pairs = load_eval_pairs(&args.corpus)?;
    let report = evaluate(&params, &pairs, est)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    write_metrics_csv(&args.out, &report)?;
    print_json(&EvalOut {
        pairs: report.rows.len(),
        mean: &report.mean,
        median: &report.median,
        metrics: &args.out,
    })
}
