//! Fast invariant checks over every module, one line per check.

use std::f64::consts::PI;

use weakpair::estimator::{estimate_sim2, estimate_translation, EstimatorConfig};
use weakpair::geometry::{angle_diff, overlap_mask, warp, Sim2Pose};
use weakpair::image::Image;
use weakpair::losses::{kld, l1_masked, LossMode};
use weakpair::phasecorr::{
    expectation, expectation_gradient, to_distribution, AxisKind, PoseDistribution,
};
use weakpair::randomization::{sample_pose, PoseRange};
use weakpair::spectral::dft2;
use weakpair::synth::{apply_style, make_pair, mix_seed, texture, StyleSpec};
use weakpair::trainer::{train, Corpus, TrainConfig, TrainingPair};

type Check = fn(u64) -> Result<(), String>;

const CHECKS: [(&str, Check); 8] = [
    ("dft matches direct summation", dft_oracle),
    ("translation recovery", translation_recovery),
    ("sim2 recovery", sim2_recovery),
    ("readout gradient", readout_gradient),
    ("kld identities", kld_identities),
    ("style commutes with pose", commutativity),
    ("pose sampling stays in range", sampling_in_range),
    ("training is deterministic", training_determinism),
];

/// Runs every check and reports whether all passed.
pub fn run(seed: u64) -> bool {
    let mut ok = true;
    for (name, check) in CHECKS {
        match check(seed) {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                ok = false;
                println!("FAIL {name}: {why}");
            }
        }
    }
    ok
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dft_oracle(seed: u64) -> Result<(), String> {
    let img = texture(9, 7, seed);
    let (w, h) = img.dims();
    let fast = dft2(&img);
    let mut worst: f64 = 0.0;
    for v in 0..h {
        for u in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let phase = -2.0 * PI * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                    re += img.get(x, y) * phase.cos();
                    im += img.get(x, y) * phase.sin();
                }
            }
            let c = fast.get(u, v);
            worst = worst.max((c.re - re).abs()).max((c.im - im).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max error {worst:e}"))
}

fn translation_recovery(seed: u64) -> Result<(), String> {
    let img = texture(128, 128, seed);
    let cfg = EstimatorConfig {
        window: false,
        ..EstimatorConfig::default()
    };
    for (dx, dy) in [(5, -9), (-31, 17), (40, 40)] {
        let t = estimate_translation(&img, &img.roll(dx, dy), &cfg).map_err(|e| e.to_string())?;
        ensure(
            (t.tx - dx as f64).abs() <= 0.5 && (t.ty - dy as f64).abs() <= 0.5,
            || format!("shift ({dx}, {dy}) estimated as ({:.2}, {:.2})", t.tx, t.ty),
        )?;
    }
    Ok(())
}

fn sim2_recovery(seed: u64) -> Result<(), String> {
    let fixed = texture(128, 128, seed);
    let xi = Sim2Pose::new(1.1, 0.7, 6.0, -4.0);
    let moving = warp(&fixed, &xi.inverse()).map_err(|e| e.to_string())?;
    let est =
        estimate_sim2(&moving, &fixed, &EstimatorConfig::default()).map_err(|e| e.to_string())?;
    let p = est.pose;
    let dtheta = angle_diff(p.theta, xi.theta, 2.0 * PI).to_degrees();
    ensure(
        dtheta.abs() <= 2.0
            && (p.scale / xi.scale - 1.0).abs() <= 0.02
            && (p.tx - xi.tx).abs() <= 2.0
            && (p.ty - xi.ty).abs() <= 2.0,
        || format!("estimated {p:?}, expected {xi:?}"),
    )
}

fn readout_gradient(seed: u64) -> Result<(), String> {
    let corr = texture(12, 10, seed).map(|v| v * 0.05);
    let beta = 40.0;
    let h = 1e-6;
    for axes in [AxisKind::Translation, AxisKind::LogPolar] {
        for (row, col) in [(0, 0), (4, 7), (9, 11)] {
            let analytic =
                expectation_gradient(&corr, beta, axes, row, col).map_err(|e| e.to_string())?;
            let eval = |delta: f64| {
                let mut c = corr.clone();
                c.set(col, row, c.get(col, row) + delta);
                to_distribution(&c, beta, axes).map(|d| expectation(&d))
            };
            let plus = eval(h).map_err(|e| e.to_string())?;
            let minus = eval(-h).map_err(|e| e.to_string())?;
            let numeric = (
                (plus.row - minus.row) / (2.0 * h),
                (plus.col - minus.col) / (2.0 * h),
            );
            for (a, n) in [(analytic.row, numeric.0), (analytic.col, numeric.1)] {
                ensure((a - n).abs() <= 1e-4 * a.abs().max(1.0), || {
                    format!("bin ({row}, {col}): analytic {a}, numeric {n}")
                })?;
            }
        }
    }
    Ok(())
}

fn kld_identities(seed: u64) -> Result<(), String> {
    let p = PoseDistribution::from_weights(texture(8, 6, seed), AxisKind::Translation)
        .map_err(|e| e.to_string())?;
    let same = kld(&p, &p).map_err(|e| e.to_string())?;
    ensure(same <= 1e-9, || format!("kld(p, p) = {same}"))?;
    let mut delta = Image::new(8, 6);
    delta.set(3, 2, 1.0);
    let delta =
        PoseDistribution::from_weights(delta, AxisKind::Translation).map_err(|e| e.to_string())?;
    let uniform = PoseDistribution::from_weights(Image::filled(8, 6, 1.0), AxisKind::Translation)
        .map_err(|e| e.to_string())?;
    let v = kld(&delta, &uniform).map_err(|e| e.to_string())?;
    ensure((v - 48f64.ln()).abs() <= 1e-6, || {
        format!("kld(delta, uniform) = {v}")
    })
}

fn commutativity(seed: u64) -> Result<(), String> {
    let img = texture(96, 96, seed);
    let spec = StyleSpec::pointwise(0.7, 0.2);
    let range = PoseRange {
        t_max: 15.0,
        ..PoseRange::default()
    };
    let xi = sample_pose(&range, seed).map_err(|e| e.to_string())?;
    let run = || -> weakpair::Result<f64> {
        let a = apply_style(&warp(&img, &xi)?, &spec)?;
        let b = warp(&apply_style(&img, &spec)?, &xi)?;
        l1_masked(&a, &b, &overlap_mask(96, 96, &xi, &xi))
    };
    let l1 = run().map_err(|e| e.to_string())?;
    ensure(l1 <= 2e-2, || format!("masked L1 {l1}"))
}

fn sampling_in_range(seed: u64) -> Result<(), String> {
    let range = PoseRange::default();
    for i in 0..200 {
        let pose = sample_pose(&range, mix_seed(seed, i)).map_err(|e| e.to_string())?;
        ensure(range.contains(&pose), || format!("{pose:?} outside range"))?;
    }
    Ok(())
}

fn training_determinism(seed: u64) -> Result<(), String> {
    let range = PoseRange {
        t_max: 3.0,
        scale_min: 0.95,
        scale_max: 1.05,
        ..PoseRange::default()
    };
    let spec = StyleSpec::pointwise(0.6, 0.3);
    let pairs = (0..2)
        .map(|i| {
            let s = mix_seed(seed, i);
            make_pair(&texture(32, 32, s), &spec, &range, s).map(|p| TrainingPair {
                id: format!("p{i}"),
                original: p.original,
                target: p.target,
            })
        })
        .collect::<weakpair::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let corpus = Corpus {
        pairs,
        pose_range: range,
    };
    let cfg = TrainConfig {
        mode: LossMode::Basic,
        steps: 2,
        batch_size: 1,
        seed,
        ..TrainConfig::default()
    };
    let a = train(&corpus, &cfg).map_err(|e| e.to_string())?;
    let b = train(&corpus, &cfg).map_err(|e| e.to_string())?;
    ensure(a == b, || "two runs with the same seed differ".into())
}
