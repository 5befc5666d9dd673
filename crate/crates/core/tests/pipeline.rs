//! End-to-end runs through corpus generation, training and evaluation.

use weakpair::estimator::{estimate_sim2, EstimatorConfig};
use weakpair::geometry::angle_diff;
use weakpair::io::read_image;
use weakpair::losses::{Ablations, LossMode};
use weakpair::randomization::PoseRange;
use weakpair::synth::{
    apply_style, generate_corpus, regenerate_target, CorpusSource, EvalManifest, StyleSpec,
    EVAL_MANIFEST_FILE,
};
use weakpair::trainer::{evaluate, load_eval_pairs, train, Corpus, TrainConfig, TranslatorParams};

fn small_range() -> PoseRange {
    PoseRange {
        t_max: 6.4,
        scale_min: 0.9,
        scale_max: 1.1,
        ..PoseRange::default()
    }
}

#[test]
fn generated_corpus_reloads_and_regenerates() {
    let dir = tempfile::tempdir().unwrap();
    let spec = StyleSpec::default_corruption(3);
    let source = CorpusSource::Textures {
        width: 48,
        height: 48,
    };
    let (manifest, eval) =
        generate_corpus(&source, dir.path(), &spec, &small_range(), 4, 11).unwrap();
    assert_eq!(manifest.pairs.len(), 4);

    let corpus = Corpus::load(dir.path()).unwrap();
    assert_eq!(corpus.pairs.len(), 4);
    assert_eq!(corpus.pose_range, small_range());

    let reloaded = EvalManifest::load(dir.path().join(EVAL_MANIFEST_FILE)).unwrap();
    assert_eq!(reloaded, eval);
    for record in &eval.pairs {
        let stored = read_image(dir.path().join(&record.pair.target)).unwrap();
        let again = regenerate_target(dir.path(), record, &spec).unwrap();
        assert_eq!(
            weakpair::io::encode_pgm(&again),
            weakpair::io::encode_pgm(&stored)
        );
    }
}

#[test]
fn directory_source_is_cycled() {
    let src = tempfile::tempdir().unwrap();
    for (i, seed) in [5u64, 6].iter().enumerate() {
        let img = weakpair::synth::texture(40, 40, *seed);
        weakpair::io::write_pgm(src.path().join(format!("src_{i}.pgm")), &img).unwrap();
    }
    let out = tempfile::tempdir().unwrap();
    let source = CorpusSource::Directory(src.path().to_path_buf());
    let (m, _) = generate_corpus(
        &source,
        out.path(),
        &StyleSpec::identity(),
        &PoseRange::identity(),
        3,
        0,
    )
    .unwrap();
    let a = read_image(out.path().join(&m.pairs[0].original)).unwrap();
    let c = read_image(out.path().join(&m.pairs[2].original)).unwrap();
    assert_eq!(a, c);
    // identity style and pose: the target is the original
    let t = read_image(out.path().join(&m.pairs[1].target)).unwrap();
    let o = read_image(out.path().join(&m.pairs[1].original)).unwrap();
    assert_eq!(t, o);
}

#[test]
fn estimator_recovers_mildly_corrupted_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = StyleSpec::default_corruption(8);
    let range = PoseRange {
        t_max: 20.0,
        ..PoseRange::default()
    };
    let source = CorpusSource::Textures {
        width: 128,
        height: 128,
    };
    generate_corpus(&source, dir.path(), &spec, &range, 5, 2).unwrap();
    let cfg = EstimatorConfig::default();
    for ep in load_eval_pairs(dir.path()).unwrap() {
        let styled = apply_style(&ep.pair.original, &spec).unwrap();
        let p = estimate_sim2(&styled, &ep.pair.target, &cfg).unwrap().pose;
        let dtheta = angle_diff(p.theta, ep.xi.theta, std::f64::consts::TAU).to_degrees();
        assert!(dtheta.abs() <= 2.0, "{}: theta off by {dtheta}", ep.pair.id);
        assert!(
            (p.scale / ep.xi.scale - 1.0).abs() <= 0.02,
            "{}: scale",
            ep.pair.id
        );
        assert!(
            (p.tx - ep.xi.tx).abs() <= 2.0 && (p.ty - ep.xi.ty).abs() <= 2.0,
            "{}: shift",
            ep.pair.id
        );
    }
}

#[test]
fn short_training_improves_on_identity() {
    let dir = tempfile::tempdir().unwrap();
    let spec = StyleSpec::pointwise(0.6, 0.3);
    let source = CorpusSource::Textures {
        width: 64,
        height: 64,
    };
    generate_corpus(&source, dir.path(), &spec, &small_range(), 8, 4).unwrap();
    let corpus = Corpus::load(dir.path()).unwrap();
    let cfg = TrainConfig {
        mode: LossMode::Basic,
        steps: 12,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let out = train(&corpus, &cfg).unwrap();
    assert_eq!(out.history.len(), 12);

    let pairs = load_eval_pairs(dir.path()).unwrap();
    let est = EstimatorConfig::default();
    let trained = evaluate(&out.params_t, &pairs, &est).unwrap();
    let untrained = evaluate(&TranslatorParams::identity(3).unwrap(), &pairs, &est).unwrap();
    assert!(
        trained.mean.l1_gt < untrained.mean.l1_gt,
        "{} vs {}",
        trained.mean.l1_gt,
        untrained.mean.l1_gt
    );
}

#[test]
fn best_so_far_loss_improves_at_small_learning_rate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = StyleSpec::pointwise(0.6, 0.3);
    let source = CorpusSource::Textures {
        width: 64,
        height: 64,
    };
    generate_corpus(&source, dir.path(), &spec, &small_range(), 6, 9).unwrap();
    let corpus = Corpus::load(dir.path()).unwrap();
    for seed in 0..5 {
        let cfg = TrainConfig {
            mode: LossMode::Basic,
            ablations: Ablations::default(),
            learning_rate: 1e-3,
            steps: 10,
            batch_size: 2,
            seed,
            ..TrainConfig::default()
        };
        let out = train(&corpus, &cfg).unwrap();
        let mut best = f64::INFINITY;
        let mut trace = Vec::new();
        for row in &out.history {
            best = best.min(row.total);
            trace.push(best);
        }
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(
            trace.last().unwrap() < &out.history[0].total,
            "seed {seed}: no improvement"
        );
    }
}
