use mvp_core::dataset::{join, load_embeddings, load_posts, load_users, JoinOptions, TableFormat};
use mvp_core::ensemble::{ablation_run, train_cv, EnsembleModel};
use mvp_core::pipeline::{fit_fold, PooledVideos};
use mvp_core::synth::{describe, generate, SignalWeights};
use mvp_core::visual::PcaTarget;
use mvp_core::{EmbeddingKind, GbdtConfig, PipelineConfig, SynthConfig};
use rand::SeedableRng;

fn small_synth() -> SynthConfig {
    SynthConfig {
        n_posts: 400,
        n_users: 250,
        n_tags: 800,
        embedding_dim: 24,
        latent_dim: 4,
        frames_max: 6,
        ..Default::default()
    }
}

fn fast_pipeline() -> PipelineConfig {
    PipelineConfig {
        pca: PcaTarget::Components(8),
        gbdt: GbdtConfig {
            n_trees: 40,
            learning_rate: 0.2,
            max_depth: 4,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn cv_is_deterministic_and_averages_members() {
    let ds = generate(&small_synth()).unwrap().to_dataset().unwrap();
    let a = train_cv(&ds, &fast_pipeline()).unwrap();
    let b = train_cv(&ds, &fast_pipeline()).unwrap();
    assert_eq!(a.ensemble, b.ensemble);
    assert_eq!(a.ensemble.members.len(), 5);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.report.oof_predictions), bits(&b.report.oof_predictions));

    let pooled = PooledVideos::from_dataset(&ds).unwrap();
    for i in [0, 17, 399] {
        let ex = &ds.examples[i];
        let v = pooled.vectors.get(&ex.post.post_id).map(Vec::as_slice);
        let members: Vec<f64> = a
            .ensemble
            .members
            .iter()
            .map(|m| m.predict(ex, v, None).unwrap())
            .collect();
        let mean = members.iter().sum::<f64>() / members.len() as f64;
        assert!((a.ensemble.predict(ex, v, None).unwrap() - mean).abs() < 1e-12);
    }
}

#[test]
fn ensemble_json_round_trip() {
    let ds = generate(&small_synth()).unwrap().to_dataset().unwrap();
    let cv = train_cv(&ds, &fast_pipeline()).unwrap();
    let back = EnsembleModel::from_json(&cv.ensemble.to_json().unwrap()).unwrap();
    let pooled = PooledVideos::from_dataset(&ds).unwrap();
    let p1 = cv.ensemble.predict_dataset(&ds, &pooled).unwrap();
    let p2 = back.predict_dataset(&ds, &pooled).unwrap();
    assert!(p1.iter().zip(&p2).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn validation_fold_labels_do_not_reach_the_model() {
    let ds = generate(&small_synth()).unwrap().to_dataset().unwrap();
    let pooled = PooledVideos::from_dataset(&ds).unwrap();
    let assignment = mvp_core::kfold_split(ds.len(), 5, 42).unwrap();
    let train = assignment.training(2);
    let base = fit_fold(&ds, &pooled, &train, 2, &fast_pipeline()).unwrap();
    let mut perturbed = ds.clone();
    for i in assignment.validation(2) {
        perturbed.examples[i].label = -perturbed.examples[i].label * 3.0;
    }
    let again = fit_fold(&perturbed, &pooled, &train, 2, &fast_pipeline()).unwrap();
    assert_eq!(base, again);
}

#[test]
fn constant_target_gives_zero_mape() {
    let cfg = SynthConfig {
        weights: SignalWeights::zero(),
        noise_std: 0.0,
        ..small_synth()
    };
    let ds = generate(&cfg).unwrap().to_dataset().unwrap();
    let cv = train_cv(&ds, &fast_pipeline()).unwrap();
    assert!(cv.report.oof_mape.mape < 1e-9, "{}", cv.report.oof_mape.mape);
}

#[test]
fn model_beats_mean_predictor() {
    let ds = generate(&small_synth()).unwrap().to_dataset().unwrap();
    let cv = train_cv(&ds, &fast_pipeline()).unwrap();
    assert!(cv.report.oof_mape.mape < cv.report.baseline_oof_mape.mape);
}

#[test]
fn ablation_skips_absent_groups_and_rejects_unknown() {
    let ds = generate(&small_synth()).unwrap().to_dataset().unwrap();
    let groups = vec!["text_embedding".to_string(), "temporal".to_string()];
    let r = ablation_run(&ds, &fast_pipeline(), &groups).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert_eq!(r.skipped.len(), 1);
    assert!(r.mape_of("w/o temporal").is_some());
    assert!(ablation_run(&ds, &fast_pipeline(), &["sound".to_string()]).is_err());
}

#[test]
fn files_round_trip_into_the_same_dataset() {
    let data = generate(&small_synth()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = data.write(dir.path()).unwrap();
    let posts = load_posts(&paths.posts, TableFormat::Csv).unwrap();
    let users = load_users(&paths.users, TableFormat::Csv).unwrap();
    let video = load_embeddings(&paths.video, EmbeddingKind::VideoFrames).unwrap();
    let from_files = join(&posts, &users, Some(&video), None, JoinOptions::default()).unwrap();
    let in_memory = data.to_dataset().unwrap();
    assert_eq!(from_files.examples, in_memory.examples);
    assert_eq!(from_files.video, in_memory.video);
}

#[test]
fn generator_files_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = generate(&small_synth()).unwrap().write(a.path()).unwrap();
    let pb = generate(&small_synth()).unwrap().write(b.path()).unwrap();
    for (x, y) in [
        (&pa.posts, &pb.posts),
        (&pa.users, &pb.users),
        (&pa.video, &pb.video),
        (&pa.truth, &pb.truth),
    ] {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}

#[test]
fn default_shape_and_power_law() {
    let data = generate(&SynthConfig::default()).unwrap();
    assert_eq!(data.posts.len(), 6000);
    assert_eq!(data.users.len(), 4500);
    let s = describe(&data.posts, &data.users, 200).unwrap();
    assert!(s.max_post_count <= 200);
    assert_eq!(s.post_count_histogram.values().sum::<usize>(), 4500);
}

#[test]
fn untruncated_totals_recover_the_exponent() {
    // With n_posts equal to the natural power-law total the counts are not
    // adjusted, so the MLE re-fit should land near the configured exponent.
    let probe = SynthConfig {
        embedding_dim: 4,
        latent_dim: 2,
        frames_max: 4,
        ..Default::default()
    };
    let counts =
        mvp_core::synth::power_law_draws(&probe, &mut rand_chacha::ChaCha8Rng::seed_from_u64(probe.seed)).unwrap();
    let natural: usize = counts.iter().sum();
    let cfg = SynthConfig {
        n_posts: natural,
        ..probe
    };
    let data = generate(&cfg).unwrap();
    let s = describe(&data.posts, &data.users, 200).unwrap();
    assert!((s.power_law_exponent - 1.8).abs() <= 0.3, "{}", s.power_law_exponent);
}
