use archstyle_core::kv::KvMap;
use archstyle_core::losses::LossWeights;
use archstyle_core::Image;
use archstyle_net::checkpoint;
use archstyle_net::data::{sample_batch, toy_corpus};
use archstyle_net::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(size: usize) -> NetConfig {
    NetConfig {
        base_width: 8,
        image_size: size,
        n_disc_scales: 2,
        ..Default::default()
    }
}

fn gradient_image(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |x, y| {
        [x as f64 / w as f64, y as f64 / h as f64, ((x + y) % 7) as f64 / 7.0]
    })
    .unwrap()
}

fn toy_batch(n: usize, size: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d1: Vec<_> = toy_corpus(1, 4, size, seed).unwrap().into_iter().map(|p| p.0).collect();
    let d2: Vec<_> = toy_corpus(2, 4, size, seed).unwrap().into_iter().map(|p| p.0).collect();
    Batch {
        domain1: sample_batch(&d1, n, size, &mut rng).unwrap(),
        domain2: sample_batch(&d2, n, size, &mut rng).unwrap(),
    }
}

#[test]
fn round_trip_preserves_dims() {
    for (size, w, h) in [(32, 32, 32), (64, 64, 48), (256, 256, 256)] {
        let bundle = TranslatorBundle::new(small(size)).unwrap();
        let x = gradient_image(w, h);
        let c = bundle.encode_content(0, &images_to_tensor(&[&x]).unwrap()).unwrap();
        assert_eq!(c.shape(), &[1, 16, h / 4, w / 4]);
        let z = bundle.map_domain(1, &c).unwrap();
        assert_eq!(z.shape(), c.shape());
        let s = bundle.encode_style(1, &x).unwrap();
        assert_eq!(s.dim(), 8);
        let y = bundle.generate(1, &z, &s).unwrap();
        assert_eq!(y.dims(), (w, h));
        assert!(y.is_unit_range());
    }
}

#[test]
fn discriminator_emits_one_map_per_scale() {
    let cfg = NetConfig {
        n_disc_scales: 3,
        ..small(64)
    };
    let bundle = TranslatorBundle::new(cfg).unwrap();
    let maps = bundle.discriminate(0, &gradient_image(64, 64)).unwrap();
    let sides: Vec<_> = maps.iter().map(|m| m.shape().to_vec()).collect();
    assert_eq!(sides, vec![vec![1, 1, 4, 4], vec![1, 1, 2, 2], vec![1, 1, 1, 1]]);
    assert!(bundle.discriminate(0, &gradient_image(32, 32)).is_err());
}

#[test]
fn shared_block_is_shared() {
    let mut bundle = TranslatorBundle::new(small(32)).unwrap();
    let x = images_to_tensor(&[&gradient_image(32, 32)]).unwrap();
    let before = [
        bundle.encode_content(0, &x).unwrap(),
        bundle.encode_content(1, &x).unwrap(),
    ];
    let id = bundle.store.find("shared.content.res.conv1.weight").unwrap();
    bundle.store.get_mut(id).data_mut().iter_mut().for_each(|v| *v += 0.05);
    let after = [
        bundle.encode_content(0, &x).unwrap(),
        bundle.encode_content(1, &x).unwrap(),
    ];
    assert_ne!(before[0], after[0]);
    assert_ne!(before[1], after[1]);
    // Domain-specific weights stay domain-specific.
    let id = bundle.store.find("d1.content.res0.conv1.weight").unwrap();
    bundle.store.get_mut(id).data_mut().iter_mut().for_each(|v| *v += 0.05);
    assert_eq!(bundle.encode_content(1, &x).unwrap(), after[1]);
}

#[test]
fn style_sampling_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mut sum = [0.0f64; 8];
    let mut sq = [0.0f64; 8];
    for _ in 0..n {
        let s = sample_style(&mut rng, 8);
        for (i, &v) in s.values().iter().enumerate() {
            sum[i] += v as f64;
            sq[i] += (v as f64).powi(2);
        }
    }
    for i in 0..8 {
        let mean = sum[i] / n as f64;
        let std = (sq[i] / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.02, "coordinate {i}: mean {mean}");
        assert!((std - 1.0).abs() < 0.02, "coordinate {i}: std {std}");
    }
}

#[test]
fn style_code_changes_translation() {
    let bundle = TranslatorBundle::new(small(32)).unwrap();
    let x = gradient_image(32, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a, b) = (sample_style(&mut rng, 8), sample_style(&mut rng, 8));
    let ya = bundle
        .translate(&x, StyleSource::Code(&a), Direction::OneToTwo)
        .unwrap();
    let yb = bundle
        .translate(&x, StyleSource::Code(&b), Direction::OneToTwo)
        .unwrap();
    assert_ne!(ya, yb);
    let own = bundle
        .translate(&x, StyleSource::Image(&x), Direction::TwoToOne)
        .unwrap();
    assert_eq!(own.dims(), (32, 32));
    assert_eq!(
        ya,
        bundle
            .translate(&x, StyleSource::Code(&a), Direction::OneToTwo)
            .unwrap()
    );
}

#[test]
fn background_step_reports_exact_zero_geometry_terms() {
    let mut bundle = TranslatorBundle::new(small(32)).unwrap();
    let batch = toy_batch(2, 32, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = train_step(&mut bundle, &batch, &LossWeights::background(), &mut rng).unwrap();
    assert_eq!(r.terms.gd, 0.0);
    assert_eq!(r.terms.kl, 0.0);
    assert!(r.total.is_finite() && r.discriminator.unwrap().is_finite());
    let r = train_step(&mut bundle, &batch, &LossWeights::foreground(), &mut rng).unwrap();
    assert!(r.terms.as_array().iter().all(|v| v.is_finite()));
    assert!(r.terms.gd > 0.0 && r.terms.kl > 0.0);
}

#[test]
fn step_updates_both_optimizers() {
    let mut bundle = TranslatorBundle::new(small(32)).unwrap();
    let before = bundle.store.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    train_step(&mut bundle, &toy_batch(1, 32, 1), &LossWeights::background(), &mut rng).unwrap();
    let moved = |ids: Vec<ParamId>| ids.iter().filter(|&&id| bundle.store.get(id) != before.get(id)).count();
    assert!(moved(bundle.generator_params()) > 0);
    assert!(moved(bundle.discriminator_params()) > 0);
    let opt = bundle.optimizer.as_ref().unwrap();
    assert_eq!((opt.generator.step, opt.discriminator.step), (1, 1));
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut bundle = TranslatorBundle::new(small(32)).unwrap();
        let d1: Vec<_> = toy_corpus(1, 4, 32, 0).unwrap().into_iter().map(|p| p.0).collect();
        let d2: Vec<_> = toy_corpus(2, 4, 32, 0).unwrap().into_iter().map(|p| p.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut log = Vec::new();
        let opts = TrainOptions {
            iterations: 3,
            batch_size: 1,
            size: 32,
        };
        train(
            &mut bundle,
            &d1,
            &d2,
            &LossWeights::foreground(),
            &opts,
            &mut rng,
            |_, r| {
                log.push(*r);
                Ok(())
            },
        )
        .unwrap();
        log
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_loss_aborts_with_iteration() {
    let mut bundle = TranslatorBundle::new(small(32)).unwrap();
    let id = bundle.store.find("d1.gen.out.weight").unwrap();
    bundle.store.get_mut(id).data_mut()[0] = f32::NAN;
    let d: Vec<_> = toy_corpus(1, 2, 32, 0).unwrap().into_iter().map(|p| p.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = train(
        &mut bundle,
        &d,
        &d,
        &LossWeights::background(),
        &TrainOptions::default(),
        &mut rng,
        |_, _| Ok(()),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Diverged { iteration: 1, .. }), "{err}");
}

#[test]
fn checkpoint_round_trip() {
    let mut bundle = TranslatorBundle::new(NetConfig { seed: 9, ..small(32) }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    train_step(&mut bundle, &toy_batch(1, 32, 2), &LossWeights::background(), &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut meta = KvMap::new("meta");
    meta.set("branch", "bg");
    meta.set("iteration", 1);
    checkpoint::save(&bundle, &meta, &path).unwrap();
    let (loaded, extra) = checkpoint::load(&path).unwrap();
    assert_eq!(loaded.config, bundle.config);
    assert_eq!(loaded.store, bundle.store);
    assert_eq!(loaded.optimizer, bundle.optimizer);
    assert_eq!(extra.get("branch"), Some("bg"));
    assert_eq!(extra.get("iteration"), Some("1"));

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], checkpoint::MAGIC);
    for bad in [&bytes[..bytes.len() - 3], &bytes[1..]] {
        std::fs::write(&path, bad).unwrap();
        assert!(matches!(checkpoint::load(&path), Err(Error::Checkpoint { .. })));
    }
    assert!(matches!(
        checkpoint::load(dir.path().join("missing")),
        Err(Error::Io { .. })
    ));
}
