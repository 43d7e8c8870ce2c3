use uqdon_core::data::{build_dataset, unit_grid, AntiderivativeSpec, Dataset, Dims, FunctionPair, GeneratorSpec, GpConfig, GpSampler};
use uqdon_core::ensemble::{init_ensemble, sample_batch, HierarchicalSampler, Precision, TrainConfig, TrainingData};
use uqdon_core::metrics::EvalReport;
use uqdon_core::model::{loss_grad, Architecture, LossMode};
use uqdon_core::nn::{AdamState, LrSchedule};
use uqdon_core::rng::RngStream;
use uqdon_core::Error;

fn small_data(n: usize, seed: u64) -> Dataset {
    let spec = GeneratorSpec::Antiderivative(AntiderivativeSpec {
        sensors: 16,
        alpha_groups: 2,
        ..Default::default()
    });
    build_dataset(&spec, n, seed).unwrap()
}

fn small_arch() -> Architecture {
    Architecture::uniform(16, 1, 1, 1, 2, 12, 6, 0).unwrap()
}

fn cfg(iterations: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        batch_functions: 5,
        batch_queries: 7,
        seed: 3,
        ..Default::default()
    }
}

fn bits(e: &uqdon_core::ensemble::EnsembleModel) -> Vec<u64> {
    e.members()
        .iter()
        .flat_map(|m| m.model.trainable.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect()
}

#[test]
fn single_member_without_prior_matches_a_plain_training_loop() {
    let ds = small_data(30, 1);
    let arch = small_arch();
    let c = cfg(1100); // crosses an internal chunk boundary
    let mut e = init_ensemble(&arch, 0.0, 1, 9).unwrap();

    let mut model = e.members()[0].model.clone();
    let mut ab = AdamState::new(&model.trainable.branch);
    let mut at = AdamState::new(&model.trainable.trunk);
    let data = TrainingData::<f64>::new(&arch, &ds).unwrap();
    let sampler = HierarchicalSampler::new(c.seed, ds.len(), ds.queries(), c.batch_functions, c.batch_queries).unwrap();
    let lr = LrSchedule {
        base: c.learning_rate,
        decay: c.decay_rate,
        period: c.decay_steps,
    };
    let mut losses = Vec::new();
    for it in 0..c.iterations {
        let batch = sample_batch(&data, &sampler, 0, it);
        let (loss, g) = loss_grad(&model, &batch, c.loss).unwrap();
        if it % 100 == 0 {
            losses.push(loss);
        }
        ab.update(&mut model.trainable.branch, &g.branch, lr.at(it)).unwrap();
        at.update(&mut model.trainable.trunk, &g.trunk, lr.at(it)).unwrap();
    }

    let h = e.train(&ds, &c).unwrap();
    let engine = &e.members()[0];
    assert_eq!(engine.model.trainable, model.trainable);
    assert_eq!(engine.adam_branch, ab);
    assert_eq!(engine.adam_trunk, at);
    assert_eq!(h.members[0].losses, losses);
}

#[test]
fn prior_is_never_touched_by_training() {
    let ds = small_data(30, 1);
    let mut e = init_ensemble(&small_arch(), 1.5, 3, 2).unwrap();
    let (prior, trainable) = (e.prior_checksum(), e.trainable_checksum());
    e.train(&ds, &cfg(200)).unwrap();
    assert_eq!(e.prior_checksum(), prior);
    assert_ne!(e.trainable_checksum(), trainable);
    assert_eq!(e.step(), 200);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let ds = small_data(30, 1);
    let e0 = init_ensemble(&small_arch(), 1.0, 4, 5).unwrap();
    let run = |w: Option<usize>| {
        let mut e = e0.clone();
        e.train(&ds, &TrainConfig { workers: w, ..cfg(150) }).unwrap();
        bits(&e)
    };
    let one = run(Some(1));
    assert_eq!(one, run(Some(3)));
    assert_eq!(one, run(None));
}

#[test]
fn members_train_independently() {
    let ds = small_data(30, 1);
    let e0 = init_ensemble(&small_arch(), 1.0, 3, 5).unwrap();
    let mut all = e0.clone();
    all.train(&ds, &cfg(150)).unwrap();
    let mut alone = e0.select(&[1]).unwrap();
    alone.train(&ds, &cfg(150)).unwrap();
    assert_eq!(alone.members()[0].id, 1);
    assert_eq!(alone.members()[0].model, all.members()[1].model);
}

#[test]
fn resuming_equals_one_long_run() {
    let ds = small_data(30, 1);
    let e0 = init_ensemble(&small_arch(), 1.0, 2, 5).unwrap();
    let mut long = e0.clone();
    long.train(&ds, &cfg(400)).unwrap();
    let mut split = e0;
    split.train(&ds, &cfg(250)).unwrap();
    split.train(&ds, &cfg(150)).unwrap();
    assert_eq!(bits(&split), bits(&long));
    assert_eq!(split.step(), 400);
}

#[test]
fn failed_training_leaves_the_ensemble_unchanged() {
    let ds = small_data(30, 1);
    let e0 = init_ensemble(&small_arch(), 1.0, 2, 5).unwrap();
    let mut e = e0.clone();
    let bad = TrainConfig { batch_functions: 31, ..cfg(10) };
    assert!(matches!(e.train(&ds, &bad), Err(Error::InvalidConfig(_))));
    let other = small_data(5, 1);
    let mut wide = init_ensemble(&Architecture::uniform(9, 1, 1, 1, 1, 4, 2, 0).unwrap(), 1.0, 1, 0).unwrap();
    assert!(matches!(wide.train(&other, &cfg(1)), Err(Error::Incompatible(_))));
    assert_eq!(e, e0);
}

#[test]
fn single_precision_tracks_double() {
    let ds = small_data(30, 1);
    let e0 = init_ensemble(&small_arch(), 1.0, 2, 5).unwrap();
    let mut a = e0.clone();
    a.train(&ds, &cfg(100)).unwrap();
    let mut b = e0;
    b.train(&ds, &TrainConfig { precision: Precision::F32, ..cfg(100) }).unwrap();
    let pa = a.predict_dataset(&ds).unwrap();
    let pb = b.predict_dataset(&ds).unwrap();
    let err = uqdon_core::metrics::relative_l2(&pb.mean, &pa.mean).unwrap();
    assert!(err < 1e-2, "f32 drifted {err}");
}

/// Smooth random inputs mapped to themselves. The long length scale keeps the
/// toy to a handful of modes, which a small net fits within the budget.
fn identity_data(n: usize, m: usize, seed: u64) -> Dataset {
    let x = unit_grid(m);
    let gp = GpSampler::new(&GpConfig::new(1.0, 1.0), &x).unwrap();
    let pairs = (0..n)
        .map(|i| {
            let u = gp.sample(&mut RngStream::new(seed, i as u64));
            FunctionPair::new(i, u.clone(), u).unwrap()
        })
        .collect();
    Dataset::new(x.clone(), x, Dims::scalar(1, 1), pairs).unwrap()
}

#[test]
fn learns_the_identity_operator() {
    let toy = identity_data(50, 20, 1);
    let held_out = identity_data(50, 20, 2);
    let arch = Architecture::uniform(20, 1, 1, 1, 2, 64, 32, 0).unwrap();
    let mut e = init_ensemble(&arch, 0.0, 2, 0).unwrap();
    let c = TrainConfig {
        iterations: 5000,
        batch_functions: 50,
        batch_queries: 20,
        learning_rate: 3e-3,
        ..Default::default()
    };
    let h = e.train(&toy, &c).unwrap();
    assert!(h.members.iter().all(|m| m.losses.iter().all(|l| l.is_finite())));
    let fit = EvalReport::from_predictions(&toy, &e.predict_dataset(&toy).unwrap()).unwrap();
    let test = EvalReport::from_predictions(&held_out, &e.predict_dataset(&held_out).unwrap()).unwrap();
    let mean = fit.mean_error().unwrap();
    eprintln!("identity: toy {mean:.4} held out {:.4}", test.mean_error().unwrap());
    assert!(mean < 0.02, "identity error {mean}");
    // Same toy, architecture and budget trained by an independent PyTorch
    // implementation (python/oracles/identity_reference.py).
    let golden = include_str!("golden/identity_reference.log");
    let reference: f64 = golden.lines().next().unwrap().split_whitespace().skip_while(|w| *w != "mean_rel_l2").nth(1).unwrap().parse().unwrap();
    assert!(mean < 2.0 * reference && reference < 2.0 * mean, "{mean} vs reference {reference}");
    assert!(mean < test.mean_error().unwrap());
}
