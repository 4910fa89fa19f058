//! Training-loop contracts on a tiny synthetic dataset.

use std::path::Path;

use encryptgan::config::Config;
use encryptgan::networks::ParamSet;
use encryptgan::synth::{write_desk_dataset, SynthSpec};
use encryptgan::training::{
    checkpoint_bytes, load_checkpoint, read_loss_log, sample_batch, step_rng, train, train_step_observed,
    ModelState, SubStep, Trainer, TrainingData, FINAL_CHECKPOINT, LAST_GOOD_CHECKPOINT, LOSS_LOG,
};
use encryptgan::Error;

fn toy_config(root: &Path, per_domain: usize) -> Config {
    let spec = SynthSpec {
        image_size: (16, 16),
        message_size: (8, 8),
        train_per_domain: per_domain,
        test_per_domain: 2,
        train_messages: 2,
        test_messages: 2,
    };
    let data = write_desk_dataset(root, &spec, 3).unwrap();
    let mut c = Config::default();
    c.model.image_size = (16, 16);
    c.model.residual_blocks = 1;
    c.model.base_channels = 4;
    c.model.disc_channels = 4;
    c.model.key_channels = 4;
    c.data = data;
    c.train.checkpoint_interval = 0;
    c
}

pub fn seeded_runs_write_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = toy_config(&dir.path().join("data"), 2);
    c.train.total_steps = 12;
    train(&c, &dir.path().join("a"), None).unwrap();
    train(&c, &dir.path().join("b"), None).unwrap();
    let a = std::fs::read(dir.path().join("a").join(LOSS_LOG)).unwrap();
    let b = std::fs::read(dir.path().join("b").join(LOSS_LOG)).unwrap();
    assert_eq!(a, b);
    assert_eq!(read_loss_log(&dir.path().join("a").join(LOSS_LOG)).unwrap().len(), 12);

    c.train.seed = 1;
    train(&c, &dir.path().join("c"), None).unwrap();
    assert_ne!(a, std::fs::read(dir.path().join("c").join(LOSS_LOG)).unwrap());
}

pub fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = toy_config(&dir.path().join("data"), 2);
    c.train.total_steps = 10;
    let full = train(&c, &dir.path().join("full"), None).unwrap();

    let part_dir = dir.path().join("part");
    c.train.total_steps = 4;
    train(&c, &part_dir, None).unwrap();
    let resumed_from = load_checkpoint(&part_dir.join(FINAL_CHECKPOINT)).unwrap();
    c.train.total_steps = 10;
    let resumed = train(&c, &part_dir, Some(resumed_from)).unwrap();

    assert_eq!(resumed.state.step, 10);
    assert_eq!(checkpoint_bytes(&full), checkpoint_bytes(&resumed));
    assert_eq!(
        std::fs::read(dir.path().join("full").join(LOSS_LOG)).unwrap(),
        std::fs::read(part_dir.join(LOSS_LOG)).unwrap()
    );
}

pub fn zero_steps_writes_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = toy_config(&dir.path().join("data"), 2);
    c.train.total_steps = 0;
    let out = dir.path().join("run");
    let ckpt = train(&c, &out, None).unwrap();
    assert_eq!(ckpt.state.step, 0);
    assert_eq!(checkpoint_bytes(&ckpt), checkpoint_bytes(&ModelState::init(&c).map(|s| encryptgan::training::Checkpoint { config: c.clone(), state: s }).unwrap()));
    assert!(out.join(FINAL_CHECKPOINT).exists());
    assert!(read_loss_log(&out.join(LOSS_LOG)).unwrap().is_empty());
}

pub fn objective_decreases_on_a_tiny_set() {
    let dir = tempfile::tempdir().unwrap();
    let c = toy_config(&dir.path().join("data"), 2);
    let data = TrainingData::open_train(&c).unwrap();
    let mut t = Trainer::new(&c, &data, ModelState::init(&c).unwrap()).unwrap();
    let mut totals = Vec::new();
    t.run_until(200, |_, r| {
        totals.push(r.total);
        Ok(())
    })
    .unwrap();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (early, late) = (mean(&totals[..20]), mean(&totals[180..]));
    assert!(late < early, "moving average went from {early} to {late}");
}

fn same(a: &ParamSet, b: &ParamSet) -> bool {
    a.tensors().zip(b.tensors()).all(|(x, y)| x == y)
}

pub fn each_sub_step_touches_only_its_networks() {
    let dir = tempfile::tempdir().unwrap();
    let c = toy_config(&dir.path().join("data"), 3);
    let data = TrainingData::open_train(&c).unwrap();
    let mut state = ModelState::init(&c).unwrap();
    for step in 0..4 {
        let mut rng = step_rng(c.train.seed, step);
        let batch = sample_batch(&data, 1, &mut rng).unwrap();
        let mut prev = state.nets.clone();
        let mut seen = Vec::new();
        train_step_observed(&mut state, &batch, &c, &mut rng, &mut |sub, s| {
            let n = &s.nets;
            let changed = [
                !same(&prev.f.params, &n.f.params),
                !same(&prev.g.params, &n.g.params),
                !same(&prev.dx.params, &n.dx.params),
                !same(&prev.dy.params, &n.dy.params),
                !same(&prev.k.params, &n.k.params),
            ];
            let expected = match sub {
                SubStep::Discriminators => [false, false, true, true, false],
                SubStep::Generators => [true, true, false, false, false],
                SubStep::KeyGenerator => [false, false, false, false, true],
            };
            assert_eq!(changed, expected, "{sub:?} at step {step}");
            seen.push(sub);
            prev = n.clone();
        })
        .unwrap();
        assert_eq!(seen, [SubStep::Discriminators, SubStep::Generators, SubStep::KeyGenerator]);
    }
}

pub fn key_branch_fraction_and_forced_branches() {
    let dir = tempfile::tempdir().unwrap();
    let c = toy_config(&dir.path().join("data"), 2);
    let data = TrainingData::open_train(&c).unwrap();
    let mut t = Trainer::new(&c, &data, ModelState::init(&c).unwrap()).unwrap();
    let mut correct = 0usize;
    t.run_until(1000, |_, r| {
        correct += r.key_correct as usize;
        assert_eq!(r.cycle.is_some(), r.key_correct);
        Ok(())
    })
    .unwrap();
    let frac = correct as f64 / 1000.0;
    assert!((0.45..=0.55).contains(&frac), "correct-key fraction {frac}");

    for (p, expect) in [(1.0, true), (0.0, false)] {
        let mut forced = c.clone();
        forced.train.key_correct_probability = p;
        let mut t = Trainer::new(&forced, &data, ModelState::init(&forced).unwrap()).unwrap();
        for _ in 0..5 {
            let r = t.step().unwrap();
            assert_eq!(r.key_correct, expect);
            assert_eq!(r.cycle.is_some(), expect);
        }
    }
}

pub fn decoy_cover_is_never_the_true_cover() {
    let dir = tempfile::tempdir().unwrap();
    let c = toy_config(&dir.path().join("data"), 3);
    let data = TrainingData::open_train(&c).unwrap();
    for step in 0..200 {
        let mut rng = step_rng(9, step);
        let b = sample_batch(&data, 2, &mut rng).unwrap();
        for s in &b.samples {
            assert_ne!(s.cover, s.wrong_cover);
        }
    }
}

pub fn divergence_reports_the_term_and_keeps_last_good() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = toy_config(&dir.path().join("data"), 2);
    c.train.learning_rate = 1e30;
    c.train.total_steps = 20;
    let out = dir.path().join("run");
    match train(&c, &out, None) {
        Err(Error::Numerical { term }) => assert!(!term.is_empty()),
        other => panic!("expected a numerical error, got {:?}", other.map(|c| c.state.step)),
    }
    let last = load_checkpoint(&out.join(LAST_GOOD_CHECKPOINT)).unwrap();
    let rows = read_loss_log(&out.join(LOSS_LOG)).unwrap();
    assert_eq!(last.state.step, rows.len() as u64);
}

pub fn empty_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = toy_config(&dir.path().join("data"), 2);
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    c.data.x_train = empty;
    assert!(matches!(train(&c, &dir.path().join("run"), None), Err(Error::Config(_))));
}
