use sprite_gan::dataset::{build_pairs, generate_synthetic_dataset, PairedExample, PartLibrary, Pose};
use sprite_gan::training::*;
use sprite_gan::Error;
use sprite_nn::Parameters;

fn pairs(n: usize, seed: u64) -> Vec<PairedExample> {
    let records = generate_synthetic_dataset(seed, n, &PartLibrary::default()).unwrap();
    build_pairs(&records, Pose::Front, Pose::Right).unwrap().pairs
}

fn config(steps: u64) -> TrainConfig {
    TrainConfig {
        steps,
        seed: 11,
        checkpoint_every: 5,
        ..TrainConfig::default()
    }
}

/// Loss columns only; throughput is wall-clock.
fn losses(rows: &[MetricRow]) -> Vec<(u64, f64, f64, f64, f64)> {
    rows.iter().map(|r| (r.step, r.g_total, r.g_adv, r.g_l1, r.d_loss)).collect()
}

#[test]
fn overfits_four_pairs() {
    let data = pairs(4, 3);
    let mut state = TrainState::new(config(300), data.len()).unwrap();
    train(&mut state, &data, None).unwrap();
    let first = state.history.first().unwrap().g_l1;
    let last = state.history.last().unwrap().g_l1;
    assert!(last < 0.2 * first, "g_l1 went from {first} to {last}");
}

#[test]
fn one_step_updates_both_networks() {
    let data = pairs(2, 1);
    let mut state = TrainState::new(config(1), data.len()).unwrap();
    let g0 = state.generator.clone();
    let d0 = state.discriminator.clone();
    let row = state.train_step(&[&data[0]]).unwrap();
    assert_eq!(row.step, 1);
    assert_eq!(state.step, 1);
    assert_ne!(state.generator.params(), g0.params());
    assert_ne!(state.discriminator.params(), d0.params());
    // Optimizers clear the gradients they consume.
    assert!(state.generator.params().iter().all(|p| p.grad.iter().all(|g| *g == 0.0)));
    assert!(state.discriminator.params().iter().all(|p| p.grad.iter().all(|g| *g == 0.0)));
}

#[test]
fn seeded_runs_are_reproducible() {
    let data = pairs(3, 2);
    let run = || {
        let mut s = TrainState::new(config(6), data.len()).unwrap();
        train(&mut s, &data, None).unwrap();
        s
    };
    let (a, b) = (run(), run());
    assert_eq!(losses(&a.history), losses(&b.history));
    assert_eq!(a.generator, b.generator);
    assert_eq!(a.discriminator, b.discriminator);
}

#[test]
fn resuming_continues_the_same_trajectory() {
    let data = pairs(3, 4);
    let root = tempfile::tempdir().unwrap();

    let straight = RunDir::new(root.path(), "straight").unwrap();
    let mut s = TrainState::new(config(10), data.len()).unwrap();
    train(&mut s, &data, Some(&straight)).unwrap();
    let steps: Vec<u64> = straight.checkpoints().unwrap().iter().map(|c| c.0).collect();
    assert_eq!(steps, vec![5, 10]);

    let resumed = RunDir::new(root.path(), "resumed").unwrap();
    let mut r = TrainState::new(config(5), data.len()).unwrap();
    train(&mut r, &data, Some(&resumed)).unwrap();
    let (_, ckpt) = resumed.latest_checkpoint().unwrap();
    let mut r = load_checkpoint(&ckpt).unwrap();
    assert_eq!(r.step, 5);
    r.config.steps = 10;
    train(&mut r, &data, Some(&resumed)).unwrap();

    assert_eq!(r.generator, s.generator);
    assert_eq!(r.discriminator, s.discriminator);
    let a = read_metrics(&straight.metrics_path()).unwrap();
    let b = read_metrics(&resumed.metrics_path()).unwrap();
    assert_eq!(b.iter().map(|m| m.step).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
    assert_eq!(losses(&a), losses(&b));
}

#[test]
fn checkpointed_generator_reproduces_outputs() {
    let data = pairs(2, 5);
    let root = tempfile::tempdir().unwrap();
    let run = RunDir::new(root.path(), "r").unwrap();
    let mut s = TrainState::new(config(2), data.len()).unwrap();
    train(&mut s, &data, Some(&run)).unwrap();
    let (g, cfg) = load_generator(&run.latest_checkpoint().unwrap().1).unwrap();
    assert_eq!(cfg, s.config);
    let x = data[0].source.pixels();
    assert_eq!(g.generate(x).unwrap(), s.generator.generate(x).unwrap());
    let restored = load_checkpoint(&run.latest_checkpoint().unwrap().1).unwrap();
    assert_eq!(restored.generator, s.generator);
    assert_eq!(restored.schedule(), s.schedule());
}

#[test]
fn rgb_runs_train_three_channel_networks() {
    let data = pairs(2, 6);
    let mut s = TrainState::new(TrainConfig { channels: 3, ..config(1) }, data.len()).unwrap();
    train(&mut s, &data, None).unwrap();
    assert_eq!(s.generator.image_shape().c, 3);
    assert_eq!(s.discriminator.config().input_channels(), 6);
}

#[test]
fn guards() {
    assert!(matches!(TrainState::new(config(0), 4), Err(Error::Config(_))));
    assert!(TrainState::new(config(1), 0).is_err());
    let data = pairs(2, 1);
    let mut s = TrainState::new(config(1), 3).unwrap();
    assert!(train(&mut s, &data, None).is_err());
    assert!(train(&mut s, &[], None).is_err());
    assert!(matches!(load_checkpoint(std::path::Path::new("/nonexistent/ckpt-1")), Err(Error::Missing(_))));
}
