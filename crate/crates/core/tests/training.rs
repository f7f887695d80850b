//! Training sanity: overfitting one batch, exact gradient accumulation,
//! determinism, resumption and checkpoint round-trips.

mod common;

use bagau_core::model::{Checkpoint, Network, Variant};
use bagau_core::train::{
    overfit_one_batch, read_history, to_micro_batch, train, train_step, validate, Adam, HistoryRecord, MicroBatch,
    TrainConfig, TrainState, ABORT_DIR, BEST_CHECKPOINT, HISTORY_FILE, LAST_CHECKPOINT,
};
use bagau_core::volume::AugmentConfig;
use bagau_core::Error;
use common::*;

fn lesion_rows(data: &bagau_core::train::TrainData, n: usize) -> Vec<usize> {
    let mask = data.train.mask.as_ref().unwrap();
    (0..data.train.len())
        .filter(|&i| mask.sample(i).iter().any(|&v| v > 0.5))
        .take(n)
        .collect()
}

#[test]
fn overfitting_one_batch_drives_loss_below_a_tenth() {
    let data = small_train_data(2, 0, 40);
    let rows = lesion_rows(&data, 4);
    assert_eq!(rows.len(), 4);
    let batch = to_micro_batch::<f32>(&data.train.select(&rows)).unwrap();
    let mut net = Network::<f32>::build(&tiny_spec(Variant::Bagau, 32)).unwrap();
    let cfg = TrainConfig {
        lr: 5e-3,
        batch_size: 4,
        augment: AugmentConfig::none(),
        ..TrainConfig::default()
    };
    let losses = overfit_one_batch(&mut net, &batch, &cfg, 200).unwrap();
    let first_below = losses.iter().position(|&l| l < 0.1);
    assert!(
        first_below.is_some(),
        "loss never fell below 0.1; first {:.4}, last {:.4}",
        losses[0],
        losses[losses.len() - 1]
    );
}

fn split_micro(b: &MicroBatch<f64>, parts: usize) -> Vec<MicroBatch<f64>> {
    let n = b.len() / parts;
    (0..parts)
        .map(|k| MicroBatch {
            flair: b.flair.narrow_batch(k * n, n),
            atlas: b.atlas.narrow_batch(k * n, n),
            mask: b.mask.narrow_batch(k * n, n),
        })
        .collect()
}

fn run_steps(micro_per_step: usize, steps: usize) -> Network<f64> {
    let data = small_train_data(2, 0, 41);
    let rows = lesion_rows(&data, 8);
    let full = to_micro_batch::<f64>(&data.train.select(&rows)).unwrap();
    let cfg = TrainConfig {
        lr: 1e-3,
        batch_size: 8 / micro_per_step,
        accumulation_steps: micro_per_step,
        freeze_batch_norm: true,
        ..TrainConfig::default()
    };
    let mut net = Network::<f64>::build(&tiny_spec(Variant::Bagau, 32)).unwrap();
    let mut adam = Adam::new(net.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let micro = split_micro(&full, micro_per_step);
    for _ in 0..steps {
        train_step(&mut net, &mut adam, &micro, &cfg).unwrap();
    }
    net
}

#[test]
fn gradient_accumulation_matches_the_full_batch() {
    let one = run_steps(1, 3);
    let four = run_steps(4, 3);
    let mut worst: f64 = 0.0;
    for ((_, a), (_, b)) in one.params().iter().zip(four.params().iter()) {
        for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    assert!(worst < 1e-6, "largest parameter discrepancy {worst:e}");
}

fn small_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        lr: 2e-3,
        batch_size: 4,
        eval_batch: 4,
        seed: 7,
        ..TrainConfig::default()
    }
}

fn strip_time(h: &[HistoryRecord]) -> Vec<HistoryRecord> {
    h.iter()
        .map(|r| HistoryRecord {
            wall_time: 0.0,
            ..r.clone()
        })
        .collect()
}

fn param_bits(net: &Network<f32>) -> Vec<u32> {
    net.params()
        .iter()
        .flat_map(|(_, p)| p.tensor.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect()
}

#[test]
fn fixed_seed_runs_write_identical_histories() {
    let data = small_train_data(3, 1, 42);
    let cfg = small_cfg(2);
    let spec = tiny_spec(Variant::Bagau, 32);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut histories = Vec::new();
    let mut nets = Vec::new();
    for d in &dirs {
        let out = train(
            TrainState::<f32>::new(&spec, &cfg).unwrap(),
            &cfg,
            &data,
            Some(d.path()),
        )
        .unwrap();
        let h = read_history(&d.path().join(HISTORY_FILE)).unwrap();
        assert_eq!(strip_time(&h), strip_time(&out.history));
        histories.push(strip_time(&h));
        nets.push(out.state.network);
    }
    assert_eq!(histories[0], histories[1]);
    assert_eq!(histories[0].len(), 2);
    assert!(histories[0].iter().all(|r| r.val_dsc.is_some()));
    assert_eq!(param_bits(&nets[0]), param_bits(&nets[1]));
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let data = small_train_data(3, 1, 43);
    let spec = tiny_spec(Variant::Bagau, 32);
    let straight_dir = tempfile::tempdir().unwrap();
    let straight = train(
        TrainState::<f32>::new(&spec, &small_cfg(3)).unwrap(),
        &small_cfg(3),
        &data,
        Some(straight_dir.path()),
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    train(
        TrainState::<f32>::new(&spec, &small_cfg(1)).unwrap(),
        &small_cfg(1),
        &data,
        Some(dir.path()),
    )
    .unwrap();
    let ck = Checkpoint::load(dir.path().join(LAST_CHECKPOINT)).unwrap();
    let state = TrainState::<f32>::from_checkpoint(&ck, &small_cfg(3)).unwrap();
    assert_eq!(state.epoch, 1);
    let resumed = train(state, &small_cfg(3), &data, Some(dir.path())).unwrap();

    assert_eq!(param_bits(&straight.state.network), param_bits(&resumed.state.network));
    let a = read_history(&straight_dir.path().join(HISTORY_FILE)).unwrap();
    let b = read_history(&dir.path().join(HISTORY_FILE)).unwrap();
    assert_eq!(strip_time(&a), strip_time(&b));
    assert_eq!(straight.state.best_epoch, resumed.state.best_epoch);
}

#[test]
fn checkpoint_round_trip_preserves_validation_dsc() {
    let data = small_train_data(3, 2, 44);
    let cfg = TrainConfig {
        variant: Variant::BagauNoAfm,
        ..small_cfg(1)
    };
    let dir = tempfile::tempdir().unwrap();
    let out = train(
        TrainState::<f32>::new(&tiny_spec(Variant::BagauNoAfm, 32), &cfg).unwrap(),
        &cfg,
        &data,
        Some(dir.path()),
    )
    .unwrap();
    let before = validate(&out.state.network, &data, &cfg).unwrap().unwrap();
    for name in [LAST_CHECKPOINT, BEST_CHECKPOINT] {
        let net: Network<f32> = Checkpoint::load(dir.path().join(name))
            .unwrap()
            .to_network(None)
            .unwrap();
        let after = validate(&net, &data, &cfg).unwrap().unwrap();
        assert_eq!(before.to_bits(), after.to_bits(), "{name}");
    }
    assert_eq!(out.history[0].val_dsc, Some(before));
}

#[test]
fn resuming_with_another_variant_is_a_config_error() {
    let data = small_train_data(2, 0, 45);
    let cfg = small_cfg(1);
    let dir = tempfile::tempdir().unwrap();
    train(
        TrainState::<f32>::new(&tiny_spec(Variant::Bagau, 32), &cfg).unwrap(),
        &cfg,
        &data,
        Some(dir.path()),
    )
    .unwrap();
    let ck = Checkpoint::load(dir.path().join(LAST_CHECKPOINT)).unwrap();
    let other = TrainConfig {
        variant: Variant::UnetFlair,
        ..cfg
    };
    assert!(matches!(
        TrainState::<f32>::from_checkpoint(&ck, &other),
        Err(Error::Config(_))
    ));
}

#[test]
fn non_finite_parameters_abort_with_a_dump() {
    let data = small_train_data(2, 0, 46);
    let cfg = small_cfg(1);
    let mut state = TrainState::<f32>::new(&tiny_spec(Variant::Bagau, 32), &cfg).unwrap();
    let id = state.network.params().ids().next().unwrap();
    state.network.params_mut().get_mut(id).data_mut()[0] = f32::NAN;
    let dir = tempfile::tempdir().unwrap();
    let err = train(state, &cfg, &data, Some(dir.path())).err().unwrap();
    assert!(matches!(err, Error::Numerical(_)), "{err}");
    let abort = dir.path().join(ABORT_DIR);
    for f in ["flair.nii.gz", "atlas.nii.gz", "mask.nii.gz", "meta.json"] {
        assert!(abort.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn zero_gradients_leave_parameters_unchanged() {
    let net = Network::<f64>::build(&tiny_spec(Variant::UnetFlair, 32)).unwrap();
    let mut params = net.params().clone();
    let before = params.clone();
    let mut adam = Adam::new(&params, 1e-3, 0.9, 0.999, 1e-8);
    let grads = bagau_core::Gradients::zeros_like(&params);
    adam.step(&mut params, &grads).unwrap();
    for ((_, a), (_, b)) in params.iter().zip(before.iter()) {
        let diff: f64 = a.tensor.max_abs_diff(&b.tensor);
        assert_eq!(diff, 0.0);
    }
}
