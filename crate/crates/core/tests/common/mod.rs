#![allow(dead_code)]

pub mod fd;
pub mod flood;
pub mod reference;

use bagau_core::graph::{NormMode, Tape};
use bagau_core::model::{ModelSpec, Network, Variant};
use bagau_core::params::ParameterSet;
use bagau_core::{Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TINY_CHANNELS: [usize; 5] = [4, 6, 8, 10, 12];

pub fn tiny_spec(variant: Variant, canvas: usize) -> ModelSpec {
    ModelSpec {
        channels: TINY_CHANNELS,
        variant,
        canvas: [canvas, canvas],
        ..ModelSpec::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Adds small noise to every parameter so zero-initialised biases do not
/// hide errors.
pub fn jitter(params: &mut ParameterSet<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for v in params.get_mut(id).data_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

pub fn weighted_sum(t: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    t.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Relative error between two gradient samples, measured in the 2-norm.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let an: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = an.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Indices to probe in a tensor of `len` entries: all of them when small,
/// otherwise a seeded sample.
pub fn probe_indices(len: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|_| rng.gen_range(0..len)).collect()
    }
}

/// Runs a batch-mode forward of `net` and returns `sum(w * probs)`.
pub fn network_objective(net: &Network<f64>, flair: &Tensor<f64>, atlas: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    let mut tape = Tape::new(net.params(), NormMode::Batch);
    let f = tape.input(flair.clone());
    let a = tape.input(atlas.clone());
    let out = net.forward(&mut tape, f, a).unwrap();
    weighted_sum(tape.value(out.probs), w)
}

pub fn input_grad(tape_grads: &bagau_core::Gradients<f64>, v: Var) -> Vec<f64> {
    tape_grads.input(v).unwrap().data().to_vec()
}

/// Binary volume helpers for metric tests: `(D, H, W)` flat index.
pub fn idx(shape: [usize; 3], z: usize, y: usize, x: usize) -> usize {
    (z * shape[1] + y) * shape[2] + x
}

use bagau_core::phantom::{generate_case, PhantomConfig};
use bagau_core::train::TrainData;
use bagau_core::CaseRecord;

pub fn small_phantom(n_cases: usize, seed: u64) -> PhantomConfig {
    PhantomConfig {
        n_cases,
        shape: [8, 32, 32],
        lesion_radius_range: [2.0, 4.0],
        seed,
        ..PhantomConfig::default()
    }
}

pub fn phantom_cases(cfg: &PhantomConfig) -> Vec<CaseRecord> {
    (0..cfg.n_cases)
        .map(|i| generate_case(cfg, i).unwrap().record)
        .collect()
}

/// `n_train` training cases and `n_val` validation cases at canvas 32.
pub fn small_train_data(n_train: usize, n_val: usize, seed: u64) -> TrainData {
    let cases = phantom_cases(&small_phantom(n_train + n_val, seed));
    TrainData::from_cases(&cases[..n_train], &cases[n_train..], [32, 32], false).unwrap()
}

/// Largest absolute difference between `probs` and the plain-loop
/// reference evaluated on `net`'s parameters.
pub fn plain_reference_discrepancy(net: &Network<f64>, flair: &Tensor<f64>, atlas: &Tensor<f64>, probs: &[f64]) -> f64 {
    let want = reference::reference_plain(net.params(), &reference::to_map(flair), &reference::to_map(atlas));
    probs.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
