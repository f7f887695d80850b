//! Central finite differences against the reverse-mode tape, in f64.

mod common;

use bagau_core::graph::{NormMode, Tape};
use bagau_core::model::{Afm, AttentionGate, AttentionGateSpec, Network, Variant};
use bagau_core::params::ParamBuilder;
use common::fd::check_block;
use common::*;

#[test]
fn attention_gate_matches_finite_differences() {
    let spec = AttentionGateSpec {
        f_x: 3,
        f_g: 5,
        f_int: 2,
    };
    let mut b = ParamBuilder::<f64>::new(1);
    let gate = AttentionGate::new(&mut b, "ag", spec).unwrap();
    let mut params = b.finish();
    let mut r = rng(2);
    jitter(&mut params, &mut r, 0.1);
    let x = random_tensor(&mut r, [2, 3, 5, 4], -1.0, 1.0);
    let g = random_tensor(&mut r, [2, 5, 5, 4], -1.0, 1.0);
    let w_att = random_tensor(&mut r, [2, 3, 5, 4], -1.0, 1.0);
    let w_alpha = random_tensor(&mut r, [2, 1, 5, 4], -1.0, 1.0);

    // Two objectives: through the attended features and through alpha alone.
    for through_alpha in [false, true] {
        check_block(&mut params, &x, &g, usize::MAX, |p, x, g, want| {
            let mut tape = Tape::new(p, NormMode::Batch);
            let vx = tape.input_with_grad(x.clone());
            let vg = tape.input_with_grad(g.clone());
            let out = gate.forward(&mut tape, vx, vg).unwrap();
            let (v, w) = if through_alpha {
                (out.alpha, &w_alpha)
            } else {
                (out.attended, &w_att)
            };
            let val = weighted_sum(tape.value(v), w);
            let grads = want.then(|| (tape.backward(v, w.clone()).unwrap(), vx, vg));
            (val, grads)
        });
    }
}

#[test]
fn afm_matches_finite_differences() {
    let c = 8;
    let mut b = ParamBuilder::<f64>::new(3);
    let afm = Afm::new(&mut b, "afm", c);
    let mut params = b.finish();
    let mut r = rng(4);
    jitter(&mut params, &mut r, 0.1);
    let seg = random_tensor(&mut r, [2, c, 4, 6], -1.0, 1.0);
    let atlas = random_tensor(&mut r, [2, c, 4, 6], -1.0, 1.0);
    let w = random_tensor(&mut r, [2, 1, 4, 6], -1.0, 1.0);
    check_block(&mut params, &seg, &atlas, usize::MAX, |p, s, a, want| {
        let mut tape = Tape::new(p, NormMode::Batch);
        let vs = tape.input_with_grad(s.clone());
        let va = tape.input_with_grad(a.clone());
        let out = afm.forward(&mut tape, vs, va).unwrap();
        let val = weighted_sum(tape.value(out.logits), &w);
        let grads = want.then(|| (tape.backward(out.logits, w.clone()).unwrap(), vs, va));
        (val, grads)
    });
}

#[test]
fn tiny_network_matches_finite_differences() {
    for variant in [Variant::Bagau, Variant::UnetFlairAtlasChannel] {
        let spec = tiny_spec(variant, 32);
        let mut net = Network::<f64>::build(&spec).unwrap();
        let mut r = rng(5);
        jitter(net.params_mut(), &mut r, 0.05);
        let flair = random_tensor(&mut r, [2, 1, 32, 32], -1.0, 2.0);
        let atlas = random_tensor(&mut r, [2, 1, 32, 32], 0.0, 1.0);
        let w = random_tensor(&mut r, [2, 1, 32, 32], -1.0, 1.0);
        let spec_for_closure = spec.clone();
        let mut params = net.params().clone();
        check_block(&mut params, &flair, &atlas, 4, |p, f, a, want| {
            let mut n = Network::<f64>::build(&spec_for_closure).unwrap();
            n.params_mut().copy_values_from(p).unwrap();
            if !want {
                return (network_objective(&n, f, a, &w), None);
            }
            let mut tape = Tape::new(n.params(), NormMode::Batch);
            let vf = tape.input_with_grad(f.clone());
            let va = tape.input_with_grad(a.clone());
            let out = n.forward(&mut tape, vf, va).unwrap();
            let val = weighted_sum(tape.value(out.probs), &w);
            let g = tape.backward(out.probs, w.clone()).unwrap();
            (val, Some((g, vf, va)))
        });
    }
}
