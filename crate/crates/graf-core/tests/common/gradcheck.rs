//! Finite-difference harness shared by the gradcheck and acceptance test
//! targets: every differentiable operation and the two full model forward
//! passes, checked against central differences.
//!
//! The oracle is central differences with step 1e-5 on 64-bit arithmetic:
//! numeric = (f(x + h) - f(x - h)) / 2h, compared as
//! |analytic - numeric| / max(1, |analytic|, |numeric|). Inputs near the
//! kinks of piecewise-linear activations are resampled so the quotient is
//! well defined.

#![allow(clippy::needless_range_loop)]

use std::sync::Arc;

use graf_core::attention::{attention_loss_tape, init_attention_params};
use graf_core::autodiff::{Tape, Tensor, ValueId};
use graf_core::gcn::{gcn_loss_tape, normalize_adjacency};
use graf_core::graph::AssociationNetwork;
use graf_core::hyper::Hyperparams;
use graf_core::rng::rng_from;
use graf_core::sparse::ArcSet;
use graf_core::task::TaskView;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

const FD_STEP: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Check all tracked inputs of a scalar-valued builder against central
/// differences; returns the worst relative error.
fn check<F>(inputs: &[Tensor], forward: F) -> f64
where
    F: Fn(&mut Tape, &[ValueId]) -> ValueId,
{
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = inputs.iter().map(|t| tape.input(t)).collect();
    let loss = forward(&mut tape, &ids);
    assert_eq!(tape.value(loss).len(), 1, "gradcheck needs a scalar loss");
    tape.backward(loss).unwrap();
    let grads: Vec<Vec<f64>> = ids.iter().map(|&id| tape.grad_or_zeros(id)).collect();

    let eval = |perturbed: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<ValueId> = perturbed.iter().map(|t| tape.input(t)).collect();
        let loss = forward(&mut tape, &ids);
        tape.value(loss)[0]
    };

    let mut worst = 0.0f64;
    for (ti, t) in inputs.iter().enumerate() {
        if !t.tracked {
            continue;
        }
        for k in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[ti].values[k] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[ti].values[k] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[ti][k], numeric));
        }
    }
    worst
}

fn tensor(rng: &mut ChaCha12Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    Tensor::from_vec(shape, values).unwrap().tracked()
}

/// Values bounded away from zero, for kinked activations.
fn tensor_off_kink(rng: &mut ChaCha12Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let values = (0..n)
        .map(|_| {
            let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
            sign * rng.random_range(0.05..1.5)
        })
        .collect();
    Tensor::from_vec(shape, values).unwrap().tracked()
}

fn random_arcs(rng: &mut ChaCha12Rng, n: usize) -> Arc<ArcSet> {
    let mut pairs: Vec<(u32, u32)> = (0..n as u32).map(|i| (i, i)).collect();
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            if i != j && rng.random::<f64>() < 0.4 {
                pairs.push((i, j));
            }
        }
    }
    Arc::new(ArcSet::from_pairs(n, &pairs).unwrap())
}

/// Random-coefficient weighted sum collapses a tensor to a scalar, making the
/// check sensitive to every output element.
fn spread_loss(tape: &mut Tape, out: ValueId, rng: &mut ChaCha12Rng) -> ValueId {
    let shape = tape.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let coeffs = tape.constant(
        &shape,
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let mixed = tape.mul_elem(out, coeffs).unwrap();
    tape.sum_all(mixed)
}

pub fn matmul_cases() -> usize {
    // Spec-level case first: d sum(A * B) / dA at 1e-6.
    let mut rng = rng_from(100);
    for case in 0..10 {
        let a = tensor(&mut rng, &[3, 4]);
        let b = tensor(&mut rng, &[4, 2]);
        let worst = check(&[a, b], |tape, ids| {
            let out = tape.matmul(ids[0], ids[1]).unwrap();
            tape.sum_all(out)
        });
        assert!(worst < 1e-6, "case {case}: rel err {worst}");
    }
    // Randomized shapes with spread losses.
    for case in 0..20 {
        let m = rng.random_range(1..5);
        let k = rng.random_range(1..5);
        let n = rng.random_range(1..5);
        let a = tensor(&mut rng, &[m, k]);
        let b = tensor(&mut rng, &[k, n]);
        let loss_rng = rng_from(500 + case);
        let worst = check(&[a, b], |tape, ids| {
            let out = tape.matmul(ids[0], ids[1]).unwrap();
            spread_loss(tape, out, &mut loss_rng.clone())
        });
        assert!(worst < 1e-6, "case {case}: rel err {worst}");
    }
    30
}

pub fn sparse_aggregate_cases() -> usize {
    let mut rng = rng_from(200);
    for case in 0..25 {
        let n = rng.random_range(2..8);
        let d = rng.random_range(1..4);
        let arcs = random_arcs(&mut rng, n);
        let w = tensor(&mut rng, &[arcs.len()]);
        let x = tensor(&mut rng, &[n, d]);
        let arcs2 = Arc::clone(&arcs);
        let loss_rng = rng_from(900 + case);
        let worst = check(&[w, x], move |tape, ids| {
            let out = tape.sparse_aggregate(&arcs2, ids[0], ids[1]).unwrap();
            spread_loss(tape, out, &mut loss_rng.clone())
        });
        assert!(worst < 1e-4, "case {case}: rel err {worst}");
    }
    25
}

pub fn segment_softmax_cases() -> usize {
    let mut rng = rng_from(300);
    for case in 0..25 {
        let n_segments = rng.random_range(1..5);
        let len = rng.random_range(1..12).max(n_segments);
        let segments: Arc<Vec<u32>> = Arc::new(
            (0..len)
                .map(|i| {
                    if i < n_segments {
                        i as u32
                    } else {
                        rng.random_range(0..n_segments as u32)
                    }
                })
                .collect(),
        );
        let scores = tensor(&mut rng, &[len]);
        let loss_rng = rng_from(1300 + case);
        let segs = Arc::clone(&segments);
        let worst = check(&[scores], move |tape, ids| {
            let out = tape.segment_softmax(ids[0], &segs, n_segments).unwrap();
            spread_loss(tape, out, &mut loss_rng.clone())
        });
        assert!(worst < 1e-4, "case {case}: rel err {worst}");
    }
    25
}

pub fn activation_cases() -> usize {
    let mut rng = rng_from(400);
    for case in 0..10 {
        let x = tensor_off_kink(&mut rng, &[3, 3]);
        for which in 0..4 {
            let loss_rng = rng_from(2000 + case * 7 + which);
            let worst = check(std::slice::from_ref(&x), move |tape, ids| {
                let out = match which {
                    0 => tape.leaky_relu(ids[0], 0.2),
                    1 => tape.relu(ids[0]),
                    2 => tape.tanh(ids[0]),
                    _ => tape.elu(ids[0]),
                };
                spread_loss(tape, out, &mut loss_rng.clone())
            });
            assert!(worst < 1e-4, "case {case}/{which}: rel err {worst}");
        }
    }
    40
}

pub fn edge_pair_leaky_cases() -> usize {
    let mut rng = rng_from(600);
    let mut done = 0;
    while done < 20 {
        let n = rng.random_range(2..7);
        let arcs = random_arcs(&mut rng, n);
        let pair = tensor(&mut rng, &[n, 2]);
        // Resample when any arc's pre-activation sits near the kink.
        let near_kink = arcs.iter().any(|(r, c)| {
            (pair.values[r as usize * 2] + pair.values[c as usize * 2 + 1]).abs() < 1e-3
        });
        if near_kink {
            continue;
        }
        let arcs2 = Arc::clone(&arcs);
        let loss_rng = rng_from(3000 + done);
        let worst = check(&[pair], move |tape, ids| {
            let out = tape.edge_pair_leaky(ids[0], &arcs2, 0.2).unwrap();
            spread_loss(tape, out, &mut loss_rng.clone())
        });
        assert!(worst < 1e-4, "case {done}: rel err {worst}");
        done += 1;
    }
    20
}

pub fn concat_and_weighted_sum_cases() -> usize {
    let mut rng = rng_from(700);
    for case in 0..10 {
        let rows = rng.random_range(1..4);
        let wa = rng.random_range(1..3);
        let wb = rng.random_range(1..3);
        let a = tensor(&mut rng, &[rows, wa]);
        let b = tensor(&mut rng, &[rows, wb]);
        let loss_rng = rng_from(4000 + case);
        let worst = check(&[a, b], move |tape, ids| {
            let out = tape.concat_cols(&[ids[0], ids[1]]).unwrap();
            spread_loss(tape, out, &mut loss_rng.clone())
        });
        assert!(worst < 1e-4, "concat case {case}: rel err {worst}");
    }
    for case in 0..10 {
        let shape = [rng.random_range(1..4), rng.random_range(1..4)];
        let a = tensor(&mut rng, &shape);
        let b = tensor(&mut rng, &shape);
        let coeffs = tensor(&mut rng, &[2]);
        let loss_rng = rng_from(4100 + case);
        let worst = check(&[a, b, coeffs], move |tape, ids| {
            let out = tape.weighted_sum(&ids[0..2], ids[2]).unwrap();
            spread_loss(tape, out, &mut loss_rng.clone())
        });
        assert!(worst < 1e-4, "weighted sum case {case}: rel err {worst}");
    }
    20
}

pub fn dropout_cases() -> usize {
    let mut rng = rng_from(800);
    for case in 0..10 {
        let x = tensor(&mut rng, &[4, 3]);
        let seed = 7000 + case;
        let loss_rng = rng_from(4200 + case);
        let worst = check(&[x], move |tape, ids| {
            let out = tape.dropout(ids[0], 0.4, true, seed).unwrap();
            spread_loss(tape, out, &mut loss_rng.clone())
        });
        assert!(worst < 1e-4, "dropout case {case}: rel err {worst}");
    }
    10
}

pub fn cross_entropy_cases() -> usize {
    let mut rng = rng_from(900);
    for case in 0..20 {
        let rows = rng.random_range(2..6);
        let classes = rng.random_range(2..4);
        let logits = tensor(&mut rng, &[rows, classes]);
        let labels: Arc<Vec<u32>> = Arc::new(
            (0..rows)
                .map(|_| rng.random_range(0..classes as u32))
                .collect(),
        );
        let mask: Arc<Vec<u32>> = Arc::new(
            (0..rows as u32)
                .filter(|_| rng.random::<f64>() < 0.7)
                .collect(),
        );
        let mask = if mask.is_empty() {
            Arc::new(vec![0u32])
        } else {
            mask
        };
        let worst = check(&[logits], move |tape, ids| {
            tape.cross_entropy(ids[0], &labels, &mask).unwrap()
        });
        assert!(worst < 1e-4, "cross entropy case {case}: rel err {worst}");
    }
    20
}

pub fn reduction_cases() -> usize {
    let mut rng = rng_from(1000);
    for case in 0..10 {
        let rows = rng.random_range(1..5);
        let cols = rng.random_range(1..4);
        let x = tensor(&mut rng, &[rows, cols]);
        let y = tensor(&mut rng, &[1]);
        let z = tensor(&mut rng, &[1]);
        let worst = check(&[x, y, z], |tape, ids| {
            let m = tape.mean_all(ids[0]);
            let stacked = tape.stack_scalars(&[m, ids[1], ids[2]]).unwrap();
            let segs = Arc::new(vec![0u32; 3]);
            let soft = tape.segment_softmax(stacked, &segs, 1).unwrap();
            tape.sum_all(soft)
        });
        assert!(worst < 1e-4, "reduction case {case}: rel err {worst}");
    }
    10
}

fn toy_attention_setup(seed: u64) -> (TaskView, Vec<AssociationNetwork>, Hyperparams) {
    let mut rng = rng_from(seed);
    let n = 8;
    let fdim = 3;
    let classes = 2;
    let features: Vec<f64> = (0..n * fdim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let mut pairs_a = Vec::new();
    let mut pairs_b = Vec::new();
    for i in 0..n as u32 {
        for j in (i + 1)..n as u32 {
            if rng.random::<f64>() < 0.35 {
                pairs_a.push((i, j));
            }
            if rng.random::<f64>() < 0.35 {
                pairs_b.push((i, j));
            }
        }
    }
    let nets = vec![
        AssociationNetwork::from_undirected("A", n, &pairs_a).unwrap(),
        AssociationNetwork::from_undirected("B", n, &pairs_b).unwrap(),
    ];
    let view = TaskView {
        n,
        feature_dim: fdim,
        classes,
        features: Arc::new(features),
        labels: Arc::new(labels),
        train_ids: Arc::new((0..n as u32).filter(|i| i % 2 == 0).collect()),
        val_ids: Arc::new((0..n as u32).filter(|i| i % 2 == 1).collect()),
    };
    let hp = Hyperparams {
        hidden: 4,
        heads: 2,
        semantic_hidden: 3,
        dropout: 0.0,
        ..Hyperparams::default()
    };
    (view, nets, hp)
}

pub fn attention_model_cases() -> usize {
    for case in 0..20u64 {
        let (view, nets, hp) = toy_attention_setup(40 + case);
        let params = init_attention_params(&view, &nets, &hp, case).unwrap();

        let mut g = attention_loss_tape(&view, &nets, &hp, &params, Some(2024 + case)).unwrap();
        g.tape.backward(g.loss).unwrap();
        let grads: Vec<Vec<f64>> = g
            .param_ids
            .iter()
            .map(|&id| g.tape.grad_or_zeros(id))
            .collect();

        let eval = |p: &graf_core::autodiff::ParamSet| -> f64 {
            let g = attention_loss_tape(&view, &nets, &hp, p, Some(2024 + case)).unwrap();
            g.tape.value(g.loss)[0]
        };
        let mut worst = 0.0f64;
        for pi in 0..params.len() {
            let numel = params.iter().nth(pi).unwrap().1.numel();
            for k in 0..numel {
                let mut plus = params.clone();
                plus.tensors_mut().nth(pi).unwrap().values[k] += FD_STEP;
                let mut minus = params.clone();
                minus.tensors_mut().nth(pi).unwrap().values[k] -= FD_STEP;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
                worst = worst.max(rel_err(grads[pi][k], numeric));
            }
        }
        assert!(worst < 1e-4, "attention case {case}: rel err {worst}");
    }
    20
}

pub fn gcn_cases() -> usize {
    let mut rng = rng_from(77);
    for case in 0..20u64 {
        let (view, nets, hp) = toy_attention_setup(140 + case);
        let arcs = Arc::clone(&nets[0].arcs);
        let weights: Vec<f64> = (0..arcs.len())
            .map(|_| rng.random_range(0.1..1.0))
            .collect();
        let norm = normalize_adjacency(&arcs, &weights).unwrap();
        let mut prng = rng_from(5000 + case);
        let w1 = Tensor::glorot(view.feature_dim, hp.hidden, &mut prng);
        let w2 = Tensor::glorot(hp.hidden, view.classes, &mut prng);
        let dropout_seed = 600 + case;

        let mut g =
            gcn_loss_tape(&arcs, &norm, &view, &w1, &w2, 0.3, true, dropout_seed, true).unwrap();
        let loss = g.loss.unwrap();
        g.tape.backward(loss).unwrap();
        let dw1 = g.tape.grad_or_zeros(g.w1);
        let dw2 = g.tape.grad_or_zeros(g.w2);

        let eval = |w1: &Tensor, w2: &Tensor| -> f64 {
            let g =
                gcn_loss_tape(&arcs, &norm, &view, w1, w2, 0.3, true, dropout_seed, true).unwrap();
            g.tape.value(g.loss.unwrap())[0]
        };
        let mut worst = 0.0f64;
        for k in 0..w1.numel() {
            let mut plus = w1.clone();
            plus.values[k] += FD_STEP;
            let mut minus = w1.clone();
            minus.values[k] -= FD_STEP;
            let numeric = (eval(&plus, &w2) - eval(&minus, &w2)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(dw1[k], numeric));
        }
        for k in 0..w2.numel() {
            let mut plus = w2.clone();
            plus.values[k] += FD_STEP;
            let mut minus = w2.clone();
            minus.values[k] -= FD_STEP;
            let numeric = (eval(&w1, &plus) - eval(&w1, &minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(dw2[k], numeric));
        }
        assert!(worst < 1e-4, "gcn case {case}: rel err {worst}");
    }
    20
}

/// Run every case set; returns the total number of randomized cases checked.
pub fn run_all_cases() -> usize {
    matmul_cases()
        + sparse_aggregate_cases()
        + segment_softmax_cases()
        + activation_cases()
        + edge_pair_leaky_cases()
        + concat_and_weighted_sum_cases()
        + dropout_cases()
        + cross_entropy_cases()
        + reduction_cases()
        + attention_model_cases()
        + gcn_cases()
}
