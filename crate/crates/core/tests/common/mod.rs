#![allow(dead_code)]

use absorbing_elapsed::TransitionMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CORPUS_SEED: u64 = 20_240_501;

pub fn worked_example() -> TransitionMatrix {
    TransitionMatrix::from_rows(vec![
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.5, 0.0, 0.5, 0.0],
        vec![0.0, 0.5, 0.0, 0.5],
        vec![0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap()
}

/// Random absorbing chain on `n` states with `absorbing` absorbing states
/// placed at random positions. Every transient row leaks at least a little
/// mass directly into absorption, and roughly a third of the remaining
/// entries are zero.
pub fn random_chain(rng: &mut ChaCha8Rng, n: usize, absorbing: usize) -> TransitionMatrix {
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    let abs: Vec<usize> = order[..absorbing].to_vec();
    let rows = (0..n)
        .map(|a| {
            if abs.contains(&a) {
                return (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect();
            }
            let mut w: Vec<f64> = (0..n)
                .map(|b| {
                    if abs.contains(&b) || rng.random::<f64>() < 0.35 {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            let target = abs[rng.random_range(0..abs.len())];
            let inner: f64 = w.iter().sum();
            let leak = rng.random_range(0.05..0.4);
            if inner > 0.0 {
                w.iter_mut().for_each(|x| *x *= (1.0 - leak) / inner);
                w[target] += leak;
            } else {
                w[target] = 1.0;
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            w
        })
        .collect();
    TransitionMatrix::from_rows(rows).unwrap()
}

/// The fixed corpus of 200 chains with 4 to 8 states.
pub fn corpus() -> Vec<TransitionMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    (0..200)
        .map(|_| {
            let n = rng.random_range(4..=8);
            let r = rng.random_range(1..=2);
            random_chain(&mut rng, n, r)
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
