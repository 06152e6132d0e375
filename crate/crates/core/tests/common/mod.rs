#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scamsweeper_core::nn::{Tape, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect();
    Tensor::new(shape, data).unwrap()
}

/// Central finite differences of a scalar function built on a fresh tape.
///
/// Returns the worst relative error `|a - n| / max(|a|, |n|, floor)` over every
/// element of every input.
pub fn max_rel_error<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let h = 1e-5;
    let floor = 1e-6;
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_grad())).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| tape.grad(*v).map_or(vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();

    let eval = |perturbed: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).data()[0]
    };

    let mut worst: f64 = 0.0;
    let mut work = inputs.to_vec();
    for k in 0..inputs.len() {
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + h;
            let up = eval(&work);
            work[k].data_mut()[i] = orig - h;
            let down = eval(&work);
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

/// Reduces any tensor to a scalar through a fixed random weighting so that
/// gradients of normalized outputs (softmax, layer norm) are non-trivial.
pub fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let shape = tape.value(x).shape().to_vec();
    let w = random_tensor(&mut rng(seed ^ 0xabcdef), &shape, 1.0);
    let w = tape.constant(w);
    let p = tape.mul(x, w).unwrap();
    tape.sum(p)
}

pub fn addr(i: usize) -> String {
    format!("0x{i:040x}")
}

/// Uniform random multigraph on `n` accounts with `m` edges. Timestamps are
/// drawn from `[0, t_max)` and blocks follow timestamps, so it always ingests.
pub fn random_graph(rng: &mut impl Rng, n: usize, m: usize, t_max: u64) -> scamsweeper_core::graph::TemporalMultigraph {
    let mut b = scamsweeper_core::graph::GraphBuilder::new();
    for i in 0..n {
        b.account(&addr(i), i + 1).unwrap();
    }
    for line in 0..m {
        let from = rng.random_range(0..n);
        let mut to = rng.random_range(0..n);
        if to == from {
            to = (to + 1) % n;
        }
        let ts = rng.random_range(0..t_max);
        let value = rng.random_range(0..5_000_000_000_000_000_000u128);
        b.add_transaction(&addr(from), &addr(to), value, ts, ts / 12, line + 2).unwrap();
    }
    b.finish().unwrap()
}
