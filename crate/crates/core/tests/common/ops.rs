//! Randomized single-op graphs for finite-difference gradient checks.

use gcs_core::autodiff::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OPS: [&str; 21] = [
    "add",
    "add_scalar_operand",
    "sub",
    "mul",
    "mul_scalar_operand",
    "div",
    "matmul",
    "exp",
    "log",
    "square",
    "sqrt",
    "relu",
    "scale",
    "abs2_pairs",
    "mean",
    "sum",
    "softmax",
    "softmax_cross_entropy",
    "broadcast_scalar",
    "broadcast_row",
    "broadcast_column",
];

pub struct Case {
    pub tape: Tape,
    pub root: Var,
    pub leaves: Vec<Var>,
}

fn values(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values bounded away from zero so that relu kinks are never straddled.
fn off_kink(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..2.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// Builds the graph for `OPS[op]` with random shapes and values, reduced to
/// a scalar through a random linear functional so every output element
/// contributes to the checked gradient.
pub fn build(op: usize, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.gen_range(1..=4);
    let c = 2 * rng.gen_range(1..=3);
    let mut t = Tape::new();
    let m = |t: &mut Tape, rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        t.param(Tensor::matrix(r, c, values(rng, r * c, lo, hi)).unwrap())
    };
    let (out, leaves) = match OPS[op] {
        "add" | "sub" | "mul" => {
            let a = m(&mut t, &mut rng, -2.0, 2.0);
            let b = m(&mut t, &mut rng, -2.0, 2.0);
            let o = match OPS[op] {
                "add" => t.add(a, b),
                "sub" => t.sub(a, b),
                _ => t.mul(a, b),
            };
            (o.unwrap(), vec![a, b])
        }
        "add_scalar_operand" | "mul_scalar_operand" => {
            let a = m(&mut t, &mut rng, -2.0, 2.0);
            let s = t.param(Tensor::scalar(rng.gen_range(-2.0..2.0)));
            let o = if OPS[op].starts_with("add") { t.add(s, a) } else { t.mul(a, s) };
            (o.unwrap(), vec![a, s])
        }
        "div" => {
            let a = m(&mut t, &mut rng, -2.0, 2.0);
            let b = m(&mut t, &mut rng, 0.5, 2.0);
            (t.div(a, b).unwrap(), vec![a, b])
        }
        "matmul" => {
            let k = rng.gen_range(1..=4);
            let a = t.param(Tensor::matrix(r, k, values(&mut rng, r * k, -2.0, 2.0)).unwrap());
            let b = t.param(Tensor::matrix(k, c, values(&mut rng, k * c, -2.0, 2.0)).unwrap());
            (t.matmul(a, b).unwrap(), vec![a, b])
        }
        "exp" => {
            let a = m(&mut t, &mut rng, -2.0, 2.0);
            (t.exp(a).unwrap(), vec![a])
        }
        "log" => {
            let a = m(&mut t, &mut rng, 0.2, 3.0);
            (t.log(a).unwrap(), vec![a])
        }
        "square" => {
            let a = m(&mut t, &mut rng, -2.0, 2.0);
            (t.square(a).unwrap(), vec![a])
        }
        "sqrt" => {
            let a = m(&mut t, &mut rng, 0.2, 3.0);
            (t.sqrt(a).unwrap(), vec![a])
        }
        "relu" => {
            let a = t.param(Tensor::matrix(r, c, off_kink(&mut rng, r * c)).unwrap());
            (t.relu(a).unwrap(), vec![a])
        }
        "scale" => {
            let a = m(&mut t, &mut rng, -2.0, 2.0);
            let k = rng.gen_range(-3.0..3.0);
            (t.scale(a, k).unwrap(), vec![a])
        }
        "abs2_pairs" => {
            let a = m(&mut t, &mut rng, -2.0, 2.0);
            (t.abs2_pairs(a).unwrap(), vec![a])
        }
        "mean" => {
            let a = m(&mut t, &mut rng, -2.0, 2.0);
            (t.mean(a).unwrap(), vec![a])
        }
        "sum" => {
            let a = m(&mut t, &mut rng, -2.0, 2.0);
            (t.sum(a).unwrap(), vec![a])
        }
        "softmax" => {
            let a = m(&mut t, &mut rng, -3.0, 3.0);
            (t.softmax(a).unwrap(), vec![a])
        }
        "softmax_cross_entropy" => {
            let a = m(&mut t, &mut rng, -3.0, 3.0);
            let mut tgt = vec![0.0; r * c];
            for i in 0..r {
                tgt[i * c + rng.gen_range(0..c)] = 1.0;
            }
            let tv = t.constant(Tensor::matrix(r, c, tgt).unwrap());
            (t.softmax_cross_entropy(a, tv).unwrap(), vec![a])
        }
        "broadcast_scalar" => {
            let s = t.param(Tensor::scalar(rng.gen_range(-2.0..2.0)));
            (t.broadcast(s, &[r, c]).unwrap(), vec![s])
        }
        "broadcast_row" => {
            let v = t.param(Tensor::vector(values(&mut rng, c, -2.0, 2.0)));
            (t.broadcast(v, &[r, c]).unwrap(), vec![v])
        }
        "broadcast_column" => {
            let v = t.param(Tensor::matrix(r, 1, values(&mut rng, r, -2.0, 2.0)).unwrap());
            (t.broadcast(v, &[r, c]).unwrap(), vec![v])
        }
        other => unreachable!("unknown op {other}"),
    };
    let shape = t.value(out).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = t.constant(Tensor::new(shape, values(&mut rng, n, -1.0, 1.0)).unwrap());
    let prod = t.mul(out, w).unwrap();
    let root = t.sum(prod).unwrap();
    Case { tape: t, root, leaves }
}
