#![allow(dead_code)]

use geopath::{Matrix, MlpConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// He-initialized model with small random offsets on biases and norm params.
pub fn random_model(sizes: &[usize], layernorm: bool, seed: u64) -> ModelParams {
    let cfg = MlpConfig::new(sizes.to_vec(), layernorm).unwrap();
    let mut r = rng(seed);
    let mut p = ModelParams::init_he(&cfg, &mut r).unwrap();
    for s in p.slices_mut() {
        for v in s.iter_mut() {
            *v += 0.1 * r.random_range(-1.0..1.0);
        }
    }
    p
}

pub fn random_inputs(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    let data = (0..rows * cols)
        .map(|_| r.random_range(-2.0..2.0))
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// A model-shaped direction of unit Euclidean norm.
pub fn unit_direction(like: &ModelParams, seed: u64) -> ModelParams {
    let mut r = rng(seed);
    let mut d = like.zeros_like();
    for s in d.slices_mut() {
        for v in s.iter_mut() {
            *v = r.random_range(-1.0..1.0);
        }
    }
    let n = d.norm();
    d.scale(1.0 / n);
    d
}

pub fn shifted(theta: &ModelParams, direction: &ModelParams, eps: f64) -> ModelParams {
    let mut out = theta.clone();
    out.axpy(eps, direction).unwrap();
    out
}

/// Central difference of `f` along `direction`.
pub fn directional_fd<F: Fn(&ModelParams) -> f64>(
    f: F,
    theta: &ModelParams,
    direction: &ModelParams,
    h: f64,
) -> f64 {
    (f(&shifted(theta, direction, h)) - f(&shifted(theta, direction, -h))) / (2.0 * h)
}

/// Central difference of `f` with respect to every parameter, in flattened
/// order.
pub fn componentwise_fd<F: Fn(&ModelParams) -> f64>(f: F, theta: &ModelParams, h: f64) -> Vec<f64> {
    let n = theta.num_params();
    (0..n)
        .map(|k| {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            nudge(&mut plus, k, h);
            nudge(&mut minus, k, -h);
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

fn nudge(p: &mut ModelParams, mut k: usize, h: f64) {
    for s in p.slices_mut() {
        if k < s.len() {
            s[k] += h;
            return;
        }
        k -= s.len();
    }
    panic!("index out of range");
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| rel_err(*x, *y, floor))
        .fold(0.0, f64::max)
}

/// Exhaustive maximum-weight assignment. Among optimal permutations the
/// lexicographically smallest one wins, since permutations are visited in
/// lexicographic order and only strict improvements replace the incumbent.
pub fn brute_force_lap(score: &Matrix) -> (Vec<usize>, f64) {
    let n = score.rows;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_total = total(score, &perm);
    while next_permutation(&mut perm) {
        let t = total(score, &perm);
        if t > best_total {
            best_total = t;
            best = perm.clone();
        }
    }
    (best, best_total)
}

fn total(score: &Matrix, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| score.get(i, j)).sum()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

pub fn random_square(n: usize, r: &mut ChaCha8Rng) -> Matrix {
    let data = (0..n * n).map(|_| r.random_range(-1.0..1.0)).collect();
    Matrix::new(n, n, data).unwrap()
}
