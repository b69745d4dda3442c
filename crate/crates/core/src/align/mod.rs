//! Hidden-unit permutation symmetry: applying permutations to a network and
//! finding the permutations that best align one network with another
//! (weight matching).

mod lap;

pub use lap::{assignment_score, solve_lap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{exact_sum, Matrix};
use crate::nn::{MlpConfig, ModelParams};

/// One permutation per hidden layer. Unit `i` of the permuted layer is unit
/// `perms[l][i]` of the original.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSpec {
    pub perms: Vec<Vec<usize>>,
}

impl PermutationSpec {
    pub fn identity(config: &MlpConfig) -> Self {
        PermutationSpec {
            perms: config
                .hidden_widths()
                .iter()
                .map(|&w| (0..w).collect())
                .collect(),
        }
    }

    pub fn random<R: rand::Rng + ?Sized>(config: &MlpConfig, rng: &mut R) -> Self {
        let mut spec = Self::identity(config);
        for p in &mut spec.perms {
            p.shuffle(rng);
        }
        spec
    }

    pub fn validate(&self, config: &MlpConfig) -> Result<()> {
        let widths = config.hidden_widths();
        if self.perms.len() != widths.len() {
            return Err(Error::shape(
                "permutation count",
                widths.len(),
                self.perms.len(),
            ));
        }
        for (l, (perm, &w)) in self.perms.iter().zip(widths).enumerate() {
            if perm.len() != w {
                return Err(Error::shape(format!("permutation {l}"), w, perm.len()));
            }
            let mut seen = vec![false; w];
            for &k in perm {
                if k >= w || std::mem::replace(&mut seen[k], true) {
                    return Err(Error::invalid(
                        format!("permutation {l}"),
                        "not a bijection",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn inverse(&self) -> Self {
        PermutationSpec {
            perms: self
                .perms
                .iter()
                .map(|p| {
                    let mut inv = vec![0; p.len()];
                    for (i, &k) in p.iter().enumerate() {
                        inv[k] = i;
                    }
                    inv
                })
                .collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.perms
            .iter()
            .all(|p| p.iter().enumerate().all(|(i, &k)| i == k))
    }
}

fn permute<T: Copy>(values: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&k| values[k]).collect()
}

/// Relabels hidden units: rows of each hidden layer's weights, its bias and
/// layer-norm parameters, and the matching columns of the next layer's
/// weights. Input and output units are never moved, so the network function
/// is unchanged (bit for bit, since hidden sums are correctly rounded).
pub fn apply_permutation(theta: &ModelParams, spec: &PermutationSpec) -> Result<ModelParams> {
    theta.validate()?;
    spec.validate(&theta.config)?;
    let mut out = theta.clone();
    for (l, perm) in spec.perms.iter().enumerate() {
        let layer = &mut out.layers[l];
        let w = &layer.weight;
        let mut rows = Vec::with_capacity(w.data.len());
        for &k in perm {
            rows.extend_from_slice(w.row(k));
        }
        layer.weight.data = rows;
        layer.bias = permute(&layer.bias, perm);
        if let Some(norm) = &mut layer.norm {
            norm.gain = permute(&norm.gain, perm);
            norm.shift = permute(&norm.shift, perm);
        }

        let next = &mut out.layers[l + 1].weight;
        for r in 0..next.rows {
            let permuted = permute(next.row(r), perm);
            next.row_mut(r).copy_from_slice(&permuted);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOpts {
    /// Upper bound on full sweeps over the hidden layers.
    pub max_sweeps: usize,
    /// When set, each sweep visits the layers in an order shuffled by this
    /// seed instead of first-to-last.
    pub order_seed: Option<u64>,
}

impl Default for MatchOpts {
    fn default() -> Self {
        MatchOpts {
            max_sweeps: 1000,
            order_seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub spec: PermutationSpec,
    /// Similarity `<theta_a, pi(theta_b)>` at the start and after every
    /// accepted layer update.
    pub objective: Vec<f64>,
    pub sweeps: usize,
}

/// Per-unit feature vectors of hidden layer `l`: incoming weights, bias,
/// layer-norm gain and shift, then (if `outgoing`) outgoing weights. For
/// `b`, the adjacent layers' current permutations are applied first.
fn unit_features(
    theta: &ModelParams,
    l: usize,
    perms: Option<&[Vec<usize>]>,
    outgoing: bool,
) -> Matrix {
    let layer = &theta.layers[l];
    let next = &theta.layers[l + 1].weight;
    let width = layer.weight.rows;
    let fan_in = layer.weight.cols;
    let norm_cols = if layer.norm.is_some() { 2 } else { 0 };
    let out_cols = if outgoing { next.rows } else { 0 };
    let cols = fan_in + 1 + norm_cols + out_cols;

    let in_perm: Option<&[usize]> = perms.and_then(|p| (l > 0).then(|| p[l - 1].as_slice()));
    let out_perm: Option<&[usize]> = perms.and_then(|p| p.get(l + 1).map(Vec::as_slice));

    let mut feats = Matrix::zeros(width, cols);
    for j in 0..width {
        let dst = feats.row_mut(j);
        let src = layer.weight.row(j);
        for c in 0..fan_in {
            dst[c] = match in_perm {
                Some(p) => src[p[c]],
                None => src[c],
            };
        }
        dst[fan_in] = layer.bias[j];
        if let Some(norm) = &layer.norm {
            dst[fan_in + 1] = norm.gain[j];
            dst[fan_in + 2] = norm.shift[j];
        }
        let base = fan_in + 1 + norm_cols;
        for r in 0..out_cols {
            let rr = out_perm.map_or(r, |p| p[r]);
            dst[base + r] = next.get(rr, j);
        }
    }
    feats
}

fn similarity(a: &Matrix, b: &Matrix) -> Matrix {
    let mut s = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        for j in 0..b.rows {
            s.set(
                i,
                j,
                exact_sum(a.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y)),
            );
        }
    }
    s
}

fn objective(theta_a: &ModelParams, theta_b: &ModelParams, spec: &PermutationSpec) -> Result<f64> {
    let permuted = apply_permutation(theta_b, spec)?;
    Ok(exact_sum(
        theta_a
            .slices()
            .zip(permuted.slices())
            .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q)),
    ))
}

/// One first-to-last pass matching each layer on its incoming side only,
/// given the permutations already chosen below it.
fn greedy_start(theta_a: &ModelParams, theta_b: &ModelParams) -> Result<PermutationSpec> {
    let mut spec = PermutationSpec::identity(&theta_a.config);
    for l in 0..spec.perms.len() {
        let feats_a = unit_features(theta_a, l, None, false);
        let feats_b = unit_features(theta_b, l, Some(&spec.perms), false);
        spec.perms[l] = solve_lap(&similarity(&feats_a, &feats_b))?;
    }
    Ok(spec)
}

/// Permutations of `theta_b`'s hidden units that maximize its weight
/// similarity to `theta_a`, by coordinate ascent over layers.
pub fn weight_matching(theta_a: &ModelParams, theta_b: &ModelParams) -> Result<PermutationSpec> {
    Ok(weight_matching_with(theta_a, theta_b, &MatchOpts::default())?.spec)
}

/// Coordinate ascent: each layer's permutation is re-solved as a linear
/// assignment with the other layers held fixed, and kept only if it strictly
/// improves that layer's score. Sweeps repeat until one changes nothing.
///
/// The ascent starts from the identity or from a greedy incoming-side pass,
/// whichever has the higher similarity.
pub fn weight_matching_with(
    theta_a: &ModelParams,
    theta_b: &ModelParams,
    opts: &MatchOpts,
) -> Result<MatchOutcome> {
    theta_a.validate()?;
    theta_b.validate()?;
    theta_a.ensure_same_config(theta_b)?;

    let mut spec = PermutationSpec::identity(&theta_a.config);
    let mut start = objective(theta_a, theta_b, &spec)?;
    let greedy = greedy_start(theta_a, theta_b)?;
    let greedy_value = objective(theta_a, theta_b, &greedy)?;
    if greedy_value > start {
        spec = greedy;
        start = greedy_value;
    }
    let hidden = spec.perms.len();
    let mut history = vec![start];
    let mut order: Vec<usize> = (0..hidden).collect();
    let mut rng = opts.order_seed.map(ChaCha8Rng::seed_from_u64);

    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut changed = false;
        for &l in &order {
            let feats_a = unit_features(theta_a, l, None, true);
            let feats_b = unit_features(theta_b, l, Some(&spec.perms), true);
            let score = similarity(&feats_a, &feats_b);
            let candidate = solve_lap(&score)?;
            if candidate == spec.perms[l] {
                continue;
            }
            let current = assignment_score(&score, &spec.perms[l]);
            let proposed = assignment_score(&score, &candidate);
            if proposed > current + 1e-12 * current.abs().max(1.0) {
                spec.perms[l] = candidate;
                changed = true;
                history.push(objective(theta_a, theta_b, &spec)?);
            }
        }
        if !changed {
            break;
        }
    }
    log::debug!(
        "weight matching: {} sweeps, objective {:.6} -> {:.6}",
        sweeps,
        history[0],
        history[history.len() - 1]
    );
    Ok(MatchOutcome {
        spec,
        objective: history,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward;
    use rand::SeedableRng;

    fn model(sizes: &[usize], ln: bool, seed: u64) -> ModelParams {
        let cfg = MlpConfig::new(sizes.to_vec(), ln).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::init_he(&cfg, &mut rng).unwrap();
        // nonzero biases and norm params so every block carries signal
        for s in p.slices_mut() {
            for v in s.iter_mut() {
                *v += 0.01 * rand::Rng::random_range(&mut rng, -1.0..1.0);
            }
        }
        p
    }

    #[test]
    fn identity_spec_is_a_no_op() {
        let p = model(&[3, 5, 4, 2], true, 1);
        let spec = PermutationSpec::identity(&p.config);
        assert!(apply_permutation(&p, &spec).unwrap().bitwise_eq(&p));
    }

    #[test]
    fn spec_validation() {
        let p = model(&[3, 3, 2], false, 1);
        let bad = PermutationSpec {
            perms: vec![vec![0, 0, 1]],
        };
        assert!(apply_permutation(&p, &bad).is_err());
        let short = PermutationSpec {
            perms: vec![vec![0, 1]],
        };
        assert!(apply_permutation(&p, &short).is_err());
    }

    #[test]
    fn self_match_is_identity() {
        let p = model(&[2, 6, 6, 3], false, 4);
        assert!(weight_matching(&p, &p).unwrap().is_identity());
    }

    #[test]
    fn permutation_preserves_function_with_layernorm() {
        let p = model(&[3, 7, 5, 4], true, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = PermutationSpec::random(&p.config, &mut rng);
        let q = apply_permutation(&p, &spec).unwrap();
        let x = Matrix::new(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let a = forward(&p, &x).unwrap();
        let b = forward(&q, &x).unwrap();
        assert!(a
            .data
            .iter()
            .zip(&b.data)
            .all(|(u, v)| u.to_bits() == v.to_bits()));
        let back = apply_permutation(&q, &spec.inverse()).unwrap();
        assert!(back.bitwise_eq(&p));
    }
}
