//! Discrete geodesics between two models in the space of predictive
//! distributions.
//!
//! A path is a chain of `N` models with the two ends pinned. Its energy is
//! the sum over adjacent pairs of the Jensen-Shannon divergence between their
//! predictive distributions, averaged over the inputs (the inputs play the
//! role of the empirical input distribution, so a joint divergence reduces to
//! the mean conditional one). Minimizing the energy rather than the summed
//! square roots drives the chain toward the constant-speed geodesic.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{lengths_from_segments, PathLengths};
use crate::nn::{self, jsd_logit_grads, jsd_row, softmax_rows, MlpConfig, ModelParams};

pub use crate::nn::jsd;

/// An ordered chain of models sharing one architecture. The first and last
/// models are the fixed endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    models: Vec<ModelParams>,
}

impl Path {
    pub fn new(models: Vec<ModelParams>) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::invalid("path", "needs at least 2 models"));
        }
        for (i, m) in models.iter().enumerate() {
            m.validate()
                .map_err(|e| Error::invalid(format!("path model {i}"), e.to_string()))?;
            models[0].ensure_same_config(m)?;
        }
        Ok(Path { models })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[ModelParams] {
        &self.models
    }

    pub fn into_models(self) -> Vec<ModelParams> {
        self.models
    }

    pub fn config(&self) -> &MlpConfig {
        &self.models[0].config
    }

    pub fn start(&self) -> &ModelParams {
        &self.models[0]
    }

    pub fn end(&self) -> &ModelParams {
        &self.models[self.models.len() - 1]
    }

    fn check_inputs(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols != self.config().input_dim() {
            return Err(Error::shape(
                "path inputs",
                format!("{} columns", self.config().input_dim()),
                format!("{} columns", inputs.cols),
            ));
        }
        if inputs.rows == 0 {
            return Err(Error::invalid("inputs", "empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeodesicOpts {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Trace cadence, in iterations. The initial and final states are always
    /// recorded.
    pub eval_every: usize,
}

impl Default for GeodesicOpts {
    fn default() -> Self {
        GeodesicOpts {
            learning_rate: 0.1,
            batch_size: 256,
            iterations: 4000,
            seed: 0,
            eval_every: 50,
        }
    }
}

impl GeodesicOpts {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// Linear interpolation `theta_a + i/(n-1) (theta_b - theta_a)`, with the
/// endpoints copied verbatim.
pub fn init_path(theta_a: &ModelParams, theta_b: &ModelParams, n: usize) -> Result<Path> {
    if n < 2 {
        return Err(Error::invalid("n", "a path needs at least 2 models"));
    }
    theta_a.ensure_same_config(theta_b)?;
    let mut models = Vec::with_capacity(n);
    models.push(theta_a.clone());
    for i in 1..n - 1 {
        models.push(ModelParams::lerp(
            theta_a,
            theta_b,
            i as f64 / (n - 1) as f64,
        )?);
    }
    models.push(theta_b.clone());
    Path::new(models)
}

fn all_probs(models: &[ModelParams], inputs: &Matrix) -> Result<Vec<Matrix>> {
    models
        .par_iter()
        .map(|m| Ok(softmax_rows(nn::forward(m, inputs)?)))
        .collect()
}

fn mean_jsd(p: &Matrix, q: &Matrix) -> f64 {
    let total: f64 = p
        .rows_iter()
        .zip(q.rows_iter())
        .map(|(a, b)| jsd_row(a, b))
        .sum();
    total / p.rows as f64
}

/// Batch-mean JSD of every adjacent pair along the path.
pub fn segment_jsd(path: &Path, inputs: &Matrix) -> Result<Vec<f64>> {
    path.check_inputs(inputs)?;
    let probs = all_probs(path.models(), inputs)?;
    Ok((0..probs.len() - 1)
        .into_par_iter()
        .map(|s| mean_jsd(&probs[s], &probs[s + 1]))
        .collect())
}

/// Discrete energy: the sum of adjacent-pair JSDs. Labels play no part.
pub fn path_energy(path: &Path, inputs: &Matrix) -> Result<(f64, Vec<f64>)> {
    let per_segment = segment_jsd(path, inputs)?;
    Ok((per_segment.iter().sum(), per_segment))
}

/// Exact gradient of the energy with respect to every interior model on
/// `inputs`, together with the per-segment JSDs. Entry `k` of the returned
/// gradients belongs to model `k + 1`.
pub fn energy_gradients(path: &Path, inputs: &Matrix) -> Result<(Vec<f64>, Vec<ModelParams>)> {
    path.check_inputs(inputs)?;
    let models = path.models();
    let traces: Vec<nn::ForwardTrace> = models
        .par_iter()
        .map(|m| nn::forward_trace(m, inputs))
        .collect::<Result<_>>()?;
    let probs: Vec<Matrix> = traces
        .par_iter()
        .map(|t| softmax_rows(t.logits().clone()))
        .collect();
    let segments: Vec<(f64, Matrix, Matrix)> = (0..models.len() - 1)
        .into_par_iter()
        .map(|s| jsd_logit_grads(&probs[s], &probs[s + 1]))
        .collect();

    let grads: Vec<ModelParams> = (1..models.len() - 1)
        .into_par_iter()
        .map(|i| {
            // model i is the right end of segment i-1 and the left end of segment i
            let mut upstream = segments[i - 1].2.clone();
            for (u, r) in upstream.data.iter_mut().zip(&segments[i].1.data) {
                *u += r;
            }
            nn::backward(&models[i], inputs, &traces[i], &upstream)
        })
        .collect::<Result<_>>()?;
    Ok((segments.into_iter().map(|s| s.0).collect(), grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub energy: f64,
    /// sum of sqrt(JSD) over segments
    pub sqrt_length: f64,
    /// `sqrt(8)` times `sqrt_length`
    pub sqrt_length_scaled: f64,
    pub euclid_length: f64,
}

impl TracePoint {
    fn new(iteration: usize, energy: f64, lengths: PathLengths) -> Self {
        TracePoint {
            iteration,
            energy,
            sqrt_length: lengths.jsd_length,
            sqrt_length_scaled: lengths.jsd_length_scaled,
            euclid_length: lengths.euclid_length,
        }
    }
}

/// Draws fixed-size minibatches without replacement, reshuffling whenever
/// fewer than a full batch remain.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        BatchSampler {
            order,
            cursor: 0,
            rng,
        }
    }

    fn next_batch(&mut self, size: usize) -> &[usize] {
        let size = size.min(self.order.len());
        if self.cursor + size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let batch = &self.order[self.cursor..self.cursor + size];
        self.cursor += size;
        batch
    }
}

fn record(path: &Path, inputs: &Matrix, iteration: usize) -> Result<TracePoint> {
    let per_segment = segment_jsd(path, inputs)?;
    let energy = per_segment.iter().sum();
    let lengths = lengths_from_segments(path, &per_segment)?;
    Ok(TracePoint::new(iteration, energy, lengths))
}

/// Minimizes the path energy by minibatch SGD with the endpoints held fixed.
///
/// Every iteration draws one minibatch of rows from `inputs`, computes all
/// segment gradients on it, and updates all interior models at once from
/// the parameters of the previous iteration. The trace is evaluated on the
/// whole of `inputs`. Only inputs are taken, never labels.
pub fn optimize_path(
    path: &Path,
    inputs: &Matrix,
    opts: &GeodesicOpts,
) -> Result<(Path, Vec<TracePoint>)> {
    opts.validate()?;
    path.check_inputs(inputs)?;
    let mut path = path.clone();
    let mut sampler = BatchSampler::new(inputs.rows, opts.seed);
    let mut trace = vec![record(&path, inputs, 0)?];

    for it in 1..=opts.iterations {
        let batch = inputs.select_rows(sampler.next_batch(opts.batch_size));
        let (_, grads) = energy_gradients(&path, &batch)?;
        let last = path.models.len() - 1;
        path.models[1..last]
            .par_iter_mut()
            .zip(grads.par_iter())
            .try_for_each(|(model, grad)| model.axpy(-opts.learning_rate, grad))?;

        if it % opts.eval_every == 0 || it == opts.iterations {
            let point = record(&path, inputs, it)?;
            log::debug!(
                "iteration {it}: energy {:.6e}, sum sqrt(JSD) {:.6}, euclid {:.4}",
                point.energy,
                point.sqrt_length,
                point.euclid_length
            );
            trace.push(point);
        }
    }
    Ok((path, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pair(seed: u64) -> (ModelParams, ModelParams) {
        let cfg = MlpConfig::new(vec![2, 4, 3], false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (
            ModelParams::init_he(&cfg, &mut rng).unwrap(),
            ModelParams::init_he(&cfg, &mut rng).unwrap(),
        )
    }

    #[test]
    fn init_path_endpoints_and_midpoint() {
        let (a, b) = pair(1);
        let two = init_path(&a, &b, 2).unwrap();
        assert!(two.start().bitwise_eq(&a) && two.end().bitwise_eq(&b));
        let three = init_path(&a, &b, 3).unwrap();
        let mid = three.models()[1].flatten();
        for ((m, x), y) in mid.iter().zip(a.flatten()).zip(b.flatten()) {
            assert!((m - 0.5 * (x + y)).abs() < 1e-15);
        }
        assert!(init_path(&a, &b, 1).is_err());
    }

    #[test]
    fn opts_validation() {
        assert!(GeodesicOpts::default().validate().is_ok());
        let bad = GeodesicOpts {
            eval_every: 0,
            ..GeodesicOpts::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sampler_never_repeats_within_a_pass() {
        let mut s = BatchSampler::new(10, 3);
        let mut seen: Vec<usize> = s.next_batch(4).to_vec();
        seen.extend_from_slice(s.next_batch(4));
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 8);
        assert_eq!(s.next_batch(4).len(), 4);
        assert_eq!(s.next_batch(40).len(), 10);
    }
}
