//! Path instrumentation: distribution-space and parameter-space lengths,
//! per-model loss profiles, the Fisher-Rao quadratic form, and the CSV/JSON
//! report files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::geodesic::{segment_jsd, Path, TracePoint};
use crate::linalg::Matrix;
use crate::nn::{self, ModelParams};
use crate::trainer::evaluate;

pub const METRICS_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLengths {
    /// sum over segments of sqrt(JSD)
    pub jsd_length: f64,
    /// `sqrt(8) * jsd_length`, the Fisher-Rao length estimate
    pub jsd_length_scaled: f64,
    /// sum over segments of the parameter-space distance
    pub euclid_length: f64,
}

pub fn segment_distances(path: &Path) -> Result<Vec<f64>> {
    path.models()
        .windows(2)
        .map(|w| w[1].distance(&w[0]))
        .collect()
}

pub(crate) fn lengths_from_segments(path: &Path, per_segment_jsd: &[f64]) -> Result<PathLengths> {
    let jsd_length: f64 = per_segment_jsd.iter().map(|v| v.sqrt()).sum();
    Ok(PathLengths {
        jsd_length,
        jsd_length_scaled: 8f64.sqrt() * jsd_length,
        euclid_length: segment_distances(path)?.iter().sum(),
    })
}

pub fn path_lengths(path: &Path, inputs: &Matrix) -> Result<PathLengths> {
    lengths_from_segments(path, &segment_jsd(path, inputs)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub per_segment_jsd: Vec<f64>,
    pub per_segment_euclid: Vec<f64>,
    pub per_model_train_loss: Vec<f64>,
    pub per_model_test_loss: Vec<f64>,
    pub per_model_train_acc: Vec<f64>,
    pub per_model_test_acc: Vec<f64>,
    pub lengths: PathLengths,
}

impl PathMetrics {
    /// Largest train loss among interior models minus the larger endpoint
    /// loss. Zero for a two-model path.
    pub fn train_barrier(&self) -> f64 {
        barrier(&self.per_model_train_loss)
    }

    pub fn test_barrier(&self) -> f64 {
        barrier(&self.per_model_test_loss)
    }
}

fn barrier(losses: &[f64]) -> f64 {
    let n = losses.len();
    let ends = losses[0].max(losses[n - 1]);
    let interior = losses[1..n - 1]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (interior - ends).max(0.0)
}

/// Evaluates every model of the path on both datasets. Segment divergences
/// are measured on the training inputs.
pub fn loss_profile(path: &Path, train: &Dataset, test: &Dataset) -> Result<PathMetrics> {
    let evals: Vec<_> = path
        .models()
        .par_iter()
        .map(|m| Ok((evaluate(m, train)?, evaluate(m, test)?)))
        .collect::<Result<_>>()?;
    let per_segment_jsd = segment_jsd(path, train.inputs())?;
    let lengths = lengths_from_segments(path, &per_segment_jsd)?;
    Ok(PathMetrics {
        per_segment_euclid: segment_distances(path)?,
        per_segment_jsd,
        per_model_train_loss: evals.iter().map(|e| e.0.loss).collect(),
        per_model_test_loss: evals.iter().map(|e| e.1.loss).collect(),
        per_model_train_acc: evals.iter().map(|e| e.0.accuracy).collect(),
        per_model_test_acc: evals.iter().map(|e| e.1.accuracy).collect(),
        lengths,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FisherMode {
    /// Sum over every class, weighted by the model's own probabilities.
    #[default]
    Exact,
}

/// `delta' G(theta) delta` for the Fisher-Rao metric of the joint
/// distribution with the empirical input distribution over `inputs`.
///
/// Only the conditional log-likelihood depends on the parameters, so this is
/// the input-average of `sum_y p(y|x) (d/de log p(y|x; theta + e delta))^2`.
/// The directional score is computed by forward-mode differentiation; the
/// metric itself is never formed.
pub fn fisher_quadratic_form(
    theta: &ModelParams,
    direction: &ModelParams,
    inputs: &Matrix,
    mode: FisherMode,
) -> Result<f64> {
    let FisherMode::Exact = mode;
    if inputs.rows == 0 {
        return Err(Error::invalid("inputs", "empty"));
    }
    let (logits, tangent) = nn::logits_jvp(theta, direction, inputs)?;
    let probs = nn::softmax(&logits)?;
    let mut total = 0.0;
    for (p, dz) in probs.rows_iter().zip(tangent.rows_iter()) {
        let mean: f64 = p.iter().zip(dz).map(|(a, b)| a * b).sum();
        total += p
            .iter()
            .zip(dz)
            .map(|(pk, dk)| pk * (dk - mean) * (dk - mean))
            .sum::<f64>();
    }
    Ok(total / inputs.rows as f64)
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    version: u64,
    pre: &'a PathMetrics,
    post: &'a PathMetrics,
    trace: &'a [TracePoint],
}

fn write_file(path: &FsPath, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn loss_csv(metrics: &PathMetrics) -> String {
    let mut out = String::from("x,train_loss,test_loss\n");
    for (i, (tr, te)) in metrics
        .per_model_train_loss
        .iter()
        .zip(&metrics.per_model_test_loss)
        .enumerate()
    {
        let _ = writeln!(out, "{},{tr:?},{te:?}", i + 1);
    }
    out
}

/// Writes the report files into `out_dir` (created if missing):
/// `path_lengths.csv` (`x,model_space,param_space`, one row per trace
/// point, `model_space` being the unscaled sum of sqrt(JSD)),
/// `pre_opt_loss.csv` and `post_opt_loss.csv` (`x,train_loss,test_loss`,
/// 1-based model index), `trace.csv` with every trace column, and
/// `metrics.json`.
pub fn write_report(
    pre: &PathMetrics,
    post: &PathMetrics,
    trace: &[TracePoint],
    out_dir: impl AsRef<FsPath>,
) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut lengths = String::from("x,model_space,param_space\n");
    let mut full = String::from("iteration,energy,sqrt_length,sqrt_length_scaled,euclid_length\n");
    for t in trace {
        let _ = writeln!(
            lengths,
            "{},{:?},{:?}",
            t.iteration, t.sqrt_length, t.euclid_length
        );
        let _ = writeln!(
            full,
            "{},{:?},{:?},{:?},{:?}",
            t.iteration, t.energy, t.sqrt_length, t.sqrt_length_scaled, t.euclid_length
        );
    }
    write_file(&dir.join("path_lengths.csv"), &lengths)?;
    write_file(&dir.join("trace.csv"), &full)?;
    write_file(&dir.join("pre_opt_loss.csv"), &loss_csv(pre))?;
    write_file(&dir.join("post_opt_loss.csv"), &loss_csv(post))?;

    let doc = MetricsDoc {
        version: METRICS_VERSION,
        pre,
        post,
        trace,
    };
    let json_path = dir.join("metrics.json");
    let mut json = serde_json::to_string_pretty(&doc).map_err(|e| Error::json(&json_path, e))?;
    json.push('\n');
    write_file(&json_path, &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_from_hand_set_segment() {
        let cfg = crate::nn::MlpConfig::new(vec![1, 2], false).unwrap();
        let a = ModelParams::zeros(&cfg).unwrap();
        let mut b = a.clone();
        b.layers[0].bias = vec![3.0, 0.0];
        let path = Path::new(vec![a, b]).unwrap();
        let l = lengths_from_segments(&path, &[0.25]).unwrap();
        assert_eq!(l.jsd_length, 0.5);
        assert!((l.jsd_length_scaled - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(l.euclid_length, 3.0);
    }

    #[test]
    fn barrier_ignores_endpoints() {
        assert_eq!(barrier(&[0.1, 0.5, 0.2]), 0.3);
        assert_eq!(barrier(&[0.1, 0.05, 0.2]), 0.0);
        assert_eq!(barrier(&[0.1, 0.2]), 0.0);
    }
}
