//! Forward pass, reverse-mode gradients and forward-mode directional
//! derivatives of the dense ReLU classifier.

use crate::error::{Error, Result};
use crate::linalg::{exact_affine, exact_sum, Matrix};

use super::loss::{ce_logit_grad_in_place, check_labels, jsd_row_logit_grads, softmax_in_place};
use super::params::{LayerNorm, ModelParams};

pub const LAYERNORM_EPS: f64 = 1e-5;

struct NormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

struct LayerCache {
    norm: Option<NormCache>,
    /// post-activation for hidden layers, logits for the last layer
    output: Matrix,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct ForwardTrace {
    layers: Vec<LayerCache>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Matrix {
        &self.layers.last().expect("at least one layer").output
    }

    pub fn into_logits(mut self) -> Matrix {
        self.layers.pop().expect("at least one layer").output
    }
}

fn check_inputs(params: &ModelParams, inputs: &Matrix) -> Result<()> {
    params.validate()?;
    if inputs.cols != params.config.input_dim() {
        return Err(Error::shape(
            "layer 0 input",
            format!("{} columns", params.config.input_dim()),
            format!("{} columns", inputs.cols),
        ));
    }
    if inputs.data.len() != inputs.rows * inputs.cols {
        return Err(Error::shape(
            "inputs",
            inputs.rows * inputs.cols,
            inputs.data.len(),
        ));
    }
    Ok(())
}

fn affine(weight: &Matrix, bias: &[f64], input: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(input.rows, weight.rows);
    for (r, x) in input.rows_iter().enumerate() {
        let dst = out.row_mut(r);
        for (o, slot) in dst.iter_mut().enumerate() {
            *slot = exact_affine(weight.row(o), x, bias[o]);
        }
    }
    out
}

fn layernorm_forward(pre: &mut Matrix, norm: &LayerNorm) -> NormCache {
    let width = pre.cols as f64;
    let mut inv_std = Vec::with_capacity(pre.rows);
    let mut normalized = Matrix::zeros(pre.rows, pre.cols);
    for r in 0..pre.rows {
        let z = pre.row_mut(r);
        let mean = exact_sum(z.iter().copied()) / width;
        let var = exact_sum(z.iter().map(|v| (v - mean) * (v - mean))) / width;
        let s = 1.0 / (var + LAYERNORM_EPS).sqrt();
        let xhat = normalized.row_mut(r);
        for i in 0..z.len() {
            xhat[i] = (z[i] - mean) * s;
            z[i] = norm.gain[i] * xhat[i] + norm.shift[i];
        }
        inv_std.push(s);
    }
    NormCache {
        normalized,
        inv_std,
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn forward_unchecked(params: &ModelParams, inputs: &Matrix) -> ForwardTrace {
    let mut layers: Vec<LayerCache> = Vec::with_capacity(params.layers.len());
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let input = if l == 0 {
            inputs
        } else {
            &layers[l - 1].output
        };
        let mut z = affine(&layer.weight, &layer.bias, input);
        let norm = layer.norm.as_ref().map(|n| layernorm_forward(&mut z, n));
        if l < last {
            for v in &mut z.data {
                *v = relu(*v);
            }
        }
        layers.push(LayerCache { norm, output: z });
    }
    ForwardTrace { layers }
}

/// Logits for every input row.
///
/// Hidden-unit sums are correctly rounded, so the result is bit-identical
/// for any relabeling of hidden units (see `align::apply_permutation`).
pub fn forward(params: &ModelParams, inputs: &Matrix) -> Result<Matrix> {
    Ok(forward_trace(params, inputs)?.into_logits())
}

pub fn forward_trace(params: &ModelParams, inputs: &Matrix) -> Result<ForwardTrace> {
    check_inputs(params, inputs)?;
    Ok(forward_unchecked(params, inputs))
}

/// Class probabilities for every input row.
pub fn predict_proba(params: &ModelParams, inputs: &Matrix) -> Result<Matrix> {
    super::loss::softmax(&forward(params, inputs)?)
}

/// Backpropagates `dlogits` (already scaled by whatever batch weighting the
/// caller wants) through a recorded forward pass.
pub fn backward(
    params: &ModelParams,
    inputs: &Matrix,
    trace: &ForwardTrace,
    dlogits: &Matrix,
) -> Result<ModelParams> {
    let logits = trace.logits();
    if dlogits.rows != logits.rows || dlogits.cols != logits.cols {
        return Err(Error::shape(
            "dlogits",
            format!("{}x{}", logits.rows, logits.cols),
            format!("{}x{}", dlogits.rows, dlogits.cols),
        ));
    }
    let mut grad = params.zeros_like();
    let mut delta = dlogits.clone();
    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let cache = &trace.layers[l];

        // delta currently holds dL/d(layer output before activation)
        if let (Some(norm), Some(nc)) = (&layer.norm, &cache.norm) {
            let g = grad.layers[l].norm.as_mut().expect("grad mirrors params");
            delta = layernorm_backward(&delta, norm, nc, g);
        }

        let input = if l == 0 {
            inputs
        } else {
            &trace.layers[l - 1].output
        };
        let gl = &mut grad.layers[l];
        for b in 0..delta.rows {
            let d = delta.row(b);
            let x = input.row(b);
            for (o, &dv) in d.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                gl.bias[o] += dv;
                for (gw, &xv) in gl.weight.row_mut(o).iter_mut().zip(x) {
                    *gw += dv * xv;
                }
            }
        }

        if l == 0 {
            break;
        }
        // propagate to the previous layer's post-activation, then through ReLU
        let prev_out = &trace.layers[l - 1].output;
        let mut next = Matrix::zeros(delta.rows, layer.weight.cols);
        for b in 0..delta.rows {
            let d = delta.row(b);
            let dst = next.row_mut(b);
            for (o, &dv) in d.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                for (slot, &w) in dst.iter_mut().zip(layer.weight.row(o)) {
                    *slot += dv * w;
                }
            }
            for (slot, &a) in dst.iter_mut().zip(prev_out.row(b)) {
                if a <= 0.0 {
                    *slot = 0.0;
                }
            }
        }
        delta = next;
    }
    Ok(grad)
}

fn layernorm_backward(
    upstream: &Matrix,
    norm: &LayerNorm,
    cache: &NormCache,
    grad: &mut LayerNorm,
) -> Matrix {
    let width = upstream.cols as f64;
    let mut out = Matrix::zeros(upstream.rows, upstream.cols);
    let mut g_hat = vec![0.0; upstream.cols];
    for b in 0..upstream.rows {
        let g = upstream.row(b);
        let xhat = cache.normalized.row(b);
        for i in 0..g.len() {
            grad.gain[i] += g[i] * xhat[i];
            grad.shift[i] += g[i];
            g_hat[i] = g[i] * norm.gain[i];
        }
        let mean_g: f64 = g_hat.iter().sum::<f64>() / width;
        let mean_gx: f64 = g_hat.iter().zip(xhat).map(|(a, x)| a * x).sum::<f64>() / width;
        let s = cache.inv_std[b];
        for (i, slot) in out.row_mut(b).iter_mut().enumerate() {
            *slot = s * (g_hat[i] - mean_g - xhat[i] * mean_gx);
        }
    }
    out
}

/// Gradient of the mean cross-entropy, plus the loss itself.
pub fn loss_and_grad_ce(
    params: &ModelParams,
    inputs: &Matrix,
    labels: &[usize],
) -> Result<(f64, ModelParams)> {
    if labels.len() != inputs.rows {
        return Err(Error::shape("labels", inputs.rows, labels.len()));
    }
    if inputs.rows == 0 {
        return Err(Error::invalid("batch", "empty"));
    }
    check_labels(labels, params.config.class_count())?;
    let trace = forward_trace(params, inputs)?;
    let mut dlogits = trace.logits().clone();
    let scale = 1.0 / inputs.rows as f64;
    let mut loss = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        let row = dlogits.row_mut(b);
        softmax_in_place(row);
        loss -= row[y].max(super::loss::PROB_FLOOR).ln();
        ce_logit_grad_in_place(row, y);
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    let grad = backward(params, inputs, &trace, &dlogits)?;
    Ok((loss * scale, grad))
}

/// Exact gradient of the mean cross-entropy with respect to every parameter.
pub fn backward_ce(params: &ModelParams, inputs: &Matrix, labels: &[usize]) -> Result<ModelParams> {
    Ok(loss_and_grad_ce(params, inputs, labels)?.1)
}

/// Mean JSD between two batches of probability rows, and its gradient with
/// respect to each side's logits (already divided by the batch size).
pub(crate) fn jsd_logit_grads(probs_p: &Matrix, probs_q: &Matrix) -> (f64, Matrix, Matrix) {
    let mut gp = Matrix::zeros(probs_p.rows, probs_p.cols);
    let mut gq = Matrix::zeros(probs_q.rows, probs_q.cols);
    let scale = 1.0 / probs_p.rows as f64;
    let mut total = 0.0;
    for b in 0..probs_p.rows {
        total += jsd_row_logit_grads(probs_p.row(b), probs_q.row(b), gp.row_mut(b), gq.row_mut(b));
    }
    for v in gp.data.iter_mut().chain(gq.data.iter_mut()) {
        *v *= scale;
    }
    (total * scale, gp, gq)
}

pub(crate) fn softmax_rows(mut logits: Matrix) -> Matrix {
    for r in 0..logits.rows {
        softmax_in_place(logits.row_mut(r));
    }
    logits
}

/// Batch-mean JSD between the predictive distributions of two models, with
/// exact gradients for both parameter sets. Returns `(grad_p, grad_q, jsd)`.
pub fn backward_jsd_pair(
    params_p: &ModelParams,
    params_q: &ModelParams,
    inputs: &Matrix,
) -> Result<(ModelParams, ModelParams, f64)> {
    params_p.ensure_same_config(params_q)?;
    if inputs.rows == 0 {
        return Err(Error::invalid("batch", "empty"));
    }
    let trace_p = forward_trace(params_p, inputs)?;
    let trace_q = forward_trace(params_q, inputs)?;
    let probs_p = softmax_rows(trace_p.logits().clone());
    let probs_q = softmax_rows(trace_q.logits().clone());
    let (value, gp, gq) = jsd_logit_grads(&probs_p, &probs_q);
    let grad_p = backward(params_p, inputs, &trace_p, &gp)?;
    let grad_q = backward(params_q, inputs, &trace_q, &gq)?;
    Ok((grad_p, grad_q, value))
}

/// Logits and their directional derivative `d/dε logits(θ + ε δ)` at `ε = 0`.
pub fn logits_jvp(
    params: &ModelParams,
    direction: &ModelParams,
    inputs: &Matrix,
) -> Result<(Matrix, Matrix)> {
    check_inputs(params, inputs)?;
    params.ensure_same_config(direction)?;
    direction.validate()?;

    let mut act = inputs.clone();
    let mut tangent = Matrix::zeros(inputs.rows, inputs.cols);
    let last = params.layers.len() - 1;
    for (l, (layer, dlayer)) in params.layers.iter().zip(&direction.layers).enumerate() {
        let mut z = affine(&layer.weight, &layer.bias, &act);
        let mut dz = Matrix::zeros(act.rows, layer.weight.rows);
        for b in 0..act.rows {
            let (x, dx) = (act.row(b), tangent.row(b));
            for o in 0..layer.weight.rows {
                let w = layer.weight.row(o);
                let dw = dlayer.weight.row(o);
                let v: f64 = w.iter().zip(dx).map(|(a, c)| a * c).sum::<f64>()
                    + dw.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
                    + dlayer.bias[o];
                dz.set(b, o, v);
            }
        }
        if let (Some(norm), Some(dnorm)) = (&layer.norm, &dlayer.norm) {
            let cache = layernorm_forward(&mut z, norm);
            let width = dz.cols as f64;
            for b in 0..dz.rows {
                let xhat = cache.normalized.row(b);
                let s = cache.inv_std[b];
                let row = dz.row_mut(b);
                let mean_dz: f64 = row.iter().sum::<f64>() / width;
                let mean_xdz: f64 = row.iter().zip(xhat).map(|(a, x)| a * x).sum::<f64>() / width;
                for i in 0..row.len() {
                    let dxhat = s * (row[i] - mean_dz - xhat[i] * mean_xdz);
                    row[i] = dnorm.gain[i] * xhat[i] + norm.gain[i] * dxhat + dnorm.shift[i];
                }
            }
        }
        if l < last {
            for (v, dv) in z.data.iter_mut().zip(dz.data.iter_mut()) {
                if *v > 0.0 {
                    continue;
                }
                *v = 0.0;
                *dv = 0.0;
            }
        }
        act = z;
        tangent = dz;
    }
    Ok((act, tangent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::MlpConfig;

    #[test]
    fn zero_model_gives_zero_logits() {
        let cfg = MlpConfig::new(vec![3, 5, 4], false).unwrap();
        let p = ModelParams::zeros(&cfg).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        assert!(forward(&p, &x).unwrap().data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_single_layer() {
        let cfg = MlpConfig::new(vec![2, 2], false).unwrap();
        let mut p = ModelParams::zeros(&cfg).unwrap();
        p.layers[0].weight = Matrix::identity(2);
        let x = Matrix::from_rows(&[vec![3.0, -1.0]]).unwrap();
        assert_eq!(forward(&p, &x).unwrap().data, vec![3.0, -1.0]);
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let cfg = MlpConfig::new(vec![2, 3, 2], false).unwrap();
        let p = ModelParams::zeros(&cfg).unwrap();
        let x = Matrix::zeros(1, 3);
        let err = forward(&p, &x).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }
}
