//! Softmax, cross-entropy and the Jensen-Shannon divergence, together with
//! their derivatives with respect to logits.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Probabilities are clamped below at this value before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
fn clamped_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Row-wise softmax with max-shift.
pub fn softmax(logits: &Matrix) -> Result<Matrix> {
    logits.ensure_finite("logits")?;
    let mut out = logits.clone();
    for r in 0..out.rows {
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub(crate) fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().enumerate().find(|(_, &y)| y >= classes) {
        Some((row, &label)) => Err(Error::LabelOutOfRange {
            row,
            label,
            classes,
        }),
        None => Ok(()),
    }
}

/// Mean of `-ln p(y_i | x_i)` over the batch.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows != labels.len() {
        return Err(Error::shape(
            "cross_entropy labels",
            probs.rows,
            labels.len(),
        ));
    }
    if probs.rows == 0 {
        return Err(Error::invalid("batch", "empty"));
    }
    check_labels(labels, probs.cols)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &y)| -clamped_ln(probs.get(r, y)))
        .sum();
    Ok(total / probs.rows as f64)
}

/// Gradient of the summed (not averaged) clamped cross-entropy with respect
/// to the logits of one row, written into `probs_row` in place.
pub(crate) fn ce_logit_grad_in_place(probs_row: &mut [f64], label: usize) {
    if probs_row[label] > PROB_FLOOR {
        probs_row[label] -= 1.0;
    } else {
        // clamped: the loss is locally constant
        probs_row.fill(0.0);
    }
}

/// Jensen-Shannon divergence of two rows without input validation.
///
/// `0.5 KL(p||m) + 0.5 KL(q||m)` with `m = (p + q) / 2`, natural log. The
/// two KL halves are accumulated separately and combined with a commutative
/// operation, so swapping the arguments gives a bit-identical result.
pub(crate) fn jsd_row(p: &[f64], q: &[f64]) -> f64 {
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        let ln_m = clamped_ln(0.5 * (pk + qk));
        kl_p += pk * (clamped_ln(pk) - ln_m);
        kl_q += qk * (clamped_ln(qk) - ln_m);
    }
    (0.5 * (kl_p + kl_q)).clamp(0.0, LN_2)
}

/// JSD of one row plus its gradients with respect to both rows' logits.
///
/// The probability-space partial is
/// `0.5 (ln p_k + [p_k > floor]) - 0.5 (ln m_k + [m_k > floor])`
/// (clamped logs), which is then pulled back through the softmax.
pub(crate) fn jsd_row_logit_grads(
    p: &[f64],
    q: &[f64],
    grad_p: &mut [f64],
    grad_q: &mut [f64],
) -> f64 {
    let value = jsd_row(p, q);
    for k in 0..p.len() {
        let m = 0.5 * (p[k] + q[k]);
        let m_term = clamped_ln(m) + indicator(m);
        grad_p[k] = 0.5 * (clamped_ln(p[k]) + indicator(p[k]) - m_term);
        grad_q[k] = 0.5 * (clamped_ln(q[k]) + indicator(q[k]) - m_term);
    }
    softmax_pullback(p, grad_p);
    softmax_pullback(q, grad_q);
    value
}

#[inline]
fn indicator(x: f64) -> f64 {
    if x > PROB_FLOOR {
        1.0
    } else {
        0.0
    }
}

/// Turns `dL/dp` into `dL/dz` for `p = softmax(z)`.
fn softmax_pullback(p: &[f64], grad: &mut [f64]) {
    let inner: f64 = p.iter().zip(grad.iter()).map(|(a, b)| a * b).sum();
    for (g, &pk) in grad.iter_mut().zip(p) {
        *g = pk * (*g - inner);
    }
}

/// Jensen-Shannon divergence between two probability vectors (natural log,
/// clamped at `1e-12`). Both inputs must be nonnegative and sum to one
/// within `1e-9`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape("jsd", p.len(), q.len()));
    }
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    Ok(jsd_row(p, q))
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid(name, "empty distribution"));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(
            name,
            "entries must be finite and nonnegative",
        ));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(name, format!("sums to {total}, not 1")));
    }
    Ok(())
}
