//! Softmax cross-entropy, the sigmoid membership loss, and the weighted sum
//! used by the dual-branch trainer.
//!
//! Loss functions take logits of shape `[c]` or `[n, c]` with one label per
//! row, and reduce a batch by the arithmetic mean of per-sample values and
//! gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_LAMBDA: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// Gradient with respect to the logits, shaped like them.
    pub grad: Tensor,
}

/// Weight of the wrong-class term in the membership loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipParams {
    pub lambda: f64,
}

impl MembershipParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("membership lambda {lambda} must be > 0")));
        }
        Ok(Self { lambda })
    }
}

impl Default for MembershipParams {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA }
    }
}

/// The two risk terms of the membership loss for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembershipRisks {
    /// `[1 - sigmoid(f_y)]^2`: the true class scored low.
    pub correct_class: f64,
    /// `mean_{i != y} sigmoid(f_i)^2`: some other class scored high.
    pub wrong_class: f64,
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_derivative(t: f64) -> f64 {
    let s = sigmoid(t);
    s * (1.0 - s)
}

fn softmax_row(f: &[f64], out: &mut [f64]) {
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(f) {
        *o = (v - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Row-wise softmax of `[c]` or `[n, c]` logits, computed after subtracting
/// the row maximum.
pub fn softmax(f: &Tensor) -> Result<Tensor> {
    let (n, c) = rows_of(f)?;
    let mut out = Tensor::zeros(f.shape());
    for s in 0..n {
        softmax_row(&f.data()[s * c..(s + 1) * c], &mut out.data_mut()[s * c..(s + 1) * c]);
    }
    Ok(out)
}

fn rows_of(f: &Tensor) -> Result<(usize, usize)> {
    match *f.shape() {
        [c] => Ok((1, c)),
        [n, c] => Ok((n, c)),
        _ => Err(Error::Dimension(format!(
            "logits must be [c] or [n, c], got {:?}",
            f.shape()
        ))),
    }
}

fn check_labels(n: usize, c: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} logit rows", labels.len())));
    }
    if n == 0 {
        return Err(Error::Dimension("empty batch".into()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::Label(format!("label {y} outside [0, {c})")));
    }
    Ok(())
}

/// Mean of `-log softmax(f)_y`; gradient `softmax(f) - onehot(y)` (scaled by
/// `1/n`).
pub fn cross_entropy(f: &Tensor, labels: &[usize]) -> Result<LossResult> {
    let (n, c) = rows_of(f)?;
    check_labels(n, c, labels)?;
    let inv_n = 1.0 / n as f64;
    let mut grad = Tensor::zeros(f.shape());
    let mut value = 0.0;
    for (s, &y) in labels.iter().enumerate() {
        let row = &f.data()[s * c..(s + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        value += log_total - (row[y] - max);
        let g = &mut grad.data_mut()[s * c..(s + 1) * c];
        softmax_row(row, g);
        g[y] -= 1.0;
        g.iter_mut().for_each(|v| *v *= inv_n);
    }
    Ok(LossResult {
        value: value * inv_n,
        grad,
    })
}

/// Risk terms of one logit row.
pub fn membership_risks(f: &[f64], y: usize) -> Result<MembershipRisks> {
    let c = f.len();
    if c < 2 {
        return Err(Error::Config(format!(
            "membership loss needs at least 2 classes, got {c}"
        )));
    }
    if y >= c {
        return Err(Error::Label(format!("label {y} outside [0, {c})")));
    }
    let correct_class = (1.0 - sigmoid(f[y])).powi(2);
    let wrong_sum: f64 = f
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y)
        .map(|(_, &v)| sigmoid(v).powi(2))
        .sum();
    Ok(MembershipRisks {
        correct_class,
        wrong_class: wrong_sum / (c - 1) as f64,
    })
}

/// `[1 - s(f_y)]^2 + lambda/(c-1) * sum_{i != y} s(f_i)^2` with `s` the
/// logistic sigmoid applied to the raw activations.
///
/// Per-logit gradient: `-2 [1 - s(f_y)] s'(f_y)` for the true class and
/// `2 lambda/(c-1) s(f_i) s'(f_i)` for the others.
pub fn membership_loss(f: &Tensor, labels: &[usize], params: MembershipParams) -> Result<LossResult> {
    let (n, c) = rows_of(f)?;
    if c < 2 {
        return Err(Error::Config(format!(
            "membership loss needs at least 2 classes, got {c}"
        )));
    }
    check_labels(n, c, labels)?;
    let inv_n = 1.0 / n as f64;
    let wrong_scale = 2.0 * params.lambda / (c - 1) as f64;
    let mut grad = Tensor::zeros(f.shape());
    let mut value = 0.0;
    for (s, &y) in labels.iter().enumerate() {
        let row = &f.data()[s * c..(s + 1) * c];
        let risks = membership_risks(row, y)?;
        value += risks.correct_class + params.lambda * risks.wrong_class;
        let g = &mut grad.data_mut()[s * c..(s + 1) * c];
        for (i, (gi, &fi)) in g.iter_mut().zip(row).enumerate() {
            let sig = sigmoid(fi);
            let dsig = sig * (1.0 - sig);
            let d = if i == y {
                -2.0 * (1.0 - sig) * dsig
            } else {
                wrong_scale * sig * dsig
            };
            *gi = d * inv_n;
        }
    }
    Ok(LossResult {
        value: value * inv_n,
        grad,
    })
}

/// `ce_reference + alpha1 * ce_known + alpha2 * membership_known`.
pub fn cumulative_loss(ce_reference: f64, ce_known: f64, membership_known: f64, alpha1: f64, alpha2: f64) -> f64 {
    ce_reference + alpha1 * ce_known + alpha2 * membership_known
}
