//! modReLU nonlinearity and the two task losses, with analytic gradients.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// modReLU: `sign(z) * max(|z| + b, 0)` with a trainable per-unit bias.
///
/// `sign(0)` is taken to be 0, so the output at `z = 0` is 0 for any bias;
/// this matches the zero branch of the piecewise definition and avoids the
/// division in the `z/|z|` form.
pub fn modrelu(z: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if z.len() != b.len() {
        return Err(Error::shape(
            "modrelu",
            format!("{} inputs vs {} biases", z.len(), b.len()),
        ));
    }
    Ok(z.iter()
        .zip(b)
        .map(|(&z, &b)| modrelu_scalar(z, b))
        .collect())
}

#[inline]
pub(crate) fn modrelu_scalar(z: f64, b: f64) -> f64 {
    let m = z.abs() + b;
    if m > 0.0 {
        z.signum() * m
    } else {
        0.0
    }
}

/// Backward pass of [`modrelu`]. In the active region `dz = upstream` and
/// `db = upstream * sign(z)`; elsewhere both are zero, with the zero
/// subgradient at the kink.
pub fn modrelu_backward(
    z: &[f64],
    b: &[f64],
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if z.len() != b.len() || z.len() != upstream.len() {
        return Err(Error::shape(
            "modrelu_backward",
            format!("{} / {} / {} lengths", z.len(), b.len(), upstream.len()),
        ));
    }
    let mut dz = vec![0.0; z.len()];
    let mut db = vec![0.0; z.len()];
    for i in 0..z.len() {
        if z[i].abs() + b[i] > 0.0 && z[i] != 0.0 {
            dz[i] = upstream[i];
            db[i] = upstream[i] * z[i].signum();
        }
    }
    Ok((dz, db))
}

/// Applies modReLU row-wise to a batch of pre-activations (`z` is
/// `batch x n`, `b` has length `n`).
pub(crate) fn modrelu_batch(z: &Matrix, b: &[f64]) -> Matrix {
    debug_assert_eq!(z.cols(), b.len());
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let src = z.row(r);
        let dst = out.row_mut(r);
        for j in 0..src.len() {
            dst[j] = modrelu_scalar(src[j], b[j]);
        }
    }
    out
}

/// Batch backward: given upstream `dL/dh` (`batch x n`), returns `dL/dz`
/// and accumulates the bias gradient over the batch.
pub(crate) fn modrelu_backward_batch(
    z: &Matrix,
    b: &[f64],
    upstream: &Matrix,
    db: &mut [f64],
) -> Matrix {
    debug_assert_eq!(z.rows(), upstream.rows());
    debug_assert_eq!(z.cols(), upstream.cols());
    let mut dz = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let zr = z.row(r);
        let ur = upstream.row(r);
        let dr = dz.row_mut(r);
        for j in 0..zr.len() {
            if zr[j].abs() + b[j] > 0.0 && zr[j] != 0.0 {
                dr[j] = ur[j];
                db[j] += ur[j] * zr[j].signum();
            }
        }
    }
    dz
}

/// Mean softmax cross-entropy over a batch of logit rows, with its gradient
/// `(softmax - onehot) / batch`.
pub fn softmax_xent(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != targets.len() {
        return Err(Error::shape(
            "softmax_xent",
            format!("{} logit rows vs {} targets", logits.rows(), targets.len()),
        ));
    }
    let classes = logits.cols();
    for &t in targets {
        if t >= classes {
            return Err(Error::ClassOutOfRange {
                index: t,
                classes,
            });
        }
    }
    let batch = logits.rows();
    let inv_batch = 1.0 / batch as f64;
    let mut dlogits = Matrix::zeros(batch, classes);
    let mut loss = 0.0;
    for r in 0..batch {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &x in row {
            sum += (x - max).exp();
        }
        let log_sum = sum.ln() + max;
        loss += (log_sum - row[targets[r]]) * inv_batch;
        let drow = dlogits.row_mut(r);
        for (j, &x) in row.iter().enumerate() {
            drow[j] = (x - log_sum).exp() * inv_batch;
        }
        drow[targets[r]] -= inv_batch;
    }
    Ok((loss, dlogits))
}

/// Mean squared error with gradient `2 (pred - target) / count`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(
            "mse",
            format!("{} predictions vs {} targets", pred.len(), target.len()),
        ));
    }
    let count = pred.len() as f64;
    let mut loss = 0.0;
    let mut dpred = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let diff = pred[i] - target[i];
        loss += diff * diff / count;
        dpred[i] = 2.0 * diff / count;
    }
    Ok((loss, dpred))
}

/// Expected per-step cross-entropy of the memoryless guessing strategy on
/// the copying task: `10 ln(8) / (T + 20)`.
pub fn copying_baseline(t: usize) -> f64 {
    10.0 * 8.0f64.ln() / (t as f64 + 20.0)
}

/// Expected MSE of always predicting 1 on the adding task: the variance of
/// a sum of two independent Uniform[0,1) draws, 1/6.
pub const ADDING_BASELINE: f64 = 1.0 / 6.0;
