//! Elementwise activations shared by the RBM and autoencoder code.

use ndarray::{ArrayViewMut1, ArrayViewMut2, Axis};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// In-place softmax with max-subtraction. The result sums to one.
pub fn softmax_inplace(mut logits: ArrayViewMut1<'_, f64>) {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0;
    logits.mapv_inplace(|x| {
        let e = (x - max).exp();
        sum += e;
        e
    });
    logits.mapv_inplace(|e| e / sum);
}

/// Row-wise [`softmax_inplace`].
pub fn softmax_rows_inplace(mut logits: ArrayViewMut2<'_, f64>) {
    for row in logits.axis_iter_mut(Axis(0)) {
        softmax_inplace(row);
    }
}

/// Natural log of the softmax normalizer, `ln Σ exp(x)`.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let sum: f64 = logits.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}
