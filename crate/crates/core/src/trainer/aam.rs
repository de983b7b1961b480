//! Additive angular margin softmax.
//!
//! For an L2-normalized embedding and L2-normalized class weights with
//! cosines `c_j`, the target logit is `s * cos(theta_y + m)` and the others
//! are `s * c_j`. `cos(theta + m)` is expanded as
//! `c cos m - sqrt(1 - c^2) sin m` so no `acos` is needed.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Smallest `sin(theta_y)` used in the derivative of the margin term.
const MIN_SIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AamOutput {
    /// Mean loss over the batch.
    pub loss: f64,
    /// `B x D`.
    pub d_embeddings: Array2<f64>,
    /// `D x C`.
    pub d_class_weights: Array2<f64>,
}

fn unit(v: ArrayView1<f64>) -> Result<(Array1<f64>, f64)> {
    let n = v.dot(&v).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok((v.mapv(|x| x / n), n))
}

/// Removes the component along `dir` (unit) and scales by `1 / norm`:
/// the Jacobian-transpose of `v -> v / |v|` applied to `g`.
fn through_normalization(g: &Array1<f64>, dir: &Array1<f64>, norm: f64) -> Array1<f64> {
    let along = g.dot(dir);
    (g - &(dir * along)) / norm
}

/// Mean AAM-softmax loss of `embeddings` (`B x D`, one row per sample) with
/// gradients. `class_weights` is `D x C`; its columns are normalized inside
/// the loss so the gradient is exact for any nonzero weights.
pub fn aam_softmax_loss(
    embeddings: &Array2<f64>,
    labels: &[usize],
    class_weights: &Array2<f64>,
    s: f64,
    m: f64,
) -> Result<AamOutput> {
    let (batch, dim) = embeddings.dim();
    let n_classes = class_weights.ncols();
    if labels.len() != batch || batch == 0 {
        return Err(Error::Shape(format!(
            "{batch} embeddings with {} labels",
            labels.len()
        )));
    }
    if class_weights.nrows() != dim {
        return Err(Error::Shape(format!(
            "embedding dim {dim}, class weights have {} rows",
            class_weights.nrows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Shape(format!("label {bad} out of range for {n_classes} classes")));
    }

    let (cos_m, sin_m) = (m.cos(), m.sin());
    let mut w_hat = Array2::zeros((dim, n_classes));
    let mut w_norm = Vec::with_capacity(n_classes);
    for (j, col) in class_weights.columns().into_iter().enumerate() {
        let (u, n) = unit(col)?;
        w_hat.column_mut(j).assign(&u);
        w_norm.push(n);
    }

    let mut total = 0.0;
    let mut d_emb = Array2::zeros((batch, dim));
    let mut d_w_hat = Array2::zeros((dim, n_classes));
    for (b, (row, &y)) in embeddings.rows().into_iter().zip(labels).enumerate() {
        let (e_hat, e_norm) = unit(row)?;
        let cos = w_hat.t().dot(&e_hat);
        let c_y = cos[y].clamp(-1.0, 1.0);
        let sin_y = (1.0 - c_y * c_y).clamp(0.0, 1.0).sqrt();
        let mut logits = cos.mapv(|c| s * c);
        logits[y] = s * (c_y * cos_m - sin_y * sin_m);

        // ln_1p over the non-maximal terms keeps tiny losses accurate.
        let top = (0..logits.len()).fold(0, |k, j| if logits[j] > logits[k] { j } else { k });
        let max = logits[top];
        let rest: f64 = (0..logits.len()).filter(|&j| j != top).map(|j| (logits[j] - max).exp()).sum();
        let sum_exp = 1.0 + rest;
        total += (max - logits[y]) + rest.ln_1p();

        // dL/dz = softmax - onehot, then dz/dcos.
        let mut d_cos = logits.mapv(|z| (z - max).exp() / sum_exp);
        d_cos[y] -= 1.0;
        d_cos.mapv_inplace(|g| g * s);
        d_cos[y] *= cos_m + sin_m * c_y / sin_y.max(MIN_SIN);

        let d_e_hat = w_hat.dot(&d_cos);
        d_emb
            .row_mut(b)
            .assign(&through_normalization(&d_e_hat, &e_hat, e_norm));
        // dL/dw_hat_j += d_cos_j * e_hat
        for (mut col, &g) in d_w_hat.columns_mut().into_iter().zip(d_cos.iter()) {
            col.scaled_add(g, &e_hat);
        }
    }

    let inv_b = 1.0 / batch as f64;
    d_emb.mapv_inplace(|v| v * inv_b);
    let mut d_w = Array2::zeros((dim, n_classes));
    for j in 0..n_classes {
        let g = d_w_hat.column(j).mapv(|v| v * inv_b);
        let dir = w_hat.column(j).to_owned();
        d_w.column_mut(j)
            .assign(&through_normalization(&g, &dir, w_norm[j]));
    }
    Ok(AamOutput {
        loss: total * inv_b,
        d_embeddings: d_emb,
        d_class_weights: d_w,
    })
}

/// Mean cross-entropy of `s * cos` logits without a margin, computed
/// directly from angles between normalized vectors.
pub fn scaled_softmax_cross_entropy(
    embeddings: &Array2<f64>,
    labels: &[usize],
    class_weights: &Array2<f64>,
    s: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for (row, &y) in embeddings.axis_iter(Axis(0)).zip(labels) {
        let (e_hat, _) = unit(row)?;
        let logits: Vec<f64> = class_weights
            .columns()
            .into_iter()
            .map(|w| unit(w).map(|(w, _)| s * w.dot(&e_hat)))
            .collect::<Result<_>>()?;
        let denom: f64 = logits.iter().map(|z| z.exp()).sum();
        total -= (logits[y].exp() / denom).ln();
    }
    Ok(total / labels.len() as f64)
}
