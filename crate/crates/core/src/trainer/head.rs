use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Statistics pooling followed by one linear layer, plus the class weights
/// used by the classification loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHead {
    /// `D x 2F`: applied to `[mean; std]`.
    pub projection: Array2<f64>,
    /// `D x C`, unit-norm columns.
    pub class_weights: Array2<f64>,
}

impl EmbeddingHead {
    /// Gaussian projection scaled by `1/sqrt(2F)` and random unit class weights.
    pub fn new(n_channels: usize, dim: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if n_channels == 0 || dim == 0 || n_classes == 0 {
            return Err(Error::Config("head dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (2.0 * n_channels as f64).sqrt().recip();
        let projection = Array2::from_shape_fn((dim, 2 * n_channels), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        let mut class_weights =
            Array2::from_shape_fn((dim, n_classes), |_| StandardNormal.sample(&mut rng));
        normalize_columns(&mut class_weights);
        Ok(Self {
            projection,
            class_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.projection.ncols() / 2
    }

    pub fn n_classes(&self) -> usize {
        self.class_weights.ncols()
    }

    pub fn renormalize(&mut self) {
        normalize_columns(&mut self.class_weights);
    }
}

pub(crate) fn normalize_columns(m: &mut Array2<f64>) {
    for mut col in m.columns_mut() {
        let n = col.dot(&col).sqrt();
        if n > 0.0 {
            col.mapv_inplace(|v| v / n);
        }
    }
}

/// `[mean over t; sample std over t]` for each channel.
pub fn pool_stats(y: &Array2<f64>) -> Result<Array1<f64>> {
    let t = y.nrows();
    if t < 2 {
        return Err(Error::TooFewFrames(t));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpectrogram("non-finite compressed features".into()));
    }
    let mean = y.mean_axis(Axis(0)).expect("t >= 2");
    let std = y.std_axis(Axis(0), 1.0);
    let mut stats = Array1::zeros(2 * y.ncols());
    stats.slice_mut(ndarray::s![..y.ncols()]).assign(&mean);
    stats.slice_mut(ndarray::s![y.ncols()..]).assign(&std);
    Ok(stats)
}

fn check_head(y: &Array2<f64>, head: &EmbeddingHead) -> Result<()> {
    if head.projection.ncols() != 2 * y.ncols() {
        return Err(Error::Shape(format!(
            "head expects {} channels, features have {}",
            head.n_channels(),
            y.ncols()
        )));
    }
    Ok(())
}

/// Embedding of one compressed utterance: `projection * [mean; std]`.
pub fn embed(y: &Array2<f64>, head: &EmbeddingHead) -> Result<Array1<f64>> {
    check_head(y, head)?;
    Ok(head.projection.dot(&pool_stats(y)?))
}

/// Backward pass of [`embed`]: given `dL/de`, returns `dL/dy` and `dL/dprojection`.
pub fn embed_backward(
    y: &Array2<f64>,
    stats: ArrayView1<f64>,
    head: &EmbeddingHead,
    d_embedding: ArrayView1<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_head(y, head)?;
    let (t, f) = y.dim();
    let d_proj = outer(d_embedding, stats);
    let d_stats = head.projection.t().dot(&d_embedding);
    let inv_t = 1.0 / t as f64;
    let inv_t1 = 1.0 / (t - 1) as f64;
    let mut d_y = Array2::zeros((t, f));
    for (c, (ycol, mut dcol)) in y.columns().into_iter().zip(d_y.columns_mut()).enumerate() {
        let mean = stats[c];
        let std = stats[f + c];
        let d_mean = d_stats[c] * inv_t;
        // d std / d y_t = (y_t - mean) / ((T - 1) std); zero at zero spread.
        let d_std = if std > 0.0 { d_stats[f + c] * inv_t1 / std } else { 0.0 };
        for (dv, yv) in dcol.iter_mut().zip(ycol.iter()) {
            *dv = d_mean + d_std * (yv - mean);
        }
    }
    Ok((d_y, d_proj))
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
