//! Joint optimization of compressor parameters with a small
//! speaker-classification head.
//!
//! Pipeline per utterance: compress -> mean/std pooling -> linear projection
//! -> AAM-softmax over speaker classes. Gradients flow analytically back into
//! the compressor parameters, the projection and the class weights, which are
//! all updated by Adam with one global learning rate. After each step the
//! compressor parameters are clamped to their learning domain and the class
//! weights renormalized.

mod aam;
mod adam;
mod corpus;
mod head;

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compressors::CompressorState;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalReport};

pub use aam::{aam_softmax_loss, scaled_softmax_cross_entropy, AamOutput};
pub use adam::{Adam, AdamConfig};
pub use corpus::{
    corpus_from_waves, gen_synthetic_corpus, gen_synthetic_waves, speaker_envelopes, CorpusSpec,
    SyntheticCorpus, SyntheticWave, Utterance,
};
pub use head::{embed, embed_backward, pool_stats, EmbeddingHead};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// AAM logit scale.
    pub s: f64,
    /// AAM angular margin in radians.
    pub m: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
}

fn default_embedding_dim() -> usize {
    64
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            s: 30.0,
            m: 0.2,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            embedding_dim: default_embedding_dim(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::Config(format!("s must be positive, got {}", self.s)));
        }
        if !(self.m >= 0.0 && self.m < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!("m must be in [0, pi/2), got {}", self.m)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.embedding_dim == 0 {
            return Err(Error::Config(
                "epochs, batch_size and embedding_dim must be positive".into(),
            ));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    /// Sample-weighted mean minibatch loss of each epoch.
    pub loss_history: Vec<f64>,
    /// Compressor state at initialization and after every epoch.
    pub param_trajectory: Vec<CompressorState>,
    pub final_state: CompressorState,
    pub final_head: EmbeddingHead,
}

/// Loss and gradients of one minibatch.
#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub loss: f64,
    /// In [`CompressorState::flat_params`] order.
    pub d_state: Vec<f64>,
    pub d_projection: Array2<f64>,
    pub d_class_weights: Array2<f64>,
}

/// Forward and backward pass over a minibatch. Per-utterance work runs in
/// parallel; partial gradients are summed in input order, so the result does
/// not depend on scheduling.
pub fn batch_loss_and_grad(
    utts: &[&Utterance],
    state: &CompressorState,
    head: &EmbeddingHead,
    s: f64,
    m: f64,
) -> Result<BatchGrad> {
    let forward: Vec<(Array2<f64>, Array1<f64>, Array1<f64>)> = utts
        .par_iter()
        .map(|u| {
            let y = state.forward(&u.features)?;
            let stats = pool_stats(&y)?;
            let e = head.projection.dot(&stats);
            Ok((y, stats, e))
        })
        .collect::<Result<_>>()?;

    let mut embeddings = Array2::zeros((utts.len(), head.dim()));
    for (mut row, (_, _, e)) in embeddings.rows_mut().into_iter().zip(&forward) {
        row.assign(e);
    }
    let labels: Vec<usize> = utts.iter().map(|u| u.speaker).collect();
    let aam = aam_softmax_loss(&embeddings, &labels, &head.class_weights, s, m)?;

    let partials: Vec<(Vec<f64>, Array2<f64>)> = utts
        .par_iter()
        .zip(forward.par_iter())
        .enumerate()
        .map(|(i, (u, (y, stats, _)))| {
            let (d_y, d_p) = embed_backward(y, stats.view(), head, aam.d_embeddings.row(i))?;
            Ok((state.backward(&u.features, &d_y)?, d_p))
        })
        .collect::<Result<_>>()?;

    let mut d_state = vec![0.0; state.n_scalars()];
    let mut d_projection = Array2::zeros(head.projection.raw_dim());
    for (g, p) in &partials {
        for (acc, v) in d_state.iter_mut().zip(g) {
            *acc += v;
        }
        d_projection += p;
    }
    Ok(BatchGrad {
        loss: aam.loss,
        d_state,
        d_projection,
        d_class_weights: aam.d_class_weights,
    })
}

fn check_shapes(corpus: &SyntheticCorpus, state: &CompressorState, head: &EmbeddingHead) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Config("empty corpus".into()));
    }
    if corpus.n_channels() != state.n_channels() || head.n_channels() != state.n_channels() {
        return Err(Error::Shape(format!(
            "corpus has {} channels, compressor {}, head {}",
            corpus.n_channels(),
            state.n_channels(),
            head.n_channels()
        )));
    }
    if head.n_classes() != corpus.n_speakers {
        return Err(Error::Shape(format!(
            "head has {} classes for {} speakers",
            head.n_classes(),
            corpus.n_speakers
        )));
    }
    Ok(())
}

/// Minibatch Adam over compressor parameters, projection and class weights.
pub fn train_joint(
    corpus: &SyntheticCorpus,
    state: &CompressorState,
    head: &EmbeddingHead,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_shapes(corpus, state, head)?;
    let mut state = state.clone();
    let mut head = head.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt_state = Adam::new(state.n_scalars(), cfg.adam());
    let mut opt_proj = Adam::new(head.projection.len(), cfg.adam());
    let mut opt_cls = Adam::new(head.class_weights.len(), cfg.adam());

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut param_trajectory = vec![state.clone()];
    let mut flat = state.flat_params();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let utts: Vec<&Utterance> = chunk.iter().map(|&i| &corpus.utterances[i]).collect();
            let g = batch_loss_and_grad(&utts, &state, &head, cfg.s, cfg.m)?;
            let grads_finite = g.d_state.iter().all(|v| v.is_finite())
                && g.d_projection.iter().all(|v| v.is_finite())
                && g.d_class_weights.iter().all(|v| v.is_finite());
            if !g.loss.is_finite() || !grads_finite {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss: g.loss,
                });
            }
            epoch_loss += g.loss * chunk.len() as f64;

            opt_state.update(&mut flat, &g.d_state);
            state.set_flat_params(&flat)?;
            state.clamp_to_domain();
            flat = state.flat_params();
            opt_proj.update(
                head.projection.as_slice_mut().expect("standard layout"),
                g.d_projection.as_slice().expect("standard layout"),
            );
            opt_cls.update(
                head.class_weights.as_slice_mut().expect("standard layout"),
                g.d_class_weights.as_slice().expect("standard layout"),
            );
            head.renormalize();
        }
        loss_history.push(epoch_loss / corpus.len() as f64);
        param_trajectory.push(state.clone());
    }
    Ok(TrainReport {
        config: *cfg,
        loss_history,
        param_trajectory,
        final_state: state,
        final_head: head,
    })
}

/// Embeddings of every utterance, keyed by id.
pub fn embed_corpus(
    corpus: &SyntheticCorpus,
    state: &CompressorState,
    head: &EmbeddingHead,
) -> Result<HashMap<String, Vec<f64>>> {
    corpus
        .utterances
        .par_iter()
        .map(|u| {
            let y = state.forward(&u.features)?;
            Ok((u.id.clone(), embed(&y, head)?.to_vec()))
        })
        .collect()
}

/// Cosine-scored all-pairs verification on `corpus`.
pub fn evaluate_corpus(
    corpus: &SyntheticCorpus,
    state: &CompressorState,
    head: &EmbeddingHead,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let embeddings = embed_corpus(corpus, state, head)?;
    let scores = corpus.all_pairs_trials().score(&embeddings)?;
    Ok(evaluate(&scores, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressors::{init_params, DesignMode, Preset};

    fn small() -> (SyntheticCorpus, CompressorState, EmbeddingHead) {
        let spec = CorpusSpec {
            n_channels: 17,
            ..CorpusSpec::new(3, 3, 0.2, 4)
        };
        let corpus = gen_synthetic_corpus(&spec).unwrap();
        let state = init_params(Preset::CubeRoot, DesignMode::ChannelDependent, 17).unwrap();
        let head = EmbeddingHead::new(17, 8, 3, 1).unwrap();
        (corpus, state, head)
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        for bad in [
            TrainConfig { s: 0.0, ..Default::default() },
            TrainConfig { m: 1.6, ..Default::default() },
            TrainConfig { m: -0.1, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { learning_rate: f64::NAN, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn zero_learning_rate_keeps_state() {
        let (corpus, state, head) = small();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            batch_size: 4,
            ..Default::default()
        };
        let report = train_joint(&corpus, &state, &head, &cfg).unwrap();
        assert_eq!(report.final_state, state);
        assert_eq!(report.loss_history.len(), 2);
        assert_eq!(report.param_trajectory.len(), 3);
    }

    #[test]
    fn deterministic_loss_history() {
        let (corpus, state, head) = small();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 3,
            batch_size: 4,
            seed: 9,
            ..Default::default()
        };
        let a = train_joint(&corpus, &state, &head, &cfg).unwrap();
        let b = train_joint(&corpus, &state, &head, &cfg).unwrap();
        let bits = |r: &TrainReport| r.loss_history.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (corpus, state, _) = small();
        let wrong = EmbeddingHead::new(17, 8, 5, 1).unwrap();
        assert!(train_joint(&corpus, &state, &wrong, &TrainConfig::default()).is_err());
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let (corpus, state, head) = small();
        let utts: Vec<&Utterance> = corpus.utterances.iter().collect();
        let g = batch_loss_and_grad(&utts, &state, &head, 30.0, 0.2).unwrap();
        let h = 1e-6;
        let flat = state.flat_params();
        for idx in [0, 5, 16] {
            let mut p = state.clone();
            let mut q = state.clone();
            let mut fp = flat.clone();
            let mut fq = flat.clone();
            fp[idx] += h;
            fq[idx] -= h;
            p.set_flat_params(&fp).unwrap();
            q.set_flat_params(&fq).unwrap();
            let lp = batch_loss_and_grad(&utts, &p, &head, 30.0, 0.2).unwrap().loss;
            let lq = batch_loss_and_grad(&utts, &q, &head, 30.0, 0.2).unwrap().loss;
            let fd = (lp - lq) / (2.0 * h);
            let rel = (fd - g.d_state[idx]).abs() / fd.abs().max(g.d_state[idx].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {idx}: fd {fd} analytic {}", g.d_state[idx]);
        }
    }
}
