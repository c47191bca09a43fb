use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sigmoid;
use crate::model::{backward, forward_internal, Dropout, ModelParams, TensorRole};
use crate::text::TokenizedDocument;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// One document with its `|Y|` multi-hot target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub doc: TokenizedDocument,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    pub l2_lambda: f64,
    pub dropout_rate: f64,
    /// Seeds the dropout masks.
    pub seed: u64,
}

impl LossOptions {
    pub fn exact(l2_lambda: f64) -> Self {
        LossOptions {
            l2_lambda,
            dropout_rate: 0.0,
            seed: 0,
        }
    }
}

/// Clamped binary cross-entropy of one probability.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `λ·Σ‖W‖²` over weight tensors; biases and the padding embedding row are
/// excluded.
pub fn l2_penalty(params: &ModelParams, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let total: f64 = params
        .tensors()
        .into_iter()
        .map(|(_, m, role)| match role {
            TensorRole::Weight => m.sum_squares(),
            TensorRole::Embedding => m.sum_squares() - m.row(0).iter().map(|v| v * v).sum::<f64>(),
            TensorRole::Bias => 0.0,
        })
        .sum();
    lambda * total
}

/// Mean clamped BCE over the batch (summed over labels) plus the L2 term,
/// and the gradient of that loss with respect to every tensor.
pub fn loss_and_gradients(
    params: &ModelParams,
    batch: &[TrainingExample],
    opts: &LossOptions,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n_labels = params.n_labels();
    let mut grads = params.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale = 1.0 / batch.len() as f64;
    let mut data_loss = 0.0;

    for example in batch {
        if example.target.len() != n_labels {
            return Err(Error::Dimension(format!(
                "target of length {} for {n_labels} labels",
                example.target.len()
            )));
        }
        let dropout = (opts.dropout_rate > 0.0).then_some(Dropout {
            rate: opts.dropout_rate,
            rng: &mut rng,
        });
        let out = forward_internal(&example.doc, params, dropout)?;
        let mut d_logits = vec![0.0; n_labels];
        for (l, (&z, &y)) in out.logits.iter().zip(&example.target).enumerate() {
            let p = sigmoid(z);
            data_loss += scale * bce(p, y);
            if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                d_logits[l] = scale * (p - y);
            }
        }
        backward(params, &out.cache, &d_logits, &mut grads);
    }

    let penalty = l2_penalty(params, opts.l2_lambda);
    if opts.l2_lambda != 0.0 {
        add_l2_gradient(params, &mut grads, opts.l2_lambda);
    }
    grads.embedding.row_mut(0).fill(0.0);
    Ok((data_loss + penalty, grads))
}

fn add_l2_gradient(params: &ModelParams, grads: &mut ModelParams, lambda: f64) {
    for ((_, w, role), g) in params.tensors().into_iter().zip(grads.tensors_mut()) {
        if role == TensorRole::Bias {
            continue;
        }
        g.data.iter_mut().zip(&w.data).for_each(|(g, w)| *g += 2.0 * lambda * w);
    }
}
