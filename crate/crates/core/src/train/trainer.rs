use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::adam::{adam_step, AdamState};
use super::checkpoint::Checkpoint;
use super::loss::{loss_and_gradients, LossOptions, TrainingExample};
use crate::corpus::LabeledNote;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::{ModelDims, ModelParams, Mode};
use crate::text::{structure_document, EmbeddingTable, LabelEmbeddings, Vocabulary, DEFAULT_MAX_SENTENCES, DEFAULT_MAX_TOKENS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub threshold: f64,
    pub seed: u64,
    pub mode: Mode,
    pub use_label_embedding_init: bool,
    pub hidden_size: usize,
    pub attention_size: usize,
    pub max_sentences: usize,
    pub max_tokens: usize,
    /// Vocabulary cut-off when the vocabulary is built from training data.
    pub min_count: usize,
    /// Width of randomly initialized embeddings when no vector file is given.
    pub embed_dim: usize,
    /// Stop after this many epochs without a lower training loss.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            dropout_rate: 0.1,
            l2_lambda: 1e-6,
            batch_size: 8,
            epochs: 10,
            threshold: 0.5,
            seed: 1,
            mode: Mode::Hlan,
            use_label_embedding_init: false,
            hidden_size: 50,
            attention_size: 50,
            max_sentences: DEFAULT_MAX_SENTENCES,
            max_tokens: DEFAULT_MAX_TOKENS,
            min_count: 1,
            embed_dim: 100,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate must lie in [0, 1)"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.l2_lambda.is_nan() || self.l2_lambda < 0.0 {
            return Err(Error::invalid("l2_lambda must be non-negative"));
        }
        if self.batch_size == 0 || self.hidden_size == 0 || self.attention_size == 0 {
            return Err(Error::invalid("batch, hidden and attention sizes must be positive"));
        }
        if self.embed_dim == 0 {
            return Err(Error::invalid("embed_dim must be positive"));
        }
        if self.max_sentences == 0 || self.max_tokens == 0 {
            return Err(Error::invalid("document grid must be at least 1×1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid("threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Structure notes and build their multi-hot targets over `labels`.
/// Codes outside the label space are ignored.
pub fn encode_examples(
    notes: &[LabeledNote],
    vocab: &Vocabulary,
    labels: &[String],
    max_sentences: usize,
    max_tokens: usize,
) -> Vec<TrainingExample> {
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    notes
        .iter()
        .map(|note| {
            let mut target = vec![0.0; labels.len()];
            for l in &note.labels {
                if let Some(&i) = index.get(l.as_str()) {
                    target[i] = 1.0;
                }
            }
            TrainingExample {
                doc: structure_document(&note.text, vocab, max_sentences, max_tokens),
                target,
            }
        })
        .collect()
}

/// Initialize per-label context rows and output rows from label embeddings
/// through fixed random projections. Labels missing from `label_embeddings`
/// keep their random initialization.
pub fn apply_label_embedding_init(params: &mut ModelParams, label_embeddings: &LabelEmbeddings, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4c45_4c45);
    let d_l = label_embeddings.dim();
    let d_a = params.word_attention.proj_w.rows;
    let state = params.out_w.cols;
    let word_proj = Matrix::xavier(d_a, d_l, &mut rng);
    let sentence_proj = Matrix::xavier(d_a, d_l, &mut rng);
    let out_proj = Matrix::xavier(state, d_l, &mut rng);
    let per_label_contexts = params.mode == Mode::Hlan;

    for (l, label) in params.labels.clone().iter().enumerate() {
        let Some(v) = label_embeddings.vector(label) else { continue };
        let norm = dot(v, v).sqrt();
        if norm == 0.0 {
            continue;
        }
        let unit: Vec<f64> = v.iter().map(|x| x / norm).collect();
        if per_label_contexts {
            params.word_attention.context.row_mut(l).copy_from_slice(&word_proj.matvec(&unit));
            params.sentence_attention.context.row_mut(l).copy_from_slice(&sentence_proj.matvec(&unit));
        }
        params.out_w.row_mut(l).copy_from_slice(&out_proj.matvec(&unit));
    }
}

/// Parameters before the first update.
pub fn initial_params(
    config: &TrainConfig,
    vocab: &Vocabulary,
    labels: &[String],
    embeddings: &EmbeddingTable,
    label_embeddings: Option<&LabelEmbeddings>,
) -> Result<ModelParams> {
    if embeddings.matrix.rows != vocab.len() {
        return Err(Error::Dimension(format!(
            "embedding table has {} rows for a vocabulary of {}",
            embeddings.matrix.rows,
            vocab.len()
        )));
    }
    let dims = ModelDims {
        vocab_size: vocab.len(),
        embed_dim: embeddings.dim(),
        hidden: config.hidden_size,
        attention: config.attention_size,
        n_labels: labels.len(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(config.mode, dims, labels.to_vec(), &mut rng)?;
    params.embedding = embeddings.matrix.clone();
    params.embedding.row_mut(0).fill(0.0);
    if config.use_label_embedding_init {
        let le = label_embeddings
            .ok_or_else(|| Error::invalid("label-embedding init requested without label embeddings"))?;
        apply_label_embedding_init(&mut params, le, config.seed);
    }
    Ok(params)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Mean batch loss per completed epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train(
    train_set: &[TrainingExample],
    config: &TrainConfig,
    vocab: &Vocabulary,
    labels: &[String],
    embeddings: &EmbeddingTable,
    label_embeddings: Option<&LabelEmbeddings>,
) -> Result<Checkpoint> {
    Ok(train_with_history(train_set, config, vocab, labels, embeddings, label_embeddings)?.checkpoint)
}

pub fn train_with_history(
    train_set: &[TrainingExample],
    config: &TrainConfig,
    vocab: &Vocabulary,
    labels: &[String],
    embeddings: &EmbeddingTable,
    label_embeddings: Option<&LabelEmbeddings>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let mut params = initial_params(config, vocab, labels, embeddings, label_embeddings)?;
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut n_batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<TrainingExample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let opts = LossOptions {
                l2_lambda: config.l2_lambda,
                dropout_rate: config.dropout_rate,
                seed: config.seed ^ ((epoch as u64) << 32) ^ b as u64,
            };
            let (loss, grads) = loss_and_gradients(&params, &batch, &opts)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            adam_step(&mut params, &grads, &mut adam, config.learning_rate)?;
            total += loss;
            n_batches += 1;
        }
        let mean = total / n_batches as f64;
        info!(epoch, loss = mean, "epoch complete");
        epoch_losses.push(mean);
        if let Some(patience) = config.patience {
            if mean < best {
                best = mean;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    info!(epoch, "early stop");
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(params, vocab.clone(), config.clone()),
        epoch_losses,
    })
}
