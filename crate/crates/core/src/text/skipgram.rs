//! Skip-gram with negative sampling, used for both word vectors and
//! label-co-occurrence vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embeddings::{EmbeddingTable, LabelEmbeddings};
use super::vocab::{Vocabulary, PAD_ID};
use crate::corpus::LabeledNote;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, sigmoid, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

/// Cumulative unigram^0.75 table over rows `first..n`.
struct NoiseTable {
    first: usize,
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[usize], first: usize) -> Self {
        let mut acc = 0.0;
        let cumulative = counts[first..]
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NoiseTable { first, cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let target = rng.gen::<f64>() * total;
        let pos = self.cumulative.partition_point(|&c| c <= target);
        self.first + pos.min(self.cumulative.len() - 1)
    }
}

/// Trains `(input, output)` vector tables over `sentences` of row ids.
/// Rows below `first_trainable` never appear as centres, contexts or noise.
fn train_sgns(
    sentences: &[Vec<usize>],
    n_rows: usize,
    first_trainable: usize,
    window: usize,
    config: &SkipGramConfig,
    mut input: Matrix,
) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed);
    let mut output = Matrix::zeros(n_rows, config.dim);
    let mut counts = vec![0usize; n_rows];
    for s in sentences {
        for &id in s {
            counts[id] += 1;
        }
    }
    if counts[first_trainable..].iter().all(|&c| c == 0) || config.epochs == 0 {
        return input;
    }
    let noise = NoiseTable::new(&counts, first_trainable);
    let total_pairs = config.epochs as f64
        * sentences.iter().map(|s| s.len()).sum::<usize>().max(1) as f64;
    let mut processed = 0.0;
    let mut grad = vec![0.0; config.dim];

    for _ in 0..config.epochs {
        for sentence in sentences {
            for (i, &centre) in sentence.iter().enumerate() {
                let lr = (config.learning_rate * (1.0 - processed / total_pairs))
                    .max(config.learning_rate * 1e-4);
                processed += 1.0;
                let lo = i.saturating_sub(window);
                let hi = (i + window + 1).min(sentence.len());
                for (j, &context) in sentence.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad.fill(0.0);
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let f = sigmoid(dot(input.row(centre), output.row(target)));
                        let g = lr * (label - f);
                        axpy(g, output.row(target), &mut grad);
                        let centre_row = input.row(centre).to_vec();
                        axpy(g, &centre_row, output.row_mut(target));
                    }
                    axpy(1.0, &grad, input.row_mut(centre));
                }
            }
        }
    }
    // Words and labels are returned as the sum of their input and output
    // vectors, so that tokens sharing contexts and tokens that are each
    // other's context both end up close.
    for r in first_trainable..n_rows {
        let out_row = output.row(r).to_vec();
        axpy(1.0, &out_row, input.row_mut(r));
    }
    input
}

pub fn train_skipgram(
    train_notes: &[LabeledNote],
    vocab: &Vocabulary,
    config: &SkipGramConfig,
) -> Result<EmbeddingTable> {
    if config.window == 0 || config.negatives == 0 || config.dim == 0 {
        return Err(Error::invalid("window, negatives and dim must be at least 1"));
    }
    if vocab.len() < 3 {
        return Err(Error::invalid("vocabulary needs at least one real token"));
    }
    let init = EmbeddingTable::random(vocab.len(), config.dim, config.seed);
    let sentences: Vec<Vec<usize>> = train_notes
        .iter()
        .map(|n| {
            vocab
                .encode(&n.text)
                .into_iter()
                .filter(|&id| id > 1)
                .map(|id| id as usize)
                .collect()
        })
        .collect();
    let mut matrix = train_sgns(&sentences, vocab.len(), 2, config.window, config, init.matrix);
    matrix.row_mut(PAD_ID as usize).fill(0.0);
    Ok(EmbeddingTable { matrix })
}

/// Each document's label list is one sentence; every label in it is context
/// for every other.
pub fn train_label_embeddings(
    train_notes: &[LabeledNote],
    labels: &[String],
    config: &SkipGramConfig,
) -> Result<LabelEmbeddings> {
    if labels.len() < 2 {
        return Err(Error::invalid("label embeddings need at least two distinct labels"));
    }
    if config.negatives == 0 || config.dim == 0 {
        return Err(Error::invalid("negatives and dim must be at least 1"));
    }
    let index: std::collections::HashMap<&str, usize> =
        labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let sentences: Vec<Vec<usize>> = train_notes
        .iter()
        .map(|n| n.labels.iter().filter_map(|l| index.get(l.as_str()).copied()).collect())
        .collect();
    let window = sentences.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Matrix::uniform(labels.len(), config.dim, 0.5 / config.dim as f64, &mut rng);
    let matrix = train_sgns(&sentences, labels.len(), 0, window, config, init);
    Ok(LabelEmbeddings {
        labels: labels.to_vec(),
        matrix,
    })
}

/// Distinct labels of a corpus in first-seen order.
pub fn label_space_of(notes: &[LabeledNote]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    notes
        .iter()
        .flat_map(|n| n.labels.iter())
        .filter(|l| seen.insert(l.as_str()))
        .cloned()
        .collect()
}
