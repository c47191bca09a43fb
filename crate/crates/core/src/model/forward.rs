//! Full hierarchical forward pass and its reverse-mode gradient.
//!
//! Word level: per pseudo-sentence Bi-GRU over embeddings, then attention
//! (one context per label in HLAN, one shared in HAN) yields sentence
//! representations. HLAN feeds the label-mean of its per-label sentence
//! representations into a shared sentence-level Bi-GRU; sentence attention
//! yields the document representation(s) scored by the output layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attend_all, attend_all_backward, AttentionCache};
use super::gru::{bigru_backward, bigru_forward, BiGruCache};
use super::params::{Mode, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid};
use crate::text::{TokenizedDocument, PAD_ID};

/// Word- and sentence-level attention. `labels` is `None` in HAN mode, where
/// a single shared map is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub labels: Option<Vec<String>>,
    pub max_sentences: usize,
    pub max_tokens: usize,
    /// `[group][sentence * max_tokens + token]`
    pub word: Vec<Vec<f64>>,
    /// `[group][sentence]`
    pub sentence: Vec<Vec<f64>>,
    pub sentence_lengths: Vec<usize>,
}

impl AttentionMap {
    /// Index of the map for `label`; HAN always uses the shared map.
    pub fn group(&self, label: Option<&str>) -> Result<usize> {
        match (&self.labels, label) {
            (None, _) => Ok(0),
            (Some(labels), Some(l)) => labels
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::UnknownLabel(l.to_string())),
            (Some(_), None) => Err(Error::invalid("a label is required for per-label attention maps")),
        }
    }

    pub fn n_groups(&self) -> usize {
        self.word.len()
    }

    pub fn word_weight(&self, group: usize, sentence: usize, token: usize) -> f64 {
        self.word[group][sentence * self.max_tokens + token]
    }
}

/// Per-label probabilities in label-space order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub labels: Vec<String>,
    pub probabilities: Vec<f64>,
    pub threshold: f64,
}

const PROB_FLOOR: f64 = 1e-15;

impl PredictionSet {
    pub fn probability(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.probabilities[i])
    }

    /// All labels by probability descending, ties by code text.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = self
            .labels
            .iter()
            .cloned()
            .zip(self.probabilities.iter().copied())
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked
    }
}

/// Codes at or above `threshold` in ranking order, or exactly the top `k`
/// when `k` is given.
pub fn predict_codes(pred: &PredictionSet, threshold: f64, k: Option<usize>) -> Vec<String> {
    let ranked = pred.ranked();
    match k {
        Some(k) => ranked.into_iter().take(k).map(|(c, _)| c).collect(),
        None => ranked
            .into_iter()
            .filter(|(_, p)| *p >= threshold)
            .map(|(c, _)| c)
            .collect(),
    }
}

type NoRng = rand_chacha::ChaCha8Rng;

/// Inverted-dropout configuration for training passes.
pub(crate) struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

#[derive(Debug, Clone)]
struct SentenceCache {
    ids: Vec<u32>,
    gru: BiGruCache,
    /// Post-dropout word states.
    states: Vec<Vec<f64>>,
    mask: Option<Vec<Vec<f64>>>,
    attention: AttentionCache,
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    sentences: Vec<SentenceCache>,
    sentence_gru: Option<BiGruCache>,
    sentence_states: Vec<Vec<f64>>,
    sentence_mask: Option<Vec<Vec<f64>>>,
    sentence_attention: Option<AttentionCache>,
    /// One row per context group; zero when the document has no real sentence.
    doc_repr: Vec<Vec<f64>>,
}

pub(crate) struct ForwardOutput {
    pub logits: Vec<f64>,
    pub attention: AttentionMap,
    pub cache: ForwardCache,
}

fn dropout_mask<R: Rng>(states: &mut [Vec<f64>], dropout: &mut Option<Dropout<'_, R>>) -> Option<Vec<Vec<f64>>> {
    let d = dropout.as_mut()?;
    if d.rate <= 0.0 {
        return None;
    }
    let keep = 1.0 - d.rate;
    let mask: Vec<Vec<f64>> = states
        .iter()
        .map(|s| {
            s.iter()
                .map(|_| if d.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        })
        .collect();
    for (s, m) in states.iter_mut().zip(&mask) {
        s.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
    Some(mask)
}

fn check_document(doc: &TokenizedDocument, params: &ModelParams) -> Result<()> {
    let vocab = params.embedding.rows as u32;
    if let Some(bad) = doc.grid.iter().find(|&&id| id >= vocab) {
        return Err(Error::Dimension(format!("token id {bad} outside vocabulary of {vocab}")));
    }
    if doc.sentence_lengths.len() > doc.max_sentences
        || doc.sentence_lengths.iter().any(|&n| n == 0 || n > doc.max_tokens)
    {
        return Err(Error::invalid("document sentence lengths inconsistent with its grid"));
    }
    Ok(())
}

pub(crate) fn forward_internal<R: Rng>(
    doc: &TokenizedDocument,
    params: &ModelParams,
    mut dropout: Option<Dropout<'_, R>>,
) -> Result<ForwardOutput> {
    check_document(doc, params)?;
    let groups = params.n_contexts();
    let n_labels = params.n_labels();
    let (s_max, t_max) = (doc.max_sentences, doc.max_tokens);
    let mut map = AttentionMap {
        labels: match params.mode {
            Mode::Han => None,
            Mode::Hlan => Some(params.labels.clone()),
        },
        max_sentences: s_max,
        max_tokens: t_max,
        word: vec![vec![0.0; s_max * t_max]; groups],
        sentence: vec![vec![0.0; s_max]; groups],
        sentence_lengths: doc.sentence_lengths.clone(),
    };

    let mut sentences = Vec::with_capacity(doc.n_real_sentences());
    let mut sentence_inputs = Vec::with_capacity(doc.n_real_sentences());
    for s in 0..doc.n_real_sentences() {
        let ids = doc.real_tokens(s).to_vec();
        let inputs: Vec<Vec<f64>> = ids.iter().map(|&id| params.embedding.row(id as usize).to_vec()).collect();
        let (mut states, gru) = bigru_forward(&params.word_gru, &inputs);
        let mask = dropout_mask(&mut states, &mut dropout);
        let (pooled, attention) = attend_all(&params.word_attention, &states);
        for (g, w) in attention.weights.iter().enumerate() {
            map.word[g][s * t_max..s * t_max + w.len()].copy_from_slice(w);
        }
        let input = if pooled.len() == 1 {
            pooled.into_iter().next().unwrap()
        } else {
            let scale = 1.0 / pooled.len() as f64;
            let mut mean = vec![0.0; pooled[0].len()];
            for p in &pooled {
                mean.iter_mut().zip(p).for_each(|(m, v)| *m += v * scale);
            }
            mean
        };
        sentence_inputs.push(input);
        sentences.push(SentenceCache {
            ids,
            gru,
            states,
            mask,
            attention,
        });
    }

    let state_dim = 2 * params.word_gru.forward.hidden_size();
    let (doc_repr, sentence_gru, sentence_states, sentence_mask, sentence_attention) = if sentence_inputs.is_empty() {
        (vec![vec![0.0; state_dim]; groups], None, Vec::new(), None, None)
    } else {
        let (mut states, gru) = bigru_forward(&params.sentence_gru, &sentence_inputs);
        let mask = dropout_mask(&mut states, &mut dropout);
        let (pooled, attention) = attend_all(&params.sentence_attention, &states);
        for (g, w) in attention.weights.iter().enumerate() {
            map.sentence[g][..w.len()].copy_from_slice(w);
        }
        (pooled, Some(gru), states, mask, Some(attention))
    };

    let logits = (0..n_labels)
        .map(|l| {
            let repr = &doc_repr[if groups == 1 { 0 } else { l }];
            dot(params.out_w.row(l), repr) + params.out_b.data[l]
        })
        .collect();

    Ok(ForwardOutput {
        logits,
        attention: map,
        cache: ForwardCache {
            sentences,
            sentence_gru,
            sentence_states,
            sentence_mask,
            sentence_attention,
            doc_repr,
        },
    })
}

/// Inference pass: per-label probabilities and attention maps. Dropout is
/// off and the result is a pure function of its inputs.
pub fn forward(doc: &TokenizedDocument, params: &ModelParams) -> Result<(PredictionSet, AttentionMap)> {
    params.validate()?;
    let out = forward_internal::<NoRng>(doc, params, None)?;
    let probabilities = out
        .logits
        .iter()
        .map(|&z| sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
        .collect();
    Ok((
        PredictionSet {
            labels: params.labels.clone(),
            probabilities,
            threshold: 0.5,
        },
        out.attention,
    ))
}

/// Raw pre-sigmoid scores.
pub fn logits(doc: &TokenizedDocument, params: &ModelParams) -> Result<Vec<f64>> {
    Ok(forward_internal::<NoRng>(doc, params, None)?.logits)
}

/// Accumulate `∂L/∂θ` into `grads` given `∂L/∂logits`.
pub(crate) fn backward(params: &ModelParams, cache: &ForwardCache, d_logits: &[f64], grads: &mut ModelParams) {
    let groups = params.n_contexts();
    let state_dim = 2 * params.word_gru.forward.hidden_size();
    let mut d_repr = vec![vec![0.0; state_dim]; groups];
    for (l, &dz) in d_logits.iter().enumerate() {
        if dz == 0.0 {
            continue;
        }
        let g = if groups == 1 { 0 } else { l };
        grads.out_b.data[l] += dz;
        let row = grads.out_w.row_mut(l);
        row.iter_mut().zip(&cache.doc_repr[g]).for_each(|(w, r)| *w += dz * r);
        d_repr[g].iter_mut().zip(params.out_w.row(l)).for_each(|(d, w)| *d += dz * w);
    }
    let (Some(sent_gru), Some(sent_att)) = (&cache.sentence_gru, &cache.sentence_attention) else {
        return;
    };

    let d_pooled: Vec<Option<Vec<f64>>> = d_repr.into_iter().map(Some).collect();
    let mut d_states = attend_all_backward(
        &params.sentence_attention,
        sent_att,
        &cache.sentence_states,
        &d_pooled,
        &mut grads.sentence_attention,
    );
    if let Some(mask) = &cache.sentence_mask {
        for (d, m) in d_states.iter_mut().zip(mask) {
            d.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
    }
    let d_inputs = bigru_backward(&params.sentence_gru, sent_gru, &d_states, &mut grads.sentence_gru);

    let word_groups = params.word_attention.context.rows;
    let scale = 1.0 / word_groups as f64;
    for (sc, d_in) in cache.sentences.iter().zip(d_inputs) {
        let d_each: Vec<f64> = d_in.iter().map(|v| v * scale).collect();
        let d_pooled: Vec<Option<Vec<f64>>> = (0..word_groups).map(|_| Some(d_each.clone())).collect();
        let mut d_states =
            attend_all_backward(&params.word_attention, &sc.attention, &sc.states, &d_pooled, &mut grads.word_attention);
        if let Some(mask) = &sc.mask {
            for (d, m) in d_states.iter_mut().zip(mask) {
                d.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
        }
        let d_x = bigru_backward(&params.word_gru, &sc.gru, &d_states, &mut grads.word_gru);
        for (&id, dx) in sc.ids.iter().zip(d_x) {
            if id == PAD_ID {
                continue;
            }
            grads.embedding.row_mut(id as usize).iter_mut().zip(&dx).for_each(|(g, d)| *g += d);
        }
    }
}
