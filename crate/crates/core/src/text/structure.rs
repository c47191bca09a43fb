use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, PAD_ID};

pub const DEFAULT_MAX_SENTENCES: usize = 100;
pub const DEFAULT_MAX_TOKENS: usize = 25;

/// Sentence-major id grid of shape `max_sentences × max_tokens`, padded with
/// id 0 at the tail of every row and after the last real sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub max_sentences: usize,
    pub max_tokens: usize,
    pub grid: Vec<u32>,
    /// Real token count of each real sentence; its length is the number of
    /// real sentences.
    pub sentence_lengths: Vec<usize>,
}

impl TokenizedDocument {
    pub fn n_real_sentences(&self) -> usize {
        self.sentence_lengths.len()
    }

    pub fn sentence(&self, s: usize) -> &[u32] {
        let start = s * self.max_tokens;
        &self.grid[start..start + self.max_tokens]
    }

    /// Real token ids of sentence `s`.
    pub fn real_tokens(&self, s: usize) -> &[u32] {
        let len = self.sentence_lengths.get(s).copied().unwrap_or(0);
        &self.sentence(s)[..len]
    }

    /// Real token ids in reading order.
    pub fn tokens(&self) -> Vec<u32> {
        (0..self.n_real_sentences())
            .flat_map(|s| self.real_tokens(s).iter().copied())
            .collect()
    }

    pub fn n_real_tokens(&self) -> usize {
        self.sentence_lengths.iter().sum()
    }
}

/// Chunk a token-id stream into consecutive pseudo-sentences of
/// `max_tokens`, keeping at most `max_sentences` of them.
pub fn structure_ids(ids: &[u32], max_sentences: usize, max_tokens: usize) -> TokenizedDocument {
    assert!(max_sentences >= 1 && max_tokens >= 1, "grid dimensions must be positive");
    let mut grid = vec![PAD_ID; max_sentences * max_tokens];
    let mut sentence_lengths = Vec::new();
    for (s, chunk) in ids.chunks(max_tokens).take(max_sentences).enumerate() {
        grid[s * max_tokens..s * max_tokens + chunk.len()].copy_from_slice(chunk);
        sentence_lengths.push(chunk.len());
    }
    TokenizedDocument {
        max_sentences,
        max_tokens,
        grid,
        sentence_lengths,
    }
}

pub fn structure_document(
    text: &str,
    vocab: &Vocabulary,
    max_sentences: usize,
    max_tokens: usize,
) -> TokenizedDocument {
    structure_ids(&vocab.encode(text), max_sentences, max_tokens)
}

/// The surface tokens that survive chunking, with `(sentence, position)`.
pub fn chunk_tokens(text: &str, max_sentences: usize, max_tokens: usize) -> Vec<(usize, usize, &str)> {
    text.split_whitespace()
        .take(max_sentences * max_tokens)
        .enumerate()
        .map(|(i, t)| (i / max_tokens, i % max_tokens, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn five_tokens_into_two_by_two() {
        let doc = structure_ids(&[11, 12, 13, 14, 15], 2, 2);
        assert_eq!(doc.grid, vec![11, 12, 13, 14]);
        assert_eq!(doc.sentence_lengths, vec![2, 2]);
    }

    #[test]
    fn empty_text_is_all_padding() {
        let doc = structure_ids(&[], 3, 4);
        assert!(doc.grid.iter().all(|&id| id == PAD_ID));
        assert_eq!(doc.n_real_sentences(), 0);
    }

    #[test]
    fn exact_fit_has_no_padding() {
        let ids: Vec<u32> = (0..2500).map(|i| 2 + (i % 50)).collect();
        let doc = structure_ids(&ids, 100, 25);
        assert_eq!(doc.n_real_sentences(), 100);
        assert!(doc.grid.iter().all(|&id| id != PAD_ID));
        assert_eq!(doc.tokens(), ids);
    }

    #[test]
    fn partial_last_sentence_is_tail_padded() {
        let doc = structure_ids(&[5, 6, 7], 3, 2);
        assert_eq!(doc.grid, vec![5, 6, 7, 0, 0, 0]);
        assert_eq!(doc.sentence_lengths, vec![2, 1]);
        assert_eq!(doc.real_tokens(1), &[7]);
    }

    proptest! {
        #[test]
        fn grid_preserves_order(ids in proptest::collection::vec(2u32..100, 0..80), s in 1usize..6, t in 1usize..9) {
            let doc = structure_ids(&ids, s, t);
            let kept = ids.len().min(s * t);
            prop_assert_eq!(doc.tokens(), ids[..kept].to_vec());
            prop_assert_eq!(doc.grid.len(), s * t);
            // Padding only at tails.
            for row in 0..s {
                let cells = doc.sentence(row);
                let len = doc.sentence_lengths.get(row).copied().unwrap_or(0);
                prop_assert!(cells[..len].iter().all(|&id| id != PAD_ID));
                prop_assert!(cells[len..].iter().all(|&id| id == PAD_ID));
            }
        }
    }
}
